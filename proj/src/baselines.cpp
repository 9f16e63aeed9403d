#include "sals/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <vector>

namespace sals {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

std::vector<double> leverage_distribution(const Matrix& a) {
  Vector lev = exact_leverage_scores(a);
  const double total = lev.sum();
  require(total > 0.0, "leverage_distribution: scores sum to zero");
  std::vector<double> p(lev.size());
  for (index_t i = 0; i < lev.size(); ++i) p[i] = lev[i] / total;
  return p;
}

IndexSample product_draw_dedup(const ProductSampler& ps, index_t count, SplitRng& rng) {
  require(count >= 1, "product_draw_dedup: count must be positive");
  const int L = static_cast<int>(ps.probs.size());
  std::vector<std::vector<double>> cum(L);
  for (int d = 0; d < L; ++d) {
    cum[d].resize(ps.probs[d].size());
    std::partial_sum(ps.probs[d].begin(), ps.probs[d].end(), cum[d].begin());
  }
  std::vector<index_t> flat(count);
#pragma omp parallel
  {
    std::vector<index_t> sub(L, 0);
#pragma omp for schedule(static)
    for (index_t j = 0; j < count; ++j) {
      SplitRng draw = rng.fork(j);
      for (int d = 0; d < L; ++d) {
        const auto& c = cum[d];
        const double u = draw.uniform() * c.back();
        index_t i = std::lower_bound(c.begin(), c.end(), u) - c.begin();
        if (i >= static_cast<index_t>(c.size())) i = c.size() - 1;
        // never land on a zero-probability plateau
        while (ps.probs[d][i] == 0.0 && i + 1 < static_cast<index_t>(c.size())) ++i;
        while (ps.probs[d][i] == 0.0 && i > 0) --i;
        sub[d] = i;
      }
      flat[j] = linear_index(sub.data(), ps.axis_dims.data(), L);
    }
  }
  std::sort(flat.begin(), flat.end());
  IndexSample out;
  std::vector<index_t> sub(L, 0);
  for (index_t j = 0; j < count;) {
    index_t k = j;
    while (k < count && flat[k] == flat[j]) ++k;
    const index_t c = k - j;
    unravel_index(flat[j], ps.axis_dims.data(), L, sub.data());
    const double q = ps.joint_prob(sub.data());
    out.flat.push_back(flat[j]);
    out.prob.push_back(q);
    out.weight.push_back(std::sqrt(static_cast<double>(c) / (static_cast<double>(count) * q)));
    j = k;
  }
  return out;
}

CpModel cp_arls_lev(const DenseTensor& x, index_t rank, const CpEsOptions& opt, FitTrace* trace) {
  return cp_arls_lev(x, cp_init(x, rank, opt), opt, trace);
}

CpModel cp_arls_lev(const DenseTensor& x, CpModel m, const CpEsOptions& opt, FitTrace* trace) {
  require(opt.j2 >= 1, "cp_arls_lev: sample count must be positive");
  require(m.order() == x.order(), "cp_arls_lev: init order mismatch");
  const auto t0 = Clock::now();
  const int order = x.order();
  const index_t rank = m.rank();

  FitTrace local;
  FitTrace& tr = trace ? *trace : local;
  if (opt.j2 < rank) tr.warn("j2 below rank; sampled solves are underdetermined");
  const bool exact_trace = x.size() <= opt.error_exact_cap;
  EntrySample es;
  if (!exact_trace) {
    es = sample_entries(x, opt.error_sample_size, mix64(opt.seed ^ 0xE5ABCDEF12345678ULL));
    tr.error_estimated = true;
  }

  SplitRng root(opt.seed);
  double prev = -1.0;
  for (int it = 0; it < opt.max_iters; ++it) {
    for (int n = 0; n < order; ++n) {
      const auto chain = classical_mode_order(order, n);
      ProductSampler ps;
      for (int jm : chain) {
        ps.probs.push_back(leverage_distribution(m.factors[jm]));
        ps.axis_dims.push_back(x.dims()[jm]);
      }
      const std::uint64_t solve_id = static_cast<std::uint64_t>(it) * order + n;
      SplitRng draw_rng = root.fork(0xB0000000ULL + solve_id);
      IndexSample s = product_draw_dedup(ps, opt.j2, draw_rng);
      const index_t rows = s.size();
      Matrix design(rows, rank);
      std::vector<index_t> sub(chain.size(), 0);
      Eigen::RowVectorXd row(rank);
      for (index_t j = 0; j < rows; ++j) {
        unravel_index(s.flat[j], ps.axis_dims.data(), static_cast<int>(chain.size()), sub.data());
        row.setOnes();
        for (std::size_t d = 0; d < chain.size(); ++d)
          row.array() *= m.factors[chain[d]].row(sub[d]).array();
        design.row(j) = s.weight[j] * row;
      }
      Matrix rhs = gather_sampled_rhs(x, n, chain, s);
      append_ridge_rows(design, rhs, opt.ridge);
      SampledLsResult ls = sampled_least_squares(design, rhs);
      m.factors[n] = ls.x.transpose();
      tr.svd_fallback = tr.svd_fallback || ls.svd_fallback;
    }
    const double rel = exact_trace ? rel_error(m, x) : rel_error_sampled(m, x, es);
    tr.rel_errors.push_back(rel);
    if (opt.tol > 0.0 && prev >= 0.0 && std::abs(prev - rel) < opt.tol) break;
    prev = rel;
  }
  tr.final_rel_error = exact_trace ? tr.rel_errors.back() : rel_error(m, x);
  tr.wall_seconds = seconds_since(t0);
  return m;
}

TrModel tr_als_sampled(const DenseTensor& x, const std::vector<index_t>& ranks,
                       const TrEsOptions& opt, FitTrace* trace) {
  return tr_als_sampled(x, tr_init(x, ranks, opt), opt, trace);
}

TrModel tr_als_sampled(const DenseTensor& x, TrModel m, const TrEsOptions& opt, FitTrace* trace) {
  require(opt.j2 >= 1, "tr_als_sampled: sample count must be positive");
  require(m.order() == x.order(), "tr_als_sampled: init order mismatch");
  const auto t0 = Clock::now();
  const int order = x.order();

  FitTrace local;
  FitTrace& tr = trace ? *trace : local;
  for (int n = 0; n < order; ++n)
    if (opt.j2 < m.rank_left(n) * m.rank_right(n)) {
      tr.warn("j2 below R_left*R_right; sampled solves are underdetermined");
      break;
    }
  const bool exact_trace = x.size() <= opt.error_exact_cap;
  EntrySample es;
  if (!exact_trace) {
    es = sample_entries(x, opt.error_sample_size, mix64(opt.seed ^ 0xE5ABCDEF12345678ULL));
    tr.error_estimated = true;
  }

  SplitRng root(opt.seed);
  double prev = -1.0;
  for (int it = 0; it < opt.max_iters; ++it) {
    for (int n = 0; n < order; ++n) {
      const index_t rl = m.rank_left(n), rr = m.rank_right(n);
      const auto chain = cyclic_mode_order(order, n);
      ProductSampler ps;
      for (int jm : chain) {
        ps.probs.push_back(leverage_distribution(core_unfold2(m, jm)));
        ps.axis_dims.push_back(x.dims()[jm]);
      }
      const std::uint64_t solve_id = static_cast<std::uint64_t>(it) * order + n;
      SplitRng draw_rng = root.fork(0xB0000000ULL + solve_id);
      IndexSample s = product_draw_dedup(ps, opt.j2, draw_rng);
      const index_t rows = s.size();
      Matrix design(rows, rl * rr);
      std::vector<index_t> sub(chain.size(), 0), full(order, 0);
#pragma omp parallel for schedule(static) firstprivate(sub, full)
      for (index_t j = 0; j < rows; ++j) {
        unravel_index(s.flat[j], ps.axis_dims.data(), static_cast<int>(chain.size()), sub.data());
        for (std::size_t d = 0; d < chain.size(); ++d) full[chain[d]] = sub[d];
        Matrix sp = subchain_slice(m, n, full.data());
        for (index_t a = 0; a < rr; ++a)
          for (index_t r = 0; r < rl; ++r) design(j, r + rl * a) = s.weight[j] * sp(a, r);
      }
      Matrix rhs = gather_sampled_rhs(x, n, chain, s);
      append_ridge_rows(design, rhs, opt.ridge);
      SampledLsResult ls = sampled_least_squares(design, rhs);
      m.cores[n] = core_fold2_classical(ls.x.transpose(), rl, rr);
      tr.svd_fallback = tr.svd_fallback || ls.svd_fallback;
    }
    const double rel = exact_trace ? rel_error(m, x) : rel_error_sampled(m, x, es);
    tr.rel_errors.push_back(rel);
    if (opt.tol > 0.0 && prev >= 0.0 && std::abs(prev - rel) < opt.tol) break;
    prev = rel;
  }
  tr.final_rel_error = exact_trace ? tr.rel_errors.back() : rel_error(m, x);
  tr.wall_seconds = seconds_since(t0);
  return m;
}

}  // namespace sals
