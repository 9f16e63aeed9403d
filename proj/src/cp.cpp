#include "sals/cp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/QR>

namespace sals {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Row of the Khatri-Rao design for the given off-mode subscript.
void kr_row(const CpModel& m, const std::vector<int>& chain, const index_t* sub,
            Eigen::RowVectorXd& out) {
  out.setOnes();
  for (std::size_t d = 0; d < chain.size(); ++d)
    out.array() *= m.factors[chain[d]].row(sub[d]).array();
}

}  // namespace

CpModel cp_init(const DenseTensor& x, index_t rank, const FitOptions& opt) {
  require(rank >= 1, "cp_init: rank must be positive");
  require(x.order() >= 2, "cp_init: tensor order must be at least 2");
  SplitRng root(opt.seed);
  CpModel m;
  m.factors.resize(x.order());
  for (int n = 0; n < x.order(); ++n) {
    const index_t rows = x.dims()[n];
    if (opt.range_finder_init) {
      Matrix y = streamed_gaussian_sketch(x, n, classical_mode_order(x.order(), n), rank,
                                          root.fork(0x22000 + n));
      m.factors[n] = orthonormal_columns(y, root.fork(0x23000 + n));
    } else {
      SplitRng rng = root.fork(0x11000 + n);
      Matrix f(rows, rank);
      for (index_t r = 0; r < rank; ++r)
        for (index_t i = 0; i < rows; ++i) f(i, r) = rng.normal();
      m.factors[n] = std::move(f);
    }
  }
  return m;
}

Matrix cp_mttkrp(const DenseTensor& x, const CpModel& m, int mode) {
  const auto chain = classical_mode_order(x.order(), mode);
  const int L = static_cast<int>(chain.size());
  const index_t rank = m.rank();
  const index_t rows = x.dims()[mode];
  const index_t row_stride = x.strides()[mode];
  const index_t inner_dim = x.dims()[chain[0]];
  const index_t inner_stride = x.strides()[chain[0]];
  ModeOdometer probe(x.dims(), x.strides(), chain);
  const index_t runs = probe.column_count() / inner_dim;
  const Matrix& f0 = m.factors[chain[0]];

  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Matrix out = Matrix::Zero(rows, rank);
#pragma omp parallel
  {
    RowMajor local = RowMajor::Zero(rows, rank);
    std::vector<index_t> sub(L, 0);
    Eigen::RowVectorXd suffix(rank), row(rank);
    std::vector<index_t> outer_dims;
    for (int d = 1; d < L; ++d) outer_dims.push_back(x.dims()[chain[d]]);
#pragma omp for schedule(static)
    for (index_t run = 0; run < runs; ++run) {
      unravel_index(run, outer_dims.data(), L - 1, sub.data() + 1);
      index_t base = 0;
      for (int d = 1; d < L; ++d) base += sub[d] * x.strides()[chain[d]];
      suffix.setOnes();
      for (int d = 1; d < L; ++d) suffix.array() *= m.factors[chain[d]].row(sub[d]).array();
      for (index_t i0 = 0; i0 < inner_dim; ++i0) {
        row = f0.row(i0).cwiseProduct(suffix);
        const double* src = x.data() + base + i0 * inner_stride;
        for (index_t t = 0; t < rows; ++t) {
          const double v = src[t * row_stride];
          if (v != 0.0) {
            double* dst = local.data() + t * rank;
            for (index_t r = 0; r < rank; ++r) dst[r] += v * row[r];
          }
        }
      }
    }
#pragma omp critical
    out += local;
  }
  return out;
}

CpModel cp_als(const DenseTensor& x, index_t rank, const FitOptions& opt, FitTrace* trace) {
  return cp_als(x, cp_init(x, rank, opt), opt, trace);
}

CpModel cp_als(const DenseTensor& x, CpModel init, const FitOptions& opt, FitTrace* trace) {
  if (x.size() > opt.max_entries)
    throw config_error("cp_als: tensor exceeds the dense-sweep entry budget");
  const auto t0 = Clock::now();
  CpModel m = std::move(init);
  const index_t rank = m.rank();
  const int order = x.order();
  std::vector<Matrix> grams(order);
  for (int n = 0; n < order; ++n) grams[n] = m.factors[n].transpose() * m.factors[n];
  const double xnorm = x.norm();
  if (!(xnorm > 0.0)) throw degenerate_error("cp_als: zero tensor");

  FitTrace local;
  FitTrace& tr = trace ? *trace : local;
  double prev = -1.0;
  for (int it = 0; it < opt.max_iters; ++it) {
    Matrix last_mtt;
    for (int n = 0; n < order; ++n) {
      Matrix v = Matrix::Ones(rank, rank);
      for (int j = 0; j < order; ++j)
        if (j != n) v.array() *= grams[j].array();
      if (opt.ridge > 0.0) v += opt.ridge * Matrix::Identity(rank, rank);
      Matrix mtt = cp_mttkrp(x, m, n);
      m.factors[n] = mtt * psd_pinv(v);
      grams[n] = m.factors[n].transpose() * m.factors[n];
      if (n == order - 1) last_mtt = std::move(mtt);
    }
    // Free exact error: ||X - M||^2 = ||X||^2 - 2<A_last, MTTKRP> + sum of the
    // all-mode Hadamard Gram.
    Matrix w = Matrix::Ones(rank, rank);
    for (int j = 0; j < order; ++j) w.array() *= grams[j].array();
    const double cross = (m.factors[order - 1].array() * last_mtt.array()).sum();
    const double err2 = std::max(0.0, xnorm * xnorm - 2.0 * cross + w.sum());
    const double rel = std::sqrt(err2) / xnorm;
    tr.rel_errors.push_back(rel);
    if (opt.tol > 0.0 && prev >= 0.0 && std::abs(prev - rel) < opt.tol) break;
    prev = rel;
  }
  tr.final_rel_error = tr.rel_errors.back();
  tr.wall_seconds = seconds_since(t0);
  return m;
}

Matrix cp_sketch_design(const CpModel& m, int mode, const RecursiveSketch& sk, bool use_fft) {
  std::vector<const Matrix*> leaves;
  for (int j = m.order() - 1; j >= 0; --j)
    if (j != mode) leaves.push_back(&m.factors[j]);
  return sk.apply_kron_columns(leaves, use_fft);
}

CpSamplerState cp_sampler_state(const CpModel& m, int mode, const LeverageMap& map) {
  const index_t rank = m.rank();
  require(map.phi.rows() == rank && map.phi.cols() == rank,
          "cp_sampler_state: leverage map size does not match rank");
  CpSamplerState st;
  st.model = &m;
  st.mode = mode;
  st.chain = classical_mode_order(m.order(), mode);
  const int L = static_cast<int>(st.chain.size());
  st.chain_dims.reserve(L);
  st.grams.reserve(L);
  for (int j : st.chain) {
    st.chain_dims.push_back(m.factors[j].rows());
    st.grams.push_back(m.factors[j].transpose() * m.factors[j]);
  }
  st.phi = map.phi;
  st.suffix.assign(L + 1, Matrix());
  st.suffix[L] = st.phi;
  for (int d = L - 1; d >= 0; --d)
    st.suffix[d] = st.suffix[d + 1].cwiseProduct(st.grams[d]);
  st.norm_constant = st.suffix[0].sum();
  return st;
}

double cp_prefix_mass(const CpSamplerState& st, const index_t* prefix, int depth) {
  Matrix acc = st.suffix[depth];
  for (int d = 0; d < depth; ++d) {
    const auto row = st.model->factors[st.chain[d]].row(prefix[d]);
    acc.array() *= (row.transpose() * row).array();
  }
  return acc.sum();
}

IndexSample cp_draw_indices(const CpSamplerState& st, index_t count, SplitRng& rng) {
  require(count >= 1, "cp_draw_indices: count must be positive");
  const int L = static_cast<int>(st.chain.size());
  const index_t rank = st.model->rank();
  IndexSample out;
  out.flat.resize(count);
  out.prob.resize(count);
  out.weight.resize(count);
  index_t clamps = 0, restarts = 0;
  bool failed = false;
#pragma omp parallel reduction(+ : clamps, restarts) reduction(|| : failed)
  {
    Matrix b(rank, rank), pref(rank, rank);
    Vector mass;
    std::vector<index_t> sub(L, 0);
#pragma omp for schedule(static)
    for (index_t j = 0; j < count; ++j) {
      bool ok = false;
      for (int attempt = 0; attempt < 10 && !ok; ++attempt) {
        SplitRng draw = rng.fork(j + (static_cast<std::uint64_t>(attempt) << 44));
        pref.setOnes();
        double q = 1.0;
        ok = true;
        for (int d = 0; d < L; ++d) {
          const Matrix& f = st.model->factors[st.chain[d]];
          b = st.suffix[d + 1].cwiseProduct(pref);
          mass = ((f * b).cwiseProduct(f)).rowwise().sum();
          for (index_t i = 0; i < mass.size(); ++i)
            if (mass[i] < 0.0) {
              mass[i] = 0.0;
              ++clamps;
            }
          const double total = mass.sum();
          if (!(total > 0.0) || !std::isfinite(total)) {
            ok = false;
            ++restarts;
            break;
          }
          const double u = draw.uniform() * total;
          double acc = 0.0;
          index_t pick = -1;
          for (index_t i = 0; i < mass.size(); ++i) {
            if (mass[i] <= 0.0) continue;
            acc += mass[i];
            pick = i;
            if (u < acc) break;
          }
          sub[d] = pick;
          q *= mass[pick] / total;
          const auto row = f.row(pick);
          pref.array() *= (row.transpose() * row).array();
        }
        if (ok && !(q > 0.0)) {
          ok = false;
          ++restarts;
        }
        if (ok) {
          out.flat[j] = linear_index(sub.data(), st.chain_dims.data(), L);
          out.prob[j] = q;
          out.weight[j] = 1.0 / std::sqrt(static_cast<double>(count) * q);
        }
      }
      if (!ok) failed = true;
    }
  }
  if (failed)
    throw degenerate_error("cp_draw_indices: sampling chain kept hitting zero mass");
  out.clamp_events = clamps;
  out.retries = restarts;
  return out;
}

Matrix cp_sampled_design(const CpSamplerState& st, const IndexSample& sample) {
  const int L = static_cast<int>(st.chain.size());
  const index_t rank = st.model->rank();
  Matrix out(sample.size(), rank);
#pragma omp parallel
  {
    std::vector<index_t> sub(L, 0);
    Eigen::RowVectorXd row(rank);
#pragma omp for schedule(static)
    for (index_t j = 0; j < sample.size(); ++j) {
      unravel_index(sample.flat[j], st.chain_dims.data(), L, sub.data());
      kr_row(*st.model, st.chain, sub.data(), row);
      out.row(j) = sample.weight[j] * row;
    }
  }
  return out;
}

CpModel cp_als_es(const DenseTensor& x, index_t rank, const CpEsOptions& opt, FitTrace* trace) {
  return cp_als_es(x, cp_init(x, rank, opt), opt, trace);
}

CpModel cp_als_es(const DenseTensor& x, CpModel init, const CpEsOptions& opt, FitTrace* trace) {
  require(opt.j1 >= 1 && opt.j2 >= 1, "cp_als_es: sketch and sample sizes must be positive");
  const auto t0 = Clock::now();
  const int order = x.order();
  CpModel m = std::move(init);
  const index_t rank = m.rank();

  FitTrace local;
  FitTrace& tr = trace ? *trace : local;
  if (opt.j1 < rank * rank) tr.warn("j1 below rank^2; leverage estimates may be loose");
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
      const std::uint64_t solve_id = static_cast<std::uint64_t>(it) * order + n;
      std::vector<index_t> leaf_dims;
      for (int j = order - 1; j >= 0; --j)
        if (j != n) leaf_dims.push_back(x.dims()[j]);
      const std::uint64_t sketch_seed =
          mix64(opt.seed + 0x9E3779B97F4A7C15ULL * (solve_id + 1));
      RecursiveSketch sk(opt.j1, leaf_dims, sketch_seed);
      Matrix sa = cp_sketch_design(m, n, sk, opt.use_fft);
      LeverageMap lm = estimate_leverage_map(sa);
      CpSamplerState st = cp_sampler_state(m, n, lm);
      SplitRng draw_rng = root.fork(0xD0000000ULL + solve_id);
      IndexSample s = cp_draw_indices(st, opt.j2, draw_rng);
      Matrix design = cp_sampled_design(st, s);
      Matrix rhs = gather_sampled_rhs(x, n, st.chain, s);
      append_ridge_rows(design, rhs, opt.ridge);
      SampledLsResult ls = sampled_least_squares(design, rhs);
      m.factors[n] = ls.x.transpose();
      tr.clamp_events += s.clamp_events;
      tr.retries += s.retries;
      tr.svd_fallback = tr.svd_fallback || ls.svd_fallback;
      tr.norm_constants.push_back(st.norm_constant);
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
