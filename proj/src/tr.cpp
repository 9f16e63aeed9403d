#include "sals/tr.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

namespace sals {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Summed transfer matrix of one core: sum_i kron(slice, slice), mapping
// squared left-rank pairs to squared right-rank pairs (first pair index
// fastest on both sides).
Matrix summed_transfer(const TrModel& m, int n) {
  const index_t rl = m.rank_left(n), rr = m.rank_right(n);
  Matrix out = Matrix::Zero(rl * rl, rr * rr);
  for (index_t i = 0; i < m.dims()[n]; ++i) {
    const auto s = m.slice(n, i);
    for (index_t b = 0; b < rr; ++b)
      for (index_t a = 0; a < rr; ++a)
        for (index_t k = 0; k < rl; ++k)
          for (index_t r = 0; r < rl; ++r)
            out(r + rl * k, a + rr * b) += s(r, a) * s(k, b);
  }
  return out;
}

void check_ranks(const DenseTensor& x, const std::vector<index_t>& ranks) {
  require(static_cast<int>(ranks.size()) == x.order(),
          "tr: need one ring rank per mode");
  for (index_t r : ranks) require(r >= 1, "tr: ranks must be positive");
}

// Normal-equation matrix over design columns (r_{n-1}, r_n), r fastest, from
// the product of the off-mode summed transfers.
Matrix ring_normal_from_subchain(const Matrix& s, index_t rl, index_t rr) {
  Matrix ne(rl * rr, rl * rr);
  for (index_t b = 0; b < rr; ++b)
    for (index_t k = 0; k < rl; ++k)
      for (index_t a = 0; a < rr; ++a)
        for (index_t r = 0; r < rl; ++r)
          ne(r + rl * a, k + rl * b) = s(a + rr * b, r + rl * k);
  return ne;
}

}  // namespace

TrModel tr_init(const DenseTensor& x, const std::vector<index_t>& ranks, const FitOptions& opt) {
  require(x.order() >= 2, "tr_init: tensor order must be at least 2");
  check_ranks(x, ranks);
  const int order = x.order();
  SplitRng root(opt.seed);
  TrModel m;
  m.cores.reserve(order);
  for (int n = 0; n < order; ++n) {
    const index_t rl = ranks[(n + order - 1) % order];
    const index_t rr = ranks[n];
    const index_t rows = x.dims()[n];
    if (opt.range_finder_init) {
      Matrix y = streamed_gaussian_sketch(x, n, cyclic_mode_order(order, n), rl * rr,
                                          root.fork(0x32000 + n));
      // Fold the sketched range directions, ordered by singular value, into
      // the core so that direction r occupies the (min(r, R_l-1), min(r, R_n-1))
      // slot and later directions fill the remaining slots.  The ring product
      // of cores folded this way contains a sum over aligned rank paths of
      // per-mode direction products, so a direction that dominates every
      // mode's unfolding survives into the init model instead of being
      // scattered across incompatible slot pairs.
      Eigen::JacobiSVD<Matrix> svd(y, Eigen::ComputeThinU);
      const Matrix& u = svd.matrixU();
      std::vector<std::pair<index_t, index_t>> slots;
      std::vector<char> used(rl * rr, 0);
      for (index_t r = 0; r < std::max(rl, rr); ++r) {
        const index_t a = std::min(r, rl - 1), b = std::min(r, rr - 1);
        slots.emplace_back(a, b);
        used[a + rl * b] = 1;
      }
      for (index_t a = 0; a < rl; ++a)
        for (index_t b = 0; b < rr; ++b)
          if (!used[a + rl * b]) slots.emplace_back(a, b);
      // Off-path directions are kept at a reduced scale: they preserve the
      // full rank of every core unfolding without letting products of
      // secondary directions dominate the subchain row norms.
      const double off_scale = 0.05;
      SplitRng pad = root.fork(0x33000 + n);
      DenseTensor core({rl, rows, rr});
      for (index_t k = 0; k < static_cast<index_t>(slots.size()); ++k) {
        const auto [a, b] = slots[k];
        const double scale = k < std::max(rl, rr) ? 1.0 : off_scale;
        if (k < u.cols()) {
          for (index_t i = 0; i < rows; ++i) core.at({a, i, b}) = scale * u(i, k);
        } else {
          for (index_t i = 0; i < rows; ++i) core.at({a, i, b}) = 1e-2 * off_scale * pad.normal();
        }
      }
      m.cores.push_back(std::move(core));
    } else {
      SplitRng rng = root.fork(0x31000 + n);
      DenseTensor core({rl, rows, rr});
      for (index_t t = 0; t < core.size(); ++t) core[t] = rng.normal();
      m.cores.push_back(std::move(core));
    }
  }
  return m;
}

// Streamed rhs(t, r_{n-1} + R_l * r_n) = sum_c X_[n](t, c) * M_c(r_n, r_{n-1})
// over cyclic unfolding columns c, M_c the subchain slice product.
Matrix tr_subchain_rhs(const DenseTensor& x, const TrModel& m, int mode) {
  const auto chain = cyclic_mode_order(x.order(), mode);
  const int L = static_cast<int>(chain.size());
  const index_t rl = m.rank_left(mode), rr = m.rank_right(mode);
  const index_t rows = x.dims()[mode];
  const index_t row_stride = x.strides()[mode];
  const index_t inner_dim = x.dims()[chain[0]];
  const index_t inner_stride = x.strides()[chain[0]];
  ModeOdometer probe(x.dims(), x.strides(), chain);
  const index_t runs = probe.column_count() / inner_dim;

  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Matrix out = Matrix::Zero(rows, rl * rr);
#pragma omp parallel
  {
    RowMajor local = RowMajor::Zero(rows, rl * rr);
    std::vector<index_t> sub(L, 0);
    std::vector<index_t> outer_dims;
    for (int d = 1; d < L; ++d) outer_dims.push_back(x.dims()[chain[d]]);
    Matrix tail, slice_prod;
    Eigen::RowVectorXd row(rl * rr);
#pragma omp for schedule(static)
    for (index_t run = 0; run < runs; ++run) {
      unravel_index(run, outer_dims.data(), L - 1, sub.data() + 1);
      index_t base = 0;
      for (int d = 1; d < L; ++d) base += sub[d] * x.strides()[chain[d]];
      // tail = product of slices over chain[1..], left to right
      if (L == 1) {
        tail = Matrix::Identity(rl, rl);
      } else {
        tail = m.slice(chain[1], sub[1]);
        for (int d = 2; d < L; ++d) tail *= m.slice(chain[d], sub[d]);
      }
      for (index_t i0 = 0; i0 < inner_dim; ++i0) {
        slice_prod = m.slice(chain[0], i0) * tail;  // R_n x R_{n-1}
        for (index_t a = 0; a < rr; ++a)
          for (index_t r = 0; r < rl; ++r) row[r + rl * a] = slice_prod(a, r);
        const double* src = x.data() + base + i0 * inner_stride;
        for (index_t t = 0; t < rows; ++t) {
          const double v = src[t * row_stride];
          if (v != 0.0) {
            double* dst = local.data() + t * rl * rr;
            for (index_t c = 0; c < rl * rr; ++c) dst[c] += v * row[c];
          }
        }
      }
    }
#pragma omp critical
    out += local;
  }
  return out;
}

Matrix tr_normal_matrix(const TrModel& m, int mode) {
  const index_t rl = m.rank_left(mode), rr = m.rank_right(mode);
  const auto chain = cyclic_mode_order(m.order(), mode);
  Matrix s = summed_transfer(m, chain[0]);
  for (std::size_t d = 1; d < chain.size(); ++d) s *= summed_transfer(m, chain[d]);
  Matrix ne(rl * rr, rl * rr);
  for (index_t b = 0; b < rr; ++b)
    for (index_t k = 0; k < rl; ++k)
      for (index_t a = 0; a < rr; ++a)
        for (index_t r = 0; r < rl; ++r) ne(r + rl * a, k + rl * b) = s(a + rr * b, r + rl * k);
  return ne;
}

TrModel tr_als(const DenseTensor& x, const std::vector<index_t>& ranks, const FitOptions& opt,
               FitTrace* trace) {
  return tr_als(x, tr_init(x, ranks, opt), opt, trace);
}

TrModel tr_als(const DenseTensor& x, TrModel init, const FitOptions& opt, FitTrace* trace) {
  if (x.size() > opt.max_entries)
    throw config_error("tr_als: tensor exceeds the dense-sweep entry budget");
  const auto t0 = Clock::now();
  const int order = x.order();
  TrModel m = std::move(init);
  std::vector<Matrix> qbar(order);
  for (int n = 0; n < order; ++n) qbar[n] = summed_transfer(m, n);
  const double xnorm = x.norm();
  if (!(xnorm > 0.0)) throw degenerate_error("tr_als: zero tensor");

  FitTrace local;
  FitTrace& tr = trace ? *trace : local;
  double prev = -1.0;
  for (int it = 0; it < opt.max_iters; ++it) {
    double rel = 0.0;
    for (int n = 0; n < order; ++n) {
      const index_t rl = m.rank_left(n), rr = m.rank_right(n);
      const auto chain = cyclic_mode_order(order, n);
      Matrix s = qbar[chain[0]];
      for (std::size_t d = 1; d < chain.size(); ++d) s *= qbar[chain[d]];
      Matrix ne = ring_normal_from_subchain(s, rl, rr);
      if (opt.ridge > 0.0) ne += opt.ridge * Matrix::Identity(rl * rr, rl * rr);
      Matrix rhs = tr_subchain_rhs(x, m, n);
      Matrix g2c = rhs * psd_pinv(ne);  // I_n x (R_l R_r)
      m.cores[n] = core_fold2_classical(g2c, rl, rr);
      qbar[n] = summed_transfer(m, n);
      if (n == order - 1) {
        const double cross = (g2c.array() * rhs.array()).sum();
        const double mnorm2 = (s * qbar[n]).trace();
        const double err2 = std::max(0.0, xnorm * xnorm - 2.0 * cross + mnorm2);
        rel = std::sqrt(err2) / xnorm;
      }
    }
    tr.rel_errors.push_back(rel);
    if (opt.tol > 0.0 && prev >= 0.0 && std::abs(prev - rel) < opt.tol) break;
    prev = rel;
  }
  tr.final_rel_error = tr.rel_errors.back();
  tr.wall_seconds = seconds_since(t0);
  return m;
}

std::vector<int> tr_sketch_leaf_order(int order, int mode) {
  std::vector<int> w;
  w.reserve(order - 1);
  for (int t = 0; t < order - 1; ++t) w.push_back((mode - 1 - t + order) % order);
  return w;
}

Matrix tr_sketch_design(const TrModel& m, int mode, const RecursiveSketch& sk, bool use_fft) {
  const int order = m.order();
  const auto w = tr_sketch_leaf_order(order, mode);
  require(sk.leaf_count() == order - 1, "tr_sketch_design: sketch leaf count mismatch");
  for (int t = 0; t < order - 1; ++t)
    require(sk.leaf_dims()[t] == m.dims()[w[t]], "tr_sketch_design: sketch leaf dim mismatch");
  const index_t rl = m.rank_left(mode), rr = m.rank_right(mode);
  const index_t j = sk.out_dim();
  const int width = sk.tree_width();

  if (order == 2) {
    // Single leaf carries both pinned ranks; its full unfolding already has
    // columns in design order.
    Matrix g2 = core_unfold2(m, w[0]);
    std::vector<Matrix> y0{sk.leaf(0).apply(g2)};
    std::vector<index_t> K{rl, rr};
    return combine_chain(sk, y0, K, std::vector<char>{1}, nullptr, use_fft);
  }

  // Boundary constraints: K[0] (left of leaf 0) pins r_{n-1}; the index right
  // of leaf order-2 pins r_n.  Interior K values are the ring ranks along w.
  std::vector<index_t> K(width + 1, 1);
  for (int t = 1; t <= order - 2; ++t) K[t] = m.rank_right(w[t]);

  std::vector<Matrix> y0(width);
  std::vector<char> dirty(width, 0);
  dirty[0] = 1;
  dirty[order - 2] = 1;
  for (int t = 1; t < order - 2; ++t) y0[t] = sk.leaf(t).apply(core_unfold2(m, w[t]));
  for (int t = order - 1; t < width; ++t) {
    Vector pad = Vector::Zero(j);
    pad[sk.leaf(t).bucket(0)] = sk.leaf(t).sign(0);
    y0[t] = pad;
  }

  const Matrix g2_left = core_unfold2(m, w[0]);                // mode n-1
  const Matrix g2_right = core_unfold2(m, w[order - 2]);       // mode n+1
  const index_t k_left = K[1];                                 // R_{n-2}
  const index_t k_right = K[order - 2];                        // R_{n+1}
  Matrix sel_left(g2_left.rows(), k_left), sel_right(g2_right.rows(), k_right);
  ChainCache cache;
  Matrix out(j, rl * rr);
  for (index_t sig = 0; sig < rr; ++sig) {
    for (index_t kk = 0; kk < k_right; ++kk)
      sel_right.col(kk) = g2_right.col(kk + k_right * sig);
    y0[order - 2] = sk.leaf(order - 2).apply(sel_right);
    for (index_t rho = 0; rho < rl; ++rho) {
      for (index_t kk = 0; kk < k_left; ++kk) sel_left.col(kk) = g2_left.col(rho + rl * kk);
      y0[0] = sk.leaf(0).apply(sel_left);
      out.col(rho + rl * sig) = combine_chain(sk, y0, K, dirty, &cache, use_fft);
    }
  }
  return out;
}

TrSamplerState tr_sampler_state(const TrModel& m, int mode, const LeverageMap& map) {
  const index_t rl = m.rank_left(mode), rr = m.rank_right(mode);
  require(map.phi.rows() == rl * rr && map.phi.cols() == rl * rr,
          "tr_sampler_state: leverage map size does not match ranks");
  TrSamplerState st;
  st.model = &m;
  st.mode = mode;
  st.chain = cyclic_mode_order(m.order(), mode);
  const int L = static_cast<int>(st.chain.size());
  st.chain_dims.reserve(L);
  st.fixed.reserve(L);
  for (int jm : st.chain) {
    st.chain_dims.push_back(m.dims()[jm]);
    st.fixed.push_back(summed_transfer(m, jm));
    st.g2.push_back(core_unfold2(m, jm));
  }
  st.phi = map.phi;
  st.phi_core.resize(rl * rl, rr * rr);
  for (index_t b = 0; b < rr; ++b)
    for (index_t k = 0; k < rl; ++k)
      for (index_t a = 0; a < rr; ++a)
        for (index_t r = 0; r < rl; ++r)
          st.phi_core(r + rl * k, a + rr * b) = st.phi(r + rl * a, k + rl * b);
  st.suffix.assign(L + 1, Matrix());
  st.suffix[L] = st.phi_core;
  for (int d = L - 1; d >= 0; --d) st.suffix[d] = st.fixed[d] * st.suffix[d + 1];
  st.norm_constant = st.suffix[0].trace();
  return st;
}

Matrix tr_transfer(const TrSamplerState& st, int d, index_t i) {
  const auto s = st.model->slice(st.chain[d], i);
  const index_t rl = s.rows(), rr = s.cols();
  Matrix out(rl * rl, rr * rr);
  for (index_t b = 0; b < rr; ++b)
    for (index_t k = 0; k < rl; ++k)
      for (index_t a = 0; a < rr; ++a)
        for (index_t r = 0; r < rl; ++r) out(r + rl * k, a + rr * b) = s(r, a) * s(k, b);
  return out;
}

double tr_prefix_mass(const TrSamplerState& st, const index_t* prefix, int depth) {
  const index_t rn2 = st.suffix[0].rows();
  Matrix left = Matrix::Identity(rn2, rn2);
  for (int d = 0; d < depth; ++d) left *= tr_transfer(st, d, prefix[d]);
  return (left * st.suffix[depth]).trace();
}

// Evaluated as a quadratic form in the core's mode-2 unfolding rows.
Vector tr_candidate_masses(const TrSamplerState& st, int d, const Matrix& w) {
  const int jm = st.chain[d];
  const TrModel& m = *st.model;
  const index_t rl = m.rank_left(jm), rr = m.rank_right(jm);
  // Reindex w to the row space of core_unfold2 (column a + rr * r).
  Matrix q(rr * rl, rr * rl);
  for (index_t k = 0; k < rl; ++k)
    for (index_t b = 0; b < rr; ++b)
      for (index_t r = 0; r < rl; ++r)
        for (index_t a = 0; a < rr; ++a) q(a + rr * r, b + rr * k) = w(a + rr * b, r + rl * k);
  const Matrix& g2 = st.g2[d];
  return ((g2 * q).cwiseProduct(g2)).rowwise().sum();
}

IndexSample tr_draw_indices(const TrSamplerState& st, index_t count, SplitRng& rng) {
  require(count >= 1, "tr_draw_indices: count must be positive");
  const int L = static_cast<int>(st.chain.size());
  const index_t rn2 = st.suffix[0].rows();
  IndexSample out;
  out.flat.resize(count);
  out.prob.resize(count);
  out.weight.resize(count);

  // Per-depth candidate masses depend on the running left product, so unlike
  // the CP chain they cannot be shared across draws: precompute the reindex
  // work per draw instead.
  index_t clamps = 0, restarts = 0;
  bool failed = false;
#pragma omp parallel reduction(+ : clamps, restarts) reduction(|| : failed)
  {
    std::vector<index_t> sub(L, 0);
    Vector mass;
#pragma omp for schedule(static)
    for (index_t j = 0; j < count; ++j) {
      bool ok = false;
      for (int attempt = 0; attempt < 10 && !ok; ++attempt) {
        SplitRng draw = rng.fork(j + (static_cast<std::uint64_t>(attempt) << 44));
        Matrix left = Matrix::Identity(rn2, rn2);
        double q = 1.0;
        ok = true;
        for (int d = 0; d < L; ++d) {
          mass = tr_candidate_masses(st, d, st.suffix[d + 1] * left);
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
          left = left * tr_transfer(st, d, pick);
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
    throw degenerate_error("tr_draw_indices: sampling chain kept hitting zero mass");
  out.clamp_events = clamps;
  out.retries = restarts;
  return out;
}

Matrix tr_sampled_design(const TrSamplerState& st, const IndexSample& sample) {
  const TrModel& m = *st.model;
  const int L = static_cast<int>(st.chain.size());
  const index_t rl = m.rank_left(st.mode), rr = m.rank_right(st.mode);
  Matrix out(sample.size(), rl * rr);
#pragma omp parallel
  {
    std::vector<index_t> sub(L, 0), full(m.order(), 0);
#pragma omp for schedule(static)
    for (index_t j = 0; j < sample.size(); ++j) {
      unravel_index(sample.flat[j], st.chain_dims.data(), L, sub.data());
      for (int d = 0; d < L; ++d) full[st.chain[d]] = sub[d];
      Matrix sp = subchain_slice(m, st.mode, full.data());  // R_n x R_{n-1}
      for (index_t a = 0; a < rr; ++a)
        for (index_t r = 0; r < rl; ++r) out(j, r + rl * a) = sample.weight[j] * sp(a, r);
    }
  }
  return out;
}

TrModel tr_als_es(const DenseTensor& x, const std::vector<index_t>& ranks,
                  const TrEsOptions& opt, FitTrace* trace) {
  check_ranks(x, ranks);
  return tr_als_es(x, tr_init(x, ranks, opt), opt, trace);
}

TrModel tr_als_es(const DenseTensor& x, TrModel m, const TrEsOptions& opt, FitTrace* trace) {
  require(opt.j1 >= 1 && opt.j2 >= 1, "tr_als_es: sketch and sample sizes must be positive");
  require(m.order() == x.order(), "tr_als_es: init order mismatch");
  const auto t0 = Clock::now();
  const int order = x.order();

  FitTrace local;
  FitTrace& tr = trace ? *trace : local;
  for (int n = 0; n < order; ++n) {
    const index_t cols = m.rank_left(n) * m.rank_right(n);
    if (opt.j1 < cols * cols) {
      tr.warn("j1 below (R_left*R_right)^2; leverage estimates may be loose");
      break;
    }
  }
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
      const std::uint64_t solve_id = static_cast<std::uint64_t>(it) * order + n;
      std::vector<index_t> leaf_dims;
      for (int jm : tr_sketch_leaf_order(order, n)) leaf_dims.push_back(x.dims()[jm]);
      const std::uint64_t sketch_seed =
          mix64(opt.seed + 0x9E3779B97F4A7C15ULL * (solve_id + 1));
      RecursiveSketch sk(opt.j1, leaf_dims, sketch_seed);
      Matrix sa = tr_sketch_design(m, n, sk, opt.use_fft);
      LeverageMap lm = estimate_leverage_map(sa);
      TrSamplerState st = tr_sampler_state(m, n, lm);
      SplitRng draw_rng = root.fork(0xD0000000ULL + solve_id);
      IndexSample s = tr_draw_indices(st, opt.j2, draw_rng);
      Matrix design = tr_sampled_design(st, s);
      Matrix rhs = gather_sampled_rhs(x, n, st.chain, s);
      append_ridge_rows(design, rhs, opt.ridge);
      SampledLsResult ls = sampled_least_squares(design, rhs);
      m.cores[n] = core_fold2_classical(ls.x.transpose(), rl, rr);
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
