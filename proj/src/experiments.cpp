#include "sals/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace sals {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

constexpr index_t kGridCap = index_t(1) << 24;
constexpr index_t kSynthCap = index_t(1) << 28;

index_t checked_product(const std::vector<index_t>& dims, index_t cap, const char* what) {
  require(!dims.empty(), std::string(what) + ": no dims given");
  index_t total = 1;
  for (index_t d : dims) {
    require(d >= 1, std::string(what) + ": dims must be positive");
    require(total <= cap / d, std::string(what) + ": instance exceeds the size budget");
    total *= d;
  }
  return total;
}

void add_noise(DenseTensor& x, double noise_sd, std::uint64_t seed) {
  if (noise_sd <= 0.0) return;
  const std::uint64_t nseed = mix64(seed ^ 0x517CC1B727220A95ULL);
  double* data = x.data();
  const index_t total = x.size();
#pragma omp parallel for schedule(static)
  for (index_t t = 0; t < total; ++t) data[t] += noise_sd * keyed_normal(nseed, t);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Joint density of independent per-axis laws on the grid with axis 0 fastest.
std::vector<double> product_density(const std::vector<std::vector<double>>& probs) {
  std::vector<double> cur{1.0};
  for (int d = static_cast<int>(probs.size()) - 1; d >= 0; --d) {
    const auto& p = probs[d];
    std::vector<double> next(p.size() * cur.size());
    for (std::size_t k = 0; k < cur.size(); ++k)
      for (std::size_t s = 0; s < p.size(); ++s) next[s + p.size() * k] = p[s] * cur[k];
    cur = std::move(next);
  }
  return cur;
}

void normalise(std::vector<double>& v) {
  double total = 0.0;
  for (double x : v) total += x;
  if (!(total > 0.0)) throw degenerate_error("distribution: total mass is not positive");
  for (double& x : v) x /= total;
}

ReportRow base_row(std::string method, std::string kind, std::uint64_t seed) {
  ReportRow r;
  r.method = std::move(method);
  r.kind = std::move(kind);
  r.seed = seed;
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Synthetic instances.

SynthCp synth_cp(const std::vector<index_t>& dims, index_t rank, double spike, double noise_sd,
                 std::uint64_t seed) {
  require(rank >= 1, "synth_cp: rank must be positive");
  require(dims.size() >= 2, "synth_cp: need at least two modes");
  checked_product(dims, kSynthCap, "synth_cp");
  SplitRng root(seed);
  SynthCp out;
  out.truth.factors.reserve(dims.size());
  for (std::size_t n = 0; n < dims.size(); ++n) {
    SplitRng rng = root.fork(0x41000 + n);
    Matrix f = Matrix::Zero(dims[n], rank);
    f(0, 0) = spike;
    for (index_t r = 1; r < rank; ++r)
      for (index_t i = 1; i < dims[n]; ++i) f(i, r) = rng.normal();
    out.truth.factors.push_back(std::move(f));
  }
  out.tensor = cp_reconstruct(out.truth);
  add_noise(out.tensor, noise_sd, seed);
  return out;
}

SynthTr synth_tr(const std::vector<index_t>& dims, const std::vector<index_t>& ranks, double spike,
                 double noise_sd, std::uint64_t seed) {
  require(dims.size() >= 2, "synth_tr: need at least two modes");
  require(ranks.size() == dims.size(), "synth_tr: need one rank per mode");
  checked_product(dims, kSynthCap, "synth_tr");
  const int order = static_cast<int>(dims.size());
  SynthTr out;
  out.truth.cores.reserve(order);
  for (int n = 0; n < order; ++n) {
    const index_t rl = ranks[(n + order - 1) % order], rr = ranks[n];
    require(rl >= 1 && rr >= 1, "synth_tr: ranks must be positive");
    DenseTensor core({rl, dims[n], rr});
    core.at({0, 0, 0}) = spike;
    out.truth.cores.push_back(std::move(core));
  }
  out.tensor = tr_reconstruct(out.truth);
  add_noise(out.tensor, noise_sd, seed);
  return out;
}

Matrix synth_image(index_t side) {
  require(side >= 2, "synth_image: side must be at least 2");
  constexpr int K = 12;
  SplitRng rng(0xC0FFEE1234ULL);
  double amp[K], cu[K], cv[K], sig[K], freq[K], th[K], ph[K];
  for (int k = 0; k < K; ++k) {
    amp[k] = 0.4 + rng.uniform();
    cu[k] = rng.uniform();
    cv[k] = rng.uniform();
    sig[k] = 0.06 + 0.30 * rng.uniform();
    freq[k] = 2.0 + 38.0 * rng.uniform();
    th[k] = 3.14159265358979323846 * rng.uniform();
    ph[k] = 6.28318530717958647692 * rng.uniform();
  }
  // Every component factors per axis, so the image needs only per-axis tables:
  // a windowed grating is gauss_r * gauss_c * (1/2 + (sin a cos b + cos a sin b)/2).
  Matrix gr(side, K), gc(side, K), sa(side, K), ca(side, K), sb(side, K), cb(side, K);
  for (index_t i = 0; i < side; ++i) {
    const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(side);
    for (int k = 0; k < K; ++k) {
      const double du = (u - cu[k]) / sig[k], dv = (u - cv[k]) / sig[k];
      gr(i, k) = std::exp(-0.5 * du * du);
      gc(i, k) = std::exp(-0.5 * dv * dv);
      const double a = 6.28318530717958647692 * freq[k] * std::cos(th[k]) * u + ph[k];
      const double b = 6.28318530717958647692 * freq[k] * std::sin(th[k]) * u;
      sa(i, k) = std::sin(a);
      ca(i, k) = std::cos(a);
      sb(i, k) = std::sin(b);
      cb(i, k) = std::cos(b);
    }
  }
  Matrix img(side, side);
#pragma omp parallel for schedule(static)
  for (index_t c = 0; c < side; ++c)
    for (index_t r = 0; r < side; ++r) {
      double v = 0.0;
      for (int k = 0; k < K; ++k)
        v += amp[k] * gr(r, k) * gc(c, k) *
             (0.5 + 0.5 * (sa(r, k) * cb(c, k) + ca(r, k) * sb(c, k)));
      img(r, c) = v;
    }
  const double lo = img.minCoeff(), hi = img.maxCoeff();
  if (hi > lo)
    img = (img.array() - lo) / (hi - lo);
  else
    img.setConstant(0.5);
  return img;
}

DenseTensor tensorize_image(const Matrix& img) {
  const index_t side = img.rows();
  require(img.cols() == side, "tensorize_image: image must be square");
  index_t v = side;
  int k = 0;
  while (v > 1 && v % 16 == 0) {
    v /= 16;
    ++k;
  }
  require(v == 1 && k >= 1, "tensorize_image: side must be a power of 16");
  std::vector<index_t> dims(2 * k, 16);
  DenseTensor x(dims);
#pragma omp parallel for schedule(static)
  for (index_t c = 0; c < side; ++c)
    for (index_t r = 0; r < side; ++r) {
      index_t flat = 0, mul = 1, rr = r, cc = c;
      for (int t = 0; t < k; ++t) {
        flat += (rr % 16) * mul;
        rr /= 16;
        mul *= 16;
        flat += (cc % 16) * mul;
        cc /= 16;
        mul *= 16;
      }
      x[flat] = img(r, c);
    }
  return x;
}

Matrix detensorize_image(const DenseTensor& x) {
  const int order = x.order();
  require(order >= 2 && order % 2 == 0, "detensorize_image: order must be even");
  for (index_t d : x.dims()) require(d == 16, "detensorize_image: every dim must be 16");
  const int k = order / 2;
  index_t side = 1;
  for (int t = 0; t < k; ++t) side *= 16;
  Matrix img(side, side);
#pragma omp parallel for schedule(static)
  for (index_t c = 0; c < side; ++c)
    for (index_t r = 0; r < side; ++r) {
      index_t flat = 0, mul = 1, rr = r, cc = c;
      for (int t = 0; t < k; ++t) {
        flat += (rr % 16) * mul;
        rr /= 16;
        mul *= 16;
        flat += (cc % 16) * mul;
        cc /= 16;
        mul *= 16;
      }
      img(r, c) = x[flat];
    }
  return img;
}

SynthClustered synth_clustered(int classes, int per_class,
                               const std::vector<index_t>& sample_dims, std::uint64_t seed) {
  require(classes >= 2, "synth_clustered: need at least two classes");
  require(per_class >= 1, "synth_clustered: need at least one sample per class");
  const index_t cell = checked_product(sample_dims, kGridCap, "synth_clustered");
  const index_t count = static_cast<index_t>(classes) * per_class;
  const int sorder = static_cast<int>(sample_dims.size());
  SplitRng root(seed);

  // Rank-2 prototype per class, normalised to unit RMS.
  std::vector<std::vector<double>> proto(classes, std::vector<double>(cell, 0.0));
  std::vector<index_t> sub(sorder, 0);
  for (int c = 0; c < classes; ++c) {
    for (int term = 0; term < 2; ++term) {
      SplitRng rng = root.fork(0x61000 + 8ULL * c + term);
      std::vector<std::vector<double>> axis(sorder);
      for (int d = 0; d < sorder; ++d) {
        axis[d].resize(sample_dims[d]);
        for (index_t i = 0; i < sample_dims[d]; ++i) axis[d][i] = rng.normal();
      }
      for (index_t flat = 0; flat < cell; ++flat) {
        unravel_index(flat, sample_dims.data(), sorder, sub.data());
        double p = 1.0;
        for (int d = 0; d < sorder; ++d) p *= axis[d][sub[d]];
        proto[c][flat] += p;
      }
    }
    double rms = 0.0;
    for (double p : proto[c]) rms += p * p;
    rms = std::sqrt(rms / static_cast<double>(cell));
    if (rms > 0.0)
      for (double& p : proto[c]) p /= rms;
    else
      proto[c][0] = 1.0;
  }

  std::vector<index_t> dims = sample_dims;
  dims.push_back(count);
  SynthClustered out;
  out.tensor = DenseTensor(dims);
  out.labels.resize(count);
  SplitRng srng = root.fork(0x62000);
  const std::uint64_t nseed = mix64(seed ^ 0x2545F4914F6CDD1DULL);
  for (index_t s = 0; s < count; ++s) {
    const int c = static_cast<int>(s % classes);
    out.labels[s] = c;
    const double intensity = 0.8 + 0.4 * srng.uniform();
    const index_t base = s * cell;
    for (index_t t = 0; t < cell; ++t)
      out.tensor[base + t] = intensity * proto[c][t] + 0.1 * keyed_normal(nseed, base + t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Distributions.

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  require(p.size() == q.size(), "kl_divergence: support size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    require(p[i] >= 0.0 && q[i] >= 0.0, "kl_divergence: negative entry");
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  require(p.size() == q.size(), "total_variation: support size mismatch");
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
  return 0.5 * tv;
}

std::vector<double> exact_sampling_distribution(const Matrix& design) {
  require(design.rows() <= kGridCap, "exact_sampling_distribution: design too large");
  Vector lev = exact_leverage_scores(design);
  std::vector<double> p(lev.data(), lev.data() + lev.size());
  normalise(p);
  return p;
}

std::vector<double> cp_chain_distribution(const CpSamplerState& st) {
  const int L = static_cast<int>(st.chain.size());
  const index_t grid = checked_product(st.chain_dims, kGridCap, "cp_chain_distribution");
  const CpModel& m = *st.model;
  const index_t rank = m.rank();
  const Matrix& f0 = m.factors[st.chain[0]];
  const index_t inner = st.chain_dims[0];

  // Suffix products for digits 1..L-1 of the run odometer (digit 1 fastest).
  std::vector<index_t> sub(L, 0);
  std::vector<Eigen::RowVectorXd> stack(L + 1);
  stack[L] = Eigen::RowVectorXd::Ones(rank);
  for (int d = L - 1; d >= 1; --d)
    stack[d] = stack[d + 1].cwiseProduct(m.factors[st.chain[d]].row(0));

  std::vector<double> out(grid);
  Matrix mblock(rank, rank);
  Vector masses;
  index_t written = 0;
  while (true) {
    const Eigen::RowVectorXd& t = stack[1];
    mblock = st.phi.cwiseProduct(t.transpose() * t);
    masses = ((f0 * mblock).cwiseProduct(f0)).rowwise().sum();
    for (index_t i = 0; i < inner; ++i) out[written + i] = std::max(0.0, masses[i]);
    written += inner;
    if (written >= grid) break;
    int d = 1;
    while (d < L) {
      if (++sub[d] < st.chain_dims[d]) break;
      sub[d] = 0;
      ++d;
    }
    for (int t2 = d; t2 >= 1; --t2)
      stack[t2] = stack[t2 + 1].cwiseProduct(m.factors[st.chain[t2]].row(sub[t2]));
  }
  normalise(out);
  return out;
}

std::vector<double> tr_chain_distribution(const TrSamplerState& st) {
  const int L = static_cast<int>(st.chain.size());
  const index_t grid = checked_product(st.chain_dims, kGridCap, "tr_chain_distribution");
  const index_t inner = st.chain_dims[0];

  std::vector<index_t> sub(L, 0);
  std::vector<Matrix> stack(L + 1);
  stack[L] = st.phi_core;
  for (int d = L - 1; d >= 1; --d) stack[d] = tr_transfer(st, d, 0) * stack[d + 1];

  std::vector<double> out(grid);
  Vector masses;
  index_t written = 0;
  while (true) {
    masses = tr_candidate_masses(st, 0, stack[1]);
    for (index_t i = 0; i < inner; ++i) out[written + i] = std::max(0.0, masses[i]);
    written += inner;
    if (written >= grid) break;
    int d = 1;
    while (d < L) {
      if (++sub[d] < st.chain_dims[d]) break;
      sub[d] = 0;
      ++d;
    }
    for (int t = d; t >= 1; --t) stack[t] = tr_transfer(st, t, sub[t]) * stack[t + 1];
  }
  normalise(out);
  return out;
}

std::vector<double> cp_exact_distribution(const CpModel& m, int mode) {
  const index_t rank = m.rank();
  Matrix g = Matrix::Ones(rank, rank);
  for (int j = 0; j < m.order(); ++j)
    if (j != mode) g.array() *= (m.factors[j].transpose() * m.factors[j]).array();
  LeverageMap lm;
  lm.phi = psd_pinv(g);
  lm.rank = static_cast<int>(rank);
  CpSamplerState st = cp_sampler_state(m, mode, lm);
  return cp_chain_distribution(st);
}

std::vector<double> tr_exact_distribution(const TrModel& m, int mode) {
  LeverageMap lm;
  lm.phi = psd_pinv(tr_normal_matrix(m, mode));
  lm.rank = static_cast<int>(lm.phi.rows());
  TrSamplerState st = tr_sampler_state(m, mode, lm);
  return tr_chain_distribution(st);
}

std::vector<double> cp_product_distribution(const CpModel& m, int mode) {
  const auto chain = classical_mode_order(m.order(), mode);
  std::vector<index_t> dims;
  std::vector<std::vector<double>> probs;
  for (int j : chain) {
    probs.push_back(leverage_distribution(m.factors[j]));
    dims.push_back(m.factors[j].rows());
  }
  checked_product(dims, kGridCap, "cp_product_distribution");
  return product_density(probs);
}

std::vector<double> tr_product_distribution(const TrModel& m, int mode) {
  const auto chain = cyclic_mode_order(m.order(), mode);
  std::vector<index_t> dims;
  std::vector<std::vector<double>> probs;
  for (int j : chain) {
    probs.push_back(leverage_distribution(core_unfold2(m, j)));
    dims.push_back(m.dims()[j]);
  }
  checked_product(dims, kGridCap, "tr_product_distribution");
  return product_density(probs);
}

// ---------------------------------------------------------------------------
// Experiment runners.

DistributionResult run_distribution_experiment(const DenseTensor& x,
                                               const DistributionOptions& opt) {
  require(x.order() >= 2, "run_distribution_experiment: tensor order must be at least 2");
  require(opt.sketch_seeds >= 1, "run_distribution_experiment: need at least one sketch seed");
  DistributionResult out;
  const int mode = x.order() - 1;

  if (opt.run_cp) {
    FitOptions fo;
    fo.max_iters = opt.fit_iters;
    fo.tol = opt.fit_tol;
    fo.seed = opt.seed;
    FitTrace ft;
    CpModel m = cp_als(x, opt.cp_rank, fo, &ft);
    {
      ReportRow r = base_row("cp-exact", "cp", opt.seed);
      r.iters = opt.fit_iters;
      r.tol = opt.fit_tol;
      r.wall_seconds = ft.wall_seconds;
      r.final_rel_error = ft.final_rel_error;
      r.error_trace = ft.rel_errors;
      out.rows.push_back(std::move(r));
    }
    const std::vector<double> p = cp_exact_distribution(m, mode);

    auto t0 = Clock::now();
    const std::vector<double> qp = cp_product_distribution(m, mode);
    out.cp_kl_product = kl_divergence(qp, p);
    {
      ReportRow r = base_row("cp-product", "cp", opt.seed);
      r.wall_seconds = seconds_since(t0);
      r.final_rel_error = ft.final_rel_error;
      r.extra_name = "kl";
      r.extra_value = out.cp_kl_product;
      out.rows.push_back(std::move(r));
    }

    std::vector<index_t> leaf_dims;
    for (int j = x.order() - 1; j >= 0; --j)
      if (j != mode) leaf_dims.push_back(x.dims()[j]);
    std::vector<double> kls;
    for (int s = 0; s < opt.sketch_seeds; ++s) {
      t0 = Clock::now();
      const std::uint64_t sketch_seed = mix64(opt.seed ^ (0xA5A50000ULL + s));
      RecursiveSketch sk(opt.j1, leaf_dims, sketch_seed);
      Matrix sa = cp_sketch_design(m, mode, sk, opt.use_fft);
      LeverageMap lm = estimate_leverage_map(sa);
      CpSamplerState st = cp_sampler_state(m, mode, lm);
      const std::vector<double> q = cp_chain_distribution(st);
      kls.push_back(kl_divergence(q, p));
      ReportRow r = base_row("cp-es", "cp", sketch_seed);
      r.j1 = opt.j1;
      r.wall_seconds = seconds_since(t0);
      r.final_rel_error = ft.final_rel_error;
      r.extra_name = "kl";
      r.extra_value = kls.back();
      r.norm_constant = st.norm_constant;
      out.rows.push_back(std::move(r));
    }
    out.cp_kl_es = median(kls);
  }

  if (opt.run_tr) {
    std::vector<index_t> ranks = opt.tr_ranks;
    if (ranks.empty()) ranks.assign(x.order(), 3);
    FitOptions fo;
    fo.max_iters = opt.fit_iters;
    fo.tol = opt.fit_tol;
    fo.seed = opt.seed;
    FitTrace ft;
    TrModel m = tr_als(x, ranks, fo, &ft);
    {
      ReportRow r = base_row("tr-exact", "tr", opt.seed);
      r.iters = opt.fit_iters;
      r.tol = opt.fit_tol;
      r.wall_seconds = ft.wall_seconds;
      r.final_rel_error = ft.final_rel_error;
      r.error_trace = ft.rel_errors;
      out.rows.push_back(std::move(r));
    }
    const std::vector<double> p = tr_exact_distribution(m, mode);

    auto t0 = Clock::now();
    const std::vector<double> qp = tr_product_distribution(m, mode);
    out.tr_kl_product = kl_divergence(qp, p);
    {
      ReportRow r = base_row("tr-product", "tr", opt.seed);
      r.wall_seconds = seconds_since(t0);
      r.final_rel_error = ft.final_rel_error;
      r.extra_name = "kl";
      r.extra_value = out.tr_kl_product;
      out.rows.push_back(std::move(r));
    }

    std::vector<index_t> leaf_dims;
    for (int j : tr_sketch_leaf_order(x.order(), mode)) leaf_dims.push_back(x.dims()[j]);
    std::vector<double> kls;
    for (int s = 0; s < opt.sketch_seeds; ++s) {
      t0 = Clock::now();
      const std::uint64_t sketch_seed = mix64(opt.seed ^ (0xB5B50000ULL + s));
      RecursiveSketch sk(opt.j1, leaf_dims, sketch_seed);
      Matrix sa = tr_sketch_design(m, mode, sk, opt.use_fft);
      LeverageMap lm = estimate_leverage_map(sa);
      TrSamplerState st = tr_sampler_state(m, mode, lm);
      const std::vector<double> q = tr_chain_distribution(st);
      kls.push_back(kl_divergence(q, p));
      ReportRow r = base_row("tr-es", "tr", sketch_seed);
      r.j1 = opt.j1;
      r.wall_seconds = seconds_since(t0);
      r.final_rel_error = ft.final_rel_error;
      r.extra_name = "kl";
      r.extra_value = kls.back();
      r.norm_constant = st.norm_constant;
      out.rows.push_back(std::move(r));
    }
    out.tr_kl_es = median(kls);
  }
  return out;
}

RecoveryResult run_recovery_experiment(const RecoveryOptions& opt) {
  require(opt.seeds >= 1, "run_recovery_experiment: need at least one seed");
  RecoveryResult out;
  std::vector<index_t> dims = opt.dims;
  if (dims.empty()) dims.assign(opt.tr ? 8 : 10, 6);
  const int order = static_cast<int>(dims.size());
  std::vector<index_t> ranks = opt.ranks;
  if (opt.tr && ranks.empty()) ranks.assign(order, 3);
  const double spike = opt.spike > 0.0 ? opt.spike : (opt.tr ? 3.0 : 4.0);
  const index_t baseline_j2 = opt.baseline_j2 > 0 ? opt.baseline_j2 : opt.j2;
  const std::string kind = opt.tr ? "tr" : "cp";

  for (int s = 0; s < opt.seeds; ++s) {
    const std::uint64_t inst_seed = mix64(opt.seed + 0x9E3779B97F4A7C15ULL * s);
    DenseTensor x = opt.tr ? synth_tr(dims, ranks, spike, opt.noise_sd, inst_seed).tensor
                           : synth_cp(dims, opt.rank, spike, opt.noise_sd, inst_seed).tensor;

    // One range-finder init per seed, shared by both arms.
    FitOptions io;
    io.seed = inst_seed;
    io.range_finder_init = true;
    auto ti = Clock::now();
    CpModel cp_start;
    TrModel tr_start;
    if (opt.tr)
      tr_start = tr_init(x, ranks, io);
    else
      cp_start = cp_init(x, opt.rank, io);
    const double init_seconds = seconds_since(ti);

    auto record = [&](const char* method, index_t j1, index_t j2, const FitTrace& ft) {
      ReportRow r = base_row(method, kind, inst_seed);
      r.j1 = j1;
      r.j2 = j2;
      r.iters = opt.iters;
      r.tol = opt.tol;
      r.wall_seconds = init_seconds + ft.wall_seconds;
      r.final_rel_error = ft.final_rel_error;
      r.extra_name = "init_seconds";
      r.extra_value = init_seconds;
      r.clamp_events = ft.clamp_events;
      r.norm_constant = ft.norm_constants.empty() ? 0.0 : ft.norm_constants.back();
      r.error_trace = ft.rel_errors;
      out.rows.push_back(std::move(r));
    };

    if (opt.run_es) {
      FitTrace ft;
      if (opt.tr) {
        TrEsOptions eo;
        eo.max_iters = opt.iters;
        eo.tol = opt.tol;
        eo.seed = inst_seed;
        eo.j1 = opt.j1;
        eo.j2 = opt.j2;
        tr_als_es(x, tr_start, eo, &ft);
        record("tr-es", opt.j1, opt.j2, ft);
      } else {
        CpEsOptions eo;
        eo.max_iters = opt.iters;
        eo.tol = opt.tol;
        eo.seed = inst_seed;
        eo.j1 = opt.j1;
        eo.j2 = opt.j2;
        cp_als_es(x, cp_start, eo, &ft);
        record("cp-es", opt.j1, opt.j2, ft);
      }
      out.es_errors.push_back(ft.final_rel_error);
      out.es_wall += init_seconds + ft.wall_seconds;
    }
    if (opt.run_baseline) {
      FitTrace ft;
      if (opt.tr) {
        TrEsOptions eo;
        eo.max_iters = opt.iters;
        eo.tol = opt.tol;
        eo.seed = inst_seed;
        eo.j2 = baseline_j2;
        tr_als_sampled(x, tr_start, eo, &ft);
        record("tr-sampled", 0, baseline_j2, ft);
      } else {
        CpEsOptions eo;
        eo.max_iters = opt.iters;
        eo.tol = opt.tol;
        eo.seed = inst_seed;
        eo.j2 = baseline_j2;
        cp_arls_lev(x, cp_start, eo, &ft);
        record("cp-arls-lev", 0, baseline_j2, ft);
      }
      out.baseline_errors.push_back(ft.final_rel_error);
      out.baseline_wall += init_seconds + ft.wall_seconds;
    }
  }
  return out;
}

FeatureResult run_feature_extraction(const DenseTensor& x, const std::vector<int>& labels,
                                     const FeatureOptions& opt) {
  require(x.order() >= 2, "run_feature_extraction: tensor order must be at least 2");
  const int mode = x.order() - 1;
  require(static_cast<index_t>(labels.size()) == x.dims()[mode],
          "run_feature_extraction: need one label per sample (last mode)");

  FeatureResult out;
  FitTrace ft;
  const bool is_cp = opt.method.rfind("cp-", 0) == 0;
  const bool is_tr = opt.method.rfind("tr-", 0) == 0;
  require(is_cp || is_tr, "run_feature_extraction: unknown method " + opt.method);

  if (is_cp) {
    CpModel m;
    if (opt.method == "cp-exact") {
      FitOptions fo;
      fo.max_iters = opt.iters;
      fo.tol = opt.tol;
      fo.seed = opt.seed;
      m = cp_als(x, opt.rank, fo, &ft);
    } else {
      CpEsOptions eo;
      eo.max_iters = opt.iters;
      eo.tol = opt.tol;
      eo.seed = opt.seed;
      eo.j1 = opt.j1;
      eo.j2 = opt.j2;
      if (opt.method == "cp-es")
        m = cp_als_es(x, opt.rank, eo, &ft);
      else if (opt.method == "cp-arls-lev")
        m = cp_arls_lev(x, opt.rank, eo, &ft);
      else
        throw config_error("run_feature_extraction: unknown method " + opt.method);
    }
    out.features = m.factors[mode];
  } else {
    std::vector<index_t> ranks = opt.ranks;
    if (ranks.empty()) ranks.assign(x.order(), opt.rank);
    TrModel m;
    if (opt.method == "tr-exact") {
      FitOptions fo;
      fo.max_iters = opt.iters;
      fo.tol = opt.tol;
      fo.seed = opt.seed;
      m = tr_als(x, ranks, fo, &ft);
    } else {
      TrEsOptions eo;
      eo.max_iters = opt.iters;
      eo.tol = opt.tol;
      eo.seed = opt.seed;
      eo.j1 = opt.j1;
      eo.j2 = opt.j2;
      if (opt.method == "tr-es")
        m = tr_als_es(x, ranks, eo, &ft);
      else if (opt.method == "tr-sampled")
        m = tr_als_sampled(x, ranks, eo, &ft);
      else
        throw config_error("run_feature_extraction: unknown method " + opt.method);
    }
    out.features = core_unfold2_classical(m, mode);
  }

  out.accuracy = knn_cross_val(out.features, labels, opt.folds, mix64(opt.seed ^ 0xF01D5EEDULL));
  ReportRow r = base_row(opt.method, is_cp ? "cp" : "tr", opt.seed);
  r.j1 = opt.method == "cp-exact" || opt.method == "tr-exact" ? 0 : opt.j1;
  r.j2 = r.j1 == 0 ? 0 : opt.j2;
  r.iters = opt.iters;
  r.tol = opt.tol;
  r.wall_seconds = ft.wall_seconds;
  r.final_rel_error = ft.final_rel_error;
  r.extra_name = "accuracy";
  r.extra_value = out.accuracy;
  r.clamp_events = ft.clamp_events;
  r.norm_constant = ft.norm_constants.empty() ? 0.0 : ft.norm_constants.back();
  r.error_trace = ft.rel_errors;
  out.rows.push_back(std::move(r));
  return out;
}

Matrix cp_project_features(const DenseTensor& batch, const CpModel& m, int mode) {
  require(batch.order() == m.order(), "cp_project_features: order mismatch");
  require(mode >= 0 && mode < m.order(), "cp_project_features: bad mode");
  for (int j = 0; j < m.order(); ++j)
    if (j != mode)
      require(batch.dims()[j] == m.factors[j].rows(),
              "cp_project_features: off-mode dims must match the model");
  const index_t rank = m.rank();
  Matrix g = Matrix::Ones(rank, rank);
  for (int j = 0; j < m.order(); ++j)
    if (j != mode) g.array() *= (m.factors[j].transpose() * m.factors[j]).array();
  return cp_mttkrp(batch, m, mode) * psd_pinv(g);
}

Matrix tr_project_features(const DenseTensor& batch, const TrModel& m, int mode) {
  require(batch.order() == m.order(), "tr_project_features: order mismatch");
  require(mode >= 0 && mode < m.order(), "tr_project_features: bad mode");
  for (int j = 0; j < m.order(); ++j)
    if (j != mode)
      require(batch.dims()[j] == m.dims()[j],
              "tr_project_features: off-mode dims must match the model");
  return tr_subchain_rhs(batch, m, mode) * psd_pinv(tr_normal_matrix(m, mode));
}

double knn_cross_val(const Matrix& features, const std::vector<int>& labels, int folds,
                     std::uint64_t seed) {
  const index_t n = features.rows();
  require(n == static_cast<index_t>(labels.size()), "knn_cross_val: label count mismatch");
  require(folds >= 2, "knn_cross_val: need at least two folds");
  require(n >= 2, "knn_cross_val: need at least two samples");

  std::map<int, std::vector<index_t>> by_class;
  for (index_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
  std::vector<int> fold(n, 0);
  SplitRng root(seed);
  int cidx = 0;
  for (auto& [label, idx] : by_class) {
    (void)label;
    SplitRng rng = root.fork(0x71000 + cidx++);
    for (index_t i = static_cast<index_t>(idx.size()) - 1; i > 0; --i)
      std::swap(idx[i], idx[rng.next_below(i + 1)]);
    for (std::size_t p = 0; p < idx.size(); ++p) fold[idx[p]] = static_cast<int>(p % folds);
  }

  index_t correct = 0, scored = 0;
  for (index_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int pred = 0;
    bool found = false;
    for (index_t j = 0; j < n; ++j) {
      if (fold[j] == fold[i]) continue;
      const double d2 = (features.row(i) - features.row(j)).squaredNorm();
      if (d2 < best) {
        best = d2;
        pred = labels[j];
        found = true;
      }
    }
    if (found) {
      correct += pred == labels[i] ? 1 : 0;
      ++scored;
    }
  }
  require(scored > 0, "knn_cross_val: every sample landed in a single fold");
  return static_cast<double>(correct) / static_cast<double>(scored);
}

}  // namespace sals
