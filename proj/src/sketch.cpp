#include "sals/sketch.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>

namespace sals {

PolyHash::PolyHash(int k, SplitRng rng) {
  coef_.resize(k);
  for (auto& c : coef_) {
    std::uint64_t v;
    do {
      v = rng.next_u64() >> 3;  // 61 bits
    } while (v >= kPrime);
    c = v;
  }
}

std::uint64_t PolyHash::eval(std::uint64_t x) const {
  const std::uint64_t xr = x % kPrime;
  std::uint64_t acc = 0;
  for (auto it = coef_.rbegin(); it != coef_.rend(); ++it) {
    unsigned __int128 t = static_cast<unsigned __int128>(acc) * xr + *it;
    // Mersenne reduction: t mod (2^61 - 1).
    std::uint64_t lo = static_cast<std::uint64_t>(t) & kPrime;
    std::uint64_t hi = static_cast<std::uint64_t>(t >> 61);
    acc = lo + hi;
    while (acc >= kPrime) acc -= kPrime;
  }
  return acc;
}

// ---------------------------------------------------------------------------

namespace {
std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealConv::RealConv(index_t n) : n_(n) {
  require(n >= 1, "RealConv: length must be >= 1");
  std::vector<double> re(static_cast<std::size_t>(n));
  std::vector<std::complex<double>> sp(static_cast<std::size_t>(spec_length()));
  std::lock_guard<std::mutex> lock(fftw_plan_mutex());  // plan creation is not thread-safe
  fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), re.data(),
                              reinterpret_cast<fftw_complex*>(sp.data()),
                              FFTW_ESTIMATE | FFTW_UNALIGNED);
  inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(sp.data()),
                              re.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  require(fwd_ && inv_, "RealConv: FFTW plan creation failed");
}

RealConv::~RealConv() {
  std::lock_guard<std::mutex> lock(fftw_plan_mutex());
  if (fwd_) fftw_destroy_plan(static_cast<fftw_plan>(fwd_));
  if (inv_) fftw_destroy_plan(static_cast<fftw_plan>(inv_));
}

void RealConv::forward(const double* x, std::complex<double>* spec) const {
  fftw_execute_dft_r2c(static_cast<fftw_plan>(fwd_), const_cast<double*>(x),
                       reinterpret_cast<fftw_complex*>(spec));
}

void RealConv::inverse(const std::complex<double>* spec, double* out) const {
  // c2r overwrites its input, so transform a scratch copy.
  std::vector<std::complex<double>> tmp(spec, spec + spec_length());
  fftw_execute_dft_c2r(static_cast<fftw_plan>(inv_),
                       reinterpret_cast<fftw_complex*>(tmp.data()), out);
  const double scale = 1.0 / static_cast<double>(n_);
  for (index_t i = 0; i < n_; ++i) out[i] *= scale;
}

// ---------------------------------------------------------------------------

CountSketch make_countsketch(index_t in_dim, index_t out_dim, SplitRng rng) {
  require(in_dim >= 1 && out_dim >= 1, "CountSketch: dims must be >= 1");
  CountSketch cs;
  cs.in_dim = in_dim;
  cs.out_dim = out_dim;
  PolyHash h(3, rng.fork(1));
  PolyHash s(4, rng.fork(2));
  cs.bucket_of.resize(in_dim);
  cs.sign_of.resize(in_dim);
  for (index_t i = 0; i < in_dim; ++i) {
    cs.bucket_of[i] = static_cast<index_t>(h.eval(i) % static_cast<std::uint64_t>(out_dim));
    cs.sign_of[i] = (s.eval(i) & 1) ? -1.0 : 1.0;
  }
  return cs;
}

void CountSketch::apply_vec(const double* x, double* y) const {
  for (index_t i = 0; i < in_dim; ++i) y[bucket_of[i]] += sign_of[i] * x[i];
}

Matrix CountSketch::apply(const Matrix& a) const {
  require(a.rows() == in_dim, "CountSketch: input row count mismatch");
  Matrix out = Matrix::Zero(out_dim, a.cols());
  for (index_t i = 0; i < in_dim; ++i) out.row(bucket_of[i]) += sign_of[i] * a.row(i);
  return out;
}

Matrix CountSketch::materialize() const {
  Matrix out = Matrix::Zero(out_dim, in_dim);
  for (index_t i = 0; i < in_dim; ++i) out(bucket_of[i], i) = sign_of[i];
  return out;
}

// ---------------------------------------------------------------------------

TensorSketch::TensorSketch(index_t dim, SplitRng rng, std::shared_ptr<const RealConv> conv)
    : dim_(dim), conv_(std::move(conv)) {
  require(conv_ && conv_->length() == dim, "TensorSketch: convolver length mismatch");
  c1_ = make_countsketch(dim, dim, rng.fork(1));
  c2_ = make_countsketch(dim, dim, rng.fork(2));
}

Vector TensorSketch::apply_pair(const double* x, const double* y, bool use_fft) const {
  Vector u = Vector::Zero(dim_), v = Vector::Zero(dim_);
  c1_.apply_vec(x, u.data());
  c2_.apply_vec(y, v.data());
  Vector out(dim_);
  if (use_fft) {
    const index_t ns = conv_->spec_length();
    std::vector<std::complex<double>> su(ns), sv(ns);
    conv_->forward(u.data(), su.data());
    conv_->forward(v.data(), sv.data());
    for (index_t i = 0; i < ns; ++i) su[i] *= sv[i];
    conv_->inverse(su.data(), out.data());
  } else {
    // Direct cyclic convolution; quadratic, used as the oracle path.
    out.setZero();
    for (index_t a = 0; a < dim_; ++a) {
      if (u[a] == 0.0) continue;
      for (index_t b = 0; b < dim_; ++b) {
        index_t c = a + b;
        if (c >= dim_) c -= dim_;
        out[c] += u[a] * v[b];
      }
    }
  }
  return out;
}

void TensorSketch::image_spectrum(int which, const double* x, std::complex<double>* spec) const {
  Vector img = Vector::Zero(dim_);
  (which == 1 ? c1_ : c2_).apply_vec(x, img.data());
  conv_->forward(img.data(), spec);
}

void TensorSketch::inverse(const std::complex<double>* spec, double* out) const {
  conv_->inverse(spec, out);
}

Matrix TensorSketch::materialize() const {
  require(dim_ <= 4096, "TensorSketch::materialize: too large");
  Matrix out = Matrix::Zero(dim_, dim_ * dim_);
  for (index_t a = 0; a < dim_; ++a)
    for (index_t b = 0; b < dim_; ++b) {
      index_t j = c1_.bucket(a) + c2_.bucket(b);
      if (j >= dim_) j -= dim_;
      out(j, a * dim_ + b) = c1_.sign(a) * c2_.sign(b);
    }
  return out;
}

// ---------------------------------------------------------------------------

namespace {
int ceil_log2(int m) {
  int q = 0;
  while ((1 << q) < m) ++q;
  return q;
}
}  // namespace

RecursiveSketch::RecursiveSketch(index_t out_dim, std::vector<index_t> leaf_dims,
                                 std::uint64_t seed)
    : j_(out_dim), leaf_dims_(std::move(leaf_dims)) {
  require(j_ >= 1, "RecursiveSketch: output dim must be >= 1");
  require(!leaf_dims_.empty(), "RecursiveSketch: need at least one leaf");
  const int m = leaf_count();
  q_ = ceil_log2(m);
  index_t pad_dim = 1;
  for (index_t d : leaf_dims_) {
    require(d >= 1, "RecursiveSketch: leaf dims must be >= 1");
    pad_dim = std::max(pad_dim, d);
  }
  conv_ = std::make_shared<RealConv>(j_);
  SplitRng root(seed);
  leaves_.reserve(1 << q_);
  for (int j = 0; j < (1 << q_); ++j) {
    index_t d = j < m ? leaf_dims_[j] : pad_dim;
    leaves_.push_back(make_countsketch(d, j_, root.fork((std::uint64_t(0) << 32) | j)));
  }
  nodes_.resize(q_);
  for (int level = 1; level <= q_; ++level) {
    int width = 1 << (q_ - level);
    nodes_[level - 1].reserve(width);
    for (int p = 0; p < width; ++p)
      nodes_[level - 1].emplace_back(j_, root.fork((std::uint64_t(level) << 32) | p), conv_);
  }
}

Matrix RecursiveSketch::apply_kron_columns(const std::vector<const Matrix*>& factors,
                                           bool use_fft) const {
  const int m = leaf_count();
  require(static_cast<int>(factors.size()) == m, "apply_kron_columns: factor count mismatch");
  const index_t r = factors.empty() ? 0 : factors[0]->cols();
  for (const Matrix* f : factors)
    require(f->cols() == r, "apply_kron_columns: factor column counts differ");
  for (int j = 0; j < m; ++j)
    require(factors[j]->rows() == leaf_dims_[j], "apply_kron_columns: factor row/leaf mismatch");

  Matrix out(j_, r);
#pragma omp parallel for schedule(static)
  for (index_t c = 0; c < r; ++c) {
    // Leaf images for column c; spare leaves sketch e_0.
    std::vector<Vector> cur(1 << q_);
    for (int j = 0; j < (1 << q_); ++j) {
      cur[j] = Vector::Zero(j_);
      if (j < m) {
        Vector col = factors[j]->col(c);
        leaves_[j].apply_vec(col.data(), cur[j].data());
      } else {
        cur[j][leaves_[j].bucket(0)] = leaves_[j].sign(0);
      }
    }
    for (int level = 1; level <= q_; ++level) {
      int width = 1 << (q_ - level);
      std::vector<Vector> next(width);
      for (int p = 0; p < width; ++p)
        next[p] = nodes_[level - 1][p].apply_pair(cur[2 * p].data(), cur[2 * p + 1].data(),
                                                  use_fft);
      cur = std::move(next);
    }
    out.col(c) = cur[0];
  }
  return out;
}

Matrix RecursiveSketch::materialize() const {
  const int m = leaf_count();
  index_t total = 1;
  for (index_t d : leaf_dims_) {
    total *= d;
    require(total <= (index_t(1) << 22), "RecursiveSketch::materialize: domain too large");
  }
  Matrix out = Matrix::Zero(j_, total);
  // Propagate signed unit vectors through the hash tree: exact and cheap.
  const int width0 = 1 << q_;
#pragma omp parallel for schedule(static)
  for (index_t col = 0; col < total; ++col) {
    index_t rem = col;
    std::vector<index_t> idx(width0);
    std::vector<double> sgn(width0);
    // Kronecker linearization: leaf m-1 varies fastest in the column index.
    std::vector<index_t> sub(m);
    for (int j = m - 1; j >= 0; --j) {
      sub[j] = rem % leaf_dims_[j];
      rem /= leaf_dims_[j];
    }
    for (int j = 0; j < width0; ++j) {
      index_t i = j < m ? sub[j] : 0;
      idx[j] = leaves_[j].bucket(i);
      sgn[j] = leaves_[j].sign(i);
    }
    int width = width0;
    for (int level = 1; level <= q_; ++level) {
      width >>= 1;
      for (int p = 0; p < width; ++p) {
        const TensorSketch& ts = nodes_[level - 1][p];
        index_t a = idx[2 * p], b = idx[2 * p + 1];
        index_t j = ts.cs1().bucket(a) + ts.cs2().bucket(b);
        if (j >= j_) j -= j_;
        idx[p] = j;
        sgn[p] = sgn[2 * p] * sgn[2 * p + 1] * ts.cs1().sign(a) * ts.cs2().sign(b);
      }
    }
    out(idx[0], col) = sgn[0];
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Pairwise combination with the shared-index sum.  L has Ka*Kb columns, R has
// Kb*Kc; output has Ka*Kc.  The FFT path transforms each input column once
// and accumulates products in the frequency domain.
Matrix combine_node(const TensorSketch& ts, const Matrix& l, const Matrix& r, index_t ka,
                    index_t kb, index_t kc, bool use_fft) {
  const index_t j = ts.dim();
  Matrix out(j, ka * kc);
  if (!use_fft) {
    out.setZero();
    for (index_t c = 0; c < kc; ++c)
      for (index_t b = 0; b < kb; ++b)
        for (index_t a = 0; a < ka; ++a)
          out.col(a + ka * c) +=
              ts.apply_pair(l.col(a + ka * b).data(), r.col(b + kb * c).data(), false);
    return out;
  }
  const index_t ns = ts.conv().spec_length();
  Eigen::MatrixXcd sl(ns, ka * kb), sr(ns, kb * kc);
  for (index_t c = 0; c < ka * kb; ++c) ts.image_spectrum(1, l.col(c).data(), sl.col(c).data());
  for (index_t c = 0; c < kb * kc; ++c) ts.image_spectrum(2, r.col(c).data(), sr.col(c).data());
  Eigen::VectorXcd acc(ns);
  for (index_t c = 0; c < kc; ++c)
    for (index_t a = 0; a < ka; ++a) {
      acc.setZero();
      for (index_t b = 0; b < kb; ++b)
        acc += sl.col(a + ka * b).cwiseProduct(sr.col(b + kb * c));
      ts.inverse(acc.data(), out.col(a + ka * c).data());
    }
  return out;
}

}  // namespace

Matrix combine_chain(const RecursiveSketch& ps, const std::vector<Matrix>& y0,
                     const std::vector<index_t>& K, const std::vector<char>& dirty,
                     ChainCache* cache, bool use_fft) {
  const int width0 = ps.tree_width();
  require(static_cast<int>(y0.size()) == width0, "combine_chain: need one input per tree leaf");
  require(static_cast<int>(K.size()) == width0 + 1, "combine_chain: K must have 2^q + 1 entries");
  for (int j = 0; j < width0; ++j)
    require(y0[j].cols() == K[j] * K[j + 1], "combine_chain: input column count mismatch");
  if (ps.height() == 0) return y0[0];

  int total_nodes = width0 - 1;
  if (cache && cache->out.empty()) {
    cache->out.resize(total_nodes);
    cache->valid.assign(total_nodes, 0);
  }

  std::vector<Matrix> cur = y0;
  std::vector<index_t> k = K;
  // clean[p] == true when no leaf under node p changed since the cache was filled.
  std::vector<char> clean(width0);
  for (int j = 0; j < width0; ++j) clean[j] = dirty.empty() ? 0 : !dirty[j];

  int node_base = 0;
  for (int level = 1; level <= ps.height(); ++level) {
    int width = 1 << (ps.height() - level);
    std::vector<Matrix> next(width);
    std::vector<index_t> nk(width + 1);
    std::vector<char> nclean(width);
    for (int p = 0; p <= width; ++p) nk[p] = k[2 * p];
    for (int p = 0; p < width; ++p) {
      nclean[p] = clean[2 * p] && clean[2 * p + 1];
      int id = node_base + p;
      if (cache && nclean[p] && cache->valid[id]) {
        next[p] = cache->out[id];
        continue;
      }
      next[p] = combine_node(ps.node(level, p), cur[2 * p], cur[2 * p + 1], k[2 * p],
                             k[2 * p + 1], k[2 * p + 2], use_fft);
      if (cache && nclean[p]) {
        cache->out[id] = next[p];
        cache->valid[id] = 1;
      }
    }
    node_base += width;
    cur = std::move(next);
    k = std::move(nk);
    clean = std::move(nclean);
  }
  return cur[0];
}

}  // namespace sals
