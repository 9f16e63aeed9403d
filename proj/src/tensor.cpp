#include "sals/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sals/rng.hpp"

namespace sals {

DenseTensor::DenseTensor(std::vector<index_t> dims) : dims_(std::move(dims)) {
  require(!dims_.empty(), "tensor order must be >= 1");
  index_t n = 1;
  strides_.resize(dims_.size());
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    require(dims_[i] >= 1, "tensor dimensions must be >= 1");
    strides_[i] = n;
    n *= dims_[i];
  }
  data_.assign(static_cast<std::size_t>(n), 0.0);
}

double& DenseTensor::at(const std::vector<index_t>& sub) {
  return data_[linear_index(sub, dims_)];
}

double DenseTensor::at(const std::vector<index_t>& sub) const {
  return data_[linear_index(sub, dims_)];
}

double DenseTensor::norm() const {
  double s = 0.0;
  const index_t n = size();
  const double* p = data();
#pragma omp parallel for schedule(static) reduction(+ : s)
  for (index_t i = 0; i < n; ++i) s += p[i] * p[i];
  return std::sqrt(s);
}

index_t linear_index(const index_t* sub, const index_t* dims, int n) {
  index_t flat = 0;
  index_t stride = 1;
  for (int i = 0; i < n; ++i) {
    flat += sub[i] * stride;
    stride *= dims[i];
  }
  return flat;
}

index_t linear_index(const std::vector<index_t>& sub, const std::vector<index_t>& dims) {
  require(sub.size() == dims.size(), "multi-index order mismatch");
  return linear_index(sub.data(), dims.data(), static_cast<int>(dims.size()));
}

void unravel_index(index_t flat, const index_t* dims, int n, index_t* sub) {
  for (int i = 0; i < n; ++i) {
    sub[i] = flat % dims[i];
    flat /= dims[i];
  }
}

std::vector<index_t> unravel_index(index_t flat, const std::vector<index_t>& dims) {
  std::vector<index_t> sub(dims.size());
  unravel_index(flat, dims.data(), static_cast<int>(dims.size()), sub.data());
  return sub;
}

std::vector<int> classical_mode_order(int order, int skip) {
  std::vector<int> modes;
  for (int j = 0; j < order; ++j)
    if (j != skip) modes.push_back(j);
  return modes;
}

std::vector<int> cyclic_mode_order(int order, int skip) {
  std::vector<int> modes;
  for (int j = skip + 1; j < order; ++j) modes.push_back(j);
  for (int j = 0; j < skip; ++j) modes.push_back(j);
  return modes;
}

ModeOdometer::ModeOdometer(const std::vector<index_t>& dims, const std::vector<index_t>& strides,
                           std::vector<int> modes)
    : modes_(std::move(modes)), sub_(modes_.size(), 0) {
  dims_.reserve(modes_.size());
  strides_.reserve(modes_.size());
  for (int m : modes_) {
    dims_.push_back(dims[m]);
    strides_.push_back(strides[m]);
    total_ *= dims[m];
  }
}

void ModeOdometer::advance() {
  for (std::size_t t = 0; t < modes_.size(); ++t) {
    base_ += strides_[t];
    if (++sub_[t] < dims_[t]) return;
    base_ -= dims_[t] * strides_[t];
    sub_[t] = 0;
  }
}

void ModeOdometer::seek(index_t column) {
  unravel_index(column, dims_.data(), static_cast<int>(dims_.size()), sub_.data());
  base_ = 0;
  for (std::size_t t = 0; t < modes_.size(); ++t) base_ += sub_[t] * strides_[t];
}

namespace {

Matrix unfold_by_order(const DenseTensor& x, int mode, const std::vector<int>& modes) {
  const auto& dims = x.dims();
  const auto& strides = x.strides();
  index_t cols = 1;
  for (int j : modes) cols *= dims[j];
  Matrix out(dims[mode], cols);
  std::vector<index_t> sub(modes.size(), 0);
  for (index_t c = 0; c < cols; ++c) {
    index_t base = 0;
    for (std::size_t t = 0; t < modes.size(); ++t) base += sub[t] * strides[modes[t]];
    for (index_t i = 0; i < dims[mode]; ++i) out(i, c) = x[base + i * strides[mode]];
    for (std::size_t t = 0; t < modes.size(); ++t) {  // odometer
      if (++sub[t] < dims[modes[t]]) break;
      sub[t] = 0;
    }
  }
  return out;
}

DenseTensor fold_by_order(const Matrix& m, int mode, const std::vector<index_t>& dims,
                          const std::vector<int>& modes) {
  DenseTensor x(dims);
  const auto& strides = x.strides();
  require(m.rows() == dims[mode], "fold: row count does not match mode dimension");
  index_t cols = 1;
  for (int j : modes) cols *= dims[j];
  require(m.cols() == cols, "fold: column count does not match remaining modes");
  std::vector<index_t> sub(modes.size(), 0);
  for (index_t c = 0; c < cols; ++c) {
    index_t base = 0;
    for (std::size_t t = 0; t < modes.size(); ++t) base += sub[t] * strides[modes[t]];
    for (index_t i = 0; i < dims[mode]; ++i) x[base + i * strides[mode]] = m(i, c);
    for (std::size_t t = 0; t < modes.size(); ++t) {
      if (++sub[t] < dims[modes[t]]) break;
      sub[t] = 0;
    }
  }
  return x;
}

}  // namespace

Matrix classical_unfold(const DenseTensor& x, int mode) {
  require(mode >= 0 && mode < x.order(), "unfold: mode out of range");
  return unfold_by_order(x, mode, classical_mode_order(x.order(), mode));
}

DenseTensor classical_fold(const Matrix& m, int mode, const std::vector<index_t>& dims) {
  return fold_by_order(m, mode, dims, classical_mode_order(static_cast<int>(dims.size()), mode));
}

Matrix cyclic_unfold(const DenseTensor& x, int mode) {
  require(mode >= 0 && mode < x.order(), "unfold: mode out of range");
  return unfold_by_order(x, mode, cyclic_mode_order(x.order(), mode));
}

DenseTensor cyclic_fold(const Matrix& m, int mode, const std::vector<index_t>& dims) {
  return fold_by_order(m, mode, dims, cyclic_mode_order(static_cast<int>(dims.size()), mode));
}

Matrix kronecker(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (index_t ca = 0; ca < a.cols(); ++ca)
    for (index_t cb = 0; cb < b.cols(); ++cb)
      for (index_t ra = 0; ra < a.rows(); ++ra)
        for (index_t rb = 0; rb < b.rows(); ++rb)
          out(ra * b.rows() + rb, ca * b.cols() + cb) = a(ra, ca) * b(rb, cb);
  return out;
}

Matrix khatri_rao(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "khatri_rao: column counts differ");
  Matrix out(a.rows() * b.rows(), a.cols());
  for (index_t c = 0; c < a.cols(); ++c)
    for (index_t ra = 0; ra < a.rows(); ++ra)
      for (index_t rb = 0; rb < b.rows(); ++rb)
        out(ra * b.rows() + rb, c) = a(ra, c) * b(rb, c);
  return out;
}

Matrix khatri_rao(const std::vector<const Matrix*>& ms) {
  require(!ms.empty(), "khatri_rao: empty list");
  Matrix out = *ms[0];
  for (std::size_t i = 1; i < ms.size(); ++i) out = khatri_rao(out, *ms[i]);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<index_t> CpModel::dims() const {
  std::vector<index_t> d(factors.size());
  for (std::size_t n = 0; n < factors.size(); ++n) d[n] = factors[n].rows();
  return d;
}

Matrix cp_design_matrix(const CpModel& m, int mode) {
  require(mode >= 0 && mode < m.order(), "design: mode out of range");
  require(m.order() >= 2, "design: need order >= 2");
  std::vector<const Matrix*> ms;
  for (int j = m.order() - 1; j >= 0; --j)
    if (j != mode) ms.push_back(&m.factors[j]);
  return khatri_rao(ms);
}

double cp_value(const CpModel& m, const index_t* sub) {
  const int n = m.order();
  const int r = m.rank();
  double acc = 0.0;
  for (int k = 0; k < r; ++k) {
    double p = 1.0;
    for (int j = 0; j < n; ++j) p *= m.factors[j](sub[j], k);
    acc += p;
  }
  return acc;
}

namespace {

// Walks flat entries [lo, hi) of a CP model in layout order, keeping suffix
// row products so each entry costs one length-R dot.  fn(flat, value).
template <typename F>
void cp_walk(const CpModel& m, const std::vector<index_t>& dims, index_t lo, index_t hi, F&& fn) {
  const int n = static_cast<int>(dims.size());
  const int r = m.rank();
  std::vector<index_t> sub(n);
  unravel_index(lo, dims.data(), n, sub.data());
  // suffix[d] = elementwise product of factor rows for modes >= d.
  std::vector<Eigen::RowVectorXd> suffix(n + 1);
  suffix[n] = Eigen::RowVectorXd::Ones(r);
  for (int d = n - 1; d >= 1; --d)
    suffix[d] = m.factors[d].row(sub[d]).cwiseProduct(suffix[d + 1]);
  const Matrix& f0 = m.factors[0];
  for (index_t flat = lo; flat < hi;) {
    const Eigen::RowVectorXd& s1 = n > 1 ? suffix[1] : suffix[n];
    index_t i0 = sub[0];
    index_t run = std::min(dims[0] - i0, hi - flat);
    for (index_t t = 0; t < run; ++t) fn(flat + t, f0.row(i0 + t).dot(s1));
    flat += run;
    if (flat >= hi) break;
    sub[0] = 0;
    int d = 1;
    while (d < n && ++sub[d] == dims[d]) sub[d] = 0, ++d;
    for (int j = std::min(d, n - 1); j >= 1; --j)
      suffix[j] = m.factors[j].row(sub[j]).cwiseProduct(suffix[j + 1]);
  }
}

// Same walk for a tensor-ring model: suffix matrix products make each entry a
// trace of a slice against the running tail product.
template <typename F>
void tr_walk(const TrModel& m, const std::vector<index_t>& dims, index_t lo, index_t hi, F&& fn) {
  const int n = static_cast<int>(dims.size());
  std::vector<index_t> sub(n);
  unravel_index(lo, dims.data(), n, sub.data());
  // tail[d] = slice_d(i_d) * ... * slice_{n-1}(i_{n-1}), shape R_{d-1} x R_{n-1}.
  std::vector<Matrix> tail(n + 1);
  tail[n] = Matrix::Identity(m.rank_left(0), m.rank_left(0));
  for (int d = n - 1; d >= 1; --d) tail[d] = m.slice(d, sub[d]) * tail[d + 1];
  for (index_t flat = lo; flat < hi;) {
    const Matrix& t1 = n > 1 ? tail[1] : tail[n];
    index_t i0 = sub[0];
    index_t run = std::min(dims[0] - i0, hi - flat);
    for (index_t t = 0; t < run; ++t) {
      // trace(slice_0(i0) * t1); slice_0 is R_{n-1} x R_0, t1 is R_0 x R_{n-1}.
      auto s0 = m.slice(0, i0 + t);
      double v = 0.0;
      for (index_t a = 0; a < s0.rows(); ++a) v += s0.row(a).dot(t1.col(a));
      fn(flat + t, v);
    }
    flat += run;
    if (flat >= hi) break;
    sub[0] = 0;
    int d = 1;
    while (d < n && ++sub[d] == dims[d]) sub[d] = 0, ++d;
    for (int j = std::min(d, n - 1); j >= 1; --j) tail[j] = m.slice(j, sub[j]) * tail[j + 1];
  }
}

// Splits [0, total) into per-thread ranges and runs the walk in parallel.
template <typename Walk>
void parallel_walk(index_t total, Walk&& walk) {
#pragma omp parallel
  {
    int nt = 1, tid = 0;
#ifdef _OPENMP
    nt = omp_get_num_threads();
    tid = omp_get_thread_num();
#endif
    index_t chunk = (total + nt - 1) / nt;
    index_t lo = std::min<index_t>(total, tid * chunk);
    index_t hi = std::min<index_t>(total, lo + chunk);
    if (lo < hi) walk(lo, hi);
  }
}

}  // namespace

DenseTensor cp_reconstruct(const CpModel& m) {
  DenseTensor out(m.dims());
  double* p = out.data();
  parallel_walk(out.size(), [&](index_t lo, index_t hi) {
    cp_walk(m, out.dims(), lo, hi, [&](index_t f, double v) { p[f] = v; });
  });
  return out;
}

double rel_error(const CpModel& m, const DenseTensor& x) {
  require(m.dims() == x.dims(), "rel_error: shape mismatch");
  const double* p = x.data();
  double num = 0.0, den = 0.0;
#pragma omp parallel reduction(+ : num, den)
  {
    int nt = 1, tid = 0;
#ifdef _OPENMP
    nt = omp_get_num_threads();
    tid = omp_get_thread_num();
#endif
    index_t total = x.size();
    index_t chunk = (total + nt - 1) / nt;
    index_t lo = std::min<index_t>(total, tid * chunk);
    index_t hi = std::min<index_t>(total, lo + chunk);
    if (lo < hi)
      cp_walk(m, x.dims(), lo, hi, [&](index_t f, double v) {
        double d = p[f] - v;
        num += d * d;
        den += p[f] * p[f];
      });
  }
  if (den <= 0.0) throw degenerate_error("rel_error: zero reference tensor");
  return std::sqrt(num) / std::sqrt(den);
}

// ---------------------------------------------------------------------------

std::vector<index_t> TrModel::dims() const {
  std::vector<index_t> d(cores.size());
  for (std::size_t n = 0; n < cores.size(); ++n) d[n] = cores[n].dims()[1];
  return d;
}

std::vector<index_t> TrModel::ranks() const {
  std::vector<index_t> r(cores.size());
  for (std::size_t n = 0; n < cores.size(); ++n) r[n] = cores[n].dims()[2];
  return r;
}

index_t TrModel::rank_left(int n) const { return cores[n].dims()[0]; }
index_t TrModel::rank_right(int n) const { return cores[n].dims()[2]; }

Eigen::Map<const Matrix, 0, Eigen::OuterStride<>> TrModel::slice(int n, index_t i) const {
  const auto& d = cores[n].dims();
  return {cores[n].data() + d[0] * i, d[0], d[2], Eigen::OuterStride<>(d[0] * d[1])};
}

Matrix core_unfold2(const TrModel& m, int n) {
  const auto& d = m.cores[n].dims();  // (R_{n-1}, I_n, R_n)
  Matrix out(d[1], d[2] * d[0]);
  for (index_t rl = 0; rl < d[0]; ++rl)
    for (index_t i = 0; i < d[1]; ++i)
      for (index_t rr = 0; rr < d[2]; ++rr)
        out(i, rr + d[2] * rl) = m.cores[n][rl + d[0] * (i + d[1] * rr)];
  return out;
}

DenseTensor core_fold2(const Matrix& g2, index_t rl, index_t rr) {
  require(g2.cols() == rl * rr, "core_fold2: column count != R_left * R_right");
  DenseTensor core({rl, g2.rows(), rr});
  for (index_t a = 0; a < rl; ++a)
    for (index_t i = 0; i < g2.rows(); ++i)
      for (index_t b = 0; b < rr; ++b) core[a + rl * (i + g2.rows() * b)] = g2(i, b + rr * a);
  return core;
}

DenseTensor core_fold2_classical(const Matrix& g2, index_t rl, index_t rr) {
  require(g2.cols() == rl * rr, "core_fold2_classical: column count != R_left * R_right");
  DenseTensor core({rl, g2.rows(), rr});
  for (index_t a = 0; a < rl; ++a)
    for (index_t i = 0; i < g2.rows(); ++i)
      for (index_t b = 0; b < rr; ++b) core[a + rl * (i + g2.rows() * b)] = g2(i, a + rl * b);
  return core;
}

Matrix core_unfold2_classical(const TrModel& m, int n) {
  const auto& d = m.cores[n].dims();
  Matrix out(d[1], d[0] * d[2]);
  for (index_t rl = 0; rl < d[0]; ++rl)
    for (index_t i = 0; i < d[1]; ++i)
      for (index_t rr = 0; rr < d[2]; ++rr)
        out(i, rl + d[0] * rr) = m.cores[n][rl + d[0] * (i + d[1] * rr)];
  return out;
}

Matrix subchain_slice(const TrModel& m, int mode, const index_t* sub) {
  const int n = m.order();
  Matrix acc;
  bool first = true;
  for (int step = 1; step < n; ++step) {
    int j = (mode + step) % n;
    if (first) {
      acc = m.slice(j, sub[j]);
      first = false;
    } else {
      acc = acc * m.slice(j, sub[j]);
    }
  }
  return acc;  // R_mode x R_{mode-1}
}

DenseTensor subchain(const TrModel& m, int mode) {
  const int n = m.order();
  require(n >= 2, "subchain: need order >= 2");
  const auto dims = m.dims();
  index_t mid = 1;
  for (int j = 0; j < n; ++j)
    if (j != mode) mid *= dims[j];
  require(mid <= (index_t(1) << 24), "subchain: too large to materialize");
  index_t rr = m.rank_right(mode);   // R_n
  index_t rl = m.rank_left(mode);    // R_{n-1}
  DenseTensor out({rr, mid, rl});
  auto modes = cyclic_mode_order(n, mode);
  std::vector<index_t> sub(n, 0);
  for (index_t c = 0; c < mid; ++c) {
    index_t rem = c;
    for (int t : modes) {
      sub[t] = rem % dims[t];
      rem /= dims[t];
    }
    Matrix s = subchain_slice(m, mode, sub.data());
    for (index_t a = 0; a < rr; ++a)
      for (index_t b = 0; b < rl; ++b) out[a + rr * (c + mid * b)] = s(a, b);
  }
  return out;
}

Matrix subchain_design(const TrModel& m, int mode) {
  const int n = m.order();
  const auto dims = m.dims();
  index_t mid = 1;
  for (int j = 0; j < n; ++j)
    if (j != mode) mid *= dims[j];
  require(mid <= (index_t(1) << 24), "subchain_design: too large to materialize");
  index_t rr = m.rank_right(mode);
  index_t rl = m.rank_left(mode);
  Matrix out(mid, rl * rr);
  auto modes = cyclic_mode_order(n, mode);
  std::vector<index_t> sub(n, 0);
  for (index_t c = 0; c < mid; ++c) {
    index_t rem = c;
    for (int t : modes) {
      sub[t] = rem % dims[t];
      rem /= dims[t];
    }
    Matrix s = subchain_slice(m, mode, sub.data());
    for (index_t a = 0; a < rr; ++a)
      for (index_t b = 0; b < rl; ++b) out(c, b + rl * a) = s(a, b);
  }
  return out;
}

double tr_value(const TrModel& m, const index_t* sub) {
  Matrix p;
  bool first = true;
  for (int j = 0; j < m.order(); ++j) {
    if (first) {
      p = m.slice(j, sub[j]);
      first = false;
    } else {
      p = p * m.slice(j, sub[j]);
    }
  }
  return p.trace();
}

DenseTensor tr_reconstruct(const TrModel& m) {
  DenseTensor out(m.dims());
  double* p = out.data();
  parallel_walk(out.size(), [&](index_t lo, index_t hi) {
    tr_walk(m, out.dims(), lo, hi, [&](index_t f, double v) { p[f] = v; });
  });
  return out;
}

double rel_error(const TrModel& m, const DenseTensor& x) {
  require(m.dims() == x.dims(), "rel_error: shape mismatch");
  const double* p = x.data();
  double num = 0.0, den = 0.0;
#pragma omp parallel reduction(+ : num, den)
  {
    int nt = 1, tid = 0;
#ifdef _OPENMP
    nt = omp_get_num_threads();
    tid = omp_get_thread_num();
#endif
    index_t total = x.size();
    index_t chunk = (total + nt - 1) / nt;
    index_t lo = std::min<index_t>(total, tid * chunk);
    index_t hi = std::min<index_t>(total, lo + chunk);
    if (lo < hi)
      tr_walk(m, x.dims(), lo, hi, [&](index_t f, double v) {
        double d = p[f] - v;
        num += d * d;
        den += p[f] * p[f];
      });
  }
  if (den <= 0.0) throw degenerate_error("rel_error: zero reference tensor");
  return std::sqrt(num) / std::sqrt(den);
}

// ---------------------------------------------------------------------------

EntrySample sample_entries(const DenseTensor& x, index_t count, std::uint64_t seed) {
  EntrySample s;
  SplitRng rng(seed);
  count = std::min(count, x.size());
  s.flat.resize(count);
  for (index_t i = 0; i < count; ++i) {
    index_t f = static_cast<index_t>(rng.next_below(static_cast<std::uint64_t>(x.size())));
    s.flat[i] = f;
    s.norm2 += x[f] * x[f];
  }
  return s;
}

namespace {

template <typename Model>
double rel_error_sampled_impl(const Model& m, const DenseTensor& x, const EntrySample& s) {
  const auto dims = x.dims();
  const int n = static_cast<int>(dims.size());
  double num = 0.0;
  const index_t count = static_cast<index_t>(s.flat.size());
#pragma omp parallel for schedule(static) reduction(+ : num)
  for (index_t i = 0; i < count; ++i) {
    std::vector<index_t> sub(n);
    unravel_index(s.flat[i], dims.data(), n, sub.data());
    double v;
    if constexpr (std::is_same_v<Model, CpModel>)
      v = cp_value(m, sub.data());
    else
      v = tr_value(m, sub.data());
    double d = x[s.flat[i]] - v;
    num += d * d;
  }
  if (s.norm2 <= 0.0) throw degenerate_error("rel_error_sampled: zero norm on sampled entries");
  return std::sqrt(num / s.norm2);
}

}  // namespace

double rel_error_sampled(const CpModel& m, const DenseTensor& x, const EntrySample& s) {
  return rel_error_sampled_impl(m, x, s);
}

double rel_error_sampled(const TrModel& m, const DenseTensor& x, const EntrySample& s) {
  return rel_error_sampled_impl(m, x, s);
}

}  // namespace sals
