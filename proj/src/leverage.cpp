#include "sals/leverage.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>

namespace sals {

double sv_threshold(const Vector& singular_values, index_t rows, index_t cols) {
  if (singular_values.size() == 0) return 0.0;
  return singular_values[0] * 1e-10 * static_cast<double>(std::max(rows, cols));
}

Vector exact_leverage_scores(const Matrix& a) {
  require(a.rows() >= 1 && a.cols() >= 1, "exact_leverage_scores: empty matrix");
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU);
  const Vector& sv = svd.singularValues();
  const double cut = sv_threshold(sv, a.rows(), a.cols());
  int rank = 0;
  while (rank < sv.size() && sv[rank] > cut) ++rank;
  if (rank == 0) throw degenerate_error("exact_leverage_scores: matrix is numerically zero");
  return svd.matrixU().leftCols(rank).rowwise().squaredNorm();
}

Matrix psd_pinv(const Matrix& a) {
  require(a.rows() == a.cols() && a.rows() >= 1, "psd_pinv: matrix must be square");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a);
  const Vector& ev = eig.eigenvalues();  // ascending
  const index_t n = a.rows();
  Vector desc(n);
  for (index_t k = 0; k < n; ++k) desc[k] = ev[n - 1 - k];
  if (desc[0] <= 0.0) throw degenerate_error("psd_pinv: matrix is numerically zero");
  const double cut = sv_threshold(desc, n, n);
  Vector inv = Vector::Zero(n);
  for (index_t k = 0; k < n; ++k)
    if (ev[k] > cut) inv[k] = 1.0 / ev[k];
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

LeverageMap estimate_leverage_map(const Matrix& sketched) {
  require(sketched.rows() >= 1 && sketched.cols() >= 1, "estimate_leverage_map: empty sketch");
  Eigen::BDCSVD<Matrix> svd(sketched, Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double cut = sv_threshold(sv, sketched.rows(), sketched.cols());
  int rank = 0;
  while (rank < sv.size() && sv[rank] > cut) ++rank;
  if (rank == 0) throw degenerate_error("estimate_leverage_map: sketch is numerically zero");
  Matrix vs = svd.matrixV().leftCols(rank);
  for (int k = 0; k < rank; ++k) vs.col(k) /= sv[k];
  LeverageMap lm;
  lm.phi = vs * vs.transpose();
  lm.rank = rank;
  return lm;
}

IndexSample draw_from_weights(const std::vector<double>& weights, index_t count, SplitRng& rng) {
  require(count >= 1, "draw_from_weights: count must be >= 1");
  const index_t n = static_cast<index_t>(weights.size());
  std::vector<double> cum(n);
  double total = 0.0;
  for (index_t i = 0; i < n; ++i) {
    require(weights[i] >= 0.0, "draw_from_weights: negative weight");
    total += weights[i];
    cum[i] = total;
  }
  if (total <= 0.0) throw degenerate_error("draw_from_weights: zero total weight");
  IndexSample s;
  s.flat.resize(count);
  s.prob.resize(count);
  s.weight.resize(count);
  for (index_t j = 0; j < count; ++j) {
    double u = rng.uniform() * total;
    index_t i = static_cast<index_t>(
        std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    if (i >= n) i = n - 1;
    // Skip any zero-weight index the search landed on (possible when u hits a
    // cumulative plateau boundary exactly).
    while (weights[i] == 0.0 && i + 1 < n) ++i;
    double q = weights[i] / total;
    s.flat[j] = i;
    s.prob[j] = q;
    s.weight[j] = 1.0 / std::sqrt(static_cast<double>(count) * q);
  }
  return s;
}

Matrix streamed_gaussian_sketch(const DenseTensor& x, int mode, const std::vector<int>& col_modes,
                                index_t width, SplitRng base) {
  constexpr index_t kBlock = 4096;  // columns per RNG stream
  const index_t rows = x.dims()[mode];
  const index_t row_stride = x.strides()[mode];
  ModeOdometer probe(x.dims(), x.strides(), col_modes);
  const index_t cols = probe.column_count();
  const index_t blocks = (cols + kBlock - 1) / kBlock;
  Matrix y = Matrix::Zero(rows, width);
#pragma omp parallel
  {
    Matrix local = Matrix::Zero(rows, width);
    std::vector<double> w(width);
    ModeOdometer od(x.dims(), x.strides(), col_modes);
#pragma omp for schedule(static)
    for (index_t blk = 0; blk < blocks; ++blk) {
      SplitRng rng = base.fork(blk);
      const index_t c0 = blk * kBlock;
      const index_t c1 = std::min(cols, c0 + kBlock);
      od.seek(c0);
      for (index_t c = c0; c < c1; ++c) {
        for (index_t r = 0; r < width; ++r) w[r] = rng.normal();
        const double* src = x.data() + od.base();
        for (index_t i = 0; i < rows; ++i) {
          const double v = src[i * row_stride];
          if (v != 0.0)
            for (index_t r = 0; r < width; ++r) local(i, r) += v * w[r];
        }
        od.advance();
      }
    }
#pragma omp critical
    y += local;
  }
  return y;
}

Matrix orthonormal_columns(const Matrix& y, SplitRng pad_rng) {
  const index_t k = std::min(y.rows(), y.cols());
  Eigen::HouseholderQR<Matrix> qr(y);
  Matrix q = qr.householderQ() * Matrix::Identity(y.rows(), k);
  if (k == y.cols()) return q;
  Matrix out(y.rows(), y.cols());
  out.leftCols(k) = q;
  for (index_t c = k; c < y.cols(); ++c)
    for (index_t i = 0; i < y.rows(); ++i) out(i, c) = pad_rng.normal();
  return out;
}

Matrix gather_sampled_rhs(const DenseTensor& x, int mode, const std::vector<int>& fiber_modes,
                          const IndexSample& sample) {
  const index_t n_rows = sample.size();
  const index_t fiber_len = x.dims()[mode];
  const index_t fiber_stride = x.strides()[mode];
  std::vector<index_t> fiber_dims;
  fiber_dims.reserve(fiber_modes.size());
  for (int m : fiber_modes) fiber_dims.push_back(x.dims()[m]);
  Matrix rhs(n_rows, fiber_len);
#pragma omp parallel for schedule(static)
  for (index_t j = 0; j < n_rows; ++j) {
    std::vector<index_t> sub(fiber_dims.size());
    unravel_index(sample.flat[j], fiber_dims.data(), static_cast<int>(fiber_dims.size()),
                  sub.data());
    index_t base = 0;
    for (std::size_t d = 0; d < fiber_modes.size(); ++d) base += sub[d] * x.strides()[fiber_modes[d]];
    const double w = sample.weight[j];
    const double* src = x.data() + base;
    for (index_t t = 0; t < fiber_len; ++t) rhs(j, t) = w * src[t * fiber_stride];
  }
  return rhs;
}

SampledLsResult sampled_least_squares(const Matrix& design, const Matrix& rhs) {
  require(design.rows() == rhs.rows(), "sampled_least_squares: row count mismatch");
  require(design.rows() >= 1 && design.cols() >= 1, "sampled_least_squares: empty design");
  SampledLsResult res;
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  const double max_piv = std::abs(qr.matrixR()(0, 0));
  const index_t k = std::min(design.rows(), design.cols());
  const double min_piv = std::abs(qr.matrixR()(k - 1, k - 1));
  res.cond_estimate = min_piv > 0.0 ? max_piv / min_piv
                                    : std::numeric_limits<double>::infinity();
  if (design.rows() >= design.cols() && res.cond_estimate < 1e8) {
    res.rank = static_cast<int>(design.cols());
    res.x = qr.solve(rhs);
    return res;
  }
  // Ill-conditioned or wide: truncated-SVD pseudoinverse.
  res.svd_fallback = true;
  Eigen::BDCSVD<Matrix> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double cut = sv_threshold(sv, design.rows(), design.cols());
  int rank = 0;
  while (rank < sv.size() && sv[rank] > cut) ++rank;
  if (rank == 0) throw degenerate_error("sampled_least_squares: design is numerically zero");
  res.rank = rank;
  Matrix ut_b = svd.matrixU().leftCols(rank).transpose() * rhs;
  for (int i = 0; i < rank; ++i) ut_b.row(i) /= sv[i];
  res.x = svd.matrixV().leftCols(rank) * ut_b;
  return res;
}

}  // namespace sals
