#pragma once

#include <vector>

#include "sals/common.hpp"
#include "sals/rng.hpp"
#include "sals/tensor.hpp"

namespace sals {

// Relative singular-value cutoff used everywhere a rank decision is made:
// keep sigma_i >= sigma_max * 1e-10 * max(rows, cols).
double sv_threshold(const Vector& singular_values, index_t rows, index_t cols);

// Exact leverage scores: squared row norms of the left singular basis, using
// only singular values above the cutoff.  Throws degenerate_error on a zero
// matrix.
Vector exact_leverage_scores(const Matrix& a);

// Pseudoinverse of a symmetric PSD matrix via eigendecomposition, truncating
// with the same relative cutoff.  Throws degenerate_error on a zero matrix.
Matrix psd_pinv(const Matrix& a);

// Compact map recovered from a sketched matrix Psi*A: scores are
// l(row) = row * phi * row', with phi = (V1 S1^-1)(V1 S1^-1)' from the SVD of
// the sketch.  Scaling A (and hence the sketch) leaves scores intact.
struct LeverageMap {
  Matrix phi;    // R' x R', symmetric PSD
  int rank = 0;  // retained singular values

  double score(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    return row * phi * row.transpose();
  }
};

LeverageMap estimate_leverage_map(const Matrix& sketched);

// One batch of index draws plus everything the sampled solve needs.
struct IndexSample {
  std::vector<index_t> flat;    // row index in the design's row space
  std::vector<double> prob;     // probability the drawing distribution assigned
  std::vector<double> weight;   // 1 / sqrt(count * prob), count = draws requested
  index_t clamp_events = 0;     // negative conditionals clamped during drawing
  index_t retries = 0;          // chain restarts after zero-mass steps

  index_t size() const { return static_cast<index_t>(flat.size()); }
};

// Draw `count` i.i.d. indices from explicit nonnegative weights.
IndexSample draw_from_weights(const std::vector<double>& weights, index_t count, SplitRng& rng);

// Weighted least squares on already-assembled (and already row-weighted)
// design/rhs.  QR when the design is comfortably conditioned, else a
// truncated-SVD pseudoinverse with the fallback flagged.
struct SampledLsResult {
  Matrix x;
  double cond_estimate = 0.0;
  bool svd_fallback = false;
  int rank = 0;
};

SampledLsResult sampled_least_squares(const Matrix& design, const Matrix& rhs);

// Streamed y = unfold(x, mode) * omega with i.i.d. normal omega that is never
// stored; `col_modes` fixes the unfolding's column order (fastest first).
// Deterministic for a fixed seed regardless of thread count.
Matrix streamed_gaussian_sketch(const DenseTensor& x, int mode, const std::vector<int>& col_modes,
                                index_t width, SplitRng base);

// Thin orthonormal basis of y's column space; when y is wider than tall the
// extra columns are filled with fresh normal noise so the result keeps y's
// full width.
Matrix orthonormal_columns(const Matrix& y, SplitRng pad_rng);

// Gather the right-hand side rows for sampled mode-`mode` solves: row j holds
// the fiber x(..., i_mode = t, ...) at the sampled off-mode index, scaled by
// the sample weight.  `fiber_modes` gives the off-mode order used when the
// sample's flat indices were linearised (fastest first).
Matrix gather_sampled_rhs(const DenseTensor& x, int mode, const std::vector<int>& fiber_modes,
                          const IndexSample& sample);

}  // namespace sals
