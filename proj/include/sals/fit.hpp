#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sals/common.hpp"

namespace sals {

// Options shared by the exact and sampled solvers.
struct FitOptions {
  int max_iters = 50;
  double tol = 1e-6;  // stop when |delta rel-error| < tol; <= 0 disables
  std::uint64_t seed = 0;
  bool range_finder_init = false;  // default is i.i.d. normal factors
  // Tikhonov term added to every least-squares solve (exact solves add it to
  // the normal matrix, sampled solves append sqrt(ridge) rows).  Off by
  // default; a stabiliser for tight ring-rank configurations.
  double ridge = 0.0;

  // Dense sweeps refuse tensors above this entry count.
  index_t max_entries = index_t(1) << 27;
  // Above this entry count the per-iteration error trace switches to a fixed
  // seeded subset of this many entries (the trace flags the switch).
  index_t error_exact_cap = index_t(1) << 24;
  index_t error_sample_size = index_t(1) << 20;
};

struct FitTrace {
  std::vector<double> rel_errors;  // one per sweep
  bool error_estimated = false;    // true when the trace used sampled entries
  double final_rel_error = 0.0;    // always exact when the tensor fits in memory
  double wall_seconds = 0.0;
  index_t clamp_events = 0;
  index_t retries = 0;
  bool svd_fallback = false;
  std::vector<double> norm_constants;  // one per sampled solve
  std::vector<std::string> warnings;

  void warn(std::string msg) { warnings.push_back(std::move(msg)); }
};

// Rewrite a sampled system so the solve minimises |Dx - b|^2 + ridge |x|^2;
// no-op when ridge <= 0.
inline void append_ridge_rows(Matrix& design, Matrix& rhs, double ridge) {
  if (ridge <= 0.0) return;
  const index_t n = design.cols(), r = design.rows();
  design.conservativeResize(r + n, Eigen::NoChange);
  design.bottomRows(n) = std::sqrt(ridge) * Matrix::Identity(n, n);
  rhs.conservativeResize(r + n, Eigen::NoChange);
  rhs.bottomRows(n).setZero();
}

}  // namespace sals
