#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sals {

// All dense linear algebra is column-major double; a Matrix is therefore
// layout-compatible with a flat first-index-fastest buffer.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using index_t = std::int64_t;

// Bad configuration, malformed file, or violated precondition.  The CLI maps
// this to exit code 2.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical degeneracy: zero sampling mass, rank collapse, non-positive
// normalization.  The CLI maps this to exit code 3.
struct degenerate_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw config_error(msg);
}

}  // namespace sals
