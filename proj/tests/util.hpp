#pragma once

#include <cmath>
#include <vector>

#include "sals/rng.hpp"
#include "sals/tensor.hpp"

// Seeded random inputs shared by the test files.  Factors are scaled so masses
// and Grams stay O(1) and absolute tolerances are meaningful.
namespace tutil {

using sals::index_t;
using sals::Matrix;
using sals::Vector;

inline Matrix rand_matrix(index_t rows, index_t cols, std::uint64_t seed, double scale = 1.0) {
  sals::SplitRng rng(seed);
  Matrix m(rows, cols);
  for (index_t c = 0; c < cols; ++c)
    for (index_t r = 0; r < rows; ++r) m(r, c) = scale * rng.normal();
  return m;
}

inline sals::CpModel rand_cp(const std::vector<index_t>& dims, index_t rank, std::uint64_t seed) {
  sals::CpModel m;
  for (std::size_t n = 0; n < dims.size(); ++n)
    m.factors.push_back(rand_matrix(dims[n], rank, seed + 101 * n,
                                    1.0 / std::sqrt(static_cast<double>(dims[n]))));
  return m;
}

inline sals::TrModel rand_tr(const std::vector<index_t>& dims, const std::vector<index_t>& ranks,
                             std::uint64_t seed) {
  sals::TrModel m;
  const int order = static_cast<int>(dims.size());
  for (int n = 0; n < order; ++n) {
    const index_t rl = ranks[(n + order - 1) % order];
    const index_t rr = ranks[n];
    sals::DenseTensor core({rl, dims[n], rr});
    sals::SplitRng rng(seed + 131 * n);
    const double scale = 1.0 / std::sqrt(static_cast<double>(rl * dims[n]));
    for (index_t t = 0; t < core.size(); ++t) core[t] = scale * rng.normal();
    m.cores.push_back(std::move(core));
  }
  return m;
}

inline sals::DenseTensor rand_tensor(const std::vector<index_t>& dims, std::uint64_t seed) {
  sals::DenseTensor x(dims);
  for (index_t t = 0; t < x.size(); ++t) x[t] = sals::keyed_normal(seed, t);
  return x;
}

inline Matrix rand_psd(index_t n, std::uint64_t seed) {
  Matrix b = rand_matrix(n, n, seed);
  return (b.transpose() * b) / static_cast<double>(n);
}

inline double mad(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

inline double mad(const sals::DenseTensor& a, const sals::DenseTensor& b) {
  double m = 0.0;
  for (index_t t = 0; t < a.size(); ++t) m = std::max(m, std::abs(a[t] - b[t]));
  return m;
}

}  // namespace tutil
