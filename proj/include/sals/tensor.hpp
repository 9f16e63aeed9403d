#pragma once

#include <vector>

#include "sals/common.hpp"

namespace sals {

// Dense N-way tensor stored flat with the FIRST index fastest (the layout a
// column-major matrix generalizes to).  All public indices are 0-based; the
// flat offset of (i_0, ..., i_{N-1}) is sum_n i_n * prod_{j<n} dims[j].
class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(std::vector<index_t> dims);

  const std::vector<index_t>& dims() const { return dims_; }
  const std::vector<index_t>& strides() const { return strides_; }
  int order() const { return static_cast<int>(dims_.size()); }
  index_t size() const { return static_cast<index_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](index_t flat) { return data_[flat]; }
  double operator[](index_t flat) const { return data_[flat]; }
  double& at(const std::vector<index_t>& sub);
  double at(const std::vector<index_t>& sub) const;

  double norm() const;  // Frobenius

 private:
  std::vector<index_t> dims_;
  std::vector<index_t> strides_;
  std::vector<double> data_;
};

// Flat offset of a multi-index, first index fastest.
index_t linear_index(const index_t* sub, const index_t* dims, int n);
index_t linear_index(const std::vector<index_t>& sub, const std::vector<index_t>& dims);

// Inverse of linear_index.
void unravel_index(index_t flat, const index_t* dims, int n, index_t* sub);
std::vector<index_t> unravel_index(index_t flat, const std::vector<index_t>& dims);

// Classical mode-n unfolding: rows are i_n, column c enumerates the remaining
// modes in ascending order with the lowest surviving mode fastest.
Matrix classical_unfold(const DenseTensor& x, int mode);
DenseTensor classical_fold(const Matrix& m, int mode, const std::vector<index_t>& dims);

// Cyclic mode-n unfolding: rows are i_n, column c enumerates modes
// (n+1, ..., N-1, 0, ..., n-1) with mode n+1 fastest.
Matrix cyclic_unfold(const DenseTensor& x, int mode);
DenseTensor cyclic_fold(const Matrix& m, int mode, const std::vector<index_t>& dims);

// The column order both unfoldings use, as a mode list (fastest first).
std::vector<int> classical_mode_order(int order, int skip);
std::vector<int> cyclic_mode_order(int order, int skip);

// Odometer over a subset of a tensor's modes (first listed mode fastest),
// tracking the flat offset into the tensor as it advances.  Lets streaming
// kernels visit unfolding columns without materialising anything.
class ModeOdometer {
 public:
  ModeOdometer(const std::vector<index_t>& dims, const std::vector<index_t>& strides,
               std::vector<int> modes);

  index_t column_count() const { return total_; }
  index_t base() const { return base_; }
  const std::vector<index_t>& sub() const { return sub_; }
  void advance();
  void seek(index_t column);  // random access, used to split ranges for threads

 private:
  std::vector<int> modes_;
  std::vector<index_t> dims_, strides_, sub_;
  index_t base_ = 0, total_ = 1;
};

// Kronecker product: row (i_a, i_b) of a (X) b sits at i_a * rows(b) + i_b,
// i.e. the right operand's index is fastest.
Matrix kronecker(const Matrix& a, const Matrix& b);

// Column-wise Kronecker (Khatri-Rao).  The chained form multiplies left to
// right, so the LAST matrix in the list has the fastest-varying row index.
Matrix khatri_rao(const Matrix& a, const Matrix& b);
Matrix khatri_rao(const std::vector<const Matrix*>& ms);

// ---------------------------------------------------------------------------
// CP model: X(i) ~ sum_r prod_n factors[n](i_n, r).

struct CpModel {
  std::vector<Matrix> factors;  // factors[n] is I_n x R

  int order() const { return static_cast<int>(factors.size()); }
  int rank() const { return factors.empty() ? 0 : static_cast<int>(factors[0].cols()); }
  std::vector<index_t> dims() const;
};

// Khatri-Rao product of all factors except `mode`, highest mode first, so row
// c matches column c of classical_unfold(x, mode).  Test scale only.
Matrix cp_design_matrix(const CpModel& m, int mode);

// Model value at one multi-index (cost N*R).
double cp_value(const CpModel& m, const index_t* sub);

DenseTensor cp_reconstruct(const CpModel& m);
double rel_error(const CpModel& m, const DenseTensor& x);

// ---------------------------------------------------------------------------
// Tensor-ring model: X(i) = sum over r_0..r_{N-1} of
// prod_n cores[n](r_{n-1}, i_n, r_n), with r index arithmetic mod N (ring).
// cores[n] has shape R_{n-1} x I_n x R_n; a tensor train is R_{N-1} = 1.

struct TrModel {
  std::vector<DenseTensor> cores;

  int order() const { return static_cast<int>(cores.size()); }
  std::vector<index_t> dims() const;
  std::vector<index_t> ranks() const;  // ranks()[n] = R_n, ring-closed
  index_t rank_left(int n) const;      // R_{n-1}
  index_t rank_right(int n) const;     // R_n

  // Lateral slice cores[n](:, i, :) as an R_{n-1} x R_n matrix view.
  Eigen::Map<const Matrix, 0, Eigen::OuterStride<>> slice(int n, index_t i) const;
};

// Mode-2 unfolding of core n: I_n x (R_n * R_{n-1}) with r_n fastest in the
// column index.
Matrix core_unfold2(const TrModel& m, int n);
DenseTensor core_fold2(const Matrix& g2, index_t rl, index_t rr);
// Same fold but with r_{n-1} fastest in the column index (the order solver
// updates arrive in, matching subchain_design columns).
DenseTensor core_fold2_classical(const Matrix& g2, index_t rl, index_t rr);
Matrix core_unfold2_classical(const TrModel& m, int n);

// Product of all slices except mode n, taken in ring order n+1, ..., n-1.
// Result is R_n x R_{n-1}.
Matrix subchain_slice(const TrModel& m, int mode, const index_t* sub);

// Merged tensor of everything but core n: R_n x prod_{j!=n} I_j x R_{n-1},
// middle index in cyclic order (fastest mode n+1).  Test scale only.
DenseTensor subchain(const TrModel& m, int mode);

// Cyclic mode-2 unfolding of subchain(m, mode): rows match columns of
// cyclic_unfold(x, mode); column c is (r_{n-1}, r_n) with r_{n-1} fastest.
Matrix subchain_design(const TrModel& m, int mode);

double tr_value(const TrModel& m, const index_t* sub);
DenseTensor tr_reconstruct(const TrModel& m);
double rel_error(const TrModel& m, const DenseTensor& x);

// ---------------------------------------------------------------------------
// Error estimation on a fixed seeded subset of entries (used when the tensor
// is too large to sweep every iteration).  Returns sqrt(sum (x-m)^2 / sum x^2)
// over the subset.
struct EntrySample {
  std::vector<index_t> flat;
  double norm2 = 0.0;  // sum of x^2 over the subset
};
EntrySample sample_entries(const DenseTensor& x, index_t count, std::uint64_t seed);
double rel_error_sampled(const CpModel& m, const DenseTensor& x, const EntrySample& s);
double rel_error_sampled(const TrModel& m, const DenseTensor& x, const EntrySample& s);

}  // namespace sals
