#pragma once

#include <complex>
#include <memory>
#include <vector>

#include "sals/common.hpp"
#include "sals/rng.hpp"

namespace sals {

// k-wise independent hash family: uniform degree-(k-1) polynomial over GF(p),
// p = 2^61 - 1 (Mersenne, so reduction is shift-and-add).  Range maps take the
// field value mod the range; the bias is < range / 2^61.
class PolyHash {
 public:
  static constexpr std::uint64_t kPrime = (std::uint64_t(1) << 61) - 1;

  PolyHash() = default;
  PolyHash(int k, SplitRng rng);

  std::uint64_t eval(std::uint64_t x) const;  // value in [0, p)
  int degree_bound() const { return static_cast<int>(coef_.size()); }

 private:
  std::vector<std::uint64_t> coef_;  // coef_[0] + coef_[1] x + ...
};

// Real cyclic convolution of arbitrary length via FFTW (r2c / c2r); plans are
// created once per instance and may be executed from several threads.
class RealConv {
 public:
  explicit RealConv(index_t n);
  ~RealConv();
  RealConv(const RealConv&) = delete;
  RealConv& operator=(const RealConv&) = delete;

  index_t length() const { return n_; }
  index_t spec_length() const { return n_ / 2 + 1; }
  void forward(const double* x, std::complex<double>* spec) const;
  // Inverse transform including the 1/n scaling; spec is not modified.
  void inverse(const std::complex<double>* spec, double* out) const;

 private:
  index_t n_;
  void* fwd_ = nullptr;
  void* inv_ = nullptr;
};

// CountSketch R^I -> R^J: C(j, i) = sign(i) * [bucket(i) == j], bucket 3-wise,
// sign 4-wise.  Buckets and signs are tabulated at construction.
struct CountSketch {
  index_t in_dim = 0;
  index_t out_dim = 0;
  std::vector<index_t> bucket_of;
  std::vector<double> sign_of;

  index_t bucket(index_t i) const { return bucket_of[i]; }
  double sign(index_t i) const { return sign_of[i]; }
  void apply_vec(const double* x, double* y) const;  // y must hold out_dim zeros
  Matrix apply(const Matrix& a) const;
  Matrix materialize() const;  // J x I, test scale
};

CountSketch make_countsketch(index_t in_dim, index_t out_dim, SplitRng rng);

// Degree-two TensorSketch R^J (x) R^J -> R^J: CountSketch each operand, then
// cyclic convolution of the images.  On basis pairs,
// T(e_a (x) e_b) = s1(a) s2(b) e_{(h1(a)+h2(b)) mod J}.
class TensorSketch {
 public:
  TensorSketch() = default;
  TensorSketch(index_t dim, SplitRng rng, std::shared_ptr<const RealConv> conv);

  index_t dim() const { return dim_; }
  const CountSketch& cs1() const { return c1_; }
  const CountSketch& cs2() const { return c2_; }
  const RealConv& conv() const { return *conv_; }

  // use_fft=false runs the O(J^2) direct convolution (oracle path).
  Vector apply_pair(const double* x, const double* y, bool use_fft = true) const;

  // Batched path: forward spectrum of one operand's CountSketch image
  // (which = 1 or 2); products of spectra accumulate and one inverse() per
  // output column finishes the job.
  void image_spectrum(int which, const double* x, std::complex<double>* spec) const;
  void inverse(const std::complex<double>* spec, double* out) const;

  // Explicit J x J^2 matrix; column a*J + b is the image of e_a (x) e_b.
  Matrix materialize() const;

 private:
  index_t dim_ = 0;
  CountSketch c1_, c2_;
  std::shared_ptr<const RealConv> conv_;
};

// Recursive sketch of a product domain: CountSketch leaves feed a balanced
// binary tree of pairwise TensorSketches (tree width 2^q >= leaf count; spare
// leaves sketch the fixed basis vector e_0).  Every hash derives from
// (seed, level, position), so a seed reproduces the sketch exactly.
class RecursiveSketch {
 public:
  RecursiveSketch(index_t out_dim, std::vector<index_t> leaf_dims, std::uint64_t seed);

  index_t out_dim() const { return j_; }
  int leaf_count() const { return static_cast<int>(leaf_dims_.size()); }
  int height() const { return q_; }
  int tree_width() const { return 1 << q_; }
  const std::vector<index_t>& leaf_dims() const { return leaf_dims_; }
  const CountSketch& leaf(int j) const { return leaves_[j]; }
  const TensorSketch& node(int level, int pos) const { return nodes_[level - 1][pos]; }
  std::shared_ptr<const RealConv> conv() const { return conv_; }

  // Sketch of every Khatri-Rao column of the given factors; factor 0 feeds
  // leaf 0 and is the slowest-varying Kronecker operand.  Output J x R.
  Matrix apply_kron_columns(const std::vector<const Matrix*>& factors, bool use_fft = true) const;

  // Image of every basis vector of the product domain, built by exact
  // signed-unit propagation through the hash tree (definitional path; also
  // how unstructured matrices get sketched).  Output J x prod(leaf_dims).
  Matrix materialize() const;

 private:
  index_t j_ = 0;
  int q_ = 0;
  std::vector<index_t> leaf_dims_;
  std::vector<CountSketch> leaves_;
  std::vector<std::vector<TensorSketch>> nodes_;  // nodes_[m-1]: level m, 2^{q-m} wide
  std::shared_ptr<const RealConv> conv_;
};

// Chain-structured tree pass.  y0[j] is the leaf-j image whose columns factor
// as K[j] x K[j+1] (left index fastest); combining children sums over the
// shared middle index, so the root has K[0] x K[2^q] columns.  If cache is
// non-null, outputs of nodes whose leaves are all clean (dirty[j] == false)
// are reused from / stored into it.
struct ChainCache {
  std::vector<Matrix> out;  // indexed by (level, pos) flattened
  std::vector<char> valid;
};

Matrix combine_chain(const RecursiveSketch& ps, const std::vector<Matrix>& y0,
                     const std::vector<index_t>& K, const std::vector<char>& dirty,
                     ChainCache* cache, bool use_fft = true);

}  // namespace sals
