#pragma once

#include <vector>

#include "sals/fit.hpp"
#include "sals/leverage.hpp"
#include "sals/sketch.hpp"
#include "sals/tensor.hpp"

namespace sals {

// Ring ranks: ranks[n] = R_n links core n to core n+1 (ranks.back() closes the
// ring; a trailing 1 gives a tensor train).  Initial cores are i.i.d. normal,
// or per-mode range-finder based when asked for.
TrModel tr_init(const DenseTensor& x, const std::vector<index_t>& ranks, const FitOptions& opt);

// Streamed X_[n] times the subchain design: row t, column (r_{n-1}, r_n) with
// r_{n-1} fastest.  Only the off-mode cores are read, so x's mode-`mode`
// extent is free to differ from cores[mode] (used when projecting samples).
Matrix tr_subchain_rhs(const DenseTensor& x, const TrModel& m, int mode);

// Gram matrix of the mode-n subchain design, computed by ring contraction of
// the per-core transfer sums; columns (r_{n-1}, r_n) with r_{n-1} fastest.
Matrix tr_normal_matrix(const TrModel& m, int mode);

// Exact alternating least squares over the cores.  Normal equations come from
// ring-contracted Grams; right-hand sides stream over the tensor.  The
// init-taking overload continues from the given cores.
TrModel tr_als(const DenseTensor& x, const std::vector<index_t>& ranks, const FitOptions& opt,
               FitTrace* trace = nullptr);
TrModel tr_als(const DenseTensor& x, TrModel init, const FitOptions& opt,
               FitTrace* trace = nullptr);

// Leaf order the mode-n subchain sketch uses: modes n-1, n-2, ..., wrapping
// past 0, ending at n+1 (length order-1).
std::vector<int> tr_sketch_leaf_order(int order, int mode);

// Recursive sketch of the mode-n subchain design: J1 x (R_{n-1} R_n), column
// (r_{n-1}, r_n) with r_{n-1} fastest, matching subchain_design.  The sketch
// must have been built over tr_sketch_leaf_order dims.  Column sweeps share
// all tree work not touching the two rank-pinned leaves.
Matrix tr_sketch_design(const TrModel& m, int mode, const RecursiveSketch& sk,
                        bool use_fft = true);

// Sequential sampler state for one (model, mode, map) triple.  Probabilities
// factor through R^2-indexed transfer matrices: mode j contributes
// Q_j(i) = slice_j(i) (x) slice_j(i); fixed modes contribute the sum over i.
// chain lists the off-modes in ring order n+1, ..., n-1 (the draw order).
struct TrSamplerState {
  const TrModel* model = nullptr;
  int mode = 0;
  std::vector<int> chain;
  std::vector<index_t> chain_dims;
  Matrix phi;                  // (R_{n-1} R_n)^2, from the leverage map
  Matrix phi_core;             // R_{n-1}^2 x R_n^2 rearrangement of phi
  std::vector<Matrix> fixed;   // fixed[d]: summed transfer of chain[d]
  std::vector<Matrix> g2;      // g2[d]: mode-2 unfolding of core chain[d]
  std::vector<Matrix> suffix;  // suffix[d] = prod_{t>=d} fixed[t] * phi_core
  double norm_constant = 0.0;
};

TrSamplerState tr_sampler_state(const TrModel& m, int mode, const LeverageMap& map);

// Transfer matrix of one drawn index: kron(slice, slice) for chain[d].
Matrix tr_transfer(const TrSamplerState& st, int d, index_t i);

// Candidate masses at chain position d given the ring context w wrapping the
// rest of the trace: mass_i = trace(tr_transfer(d, i) * w), vectorised over i.
Vector tr_candidate_masses(const TrSamplerState& st, int d, const Matrix& w);

// Unnormalised mass of a partial assignment of chain[0..depth); depth == 0
// gives norm_constant.
double tr_prefix_mass(const TrSamplerState& st, const index_t* prefix, int depth);

// Sequential draws along the ring; clamping/restart policy matches the CP
// sampler.  flat indices follow chain order (chain[0] = mode n+1 fastest),
// matching cyclic_unfold columns.
IndexSample tr_draw_indices(const TrSamplerState& st, index_t count, SplitRng& rng);

// Weighted design rows for the drawn indices: vectorised subchain slice
// products, column (r_{n-1}, r_n) with r_{n-1} fastest.
Matrix tr_sampled_design(const TrSamplerState& st, const IndexSample& sample);

struct TrEsOptions : FitOptions {
  index_t j1 = 2000;
  index_t j2 = 500;
  bool use_fft = true;
};

// Sampling-based ALS for the ring: per solve, re-sketch the subchain design,
// rebuild the leverage map, draw j2 rows, solve the downsampled problem.
TrModel tr_als_es(const DenseTensor& x, const std::vector<index_t>& ranks,
                  const TrEsOptions& opt, FitTrace* trace = nullptr);
TrModel tr_als_es(const DenseTensor& x, TrModel init, const TrEsOptions& opt,
                  FitTrace* trace = nullptr);

}  // namespace sals
