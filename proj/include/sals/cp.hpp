#pragma once

#include <vector>

#include "sals/fit.hpp"
#include "sals/leverage.hpp"
#include "sals/sketch.hpp"
#include "sals/tensor.hpp"

namespace sals {

// Factor initialisation shared by every CP solver: i.i.d. normal entries, or
// per-mode randomised range finding on the unfoldings when asked for.
CpModel cp_init(const DenseTensor& x, index_t rank, const FitOptions& opt);

// Streamed matricised-tensor times Khatri-Rao product for one mode; only the
// off-mode factors are read, so x's mode-`mode` extent is free to differ from
// factors[mode] (used when projecting new samples).
Matrix cp_mttkrp(const DenseTensor& x, const CpModel& m, int mode);

// Exact alternating least squares.  Streams the matricised-tensor times
// Khatri-Rao products, so nothing bigger than the tensor itself is held.
// The init-taking overload continues from the given factors.
CpModel cp_als(const DenseTensor& x, index_t rank, const FitOptions& opt,
               FitTrace* trace = nullptr);
CpModel cp_als(const DenseTensor& x, CpModel init, const FitOptions& opt,
               FitTrace* trace = nullptr);

// Recursive sketch of the mode-`mode` design matrix: a J1 x R proxy whose
// row space mirrors the full Khatri-Rao design.
Matrix cp_sketch_design(const CpModel& m, int mode, const RecursiveSketch& sk,
                        bool use_fft = true);

// Everything the sequential index sampler needs for one (model, mode, map)
// triple.  `chain` lists the off-modes in draw order (ascending); suffix[d]
// folds phi together with the Gram matrices of chain modes >= d.
struct CpSamplerState {
  const CpModel* model = nullptr;
  int mode = 0;
  std::vector<int> chain;
  std::vector<index_t> chain_dims;
  Matrix phi;
  std::vector<Matrix> grams;   // grams[d] for chain[d]
  std::vector<Matrix> suffix;  // size chain.size() + 1; suffix.back() == phi
  double norm_constant = 0.0;  // sum of estimated scores over all design rows
};

CpSamplerState cp_sampler_state(const CpModel& m, int mode, const LeverageMap& map);

// Unnormalised mass of a partial assignment of chain[0..depth): summing the
// estimated scores over all completions.  depth == 0 gives norm_constant.
double cp_prefix_mass(const CpSamplerState& st, const index_t* prefix, int depth);

// Draw `count` design rows by walking the chain one mode at a time.  Negative
// conditionals are clamped to zero (counted); a zero-mass step restarts the
// chain, and ten consecutive restarts abort.  flat indices follow chain order
// (chain[0] fastest), matching the design's row order.
IndexSample cp_draw_indices(const CpSamplerState& st, index_t count, SplitRng& rng);

// Weighted design rows for the drawn indices (rows of the Khatri-Rao design
// scaled by the sample weights).
Matrix cp_sampled_design(const CpSamplerState& st, const IndexSample& sample);

struct CpEsOptions : FitOptions {
  index_t j1 = 2000;   // sketch rows for the leverage map
  index_t j2 = 500;    // sampled rows per solve
  bool use_fft = true;
};

// Sampling-based ALS: per solve, re-sketch the design, rebuild the leverage
// map, draw j2 rows, and solve the downsampled problem.
CpModel cp_als_es(const DenseTensor& x, index_t rank, const CpEsOptions& opt,
                  FitTrace* trace = nullptr);
CpModel cp_als_es(const DenseTensor& x, CpModel init, const CpEsOptions& opt,
                  FitTrace* trace = nullptr);

}  // namespace sals
