#pragma once

#include <vector>

#include "sals/cp.hpp"
#include "sals/tr.hpp"

namespace sals {

// Independent per-mode sampling: axis d draws from probs[d]; the joint
// probability is the product.  This is the coarse alternative the sequential
// chain sampler is measured against.
struct ProductSampler {
  std::vector<std::vector<double>> probs;  // normalised per axis
  std::vector<index_t> axis_dims;

  double joint_prob(const index_t* sub) const {
    double q = 1.0;
    for (std::size_t d = 0; d < probs.size(); ++d) q *= probs[d][sub[d]];
    return q;
  }
};

// Exact leverage-score distribution of one matrix's rows, normalised.
std::vector<double> leverage_distribution(const Matrix& a);

// Draw `count` joint indices, then merge repeats: a row drawn c times enters
// once with weight sqrt(c / (count * q)).  flat indices use axis order
// (axis 0 fastest).
IndexSample product_draw_dedup(const ProductSampler& ps, index_t count, SplitRng& rng);

// CP baseline: per solve, sample the Khatri-Rao design from the product of
// exact per-factor leverage distributions (j1 is not used).  The init-taking
// overload continues from the given factors.
CpModel cp_arls_lev(const DenseTensor& x, index_t rank, const CpEsOptions& opt,
                    FitTrace* trace = nullptr);
CpModel cp_arls_lev(const DenseTensor& x, CpModel init, const CpEsOptions& opt,
                    FitTrace* trace = nullptr);

// Ring baseline: per solve, sample the subchain design from the product of
// exact per-core leverage distributions of the mode-2 unfoldings.
TrModel tr_als_sampled(const DenseTensor& x, const std::vector<index_t>& ranks,
                       const TrEsOptions& opt, FitTrace* trace = nullptr);
TrModel tr_als_sampled(const DenseTensor& x, TrModel init, const TrEsOptions& opt,
                       FitTrace* trace = nullptr);

}  // namespace sals
