#pragma once

#include <string>
#include <vector>

#include "sals/baselines.hpp"
#include "sals/io.hpp"

namespace sals {

// ---------------------------------------------------------------------------
// Synthetic instances.

struct SynthCp {
  DenseTensor tensor;
  CpModel truth;
};

// Planted CP instance: every factor carries `spike` at (0, 0) and i.i.d.
// standard-normal entries on the block rows >= 1, cols >= 1; everything else
// is zero.  i.i.d. N(0, noise_sd^2) noise is added entrywise.
SynthCp synth_cp(const std::vector<index_t>& dims, index_t rank, double spike, double noise_sd,
                 std::uint64_t seed);

struct SynthTr {
  DenseTensor tensor;
  TrModel truth;
};

// Planted ring instance, mirroring synth_cp: every core carries `spike` at
// (0, 0, 0) and i.i.d. standard-normal entries on the interior block (both
// rank indices >= 1, dim index >= 1); everything else is zero.  The clean
// tensor is spike^N at the origin plus the ring of the interior blocks, so
// the signal is not concentrated in a single entry.
SynthTr synth_tr(const std::vector<index_t>& dims, const std::vector<index_t>& ranks, double spike,
                 double noise_sd, std::uint64_t seed);

// Deterministic grayscale test pattern (side x side, values in [0, 1]): a
// smooth mixture of windowed rotated gratings, built so the joint structure
// is far from a product of per-axis margins.
Matrix synth_image(index_t side);

// Square 16^k x 16^k image -> 2k-way tensor with every dim 16: write row and
// column as base-16 digits (least significant first); mode 2t is row digit t
// and mode 2t + 1 is column digit t.  A 16 x 16 input comes back unchanged as
// the 2-way case.  detensorize_image inverts the map exactly.
DenseTensor tensorize_image(const Matrix& img);
Matrix detensorize_image(const DenseTensor& x);

struct SynthClustered {
  DenseTensor tensor;       // sample_dims x (classes * per_class), samples last
  std::vector<int> labels;  // class of each sample; classes cycle round-robin
};

// Labelled clustered instance: per class a random rank-2 prototype over
// sample_dims; each sample is its class prototype under a random intensity
// plus entry noise.
SynthClustered synth_clustered(int classes, int per_class,
                               const std::vector<index_t>& sample_dims, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Distributions over one solve's design rows.  Flat indices follow the
// sampler's chain order (classical for CP, cyclic for the ring, chain[0]
// fastest).  Enumerators refuse grids above 2^24 rows.

// Sum p ln(p/q) with 0 ln 0 = 0; +infinity when q vanishes where p does not.
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);

// Half the l1 distance.
double total_variation(const std::vector<double>& p, const std::vector<double>& q);

// Exact row-sampling distribution of a materialised design: leverage scores
// normalised by their sum.
std::vector<double> exact_sampling_distribution(const Matrix& design);

// Exact mode-`mode` solve distribution without materialising the design
// (Gram pseudoinverse + chain contraction).
std::vector<double> cp_exact_distribution(const CpModel& m, int mode);
std::vector<double> tr_exact_distribution(const TrModel& m, int mode);

// Joint law of the sequential sampler behind `st`: its estimated scores over
// the full grid, normalised.
std::vector<double> cp_chain_distribution(const CpSamplerState& st);
std::vector<double> tr_chain_distribution(const TrSamplerState& st);

// Joint law of the coarse independent per-mode baseline sampler.
std::vector<double> cp_product_distribution(const CpModel& m, int mode);
std::vector<double> tr_product_distribution(const TrModel& m, int mode);

// ---------------------------------------------------------------------------
// Experiment runners (the CLI surfaces these).

struct DistributionOptions {
  index_t cp_rank = 10;
  std::vector<index_t> tr_ranks;  // empty: rank 3 everywhere
  index_t j1 = 10000;
  int fit_iters = 5;
  double fit_tol = 1e-4;
  int sketch_seeds = 5;
  std::uint64_t seed = 0;
  bool use_fft = true;
  bool run_cp = true;
  bool run_tr = true;
};

struct DistributionResult {
  double cp_kl_es = 0.0;       // median over sketch seeds of KL(chain law || exact)
  double cp_kl_product = 0.0;  // KL(product law || exact)
  double tr_kl_es = 0.0;
  double tr_kl_product = 0.0;
  std::vector<ReportRow> rows;
};

// Fit an exact model, freeze it, and compare the last-mode sampling laws
// against the exact one: the sketched chain law (one KL per sketch seed,
// median kept) and the per-mode product baseline.
DistributionResult run_distribution_experiment(const DenseTensor& x,
                                               const DistributionOptions& opt);

struct RecoveryOptions {
  bool tr = false;
  std::vector<index_t> dims;   // empty: 10-way dim 6 (CP) / 8-way dim 6 (ring)
  index_t rank = 4;            // CP
  std::vector<index_t> ranks;  // ring; empty: rank 3 everywhere
  double spike = 0.0;          // <= 0: 4 for CP, 3 for the ring
  double noise_sd = 0.01;
  index_t j1 = 1000;
  index_t j2 = 50;
  index_t baseline_j2 = 0;  // <= 0: same as j2
  int iters = 20;
  double tol = 0.0;
  int seeds = 10;
  std::uint64_t seed = 0;
  bool run_es = true;
  bool run_baseline = true;
};

struct RecoveryResult {
  std::vector<double> es_errors;  // final relative error per seed
  std::vector<double> baseline_errors;
  double es_wall = 0.0;  // summed end-to-end wall across seeds, incl. init share
  double baseline_wall = 0.0;
  std::vector<ReportRow> rows;
};

// Head-to-head planted-model recovery: per seed, generate an instance, build
// one range-finder init shared by both arms, then run the arms sequentially.
RecoveryResult run_recovery_experiment(const RecoveryOptions& opt);

struct FeatureOptions {
  std::string method = "cp-exact";  // cp-exact|cp-es|cp-arls-lev|tr-exact|tr-es|tr-sampled
  index_t rank = 8;                 // CP rank; also the ring default when ranks is empty
  std::vector<index_t> ranks;
  index_t j1 = 2000;
  index_t j2 = 500;
  int iters = 20;
  double tol = 1e-5;
  int folds = 10;
  std::uint64_t seed = 0;
};

struct FeatureResult {
  double accuracy = 0.0;
  Matrix features;  // one row per sample
  std::vector<ReportRow> rows;
};

// Decompose, read the sample-mode factor (CP) or core unfolding (ring) off as
// features, and score 1-nearest-neighbour under stratified k-fold splits.
// Samples live on the last mode; labels must match its extent.
FeatureResult run_feature_extraction(const DenseTensor& x, const std::vector<int>& labels,
                                     const FeatureOptions& opt);

// Least-squares features for a batch of new samples against a frozen model:
// solve the sample-mode problem with everything else held fixed.  The batch's
// mode-`mode` extent is the number of new samples; all other dims must match.
Matrix cp_project_features(const DenseTensor& batch, const CpModel& m, int mode);
Matrix tr_project_features(const DenseTensor& batch, const TrModel& m, int mode);

// Stratified k-fold 1-nearest-neighbour accuracy (Euclidean): per class,
// shuffle that class's samples with the seed, deal them round-robin into
// folds, then classify each sample against everything outside its fold.
double knn_cross_val(const Matrix& features, const std::vector<int>& labels, int folds,
                     std::uint64_t seed);

}  // namespace sals
