#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/SVD>

#include "doctest.h"
#include "sals/experiments.hpp"
#include "sals/reference.hpp"
#include "util.hpp"

using namespace sals;
using tutil::mad;

TEST_CASE("synth_cp plants a spiked block model") {
  SynthCp inst = synth_cp({4, 3, 5}, 2, 4.0, 0.0, 77);
  REQUIRE(inst.truth.order() == 3);
  REQUIRE(inst.truth.rank() == 2);
  for (int n = 0; n < 3; ++n) {
    const Matrix& f = inst.truth.factors[n];
    CHECK(f(0, 0) == 4.0);
    for (index_t r = 1; r < 2; ++r) CHECK(f(0, r) == 0.0);
    for (index_t i = 1; i < f.rows(); ++i) CHECK(f(i, 0) == 0.0);
    CHECK(f.bottomRightCorner(f.rows() - 1, 1).cwiseAbs().maxCoeff() > 0.0);
  }
  DenseTensor clean = cp_reconstruct(inst.truth);
  CHECK(mad(inst.tensor, clean) == 0.0);

  SynthCp noisy = synth_cp({4, 3, 5}, 2, 4.0, 0.01, 77);
  double diff2 = 0.0;
  for (index_t t = 0; t < clean.size(); ++t) {
    double d = noisy.tensor[t] - clean[t];
    diff2 += d * d;
  }
  double rms = std::sqrt(diff2 / clean.size());
  CHECK(rms > 0.005);
  CHECK(rms < 0.015);

  SynthCp again = synth_cp({4, 3, 5}, 2, 4.0, 0.01, 77);
  CHECK(mad(noisy.tensor, again.tensor) == 0.0);
}

TEST_CASE("synth_tr plants a single spiked entry") {
  SynthTr inst = synth_tr({3, 3, 3}, {2, 2, 2}, 3.0, 0.0, 79);
  // Every core holds the spike at (0, 0, 0) and nothing else, so the clean
  // tensor is spike^order at the origin and zero everywhere else.
  CHECK(inst.tensor.at({0, 0, 0}) == doctest::Approx(27.0));
  double off = 0.0;
  for (index_t t = 1; t < inst.tensor.size(); ++t) off += std::abs(inst.tensor[t]);
  CHECK(off == 0.0);
  for (int n = 0; n < 3; ++n) {
    CHECK(inst.truth.cores[n].at({0, 0, 0}) == 3.0);
    double core_off = 0.0;
    for (index_t t = 1; t < inst.truth.cores[n].size(); ++t)
      core_off += std::abs(inst.truth.cores[n][t]);
    CHECK(core_off == 0.0);
  }
  // Noise is deterministic in the seed.
  SynthTr noisy = synth_tr({3, 3, 3}, {2, 2, 2}, 3.0, 0.01, 79);
  SynthTr again = synth_tr({3, 3, 3}, {2, 2, 2}, 3.0, 0.01, 79);
  CHECK(mad(noisy.tensor, again.tensor) == 0.0);
  CHECK(mad(noisy.tensor, inst.tensor) > 0.0);
}

TEST_CASE("synth_image is a bounded non-separable pattern") {
  Matrix img = synth_image(64);
  REQUIRE(img.rows() == 64);
  REQUIRE(img.cols() == 64);
  CHECK(img.minCoeff() == doctest::Approx(0.0));
  CHECK(img.maxCoeff() == doctest::Approx(1.0));
  Matrix img2 = synth_image(64);
  CHECK(mad(img, img2) == 0.0);

  // Far from rank one: the second singular value carries real mass.
  Eigen::BDCSVD<Matrix> svd(img);
  CHECK(svd.singularValues()[1] > 0.05 * svd.singularValues()[0]);
}

TEST_CASE("tensorize_image interleaves base-16 digits") {
  Matrix img = synth_image(256);
  DenseTensor x = tensorize_image(img);
  REQUIRE(x.dims() == std::vector<index_t>{16, 16, 16, 16});
  for (index_t r0 = 0; r0 < 16; r0 += 5)
    for (index_t c0 = 0; c0 < 16; c0 += 5)
      for (index_t r1 = 0; r1 < 16; r1 += 7)
        for (index_t c1 = 0; c1 < 16; c1 += 7)
          CHECK(x.at({r0, c0, r1, c1}) == img(r0 + 16 * r1, c0 + 16 * c1));
  Matrix back = detensorize_image(x);
  CHECK(mad(back, img) == 0.0);

  Matrix small = synth_image(16);
  DenseTensor xs = tensorize_image(small);
  REQUIRE(xs.dims() == std::vector<index_t>{16, 16});
  for (index_t r = 0; r < 16; ++r)
    for (index_t c = 0; c < 16; ++c) CHECK(xs.at({r, c}) == small(r, c));

  CHECK_THROWS_AS(tensorize_image(Matrix::Zero(8, 8)), config_error);
  CHECK_THROWS_AS(tensorize_image(Matrix::Zero(16, 32)), config_error);
}

TEST_CASE("kl divergence and total variation") {
  std::vector<double> p{0.5, 0.5};
  CHECK(kl_divergence(p, p) == doctest::Approx(0.0));
  std::vector<double> q{0.25, 0.75};
  CHECK(kl_divergence(p, q) ==
        doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0)));
  CHECK(std::isinf(kl_divergence({0.5, 0.5}, {1.0, 0.0})));
  CHECK(kl_divergence({0.0, 1.0}, {0.5, 0.5}) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(kl_divergence({0.5, -0.5}, q), config_error);
  CHECK_THROWS_AS(kl_divergence({1.0}, q), config_error);

  CHECK(total_variation(p, q) == doctest::Approx(0.25));
  CHECK(total_variation(p, p) == doctest::Approx(0.0));
}

TEST_CASE("exact sampling distribution") {
  std::vector<double> u = exact_sampling_distribution(Matrix::Identity(4, 4));
  for (double v : u) CHECK(v == doctest::Approx(0.25));

  Matrix a = tutil::rand_matrix(12, 3, 81);
  std::vector<double> p = exact_sampling_distribution(a);
  Matrix pinv = psd_pinv(a.transpose() * a);
  double sum = 0.0;
  for (index_t i = 0; i < 12; ++i) {
    double lev = a.row(i) * pinv * a.row(i).transpose();
    CHECK(p[i] == doctest::Approx(lev / 3.0).epsilon(1e-10));
    sum += p[i];
  }
  CHECK(sum == doctest::Approx(1.0));
}

TEST_CASE("cp distributions agree across routes") {
  CpModel m = tutil::rand_cp({3, 4, 2}, 2, 83);
  for (int mode = 0; mode < 3; ++mode) {
    std::vector<double> direct = exact_sampling_distribution(cp_design_matrix(m, mode));
    std::vector<double> fast = cp_exact_distribution(m, mode);
    REQUIRE(direct.size() == fast.size());
    for (std::size_t i = 0; i < direct.size(); ++i)
      CHECK(fast[i] == doctest::Approx(direct[i]).epsilon(1e-9));

    // Chain enumeration with an arbitrary PSD map equals the naive masses.
    Matrix phi = tutil::rand_psd(2, 200 + mode);
    LeverageMap lm;
    lm.phi = phi;
    lm.rank = 2;
    CpSamplerState st = cp_sampler_state(m, mode, lm);
    std::vector<double> chain = cp_chain_distribution(st);
    Vector naive = ref::cp_chain_masses_naive(m, mode, phi);
    for (std::size_t i = 0; i < chain.size(); ++i)
      CHECK(chain[i] == doctest::Approx(naive[i] / naive.sum()).epsilon(1e-10));
  }
}

TEST_CASE("tr distributions agree across routes") {
  TrModel m = tutil::rand_tr({3, 4, 2}, {2, 2, 2}, 87);
  for (int mode = 0; mode < 3; ++mode) {
    std::vector<double> direct = exact_sampling_distribution(subchain_design(m, mode));
    std::vector<double> fast = tr_exact_distribution(m, mode);
    REQUIRE(direct.size() == fast.size());
    for (std::size_t i = 0; i < direct.size(); ++i)
      CHECK(fast[i] == doctest::Approx(direct[i]).epsilon(1e-9));

    Matrix phi = tutil::rand_psd(4, 210 + mode);
    LeverageMap lm;
    lm.phi = phi;
    lm.rank = 4;
    TrSamplerState st = tr_sampler_state(m, mode, lm);
    std::vector<double> chain = tr_chain_distribution(st);
    Vector naive = ref::tr_chain_masses_naive(m, mode, phi);
    for (std::size_t i = 0; i < chain.size(); ++i)
      CHECK(chain[i] == doctest::Approx(naive[i] / naive.sum()).epsilon(1e-10));
  }
}

TEST_CASE("product distributions multiply per-axis laws") {
  CpModel m = tutil::rand_cp({3, 4, 2}, 2, 89);
  const int mode = 1;
  auto chain = classical_mode_order(3, mode);
  std::vector<double> law = cp_product_distribution(m, mode);
  REQUIRE(law.size() == 6);
  auto p0 = leverage_distribution(m.factors[chain[0]]);
  auto p1 = leverage_distribution(m.factors[chain[1]]);
  double sum = 0.0;
  for (index_t i1 = 0; i1 < 2; ++i1)
    for (index_t i0 = 0; i0 < 3; ++i0) {
      CHECK(law[i0 + 3 * i1] == doctest::Approx(p0[i0] * p1[i1]).epsilon(1e-12));
      sum += law[i0 + 3 * i1];
    }
  CHECK(sum == doctest::Approx(1.0));

  TrModel t = tutil::rand_tr({3, 4, 2}, {2, 2, 2}, 91);
  auto tchain = cyclic_mode_order(3, mode);
  std::vector<double> tlaw = tr_product_distribution(t, mode);
  REQUIRE(tlaw.size() == 6);
  auto q0 = leverage_distribution(core_unfold2(t, tchain[0]));
  auto q1 = leverage_distribution(core_unfold2(t, tchain[1]));
  for (index_t i1 = 0; i1 < 3; ++i1)
    for (index_t i0 = 0; i0 < 2; ++i0)
      CHECK(tlaw[i0 + 2 * i1] == doctest::Approx(q0[i0] * q1[i1]).epsilon(1e-12));
}

TEST_CASE("synth_clustered and knn cross validation") {
  SynthClustered sc = synth_clustered(3, 12, {5, 4}, 9);
  REQUIRE(sc.tensor.dims() == std::vector<index_t>{5, 4, 36});
  REQUIRE(sc.labels.size() == 36);
  for (int s = 0; s < 36; ++s) CHECK(sc.labels[s] == s % 3);

  // Well separated clusters classify perfectly.
  Matrix feats = Matrix::Zero(30, 2);
  std::vector<int> labels(30);
  for (int s = 0; s < 30; ++s) {
    labels[s] = s % 2;
    feats(s, labels[s]) = 10.0 + 0.01 * s;
    feats(s, 1 - labels[s]) = 0.01 * ((s * 7) % 5);
  }
  CHECK(knn_cross_val(feats, labels, 5, 3) == doctest::Approx(1.0));

  // Random features stay near chance.
  Matrix noise = tutil::rand_matrix(60, 3, 93);
  std::vector<int> rl(60);
  for (int s = 0; s < 60; ++s) rl[s] = s % 2;
  double acc = knn_cross_val(noise, rl, 6, 5);
  CHECK(acc < 0.85);

  std::vector<int> bad(10, 0);
  CHECK_THROWS_AS(knn_cross_val(feats, bad, 5, 3), config_error);
}

TEST_CASE("feature extraction ranks classes by factor rows") {
  SynthClustered sc = synth_clustered(3, 12, {6, 5}, 13);
  FeatureOptions fo;
  fo.method = "cp-exact";
  fo.rank = 4;
  fo.iters = 15;
  fo.tol = 1e-6;
  fo.folds = 6;
  fo.seed = 2;
  FeatureResult fr = run_feature_extraction(sc.tensor, sc.labels, fo);
  REQUIRE(fr.features.rows() == 36);
  REQUIRE(fr.features.cols() == 4);
  CHECK(fr.accuracy >= 0.8);
  REQUIRE(!fr.rows.empty());
  CHECK(fr.rows.back().extra_name == "accuracy");
  CHECK(fr.rows.back().extra_value == doctest::Approx(fr.accuracy));

  FeatureOptions ft;
  ft.method = "tr-exact";
  ft.ranks = {2, 2, 2};
  ft.iters = 15;
  ft.folds = 6;
  ft.seed = 2;
  FeatureResult frt = run_feature_extraction(sc.tensor, sc.labels, ft);
  REQUIRE(frt.features.rows() == 36);
  CHECK(frt.accuracy >= 0.5);

  FeatureOptions fbad;
  fbad.method = "nope";
  CHECK_THROWS_AS(run_feature_extraction(sc.tensor, sc.labels, fbad), config_error);
  std::vector<int> short_labels(4, 0);
  CHECK_THROWS_AS(run_feature_extraction(sc.tensor, short_labels, fo), config_error);
}

TEST_CASE("projection reproduces the generating factors") {
  CpModel m = tutil::rand_cp({4, 3, 5}, 2, 95);
  DenseTensor batch = cp_reconstruct(m);
  Matrix feats = cp_project_features(batch, m, 2);
  CHECK(mad(feats, m.factors[2]) < 1e-8);

  TrModel t = tutil::rand_tr({3, 4, 3}, {2, 2, 2}, 97);
  DenseTensor tb = tr_reconstruct(t);
  Matrix tf = tr_project_features(tb, t, 2);
  CHECK(mad(tf, core_unfold2_classical(t, 2)) < 1e-8);

  DenseTensor wrong({4, 4, 5});
  CHECK_THROWS_AS(cp_project_features(wrong, m, 2), config_error);
}

TEST_CASE("distribution experiment produces medians and rows") {
  SynthCp inst = synth_cp({4, 4, 4, 4}, 2, 3.0, 0.05, 15);
  DistributionOptions dop;
  dop.cp_rank = 2;
  dop.tr_ranks = {2, 2, 2, 2};
  dop.j1 = 256;
  dop.fit_iters = 3;
  dop.fit_tol = 0.0;
  dop.sketch_seeds = 2;
  dop.seed = 4;
  DistributionResult res = run_distribution_experiment(inst.tensor, dop);
  CHECK(res.cp_kl_es >= 0.0);
  CHECK(res.cp_kl_product >= 0.0);
  CHECK(res.tr_kl_es >= 0.0);
  CHECK(res.tr_kl_product >= 0.0);
  CHECK(std::isfinite(res.cp_kl_es));
  CHECK(std::isfinite(res.tr_kl_es));
  CHECK(res.rows.size() == 8);  // per kind: fit, product, one row per sketch seed

  DistributionOptions cponly = dop;
  cponly.run_tr = false;
  DistributionResult rc = run_distribution_experiment(inst.tensor, cponly);
  CHECK(rc.rows.size() == 4);
  CHECK(rc.tr_kl_es == 0.0);
}

TEST_CASE("recovery experiment runs both arms") {
  RecoveryOptions ro;
  ro.dims = {5, 5, 5};
  ro.rank = 2;
  ro.spike = 3.0;
  ro.noise_sd = 0.01;
  ro.j1 = 256;
  ro.j2 = 64;
  ro.iters = 8;
  ro.seeds = 2;
  ro.seed = 6;
  RecoveryResult rr = run_recovery_experiment(ro);
  REQUIRE(rr.es_errors.size() == 2);
  REQUIRE(rr.baseline_errors.size() == 2);
  CHECK(rr.es_wall > 0.0);
  CHECK(rr.baseline_wall > 0.0);
  CHECK(rr.rows.size() == 4);
  for (double e : rr.es_errors) {
    CHECK(std::isfinite(e));
    CHECK(e < 0.5);
  }

  RecoveryOptions es_only = ro;
  es_only.run_baseline = false;
  es_only.seeds = 1;
  RecoveryResult re = run_recovery_experiment(es_only);
  CHECK(re.es_errors.size() == 1);
  CHECK(re.baseline_errors.empty());
}
