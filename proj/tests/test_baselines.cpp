#include <cmath>
#include <vector>

#include "doctest.h"
#include "sals/baselines.hpp"
#include "sals/experiments.hpp"
#include "util.hpp"

using namespace sals;
using tutil::mad;

TEST_CASE("leverage_distribution normalises exact scores") {
  Matrix a = tutil::rand_matrix(10, 3, 3);
  auto p = leverage_distribution(a);
  REQUIRE(p.size() == 10);
  Vector lev = exact_leverage_scores(a);
  double sum = 0.0;
  for (index_t i = 0; i < 10; ++i) {
    CHECK(p[i] == doctest::Approx(lev[i] / lev.sum()).epsilon(1e-10));
    sum += p[i];
  }
  CHECK(sum == doctest::Approx(1.0));
}

TEST_CASE("product_draw_dedup merges repeats and reweights") {
  ProductSampler ps;
  ps.probs = {{0.5, 0.5}, {0.1, 0.9}};
  ps.axis_dims = {2, 2};
  index_t sub0[2] = {1, 0};
  CHECK(ps.joint_prob(sub0) == doctest::Approx(0.05));

  SplitRng rng = SplitRng(19).fork(1);
  const index_t count = 30000;
  IndexSample s = product_draw_dedup(ps, count, rng);
  REQUIRE(s.size() >= 1);
  REQUIRE(s.size() <= 4);
  index_t total = 0;
  std::vector<double> freq(4, 0.0);
  for (index_t j = 0; j < s.size(); ++j) {
    if (j > 0) CHECK(s.flat[j] > s.flat[j - 1]);  // sorted, unique
    index_t sub[2] = {s.flat[j] % 2, s.flat[j] / 2};
    double q = ps.joint_prob(sub);
    CHECK(s.prob[j] == doctest::Approx(q).epsilon(1e-12));
    // weight = sqrt(c / (count q)) recovers the repeat count.
    double c = s.weight[j] * s.weight[j] * count * q;
    CHECK(c == doctest::Approx(std::round(c)).epsilon(1e-9));
    total += static_cast<index_t>(std::llround(c));
    freq[s.flat[j]] = std::round(c) / static_cast<double>(count);
  }
  CHECK(total == count);
  double tv = 0.0;
  for (index_t f = 0; f < 4; ++f) {
    index_t sub[2] = {f % 2, f / 2};
    tv += std::abs(freq[f] - ps.joint_prob(sub));
  }
  CHECK(tv / 2.0 < 0.02);

  // Zero-probability cells are never drawn.
  ProductSampler pz;
  pz.probs = {{0.0, 1.0}, {0.5, 0.5}};
  pz.axis_dims = {2, 2};
  SplitRng rngz = SplitRng(21).fork(1);
  IndexSample sz = product_draw_dedup(pz, 500, rngz);
  for (index_t j = 0; j < sz.size(); ++j) CHECK(sz.flat[j] % 2 == 1);

  SplitRng rng2 = SplitRng(19).fork(1);
  IndexSample s2 = product_draw_dedup(ps, count, rng2);
  CHECK(s2.flat == s.flat);
}

TEST_CASE("cp_arls_lev fits a benign exact-rank instance") {
  CpModel truth = tutil::rand_cp({5, 4, 6}, 2, 51);
  DenseTensor x = cp_reconstruct(truth);
  CpEsOptions o;
  o.max_iters = 30;
  o.tol = 0.0;
  o.seed = 53;
  o.j2 = 256;
  FitTrace tr;
  CpModel m = cp_arls_lev(x, 2, o, &tr);
  CHECK(tr.final_rel_error < 0.05);
  CHECK(tr.final_rel_error == doctest::Approx(rel_error(m, x)).epsilon(1e-9));

  FitTrace tr2;
  CpModel m2 = cp_arls_lev(x, cp_init(x, 2, o), o, &tr2);
  for (int n = 0; n < 3; ++n) CHECK(mad(m.factors[n], m2.factors[n]) == 0.0);
}

TEST_CASE("tr_als_sampled fits a benign exact-rank instance") {
  TrModel truth = tutil::rand_tr({4, 3, 4}, {2, 2, 2}, 40);
  DenseTensor x = tr_reconstruct(truth);
  TrEsOptions o;
  o.max_iters = 30;
  o.tol = 0.0;
  o.seed = 59;
  o.j2 = 256;
  FitTrace tr;
  TrModel m = tr_als_sampled(x, {2, 2, 2}, o, &tr);
  CHECK(tr.final_rel_error < 0.05);
  CHECK(tr.final_rel_error == doctest::Approx(rel_error(m, x)).epsilon(1e-9));

  FitTrace tr2;
  TrModel m2 = tr_als_sampled(x, tr_init(x, {2, 2, 2}, o), o, &tr2);
  for (int n = 0; n < 3; ++n) CHECK(tutil::mad(m.cores[n], m2.cores[n]) == 0.0);
}

TEST_CASE("baseline draws reproduce the product law") {
  // Draw counts reconstructed from dedup weights match the enumerated product
  // distribution on a small CP instance.
  CpModel m = tutil::rand_cp({3, 3, 3}, 2, 61);
  const int mode = 1;
  auto chain = classical_mode_order(3, mode);
  ProductSampler ps;
  for (int jm : chain) {
    ps.probs.push_back(leverage_distribution(m.factors[jm]));
    ps.axis_dims.push_back(m.factors[jm].rows());
  }
  std::vector<double> law = cp_product_distribution(m, mode);
  REQUIRE(law.size() == 9);

  SplitRng rng = SplitRng(23).fork(2);
  const index_t count = 40000;
  IndexSample s = product_draw_dedup(ps, count, rng);
  std::vector<double> freq(9, 0.0);
  for (index_t j = 0; j < s.size(); ++j) {
    double c = std::round(s.weight[j] * s.weight[j] * count * s.prob[j]);
    freq[s.flat[j]] = c / count;
    CHECK(s.prob[j] == doctest::Approx(law[s.flat[j]]).epsilon(1e-10));
  }
  double tv = 0.0;
  for (index_t f = 0; f < 9; ++f) tv += std::abs(freq[f] - law[f]);
  CHECK(tv / 2.0 < 0.02);
}
