#include <cmath>
#include <vector>

#include <Eigen/QR>

#include "doctest.h"
#include "sals/leverage.hpp"
#include "sals/tensor.hpp"
#include "util.hpp"

using namespace sals;
using tutil::mad;

TEST_CASE("sv_threshold scales with the leading value") {
  Vector sv(2);
  sv << 2.0, 1e-12;
  CHECK(sv_threshold(sv, 4, 2) == doctest::Approx(2.0 * 1e-10 * 4));
  CHECK(sv_threshold(Vector(), 3, 3) == 0.0);
}

TEST_CASE("exact leverage scores") {
  Matrix a = tutil::rand_matrix(8, 3, 2);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(8, 3);

  Vector lq = exact_leverage_scores(q);
  CHECK((lq - q.rowwise().squaredNorm()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(lq.sum() == doctest::Approx(3.0));

  // Independent route: diagonal of the projector A (A'A)^+ A'.
  Vector la = exact_leverage_scores(a);
  Matrix proj = a * psd_pinv(a.transpose() * a) * a.transpose();
  CHECK((la - proj.diagonal()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(la.sum() == doctest::Approx(3.0));

  // Scale invariance.
  Vector ls = exact_leverage_scores(Matrix(5.0 * a));
  CHECK((la - ls).cwiseAbs().maxCoeff() < 1e-10);

  // Rank-deficient: duplicated column changes nothing.
  Matrix dup(8, 4);
  dup << a, a.col(0);
  Vector ld = exact_leverage_scores(dup);
  CHECK((la - ld).cwiseAbs().maxCoeff() < 1e-8);

  CHECK_THROWS_AS(exact_leverage_scores(Matrix::Zero(4, 2)), degenerate_error);
  CHECK_THROWS_AS(exact_leverage_scores(Matrix()), config_error);
}

TEST_CASE("psd_pinv") {
  Matrix b = tutil::rand_matrix(4, 4, 3);
  Matrix spd = b.transpose() * b + Matrix::Identity(4, 4);
  CHECK(mad(psd_pinv(spd) * spd, Matrix::Identity(4, 4)) < 1e-10);

  Matrix c = tutil::rand_matrix(4, 2, 5);
  Matrix sing = c * c.transpose();  // rank 2
  Matrix p = psd_pinv(sing);
  CHECK(mad(p, p.transpose()) < 1e-12);
  CHECK(mad(sing * p * sing, sing) < 1e-9);
  CHECK(mad(p * sing * p, p) < 1e-9);

  CHECK_THROWS_AS(psd_pinv(Matrix::Zero(3, 3)), degenerate_error);
  CHECK_THROWS_AS(psd_pinv(tutil::rand_matrix(3, 2, 7)), config_error);
}

TEST_CASE("leverage map from an unsketched matrix is exact") {
  Matrix a = tutil::rand_matrix(30, 4, 9);
  LeverageMap lm = estimate_leverage_map(a);
  CHECK(lm.rank == 4);
  Vector exact = exact_leverage_scores(a);
  for (index_t i = 0; i < 30; ++i)
    CHECK(lm.score(a.row(i)) == doctest::Approx(exact[i]).epsilon(1e-9));

  // Scaling the sketched matrix leaves its own row scores unchanged.
  LeverageMap lm3 = estimate_leverage_map(Matrix(3.0 * a));
  for (index_t i = 0; i < 30; ++i)
    CHECK(lm3.score(Matrix(3.0 * a).row(i)) == doctest::Approx(lm.score(a.row(i))).epsilon(1e-9));

  CHECK_THROWS_AS(estimate_leverage_map(Matrix::Zero(6, 2)), degenerate_error);
}

TEST_CASE("leverage map from a gaussian sketch stays in range") {
  Matrix a = tutil::rand_matrix(64, 3, 21);
  Matrix s = tutil::rand_matrix(48, 64, 23, 1.0 / std::sqrt(48.0));
  LeverageMap lm = estimate_leverage_map(s * a);
  Vector exact = exact_leverage_scores(a);
  for (index_t i = 0; i < 64; ++i) {
    double est = lm.score(a.row(i));
    CHECK(est > 0.2 * exact[i]);
    CHECK(est < 3.0 * exact[i]);
  }
}

TEST_CASE("draw_from_weights") {
  std::vector<double> w{1.0, 0.0, 3.0, 0.0, 6.0};
  SplitRng rng(17);
  const index_t count = 20000;
  IndexSample s = draw_from_weights(w, count, rng);
  REQUIRE(s.size() == count);
  std::vector<double> freq(5, 0.0);
  for (index_t j = 0; j < count; ++j) {
    index_t i = s.flat[j];
    REQUIRE(i >= 0);
    REQUIRE(i < 5);
    CHECK(w[i] > 0.0);
    CHECK(s.prob[j] == doctest::Approx(w[i] / 10.0));
    CHECK(s.weight[j] == doctest::Approx(1.0 / std::sqrt(count * s.prob[j])));
    freq[i] += 1.0 / count;
  }
  double tv = 0.0;
  for (int i = 0; i < 5; ++i) tv += std::abs(freq[i] - w[i] / 10.0);
  CHECK(tv / 2.0 < 0.02);

  SplitRng rng2(99);
  CHECK_THROWS_AS(draw_from_weights({0.0, 0.0}, 5, rng2), degenerate_error);
  CHECK_THROWS_AS(draw_from_weights({1.0, -0.5}, 5, rng2), config_error);
}

TEST_CASE("streamed gaussian sketch matches the explicit unfolding product") {
  DenseTensor x = tutil::rand_tensor({5, 4, 3}, 25);
  const int mode = 1;
  auto cols_modes = classical_mode_order(3, mode);
  const index_t width = 3;
  SplitRng base = SplitRng(9).fork(7);
  Matrix y = streamed_gaussian_sketch(x, mode, cols_modes, width, base);
  REQUIRE(y.rows() == 4);
  REQUIRE(y.cols() == width);

  // Fewer than 4096 columns: a single stream, one row of draws per column.
  Matrix omega(15, width);
  SplitRng rng = base.fork(0);
  for (index_t c = 0; c < 15; ++c)
    for (index_t r = 0; r < width; ++r) omega(c, r) = rng.normal();
  CHECK(mad(y, classical_unfold(x, mode) * omega) < 1e-12);
}

TEST_CASE("orthonormal_columns") {
  Matrix y = tutil::rand_matrix(10, 3, 31);
  Matrix q = orthonormal_columns(y, SplitRng(1));
  CHECK(mad(q.transpose() * q, Matrix::Identity(3, 3)) < 1e-10);
  // Same column space as y.
  Matrix py = y * psd_pinv(y.transpose() * y) * y.transpose();
  CHECK(mad(q * q.transpose(), py) < 1e-9);

  Matrix wide = tutil::rand_matrix(3, 5, 33);
  Matrix qw = orthonormal_columns(wide, SplitRng(2));
  CHECK(qw.rows() == 3);
  CHECK(qw.cols() == 5);
  CHECK(mad(qw.leftCols(3).transpose() * qw.leftCols(3), Matrix::Identity(3, 3)) < 1e-10);
}

TEST_CASE("gather_sampled_rhs indexes fibers and applies weights") {
  DenseTensor x = tutil::rand_tensor({3, 4, 2, 3}, 37);
  const int mode = 2;
  auto fibers = classical_mode_order(4, mode);  // {0, 1, 3}
  IndexSample s;
  s.flat = {0, 5, 17, 35};
  s.prob = {0.1, 0.1, 0.1, 0.1};
  s.weight = {2.0, 0.5, 1.0, 3.0};
  Matrix rhs = gather_sampled_rhs(x, mode, fibers, s);
  REQUIRE(rhs.rows() == 4);
  REQUIRE(rhs.cols() == 2);
  std::vector<index_t> fdims{3, 4, 3};
  for (index_t j = 0; j < 4; ++j) {
    auto sub = unravel_index(s.flat[j], fdims);
    for (index_t t = 0; t < 2; ++t)
      CHECK(rhs(j, t) == doctest::Approx(s.weight[j] * x.at({sub[0], sub[1], t, sub[2]})));
  }
}

TEST_CASE("sampled least squares") {
  Matrix d = tutil::rand_matrix(50, 3, 41);
  Matrix xt = tutil::rand_matrix(3, 2, 43);
  Matrix b = d * xt;
  SampledLsResult r = sampled_least_squares(d, b);
  CHECK_FALSE(r.svd_fallback);
  CHECK(r.rank == 3);
  CHECK(mad(r.x, xt) < 1e-9);

  // Duplicated column: falls back to the pseudoinverse but still fits.
  Matrix ddup(20, 3);
  Matrix base = tutil::rand_matrix(20, 2, 45);
  ddup << base.col(0), base.col(1), base.col(0);
  Matrix bdup = base * tutil::rand_matrix(2, 1, 47);
  SampledLsResult rd = sampled_least_squares(ddup, bdup);
  CHECK(rd.svd_fallback);
  CHECK(rd.rank == 2);
  CHECK((ddup * rd.x - bdup).cwiseAbs().maxCoeff() < 1e-8);

  // Wide systems always go through the pseudoinverse.
  Matrix wide = tutil::rand_matrix(2, 4, 49);
  SampledLsResult rw = sampled_least_squares(wide, tutil::rand_matrix(2, 1, 51));
  CHECK(rw.svd_fallback);

  CHECK_THROWS_AS(sampled_least_squares(Matrix::Zero(4, 2), Matrix::Zero(4, 1)),
                  degenerate_error);
  CHECK_THROWS_AS(sampled_least_squares(d, Matrix::Zero(3, 1)), config_error);
}
