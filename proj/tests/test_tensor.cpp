#include <cstdio>
#include <vector>

#include "doctest.h"
#include "sals/io.hpp"
#include "sals/reference.hpp"
#include "sals/tensor.hpp"
#include "util.hpp"

using namespace sals;
using tutil::mad;

TEST_CASE("linear_index and unravel_index invert each other") {
  std::vector<index_t> dims{3, 4, 2, 5};
  index_t total = 3 * 4 * 2 * 5;
  for (index_t flat = 0; flat < total; ++flat) {
    auto sub = unravel_index(flat, dims);
    CHECK(linear_index(sub, dims) == flat);
  }
  // First index fastest: stepping mode n moves by prod of lower dims.
  CHECK(linear_index({1, 0, 0, 0}, dims) == 1);
  CHECK(linear_index({0, 1, 0, 0}, dims) == 3);
  CHECK(linear_index({0, 0, 1, 0}, dims) == 12);
  CHECK(linear_index({0, 0, 0, 1}, dims) == 24);
}

TEST_CASE("dense tensor layout and at()") {
  DenseTensor x({3, 4, 2});
  CHECK(x.order() == 3);
  CHECK(x.size() == 24);
  CHECK(x.strides() == std::vector<index_t>{1, 3, 12});
  for (index_t t = 0; t < x.size(); ++t) x[t] = static_cast<double>(t);
  CHECK(x.at({1, 2, 1}) == 1 + 3 * 2 + 12 * 1);
  x.at({2, 3, 0}) = -7.0;
  CHECK(x[2 + 3 * 3] == -7.0);
  double sq = 0.0;
  for (index_t t = 0; t < x.size(); ++t) sq += x[t] * x[t];
  CHECK(x.norm() == doctest::Approx(std::sqrt(sq)));
}

TEST_CASE("mode orders") {
  CHECK(classical_mode_order(5, 2) == std::vector<int>{0, 1, 3, 4});
  CHECK(classical_mode_order(3, 0) == std::vector<int>{1, 2});
  CHECK(cyclic_mode_order(5, 2) == std::vector<int>{3, 4, 0, 1});
  CHECK(cyclic_mode_order(4, 3) == std::vector<int>{0, 1, 2});
  CHECK(cyclic_mode_order(4, 0) == std::vector<int>{1, 2, 3});
}

TEST_CASE("classical and cyclic unfold/fold") {
  DenseTensor x = tutil::rand_tensor({3, 4, 2}, 11);
  Matrix uc = classical_unfold(x, 1);
  REQUIRE(uc.rows() == 4);
  REQUIRE(uc.cols() == 6);
  Matrix uy = cyclic_unfold(x, 1);
  REQUIRE(uy.rows() == 4);
  REQUIRE(uy.cols() == 6);
  for (index_t i0 = 0; i0 < 3; ++i0)
    for (index_t i1 = 0; i1 < 4; ++i1)
      for (index_t i2 = 0; i2 < 2; ++i2) {
        CHECK(uc(i1, i0 + 3 * i2) == x.at({i0, i1, i2}));  // modes {0,2}, 0 fastest
        CHECK(uy(i1, i2 + 2 * i0) == x.at({i0, i1, i2}));  // modes {2,0}, 2 fastest
      }
  for (int mode = 0; mode < 3; ++mode) {
    DenseTensor rc = classical_fold(classical_unfold(x, mode), mode, x.dims());
    DenseTensor ry = cyclic_fold(cyclic_unfold(x, mode), mode, x.dims());
    CHECK(mad(rc, x) == 0.0);
    CHECK(mad(ry, x) == 0.0);
  }
}

TEST_CASE("mode odometer walks unfolding columns") {
  DenseTensor x({3, 4, 2, 5});
  std::vector<int> modes{1, 3};
  ModeOdometer od(x.dims(), x.strides(), modes);
  REQUIRE(od.column_count() == 20);
  for (index_t c = 0; c < 20; ++c) {
    index_t i1 = c % 4, i3 = c / 4;
    CHECK(od.base() == i1 * x.strides()[1] + i3 * x.strides()[3]);
    CHECK(od.sub() == std::vector<index_t>{i1, i3});
    ModeOdometer jump(x.dims(), x.strides(), modes);
    jump.seek(c);
    CHECK(jump.base() == od.base());
    od.advance();
  }
}

TEST_CASE("kronecker and khatri_rao index conventions") {
  Matrix a = tutil::rand_matrix(2, 2, 3);
  Matrix b = tutil::rand_matrix(3, 2, 4);
  Matrix c = tutil::rand_matrix(2, 2, 5);
  Matrix k = kronecker(a, b);
  REQUIRE(k.rows() == 6);
  REQUIRE(k.cols() == 4);
  for (index_t ia = 0; ia < 2; ++ia)
    for (index_t ib = 0; ib < 3; ++ib)
      for (index_t ja = 0; ja < 2; ++ja)
        for (index_t jb = 0; jb < 2; ++jb)
          CHECK(k(ia * 3 + ib, ja * 2 + jb) == doctest::Approx(a(ia, ja) * b(ib, jb)));

  Matrix kr = khatri_rao(a, b);
  REQUIRE(kr.rows() == 6);
  REQUIRE(kr.cols() == 2);
  for (index_t r = 0; r < 2; ++r)
    CHECK((kr.col(r) - kronecker(a.col(r), b.col(r))).cwiseAbs().maxCoeff() < 1e-14);

  // Chained: last matrix fastest.
  Matrix kr3 = khatri_rao({&a, &b, &c});
  REQUIRE(kr3.rows() == 12);
  for (index_t ia = 0; ia < 2; ++ia)
    for (index_t ib = 0; ib < 3; ++ib)
      for (index_t ic = 0; ic < 2; ++ic)
        for (index_t r = 0; r < 2; ++r)
          CHECK(kr3(ic + 2 * ib + 6 * ia, r) ==
                doctest::Approx(a(ia, r) * b(ib, r) * c(ic, r)));
}

TEST_CASE("cp design, values, reconstruction") {
  CpModel m = tutil::rand_cp({3, 4, 2}, 2, 21);
  Matrix d = cp_design_matrix(m, 1);
  REQUIRE(d.rows() == 6);
  REQUIRE(d.cols() == 2);
  for (index_t i0 = 0; i0 < 3; ++i0)
    for (index_t i2 = 0; i2 < 2; ++i2)
      for (index_t r = 0; r < 2; ++r)
        CHECK(d(i0 + 3 * i2, r) == doctest::Approx(m.factors[0](i0, r) * m.factors[2](i2, r)));

  DenseTensor xr = cp_reconstruct(m);
  DenseTensor xn = ref::cp_reconstruct_naive(m);
  CHECK(mad(xr, xn) < 1e-12);

  // Unfolding identity the solvers rely on: X_(n) = A_n D^T.
  Matrix lhs = classical_unfold(xr, 1);
  Matrix rhs = m.factors[1] * d.transpose();
  CHECK(mad(lhs, rhs) < 1e-12);

  std::vector<index_t> sub{2, 3, 1};
  double v = 0.0;
  for (index_t r = 0; r < 2; ++r)
    v += m.factors[0](2, r) * m.factors[1](3, r) * m.factors[2](1, r);
  CHECK(cp_value(m, sub.data()) == doctest::Approx(v));

  CHECK(rel_error(m, xr) < 1e-12);
  DenseTensor noisy = xr;
  noisy[5] += 0.5;
  CHECK(rel_error(m, noisy) == doctest::Approx(0.5 / noisy.norm()));
  CHECK(rel_error(m, noisy) == doctest::Approx(ref::rel_error_naive(m, noisy)));
  DenseTensor zero({3, 4, 2});
  CHECK_THROWS_AS(rel_error(m, zero), degenerate_error);
}

TEST_CASE("tr slices, unfoldings, subchain") {
  std::vector<index_t> dims{3, 4, 2};
  std::vector<index_t> ranks{2, 3, 2};
  TrModel m = tutil::rand_tr(dims, ranks, 31);
  REQUIRE(m.order() == 3);
  CHECK(m.dims() == dims);
  CHECK(m.ranks() == ranks);
  CHECK(m.rank_left(0) == 2);   // R_{-1} = R_2
  CHECK(m.rank_right(0) == 2);  // R_0
  CHECK(m.rank_left(1) == 2);
  CHECK(m.rank_right(1) == 3);

  // slice(n, i) against the raw core layout (first index fastest).
  for (index_t i = 0; i < 4; ++i) {
    auto s = m.slice(1, i);
    REQUIRE(s.rows() == 2);
    REQUIRE(s.cols() == 3);
    for (index_t rl = 0; rl < 2; ++rl)
      for (index_t rr = 0; rr < 3; ++rr) CHECK(s(rl, rr) == m.cores[1].at({rl, i, rr}));
  }

  Matrix g2 = core_unfold2(m, 1);
  REQUIRE(g2.rows() == 4);
  REQUIRE(g2.cols() == 6);
  Matrix g2c = core_unfold2_classical(m, 1);
  for (index_t i = 0; i < 4; ++i)
    for (index_t rl = 0; rl < 2; ++rl)
      for (index_t rr = 0; rr < 3; ++rr) {
        CHECK(g2(i, rr + 3 * rl) == m.cores[1].at({rl, i, rr}));   // r_n fastest
        CHECK(g2c(i, rl + 2 * rr) == m.cores[1].at({rl, i, rr}));  // r_{n-1} fastest
      }
  CHECK(mad(core_fold2(g2, 2, 3), m.cores[1]) == 0.0);
  CHECK(mad(core_fold2_classical(g2c, 2, 3), m.cores[1]) == 0.0);

  // Subchain slice for mode 1 multiplies modes 2 then 0: R_1 x R_0.
  index_t sub[3] = {1, 0, 1};
  Matrix sp = subchain_slice(m, 1, sub);
  Matrix expect = Matrix(m.slice(2, 1)) * Matrix(m.slice(0, 1));
  CHECK(mad(sp, expect) < 1e-13);

  Matrix d = subchain_design(m, 1);
  REQUIRE(d.rows() == 6);       // prod of off dims
  REQUIRE(d.cols() == 6);       // R_0 * R_1
  index_t full[3] = {0, 0, 0};
  for (index_t i2 = 0; i2 < 2; ++i2)
    for (index_t i0 = 0; i0 < 3; ++i0) {
      full[2] = i2;
      full[0] = i0;
      Matrix s = subchain_slice(m, 1, full);   // R_1 x R_0
      index_t row = i2 + 2 * i0;               // cyclic order, mode 2 fastest
      for (index_t r0 = 0; r0 < 2; ++r0)
        for (index_t r1 = 0; r1 < 3; ++r1)
          CHECK(d(row, r0 + 2 * r1) == doctest::Approx(s(r1, r0)));
    }

  DenseTensor xr = tr_reconstruct(m);
  CHECK(mad(xr, ref::tr_reconstruct_naive(m)) < 1e-12);

  // Solver identity: cyclic unfolding = classical core unfolding times design^T.
  Matrix lhs = cyclic_unfold(xr, 1);
  Matrix rhs = core_unfold2_classical(m, 1) * d.transpose();
  CHECK(mad(lhs, rhs) < 1e-12);

  index_t at[3] = {2, 3, 1};
  Matrix prod = Matrix(m.slice(0, 2)) * Matrix(m.slice(1, 3)) * Matrix(m.slice(2, 1));
  CHECK(tr_value(m, at) == doctest::Approx(prod.trace()));

  CHECK(rel_error(m, xr) < 1e-12);
  CHECK(ref::rel_error_naive(m, xr) < 1e-12);
  DenseTensor zero(dims);
  CHECK_THROWS_AS(rel_error(m, zero), degenerate_error);
}

TEST_CASE("entry sampling") {
  DenseTensor x = tutil::rand_tensor({4, 5, 3}, 17);
  EntrySample es = sample_entries(x, 20, 7);
  REQUIRE(es.flat.size() == 20);
  double n2 = 0.0;
  for (index_t f : es.flat) {
    CHECK(f >= 0);
    CHECK(f < x.size());
    n2 += x[f] * x[f];
  }
  CHECK(es.norm2 == doctest::Approx(n2));
  EntrySample es2 = sample_entries(x, 20, 7);
  CHECK(es2.flat == es.flat);

  CpModel m = tutil::rand_cp({4, 5, 3}, 2, 23);
  DenseTensor xm = cp_reconstruct(m);
  EntrySample esm = sample_entries(xm, 30, 9);
  CHECK(rel_error_sampled(m, xm, esm) < 1e-12);
  TrModel t = tutil::rand_tr({4, 5, 3}, {2, 2, 2}, 29);
  DenseTensor xt = tr_reconstruct(t);
  EntrySample est = sample_entries(xt, 30, 9);
  CHECK(rel_error_sampled(t, xt, est) < 1e-12);
}

TEST_CASE("tensor and model containers round trip") {
  DenseTensor x = tutil::rand_tensor({3, 2, 4}, 41);
  const char* tp = "roundtrip_tensor.dt";
  write_tensor(tp, x);
  DenseTensor y = read_tensor(tp);
  REQUIRE(y.dims() == x.dims());
  CHECK(mad(x, y) == 0.0);

  CpModel cm = tutil::rand_cp({3, 2, 4}, 3, 43);
  write_cp_model("roundtrip_model.cpm", cm);
  CpModel cr = read_cp_model("roundtrip_model.cpm");
  REQUIRE(cr.order() == 3);
  REQUIRE(cr.rank() == 3);
  for (int n = 0; n < 3; ++n) CHECK(mad(cr.factors[n], cm.factors[n]) == 0.0);

  TrModel tm = tutil::rand_tr({3, 2, 4}, {2, 3, 2}, 47);
  write_tr_model("roundtrip_model.trm", tm);
  TrModel trr = read_tr_model("roundtrip_model.trm");
  REQUIRE(trr.order() == 3);
  REQUIRE(trr.ranks() == tm.ranks());
  for (int n = 0; n < 3; ++n) CHECK(mad(trr.cores[n], tm.cores[n]) == 0.0);

  CHECK_THROWS_AS(read_tensor("no_such_file.dt"), config_error);
  std::remove(tp);
  std::remove("roundtrip_model.cpm");
  std::remove("roundtrip_model.trm");
}

TEST_CASE("labels and report rows round trip") {
  std::vector<int> labels{0, 2, 1, 1, 0};
  write_labels("roundtrip_labels.txt", labels);
  CHECK(read_labels("roundtrip_labels.txt") == labels);
  std::remove("roundtrip_labels.txt");

  ReportRow r;
  r.method = "cp-es";
  r.kind = "cp";
  r.seed = 42;
  r.j1 = 1000;
  r.j2 = 50;
  r.iters = 20;
  r.tol = 1e-5;
  r.wall_seconds = 1.25;
  r.final_rel_error = 0.0316227766016838;
  r.extra_name = "kl";
  r.extra_value = 0.002;
  r.clamp_events = 3;
  r.norm_constant = 17.5;
  r.error_trace = {0.9, 0.5, 0.0316227766016838};
  write_report("roundtrip_report.csv", {r});
  auto rows = read_report("roundtrip_report.csv");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].method == "cp-es");
  CHECK(rows[0].kind == "cp");
  CHECK(rows[0].seed == 42);
  CHECK(rows[0].j1 == 1000);
  CHECK(rows[0].j2 == 50);
  CHECK(rows[0].iters == 20);
  CHECK(rows[0].tol == 1e-5);
  CHECK(rows[0].wall_seconds == 1.25);
  CHECK(rows[0].final_rel_error == 0.0316227766016838);
  CHECK(rows[0].extra_name == "kl");
  CHECK(rows[0].extra_value == 0.002);
  CHECK(rows[0].clamp_events == 3);
  CHECK(rows[0].norm_constant == 17.5);
  REQUIRE(rows[0].error_trace.size() == 3);
  CHECK(rows[0].error_trace[2] == 0.0316227766016838);
  std::remove("roundtrip_report.csv");
}
