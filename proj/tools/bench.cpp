// Microbenchmark of the hot kernels against their plain serial references.
#include <chrono>
#include <cstdio>
#include <vector>

#include "sals/experiments.hpp"
#include "sals/reference.hpp"

namespace {

using namespace sals;
using Clock = std::chrono::steady_clock;

template <typename F>
double time_once(F&& f) {
  const auto t0 = Clock::now();
  f();
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(const char* name, double serial, double parallel) {
  std::printf("%-28s %10.4fs %10.4fs %8.2fx\n", name, serial, parallel,
              serial / (parallel > 0.0 ? parallel : 1e-12));
}

CpModel random_cp(const std::vector<index_t>& dims, index_t rank, std::uint64_t seed) {
  SplitRng root(seed);
  CpModel m;
  for (std::size_t n = 0; n < dims.size(); ++n) {
    SplitRng rng = root.fork(n);
    Matrix f(dims[n], rank);
    for (index_t c = 0; c < rank; ++c)
      for (index_t r = 0; r < dims[n]; ++r) f(r, c) = rng.normal();
    m.factors.push_back(std::move(f));
  }
  return m;
}

TrModel random_tr(const std::vector<index_t>& dims, const std::vector<index_t>& ranks,
                  std::uint64_t seed) {
  SplitRng root(seed);
  TrModel m;
  const int order = static_cast<int>(dims.size());
  for (int n = 0; n < order; ++n) {
    SplitRng rng = root.fork(n);
    DenseTensor core({ranks[(n + order - 1) % order], dims[n], ranks[n]});
    for (index_t t = 0; t < core.size(); ++t) core[t] = rng.normal();
    m.cores.push_back(std::move(core));
  }
  return m;
}

}  // namespace

int main() {
  std::printf("%-28s %11s %11s %9s\n", "kernel", "serial", "parallel", "speedup");

  {
    const std::vector<index_t> dims(6, 12);
    CpModel m = random_cp(dims, 8, 1);
    DenseTensor x;
    const double tp_rec = time_once([&] { x = cp_reconstruct(m); });
    DenseTensor xs;
    const double ts_rec = time_once([&] { xs = ref::cp_reconstruct_naive(m); });
    report("cp reconstruct", ts_rec, tp_rec);

    double rp = 0.0, rs = 0.0;
    const double tp_err = time_once([&] { rp = rel_error(m, x); });
    const double ts_err = time_once([&] { rs = ref::rel_error_naive(m, x); });
    report("cp rel-error", ts_err, tp_err);

    Matrix mp, ms;
    const double tp_mtt = time_once([&] { mp = cp_mttkrp(x, m, 0); });
    const double ts_mtt = time_once([&] { ms = ref::mttkrp_naive(x, m, 0); });
    report("cp mttkrp", ts_mtt, tp_mtt);
    std::printf("  checks: rel-error diff %.2e, mttkrp diff %.2e\n", rs - rp,
                (ms - mp).cwiseAbs().maxCoeff());
  }

  {
    const std::vector<index_t> dims(6, 10);
    const std::vector<index_t> ranks(6, 4);
    TrModel m = random_tr(dims, ranks, 2);
    DenseTensor x;
    const double tp_rec = time_once([&] { x = tr_reconstruct(m); });
    DenseTensor xs;
    const double ts_rec = time_once([&] { xs = ref::tr_reconstruct_naive(m); });
    report("tr reconstruct", ts_rec, tp_rec);

    Matrix rp, rs;
    const double tp_rhs = time_once([&] { rp = tr_subchain_rhs(x, m, 0); });
    const double ts_rhs = time_once([&] { rs = ref::tr_rhs_naive(x, m, 0); });
    report("tr design rhs", ts_rhs, tp_rhs);
    std::printf("  checks: rhs diff %.2e\n", (rs - rp).cwiseAbs().maxCoeff());
  }

  {
    const index_t j = 4096;
    SplitRng rng(3);
    auto conv = std::make_shared<RealConv>(j);
    TensorSketch ts(j, rng.fork(1), conv);
    Vector a(j), b(j);
    for (index_t i = 0; i < j; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
    }
    Vector yf, yd;
    const int reps = 50;
    const double t_fft = time_once([&] {
      for (int r = 0; r < reps; ++r) yf = ts.apply_pair(a.data(), b.data(), true);
    });
    const double t_dir = time_once([&] {
      for (int r = 0; r < reps; ++r) yd = ts.apply_pair(a.data(), b.data(), false);
    });
    report("tensor-sketch pair (fft)", t_dir, t_fft);
    std::printf("  checks: sketch diff %.2e\n", (yf - yd).cwiseAbs().maxCoeff());
  }
  return 0;
}
