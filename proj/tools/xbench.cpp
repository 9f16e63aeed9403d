// Workbench CLI: synthetic instances, decomposition fits, and the comparison
// experiments, all driven by the library.  Exit codes: 0 ok, 2 bad
// configuration or input, 3 numerical degeneracy.
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sals/experiments.hpp"

namespace {

using namespace sals;

void print_trace_summary(const FitTrace& ft) {
  for (const auto& w : ft.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("iters=%zu\n", ft.rel_errors.size());
  std::printf("final_rel_error=%.12g\n", ft.final_rel_error);
  std::printf("wall_seconds=%.6g\n", ft.wall_seconds);
  std::printf("clamp_events=%lld\n", static_cast<long long>(ft.clamp_events));
  if (!ft.norm_constants.empty()) std::printf("norm_constant=%.12g\n", ft.norm_constants.back());
  if (ft.error_estimated) std::printf("error_trace_estimated=1\n");
}

ReportRow trace_row(const std::string& method, const std::string& kind, std::uint64_t seed,
                    index_t j1, index_t j2, int iters, double tol, const FitTrace& ft) {
  ReportRow r;
  r.method = method;
  r.kind = kind;
  r.seed = seed;
  r.j1 = j1;
  r.j2 = j2;
  r.iters = iters;
  r.tol = tol;
  r.wall_seconds = ft.wall_seconds;
  r.final_rel_error = ft.final_rel_error;
  r.clamp_events = ft.clamp_events;
  r.norm_constant = ft.norm_constants.empty() ? 0.0 : ft.norm_constants.back();
  r.error_trace = ft.rel_errors;
  return r;
}

DenseTensor matrix_tensor(const Matrix& m) {
  DenseTensor t({m.rows(), m.cols()});
  std::copy(m.data(), m.data() + m.size(), t.data());
  return t;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sampling-based CP / tensor-ring decomposition workbench"};
  app.require_subcommand(1);

  std::string input, output, report, labels_path, model_path, truth_path, method;
  std::vector<index_t> dims, ranks;
  index_t rank = 4, j1 = 2000, j2 = 500, baseline_j2 = 0, side = 0, mode_arg = -1;
  int iters = 50, seeds = 10, folds = 10, sketch_seeds = 5;
  double tol = 1e-6, spike = 0.0, noise = 0.01, ridge = 0.0;
  std::uint64_t seed = 0;
  bool tt = false, big_mem = false, use_tr = false, rrf = false;
  bool es_only = false, baseline_only = false, cp_only = false, tr_only = false;

  auto* scp = app.add_subcommand("synth-cp", "generate a planted CP instance (.dt)");
  scp->add_option("--dims", dims, "mode sizes (default ten modes of 6)")->delimiter(',');
  scp->add_option("--rank", rank, "CP rank (default 4)");
  scp->add_option("--spike", spike, "planted spike value (default 4)");
  scp->add_option("--noise", noise, "noise standard deviation (default 0.01)");
  scp->add_option("--seed", seed, "RNG seed");
  scp->add_option("--output", output, "tensor output path")->required();
  scp->add_option("--truth", truth_path, "also write the planted model (.cpm)");

  auto* str_ = app.add_subcommand("synth-tr", "generate a planted tensor-ring instance (.dt)");
  str_->add_option("--dims", dims, "mode sizes (default eight modes of 6)")->delimiter(',');
  str_->add_option("--ranks", ranks, "ring ranks, one per mode (default all 3)")->delimiter(',');
  str_->add_option("--spike", spike, "planted spike value (default 3)");
  str_->add_option("--noise", noise, "noise standard deviation (default 0.01)");
  str_->add_option("--seed", seed, "RNG seed");
  str_->add_option("--output", output, "tensor output path")->required();
  str_->add_option("--truth", truth_path, "also write the planted model (.trm)");
  str_->add_flag("--tt", tt, "force a tensor train (last rank 1)");
  str_->add_flag("--big-mem", big_mem, "allow instances above 2^25 entries");

  auto* cpc = app.add_subcommand("cp", "fit a CP model");
  cpc->add_option("--input", input, "tensor path (.dt)")->required();
  cpc->add_option("--method", method, "exact | es | arls-lev (default exact)");
  cpc->add_option("--rank", rank, "CP rank");
  cpc->add_option("--j1", j1, "sketch rows (es)");
  cpc->add_option("--j2", j2, "sampled rows per solve (es, arls-lev)");
  cpc->add_option("--iters", iters, "max sweeps (default 50)");
  cpc->add_option("--tol", tol, "stop when the error change falls below this");
  cpc->add_option("--seed", seed, "RNG seed");
  cpc->add_option("--reg", ridge, "Tikhonov term added to every solve");
  cpc->add_flag("--rrf-init", rrf, "range-finder init instead of random normal");
  cpc->add_option("--output", output, "model output path (.cpm)");
  cpc->add_option("--report", report, "CSV report path");

  auto* trc = app.add_subcommand("tr", "fit a tensor-ring model");
  trc->add_option("--input", input, "tensor path (.dt)")->required();
  trc->add_option("--method", method, "exact | es | sampled (default exact)");
  trc->add_option("--rank", rank, "ring rank used for every mode (default 3)");
  trc->add_option("--ranks", ranks, "explicit ring ranks, one per mode")->delimiter(',');
  trc->add_option("--j1", j1, "sketch rows (es)");
  trc->add_option("--j2", j2, "sampled rows per solve (es, sampled)");
  trc->add_option("--iters", iters, "max sweeps (default 50)");
  trc->add_option("--tol", tol, "stop when the error change falls below this");
  trc->add_option("--seed", seed, "RNG seed");
  trc->add_option("--reg", ridge, "Tikhonov term added to every solve");
  trc->add_flag("--rrf-init", rrf, "range-finder init instead of random normal");
  trc->add_flag("--tt", tt, "force a tensor train (last rank 1)");
  trc->add_option("--output", output, "model output path (.trm)");
  trc->add_option("--report", report, "CSV report path");

  auto* cdc = app.add_subcommand("compare-dist",
                                 "KL of sketched and product sampling laws vs the exact one");
  cdc->add_option("--input", input, "tensor path (.dt); omit to use --synth-image");
  cdc->add_option("--synth-image", side, "tensorize the built-in test image of this side");
  cdc->add_option("--rank", rank, "CP rank (default 10)");
  cdc->add_option("--ranks", ranks, "ring ranks (default all 3)")->delimiter(',');
  cdc->add_option("--j1", j1, "sketch rows (default 10000)");
  cdc->add_option("--iters", iters, "fit sweeps (default 5)");
  cdc->add_option("--tol", tol, "fit tolerance (default 1e-4)");
  cdc->add_option("--sketch-seeds", sketch_seeds, "sketch repetitions (default 5)");
  cdc->add_option("--seed", seed, "RNG seed");
  cdc->add_flag("--cp-only", cp_only, "skip the ring half");
  cdc->add_flag("--tr-only", tr_only, "skip the CP half");
  cdc->add_option("--report", report, "CSV report path");

  auto* rcc = app.add_subcommand("recovery", "planted-model recovery, sampler vs baseline");
  rcc->add_flag("--tr", use_tr, "ring instance instead of CP");
  rcc->add_option("--dims", dims, "mode sizes")->delimiter(',');
  rcc->add_option("--rank", rank, "CP rank (default 4)");
  rcc->add_option("--ranks", ranks, "ring ranks (default all 3)")->delimiter(',');
  rcc->add_option("--spike", spike, "planted spike (default 4 CP / 3 ring)");
  rcc->add_option("--noise", noise, "noise standard deviation (default 0.01)");
  rcc->add_option("--j1", j1, "sketch rows (default 1000)");
  rcc->add_option("--j2", j2, "sampled rows per solve (default 50)");
  rcc->add_option("--baseline-j2", baseline_j2, "baseline sample count (default --j2)");
  rcc->add_option("--iters", iters, "sweeps per fit (default 20)");
  rcc->add_option("--tol", tol, "fit tolerance (default 0: run all sweeps)");
  rcc->add_option("--seeds", seeds, "instance count (default 10)");
  rcc->add_option("--seed", seed, "base RNG seed");
  rcc->add_flag("--es-only", es_only, "skip the baseline arm");
  rcc->add_flag("--baseline-only", baseline_only, "skip the sampler arm");
  rcc->add_option("--report", report, "CSV report path");

  auto* fec = app.add_subcommand("features", "decompose, extract features, score 1-NN folds");
  fec->add_option("--input", input, "tensor path (.dt), samples on the last mode")->required();
  fec->add_option("--labels", labels_path, "label file, one integer per line")->required();
  fec->add_option("--method", method,
                  "cp-exact | cp-es | cp-arls-lev | tr-exact | tr-es | tr-sampled");
  fec->add_option("--rank", rank, "CP rank / ring default rank (default 8)");
  fec->add_option("--ranks", ranks, "explicit ring ranks")->delimiter(',');
  fec->add_option("--j1", j1, "sketch rows");
  fec->add_option("--j2", j2, "sampled rows per solve");
  fec->add_option("--iters", iters, "sweeps per fit (default 20)");
  fec->add_option("--tol", tol, "fit tolerance");
  fec->add_option("--folds", folds, "cross-validation folds (default 10)");
  fec->add_option("--seed", seed, "RNG seed");
  fec->add_option("--report", report, "CSV report path");

  auto* prc = app.add_subcommand("project", "least-squares features for new samples");
  prc->add_option("--input", input, "batch tensor (.dt), samples on the projected mode")
      ->required();
  prc->add_option("--model", model_path, "frozen model (.cpm or .trm)")->required();
  prc->add_option("--mode", mode_arg, "projected mode (default last)");
  prc->add_option("--output", output, "feature matrix output (2-way .dt)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (scp->parsed()) {
      if (dims.empty()) dims.assign(10, 6);
      if (scp->count("--spike") == 0) spike = 4.0;
      SynthCp inst = synth_cp(dims, rank, spike, noise, seed);
      write_tensor(output, inst.tensor);
      if (!truth_path.empty()) write_cp_model(truth_path, inst.truth);
      std::printf("entries=%lld\n", static_cast<long long>(inst.tensor.size()));
      std::printf("norm=%.12g\n", inst.tensor.norm());
    } else if (str_->parsed()) {
      if (dims.empty()) dims.assign(8, 6);
      if (ranks.empty()) ranks.assign(dims.size(), 3);
      if (tt) ranks.back() = 1;
      if (str_->count("--spike") == 0) spike = 3.0;
      index_t entries = 1;
      for (index_t d : dims) {
        require(d >= 1, "synth-tr: dims must be positive");
        require(entries <= (index_t(1) << 28) / d, "synth-tr: instance too large");
        entries *= d;
      }
      require(entries <= (index_t(1) << 25) || big_mem,
              "synth-tr: instance above 2^25 entries; pass --big-mem to allow it");
      SynthTr inst = synth_tr(dims, ranks, spike, noise, seed);
      write_tensor(output, inst.tensor);
      if (!truth_path.empty()) write_tr_model(truth_path, inst.truth);
      std::printf("entries=%lld\n", static_cast<long long>(inst.tensor.size()));
      std::printf("norm=%.12g\n", inst.tensor.norm());
    } else if (cpc->parsed()) {
      if (method.empty()) method = "exact";
      DenseTensor x = read_tensor(input);
      FitTrace ft;
      CpModel m;
      std::string row_name;
      if (method == "exact") {
        FitOptions fo;
        fo.max_iters = iters;
        fo.tol = tol;
        fo.seed = seed;
        fo.range_finder_init = rrf;
        fo.ridge = ridge;
        m = cp_als(x, rank, fo, &ft);
        row_name = "cp-exact";
      } else if (method == "es" || method == "arls-lev") {
        CpEsOptions eo;
        eo.max_iters = iters;
        eo.tol = tol;
        eo.seed = seed;
        eo.range_finder_init = rrf;
        eo.ridge = ridge;
        eo.j1 = j1;
        eo.j2 = j2;
        m = method == "es" ? cp_als_es(x, rank, eo, &ft) : cp_arls_lev(x, rank, eo, &ft);
        row_name = method == "es" ? "cp-es" : "cp-arls-lev";
      } else {
        throw config_error("cp: unknown --method " + method);
      }
      print_trace_summary(ft);
      if (!output.empty()) write_cp_model(output, m);
      if (!report.empty())
        write_report(report, {trace_row(row_name, "cp", seed, method == "exact" ? 0 : j1,
                                        method == "exact" ? 0 : j2, iters, tol, ft)});
    } else if (trc->parsed()) {
      if (method.empty()) method = "exact";
      DenseTensor x = read_tensor(input);
      if (ranks.empty()) ranks.assign(x.order(), rank > 0 ? rank : 3);
      if (tt) ranks.back() = 1;
      FitTrace ft;
      TrModel m;
      std::string row_name;
      if (method == "exact") {
        FitOptions fo;
        fo.max_iters = iters;
        fo.tol = tol;
        fo.seed = seed;
        fo.range_finder_init = rrf;
        fo.ridge = ridge;
        m = tr_als(x, ranks, fo, &ft);
        row_name = "tr-exact";
      } else if (method == "es" || method == "sampled") {
        TrEsOptions eo;
        eo.max_iters = iters;
        eo.tol = tol;
        eo.seed = seed;
        eo.range_finder_init = rrf;
        eo.ridge = ridge;
        eo.j1 = j1;
        eo.j2 = j2;
        m = method == "es" ? tr_als_es(x, ranks, eo, &ft) : tr_als_sampled(x, ranks, eo, &ft);
        row_name = method == "es" ? "tr-es" : "tr-sampled";
      } else {
        throw config_error("tr: unknown --method " + method);
      }
      print_trace_summary(ft);
      if (!output.empty()) write_tr_model(output, m);
      if (!report.empty())
        write_report(report, {trace_row(row_name, "tr", seed, method == "exact" ? 0 : j1,
                                        method == "exact" ? 0 : j2, iters, tol, ft)});
    } else if (cdc->parsed()) {
      require(input.empty() != (side <= 0),
              "compare-dist: give exactly one of --input and --synth-image");
      DenseTensor x = input.empty() ? tensorize_image(synth_image(side)) : read_tensor(input);
      DistributionOptions dopt;
      dopt.cp_rank = cdc->count("--rank") ? rank : 10;
      dopt.tr_ranks = ranks;
      dopt.j1 = cdc->count("--j1") ? j1 : 10000;
      dopt.fit_iters = cdc->count("--iters") ? iters : 5;
      dopt.fit_tol = cdc->count("--tol") ? tol : 1e-4;
      dopt.sketch_seeds = sketch_seeds;
      dopt.seed = seed;
      dopt.run_cp = !tr_only;
      dopt.run_tr = !cp_only;
      DistributionResult res = run_distribution_experiment(x, dopt);
      if (dopt.run_cp) {
        std::printf("cp_kl_es=%.12g\n", res.cp_kl_es);
        std::printf("cp_kl_product=%.12g\n", res.cp_kl_product);
      }
      if (dopt.run_tr) {
        std::printf("tr_kl_es=%.12g\n", res.tr_kl_es);
        std::printf("tr_kl_product=%.12g\n", res.tr_kl_product);
      }
      if (!report.empty()) write_report(report, res.rows);
    } else if (rcc->parsed()) {
      RecoveryOptions ropt;
      ropt.tr = use_tr;
      ropt.dims = dims;
      ropt.rank = rank;
      ropt.ranks = ranks;
      ropt.spike = rcc->count("--spike") ? spike : 0.0;
      ropt.noise_sd = noise;
      ropt.j1 = rcc->count("--j1") ? j1 : 1000;
      ropt.j2 = rcc->count("--j2") ? j2 : 50;
      ropt.baseline_j2 = baseline_j2;
      ropt.iters = rcc->count("--iters") ? iters : 20;
      ropt.tol = rcc->count("--tol") ? tol : 0.0;
      ropt.seeds = seeds;
      ropt.seed = seed;
      ropt.run_es = !baseline_only;
      ropt.run_baseline = !es_only;
      require(!(es_only && baseline_only), "recovery: --es-only and --baseline-only conflict");
      RecoveryResult res = run_recovery_experiment(ropt);
      auto summarise = [](const char* name, const std::vector<double>& errs, double wall) {
        if (errs.empty()) return;
        index_t good = 0, bad = 0;
        for (double e : errs) {
          good += e <= 0.05 ? 1 : 0;
          bad += e > 0.5 ? 1 : 0;
        }
        std::printf("%s_recovered=%lld/%zu\n", name, static_cast<long long>(good), errs.size());
        std::printf("%s_failed=%lld/%zu\n", name, static_cast<long long>(bad), errs.size());
        std::printf("%s_wall_seconds=%.6g\n", name, wall);
      };
      summarise("es", res.es_errors, res.es_wall);
      summarise("baseline", res.baseline_errors, res.baseline_wall);
      if (!report.empty()) write_report(report, res.rows);
    } else if (fec->parsed()) {
      DenseTensor x = read_tensor(input);
      std::vector<int> labels = read_labels(labels_path);
      FeatureOptions fopt;
      fopt.method = method.empty() ? "cp-exact" : method;
      fopt.rank = fec->count("--rank") ? rank : 8;
      fopt.ranks = ranks;
      fopt.j1 = j1;
      fopt.j2 = j2;
      fopt.iters = fec->count("--iters") ? iters : 20;
      fopt.tol = fec->count("--tol") ? tol : 1e-5;
      fopt.folds = folds;
      fopt.seed = seed;
      FeatureResult res = run_feature_extraction(x, labels, fopt);
      std::printf("accuracy=%.6g\n", res.accuracy);
      if (!report.empty()) write_report(report, res.rows);
    } else if (prc->parsed()) {
      DenseTensor batch = read_tensor(input);
      Matrix features;
      if (ends_with(model_path, ".cpm")) {
        CpModel m = read_cp_model(model_path);
        const int mode = mode_arg >= 0 ? static_cast<int>(mode_arg) : m.order() - 1;
        features = cp_project_features(batch, m, mode);
      } else if (ends_with(model_path, ".trm")) {
        TrModel m = read_tr_model(model_path);
        const int mode = mode_arg >= 0 ? static_cast<int>(mode_arg) : m.order() - 1;
        features = tr_project_features(batch, m, mode);
      } else {
        throw config_error("project: --model must end in .cpm or .trm");
      }
      write_tensor(output, matrix_tensor(features));
      std::printf("samples=%lld\n", static_cast<long long>(features.rows()));
      std::printf("feature_dim=%lld\n", static_cast<long long>(features.cols()));
    }
  } catch (const degenerate_error& e) {
    std::fprintf(stderr, "degenerate: %s\n", e.what());
    return 3;
  } catch (const config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
