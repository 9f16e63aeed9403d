#pragma once

#include <string>
#include <vector>

#include "sals/tensor.hpp"

namespace sals {

// Binary tensor container (".dt"): bytes "DTEN", u32 version = 1, u32 order,
// order x u64 dimensions, then prod(dims) float64 values in flat
// first-index-fastest order.  All fields little-endian.
void write_tensor(const std::string& path, const DenseTensor& x);
DenseTensor read_tensor(const std::string& path);

// Model containers (artifact-local, same header style as ".dt"):
//   ".cpm"  "CPMD", u32 version, u32 order, u32 rank, order x u64 dims,
//           then each factor column-major.
//   ".trm"  "TRMD", u32 version, u32 order, order x u64 dims,
//           order x u64 ranks (ranks[n] = R_n), then each core flat.
void write_cp_model(const std::string& path, const CpModel& m);
CpModel read_cp_model(const std::string& path);
void write_tr_model(const std::string& path, const TrModel& m);
TrModel read_tr_model(const std::string& path);

// Label file: one integer per line.
std::vector<int> read_labels(const std::string& path);
void write_labels(const std::string& path, const std::vector<int>& labels);

// One row of an experiment report.  Serialized as CSV with a fixed column
// order; error_trace is semicolon-joined, floats use max round-trip precision.
struct ReportRow {
  std::string method;   // e.g. "cp-exact", "cp-es", "cp-arls-lev", "tr-sampled"
  std::string kind;     // "cp" or "tr"
  std::uint64_t seed = 0;
  index_t j1 = 0;
  index_t j2 = 0;
  int iters = 0;
  double tol = 0.0;
  double wall_seconds = 0.0;
  double final_rel_error = 0.0;
  std::string extra_name;   // experiment-specific metric, e.g. "kl" or "accuracy"
  double extra_value = 0.0;
  index_t clamp_events = 0;
  double norm_constant = 0.0;
  std::vector<double> error_trace;
};

void write_report(const std::string& path, const std::vector<ReportRow>& rows);
std::vector<ReportRow> read_report(const std::string& path);

}  // namespace sals
