#include "sals/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sals {

namespace {

// The on-disk formats are little-endian; this code assumes a little-endian
// host (x86/ARM), which is all this artifact targets.
void put_bytes(std::ofstream& f, const void* p, std::size_t n) {
  f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void get_bytes(std::ifstream& f, void* p, std::size_t n, const std::string& path) {
  f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  require(static_cast<std::size_t>(f.gcount()) == n, "truncated file: " + path);
}

void put_u32(std::ofstream& f, std::uint32_t v) { put_bytes(f, &v, 4); }
void put_u64(std::ofstream& f, std::uint64_t v) { put_bytes(f, &v, 8); }

std::uint32_t get_u32(std::ifstream& f, const std::string& path) {
  std::uint32_t v = 0;
  get_bytes(f, &v, 4, path);
  return v;
}

std::uint64_t get_u64(std::ifstream& f, const std::string& path) {
  std::uint64_t v = 0;
  get_bytes(f, &v, 8, path);
  return v;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), "cannot open for writing: " + path);
  return f;
}

std::ifstream open_in(const std::string& path, const char magic[4]) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "cannot open: " + path);
  char m[4];
  get_bytes(f, m, 4, path);
  require(std::memcmp(m, magic, 4) == 0, "bad magic in " + path);
  std::uint32_t version = get_u32(f, path);
  require(version == 1, "unsupported version in " + path);
  return f;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_tensor(const std::string& path, const DenseTensor& x) {
  auto f = open_out(path);
  put_bytes(f, "DTEN", 4);
  put_u32(f, 1);
  put_u32(f, static_cast<std::uint32_t>(x.order()));
  for (index_t d : x.dims()) put_u64(f, static_cast<std::uint64_t>(d));
  put_bytes(f, x.data(), sizeof(double) * static_cast<std::size_t>(x.size()));
  require(f.good(), "write failed: " + path);
}

DenseTensor read_tensor(const std::string& path) {
  auto f = open_in(path, "DTEN");
  std::uint32_t order = get_u32(f, path);
  require(order >= 1 && order <= 64, "implausible tensor order in " + path);
  std::vector<index_t> dims(order);
  for (auto& d : dims) d = static_cast<index_t>(get_u64(f, path));
  DenseTensor x(dims);
  get_bytes(f, x.data(), sizeof(double) * static_cast<std::size_t>(x.size()), path);
  return x;
}

void write_cp_model(const std::string& path, const CpModel& m) {
  auto f = open_out(path);
  put_bytes(f, "CPMD", 4);
  put_u32(f, 1);
  put_u32(f, static_cast<std::uint32_t>(m.order()));
  put_u32(f, static_cast<std::uint32_t>(m.rank()));
  for (index_t d : m.dims()) put_u64(f, static_cast<std::uint64_t>(d));
  for (const Matrix& a : m.factors)
    put_bytes(f, a.data(), sizeof(double) * static_cast<std::size_t>(a.size()));
  require(f.good(), "write failed: " + path);
}

CpModel read_cp_model(const std::string& path) {
  auto f = open_in(path, "CPMD");
  std::uint32_t order = get_u32(f, path);
  std::uint32_t rank = get_u32(f, path);
  require(order >= 1 && order <= 64, "implausible model order in " + path);
  std::vector<index_t> dims(order);
  for (auto& d : dims) d = static_cast<index_t>(get_u64(f, path));
  CpModel m;
  m.factors.resize(order);
  for (std::uint32_t n = 0; n < order; ++n) {
    m.factors[n].resize(dims[n], rank);
    get_bytes(f, m.factors[n].data(),
              sizeof(double) * static_cast<std::size_t>(m.factors[n].size()), path);
  }
  return m;
}

void write_tr_model(const std::string& path, const TrModel& m) {
  auto f = open_out(path);
  put_bytes(f, "TRMD", 4);
  put_u32(f, 1);
  put_u32(f, static_cast<std::uint32_t>(m.order()));
  for (index_t d : m.dims()) put_u64(f, static_cast<std::uint64_t>(d));
  for (index_t r : m.ranks()) put_u64(f, static_cast<std::uint64_t>(r));
  for (const DenseTensor& c : m.cores)
    put_bytes(f, c.data(), sizeof(double) * static_cast<std::size_t>(c.size()));
  require(f.good(), "write failed: " + path);
}

TrModel read_tr_model(const std::string& path) {
  auto f = open_in(path, "TRMD");
  std::uint32_t order = get_u32(f, path);
  require(order >= 2 && order <= 64, "implausible model order in " + path);
  std::vector<index_t> dims(order), ranks(order);
  for (auto& d : dims) d = static_cast<index_t>(get_u64(f, path));
  for (auto& r : ranks) r = static_cast<index_t>(get_u64(f, path));
  TrModel m;
  for (std::uint32_t n = 0; n < order; ++n) {
    index_t rl = ranks[(n + order - 1) % order];
    m.cores.emplace_back(std::vector<index_t>{rl, dims[n], ranks[n]});
    get_bytes(f, m.cores[n].data(),
              sizeof(double) * static_cast<std::size_t>(m.cores[n].size()), path);
  }
  return m;
}

std::vector<int> read_labels(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot open: " + path);
  std::vector<int> labels;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    try {
      labels.push_back(std::stoi(line));
    } catch (const std::exception&) {
      throw config_error("bad label line in " + path + ": '" + line + "'");
    }
  }
  return labels;
}

void write_labels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream f(path);
  require(f.good(), "cannot open for writing: " + path);
  for (int v : labels) f << v << "\n";
}

static const char* kReportHeader =
    "method,kind,seed,j1,j2,iters,tol,wall_seconds,final_rel_error,"
    "extra_name,extra_value,clamp_events,norm_constant,error_trace";

void write_report(const std::string& path, const std::vector<ReportRow>& rows) {
  std::ofstream f(path);
  require(f.good(), "cannot open for writing: " + path);
  f << kReportHeader << "\n";
  for (const auto& r : rows) {
    f << r.method << ',' << r.kind << ',' << r.seed << ',' << r.j1 << ',' << r.j2 << ','
      << r.iters << ',' << fmt_double(r.tol) << ',' << fmt_double(r.wall_seconds) << ','
      << fmt_double(r.final_rel_error) << ',' << r.extra_name << ','
      << fmt_double(r.extra_value) << ',' << r.clamp_events << ','
      << fmt_double(r.norm_constant) << ',';
    for (std::size_t i = 0; i < r.error_trace.size(); ++i) {
      if (i) f << ';';
      f << fmt_double(r.error_trace[i]);
    }
    f << "\n";
  }
  require(f.good(), "write failed: " + path);
}

std::vector<ReportRow> read_report(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot open: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(f, line)), "empty report: " + path);
  require(line == kReportHeader, "unexpected report header in " + path);
  std::vector<ReportRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.push_back("");
    require(cells.size() == 14, "bad report row in " + path);
    ReportRow r;
    r.method = cells[0];
    r.kind = cells[1];
    r.seed = std::stoull(cells[2]);
    r.j1 = std::stoll(cells[3]);
    r.j2 = std::stoll(cells[4]);
    r.iters = std::stoi(cells[5]);
    r.tol = std::stod(cells[6]);
    r.wall_seconds = std::stod(cells[7]);
    r.final_rel_error = std::stod(cells[8]);
    r.extra_name = cells[9];
    r.extra_value = std::stod(cells[10]);
    r.clamp_events = std::stoll(cells[11]);
    r.norm_constant = std::stod(cells[12]);
    if (!cells[13].empty()) {
      std::stringstream ts(cells[13]);
      std::string tok;
      while (std::getline(ts, tok, ';')) r.error_trace.push_back(std::stod(tok));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace sals
