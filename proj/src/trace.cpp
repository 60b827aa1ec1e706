#include "stosaddle/trace.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace stosaddle {

std::string format_double(double value) {
  char buf[40];
  // Shortest representation that round-trips: try increasing precision.
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, value);
    if (std::strtod(buf, nullptr) == value) return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

namespace {

std::string opt_field(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

}  // namespace

void emit_trace_csv(const Trace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_trace_csv: cannot open " + path);
  out << "# seed=" << trace.seed << "\n";
  out << "# config_sha=" << trace.config_sha << "\n";
  out << "# landscape=" << trace.landscape << "\n";
  out << "n,alpha,grad_norm_sq,dist_sq,energy";
  for (int i = 1; i <= trace.k; ++i) out << ",q" << i;
  out << ",eig_iters,wall_ms\n";
  for (const auto& r : trace.records) {
    out << r.n << ',' << format_double(r.alpha) << ',' << opt_field(r.grad_norm_sq) << ','
        << opt_field(r.dist_sq) << ',' << opt_field(r.energy);
    for (int i = 0; i < trace.k; ++i) {
      out << ',';
      if (i < static_cast<int>(r.rayleigh.size())) out << format_double(r.rayleigh[i]);
    }
    out << ',';
    if (r.eig_iters) out << *r.eig_iters;
    out << ',' << opt_field(r.wall_ms) << "\n";
  }
}

Trace parse_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_trace_csv: cannot open " + path);
  Trace trace;
  std::string line;
  int k = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2);
      const std::string val = line.substr(eq + 1);
      if (key == "seed") trace.seed = std::stoull(val);
      else if (key == "config_sha") trace.config_sha = val;
      else if (key == "landscape") trace.landscape = val;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    if (!header_seen) {
      for (const auto& c : cells)
        if (!c.empty() && c[0] == 'q') ++k;
      trace.k = k;
      header_seen = true;
      continue;
    }
    if (cells.size() != static_cast<std::size_t>(7 + k))
      throw std::runtime_error("parse_trace_csv: malformed row in " + path);
    TraceRecord r;
    r.n = std::stoll(cells[0]);
    r.alpha = std::stod(cells[1]);
    auto opt = [](const std::string& s) -> std::optional<double> {
      if (s.empty()) return std::nullopt;
      return std::stod(s);
    };
    r.grad_norm_sq = opt(cells[2]);
    r.dist_sq = opt(cells[3]);
    r.energy = opt(cells[4]);
    for (int i = 0; i < k; ++i)
      if (!cells[5 + i].empty()) r.rayleigh.push_back(std::stod(cells[5 + i]));
    if (!cells[5 + k].empty()) r.eig_iters = std::stoll(cells[5 + k]);
    if (!cells[6 + k].empty()) r.wall_ms = std::stod(cells[6 + k]);
    trace.records.push_back(std::move(r));
  }
  return trace;
}

void emit_trace_json(const Trace& trace, const std::string& path) {
  nlohmann::json doc;
  doc["seed"] = trace.seed;
  doc["config_sha"] = trace.config_sha;
  doc["landscape"] = trace.landscape;
  doc["k"] = trace.k;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : trace.records) {
    nlohmann::json row;
    row["n"] = r.n;
    row["alpha"] = r.alpha;
    if (r.grad_norm_sq) row["grad_norm_sq"] = *r.grad_norm_sq;
    if (r.dist_sq) row["dist_sq"] = *r.dist_sq;
    if (r.energy) row["energy"] = *r.energy;
    if (!r.rayleigh.empty()) row["q"] = r.rayleigh;
    if (r.eig_iters) row["eig_iters"] = *r.eig_iters;
    if (r.wall_ms) row["wall_ms"] = *r.wall_ms;
    rows.push_back(std::move(row));
  }
  doc["records"] = std::move(rows);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_trace_json: cannot open " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace stosaddle
