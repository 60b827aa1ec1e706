#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stosaddle/rng.hpp"

namespace stosaddle {

/// One diagnostic row of a run. Absent optionals serialize as empty CSV
/// fields.
struct TraceRecord {
  std::int64_t n = 0;
  double alpha = 0.0;
  std::optional<double> grad_norm_sq;
  std::optional<double> dist_sq;
  std::optional<double> energy;
  std::vector<double> rayleigh;  // q_1..q_k; empty when not refreshed yet
  std::optional<std::int64_t> eig_iters;
  std::optional<double> wall_ms;
};

/// Per-run diagnostics. The header (seed, config hash, landscape) is enough
/// to replay the run bit-exactly. Traces are write-once, then immutable.
struct Trace {
  std::uint64_t seed = 0;
  std::string config_sha;
  std::string landscape;
  int k = 0;
  std::vector<TraceRecord> records;

  /// Dense mode: every iterate and its step size, for trajectory
  /// interpolation. Empty when the run was recorded sparsely.
  std::vector<Vec> iterates;
  std::vector<double> alphas;
};

/// CSV schema: two `# key=value` header lines plus `# landscape=...`, then
/// columns n,alpha,grad_norm_sq,dist_sq,energy,q1..qk,eig_iters,wall_ms.
void emit_trace_csv(const Trace& trace, const std::string& path);
Trace parse_trace_csv(const std::string& path);

/// JSON mirror with identical fields.
void emit_trace_json(const Trace& trace, const std::string& path);

/// Deterministic shortest-round-trip double formatting shared by every
/// writer (%.17g trimmed), so identical runs yield identical bytes.
std::string format_double(double value);

/// 64-bit FNV-1a over a canonical string, hex-encoded; used as the config
/// hash recorded in trace headers.
std::string fnv1a_hex(const std::string& text);

}  // namespace stosaddle
