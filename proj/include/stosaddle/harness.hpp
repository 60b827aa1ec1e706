#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stosaddle/saddlesearch.hpp"

namespace stosaddle {

/// Initial-condition spec: a literal vector or a named preset resolved per
/// landscape (some presets draw from the run's init stream).
struct InitSpec {
  enum class Kind { Literal, MbDefault, ButterflyDefault, LdgNearD1, NnPerturbed };
  Kind kind = Kind::Literal;
  Vec literal;
};

/// Declarative experiment description; `raw` is the config document echoed
/// verbatim into every output directory and hashed into trace headers.
struct ExperimentConfig {
  enum class Mode { SaddleSearch, KnownSpace, DeterministicHisd };

  nlohmann::json raw;
  LandscapeSpec landscape_spec;
  NoiseModel noise;
  HvpMode hvp_mode;
  SaddleSearchConfig search;
  Mode mode = Mode::SaddleSearch;
  InitSpec init;
  std::vector<std::uint64_t> seeds;
  std::string out_dir = "out";
  int workers = 1;
  bool emit_json_traces = false;

  std::string config_sha() const;
};

ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config_file(const std::string& path);

struct RunRecord {
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::MaxIter;
  double final_grad_norm_sq = -1.0;
  std::optional<double> final_dist_sq;
  std::int64_t iterations = 0;
  std::string trace_path;
  std::string error;  // nonempty when the run failed outright
};

/// Per-n mean and (p10, p90) quantiles across seeds, plus the fitted
/// log-log rate of the mean distance (or gradient) curve.
struct AggregateReport {
  std::string config_sha;
  std::vector<std::int64_t> ns;
  std::vector<int> counts;
  std::vector<double> grad_mean, grad_p10, grad_p90;
  std::vector<double> dist_mean, dist_p10, dist_p90;
  double convergence_fraction = 0.0;
};

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double slope_stderr = 0.0;
};

struct ExperimentResult {
  std::vector<RunRecord> records;
  AggregateReport aggregate;
  std::vector<Trace> traces;  // kept in memory for in-process consumers
};

/// One run per seed on independent streams; per-run failures are recorded,
/// never aborting sibling runs. All artifacts land under cfg.out_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Least-squares fit of log(error) against log(n) over [n_lo, n_hi].
RateFit fit_rate(const std::vector<std::int64_t>& ns, const std::vector<double>& values,
                 std::int64_t n_lo, std::int64_t n_hi);

AggregateReport aggregate_traces(const std::vector<Trace>& traces, const std::string& config_sha,
                                 const std::vector<RunRecord>& records);

void emit_aggregate_csv(const AggregateReport& agg, const std::string& path);
void emit_records_json(const std::vector<RunRecord>& records, const std::string& path);

/// Resolve x0 for one run (named presets may draw from the init stream).
Vec resolve_init(const InitSpec& init, const Landscape& l, const LandscapeSpec& spec,
                 RngState& rng);

/// Figure-replication presets; returns the artifact directory and a summary
/// of pass/fail against the desk-scale thresholds.
struct ReplicationResult {
  std::string out_dir;
  nlohmann::json summary;
  bool passed = false;
};

ReplicationResult replicate(const std::string& figure_id, const std::string& scale = "desk",
                            const std::string& out_dir = "");

/// Preset experiment configs used by replicate(); exposed for tests.
ExperimentConfig preset_config(const std::string& name, const std::string& scale = "desk");

}  // namespace stosaddle
