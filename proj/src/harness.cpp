#include "stosaddle/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

namespace stosaddle {

namespace {

Vec json_to_vec(const nlohmann::json& arr) {
  Vec v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  return v;
}

Mat json_to_mat(const nlohmann::json& rows) {
  if (rows.empty()) return Mat(0, 0);
  Mat m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size())
      throw std::invalid_argument("config: ragged matrix literal");
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
  }
  return m;
}

StepSchedule parse_schedule(const nlohmann::json& doc) {
  const std::string kind = doc.at("kind").get<std::string>();
  if (kind == "power")
    return StepSchedule::power(doc.at("gamma").get<double>(), doc.at("m").get<double>(),
                               doc.value("p", 1.0), doc.value("n0", std::int64_t{0}));
  if (kind == "constant")
    return StepSchedule::constant(doc.at("alpha0").get<double>(), doc.value("n0", std::int64_t{0}));
  throw std::invalid_argument("config: unknown schedule kind: " + kind);
}

LandscapeSpec parse_landscape(const nlohmann::json& doc) {
  const std::string kind = doc.at("kind").get<std::string>();
  if (kind == "mb") {
    MbParams p;
    auto fill = [&doc](const char* key, std::array<double, 4>& dst) {
      if (doc.contains(key))
        for (int i = 0; i < 4; ++i) dst[static_cast<std::size_t>(i)] = doc[key][i].get<double>();
    };
    fill("A", p.A);
    fill("a", p.a);
    fill("b", p.b);
    fill("c", p.c);
    fill("xbar", p.xbar);
    fill("ybar", p.ybar);
    return p;
  }
  if (kind == "butterfly") return ButterflySpec{};
  if (kind == "quadratic") {
    QuadraticSpec q;
    q.diag = json_to_vec(doc.at("diag"));
    return q;
  }
  if (kind == "linear_nn") {
    const int depth = doc.at("depth").get<int>();
    std::vector<int> dims = doc.at("dims").get<std::vector<int>>();
    std::vector<int> modes = doc.value("modes", std::vector<int>{});
    if (doc.contains("X")) {
      LinearNnSpec spec;
      spec.depth = depth;
      spec.dims = std::move(dims);
      spec.modes = std::move(modes);
      spec.X = json_to_mat(doc.at("X"));
      spec.Y = json_to_mat(doc.at("Y"));
      return spec;
    }
    return make_linear_nn_spec(depth, dims, doc.at("n_samples").get<int>(),
                               doc.value("data_seed", std::uint64_t{1}), std::move(modes));
  }
  if (kind == "ldg") {
    LdgSpec spec;
    spec.grid_n = doc.value("grid_n", 32);
    spec.lambda2 = doc.value("lambda2", 15.0);
    spec.B = doc.value("B", 0.64e4);
    spec.C = doc.value("C", 0.35e4);
    if (doc.contains("boundary_csv")) spec.boundary_csv = doc["boundary_csv"].get<std::string>();
    return spec;
  }
  if (kind == "lagrangian") {
    ConstrainedLagrangianSpec spec;
    spec.P = json_to_mat(doc.at("P"));
    spec.A = json_to_mat(doc.at("A"));
    spec.b = json_to_vec(doc.at("b"));
    spec.eta = doc.value("eta", 0.0);
    return spec;
  }
  throw std::invalid_argument("config: unknown landscape kind: " + kind);
}

NoiseModel parse_noise(const nlohmann::json& doc) {
  const std::string kind = doc.at("kind").get<std::string>();
  if (kind == "exact") return NoiseModel::exact();
  if (kind == "gaussian_additive") return NoiseModel::gaussian(doc.at("sigma").get<double>());
  if (kind == "minibatch") return NoiseModel::minibatch(doc.at("batch_size").get<int>());
  if (kind == "coordinate_mask")
    return NoiseModel::coordinate_mask(doc.at("keep_fraction").get<double>());
  throw std::invalid_argument("config: unknown noise kind: " + kind);
}

HvpMode parse_hvp_mode(const nlohmann::json& doc) {
  const std::string kind = doc.at("kind").get<std::string>();
  if (kind == "analytic_noisy") return HvpMode::analytic_noisy();
  if (kind == "minibatch") return HvpMode::minibatch();
  if (kind == "dimer") return HvpMode::dimer(doc.value("length", 0.0));
  throw std::invalid_argument("config: unknown hvp mode: " + kind);
}

InitSpec parse_init(const nlohmann::json& doc) {
  InitSpec init;
  if (doc.is_array()) {
    init.kind = InitSpec::Kind::Literal;
    init.literal = json_to_vec(doc);
    return init;
  }
  const std::string name = doc.get<std::string>();
  if (name == "mb-default") init.kind = InitSpec::Kind::MbDefault;
  else if (name == "butterfly-default") init.kind = InitSpec::Kind::ButterflyDefault;
  else if (name == "ldg-near-d1") init.kind = InitSpec::Kind::LdgNearD1;
  else if (name == "nn-perturbed") init.kind = InitSpec::Kind::NnPerturbed;
  else throw std::invalid_argument("config: unknown x0 preset: " + name);
  return init;
}

std::vector<std::uint64_t> parse_seeds(const nlohmann::json& doc) {
  std::vector<std::uint64_t> seeds;
  if (doc.is_array()) {
    for (const auto& s : doc) seeds.push_back(s.get<std::uint64_t>());
  } else if (doc.is_number_unsigned() || doc.is_number_integer()) {
    const auto count = doc.get<std::int64_t>();
    for (std::int64_t s = 0; s < count; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
  } else {
    const std::string range = doc.get<std::string>();
    const auto dots = range.find("..");
    if (dots == std::string::npos) throw std::invalid_argument("config: bad seeds range: " + range);
    const auto lo = std::stoull(range.substr(0, dots));
    const auto hi = std::stoull(range.substr(dots + 2));
    for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
  }
  if (seeds.empty()) throw std::invalid_argument("config: empty seed set");
  return seeds;
}

}  // namespace

std::string ExperimentConfig::config_sha() const { return fnv1a_hex(raw.dump()); }

ExperimentConfig parse_config(const nlohmann::json& doc) {
  ExperimentConfig cfg;
  cfg.raw = doc;
  cfg.landscape_spec = parse_landscape(doc.at("landscape"));
  cfg.noise = doc.contains("noise") ? parse_noise(doc["noise"]) : NoiseModel::exact();
  cfg.hvp_mode = doc.contains("hvp_mode") ? parse_hvp_mode(doc["hvp_mode"])
                                          : HvpMode::analytic_noisy();

  const std::string mode = doc.value("mode", std::string("saddle_search"));
  if (mode == "saddle_search") cfg.mode = ExperimentConfig::Mode::SaddleSearch;
  else if (mode == "known_space") cfg.mode = ExperimentConfig::Mode::KnownSpace;
  else if (mode == "deterministic_hisd") cfg.mode = ExperimentConfig::Mode::DeterministicHisd;
  else throw std::invalid_argument("config: unknown mode: " + mode);

  SaddleSearchConfig& s = cfg.search;
  s.k = doc.value("k", 1);
  if (doc.contains("x_schedule")) s.x_schedule = parse_schedule(doc["x_schedule"]);
  s.eps_x = doc.value("eps_x", 1e-10);
  s.lipschitz = doc.value("L", -1.0);  // negative resolves to the probe estimate
  s.max_outer = doc.value("max_outer", std::int64_t{100000});
  s.grad_check_period = doc.value("grad_check_period", std::int64_t{100});
  s.grad_check_samples = doc.value("grad_check_samples", 32);
  s.refresh_period = doc.value("refresh_period", std::int64_t{1});
  s.refresh_at_start = doc.value("refresh_at_start", true);
  s.abort_on_restart_exhaustion = doc.value("abort_on_restart_exhaustion", false);
  s.dense_trace = doc.value("dense_trace", false);
  s.collect_timing = doc.value("collect_timing", false);

  if (doc.contains("eigen")) {
    const auto& e = doc["eigen"];
    s.eigen_cfg.eps_v = e.value("eps_v", 1e-8);
    if (e.contains("schedule")) s.eigen_cfg.schedule = parse_schedule(e["schedule"]);
    s.eigen_cfg.max_inner = e.value("max_inner", std::int64_t{10000});
    s.eigen_cfg.max_restarts = e.value("max_restarts", -1);
    s.eigen_cfg.residual_check_period = e.value("residual_check_period", 25);
    s.eigen_cfg.residual_samples = e.value("residual_samples", 32);
  }

  cfg.init = parse_init(doc.at("x0"));
  cfg.seeds = doc.contains("seeds") ? parse_seeds(doc["seeds"]) : std::vector<std::uint64_t>{0};
  cfg.out_dir = doc.value("out", std::string("out"));
  cfg.workers = doc.value("workers", 1);
  cfg.emit_json_traces = doc.value("emit_json_traces", false);
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  nlohmann::json doc;
  in >> doc;
  return parse_config(doc);
}

Vec resolve_init(const InitSpec& init, const Landscape& l, const LandscapeSpec& spec,
                 RngState& rng) {
  switch (init.kind) {
    case InitSpec::Kind::Literal:
      if (init.literal.size() != l.dimension)
        throw std::invalid_argument("x0 literal has the wrong dimension");
      return init.literal;
    case InitSpec::Kind::MbDefault: {
      Vec x(2);
      x << -0.4, 0.6;
      return x;
    }
    case InitSpec::Kind::ButterflyDefault: {
      // The paper shows this start only graphically; the value is read off
      // the figure and is approximate.
      Vec x(2);
      x << 1.3, -0.1;
      return x;
    }
    case InitSpec::Kind::LdgNearD1:
      return ldg_diagonal_state(std::get<LdgSpec>(spec), +1);
    case InitSpec::Kind::NnPerturbed: {
      const auto& nn = std::get<LinearNnSpec>(spec);
      const Vec wstar = nn_reference_saddle(nn);
      Vec x = wstar;
      // Per-layer perturbation scale ||W_h*||_F / (sqrt(d_h - 1) d_h).
      int offset = 0;
      for (int h = 0; h < nn.depth; ++h) {
        const int rows = nn.dims[h + 1];
        const int cols = nn.dims[h];
        const int count = rows * cols;
        const double norm = wstar.segment(offset, count).norm();
        const double sigma_h =
            norm / (std::sqrt(std::max(1.0, static_cast<double>(rows - 1))) * rows);
        for (int i = 0; i < count; ++i) x[offset + i] += sigma_h * rng.normal();
        offset += count;
      }
      return x;
    }
  }
  throw std::logic_error("resolve_init: unhandled kind");
}

namespace {

RunRecord make_record(std::uint64_t seed, const RunResult& result, const Landscape& l,
                      const std::string& trace_path) {
  RunRecord rec;
  rec.seed = seed;
  rec.status = result.state.status;
  rec.final_grad_norm_sq = result.state.last_grad_norm_sq;
  if (l.known_saddle) rec.final_dist_sq = (result.state.x - *l.known_saddle).squaredNorm();
  rec.iterations = result.iterations;
  rec.trace_path = trace_path;
  return rec;
}

double quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  if (values.size() == 1) return values[0];
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double w = h - static_cast<double>(lo);
  return values[lo] * (1.0 - w) + values[hi] * w;
}

}  // namespace

AggregateReport aggregate_traces(const std::vector<Trace>& traces, const std::string& config_sha,
                                 const std::vector<RunRecord>& records) {
  AggregateReport agg;
  agg.config_sha = config_sha;
  std::vector<std::int64_t> ns;
  for (const auto& t : traces)
    for (const auto& r : t.records) ns.push_back(r.n);
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());

  for (const std::int64_t n : ns) {
    std::vector<double> grads, dists;
    for (const auto& t : traces)
      for (const auto& r : t.records) {
        if (r.n != n) continue;
        if (r.grad_norm_sq) grads.push_back(*r.grad_norm_sq);
        if (r.dist_sq) dists.push_back(*r.dist_sq);
      }
    if (grads.empty() && dists.empty()) continue;
    agg.ns.push_back(n);
    agg.counts.push_back(static_cast<int>(std::max(grads.size(), dists.size())));
    auto push = [](std::vector<double>& mean, std::vector<double>& p10, std::vector<double>& p90,
                   const std::vector<double>& vals) {
      if (vals.empty()) {
        mean.push_back(std::numeric_limits<double>::quiet_NaN());
        p10.push_back(std::numeric_limits<double>::quiet_NaN());
        p90.push_back(std::numeric_limits<double>::quiet_NaN());
        return;
      }
      double acc = 0.0;
      for (double v : vals) acc += v;
      mean.push_back(acc / static_cast<double>(vals.size()));
      p10.push_back(quantile(vals, 0.10));
      p90.push_back(quantile(vals, 0.90));
    };
    push(agg.grad_mean, agg.grad_p10, agg.grad_p90, grads);
    push(agg.dist_mean, agg.dist_p10, agg.dist_p90, dists);
  }

  int converged = 0;
  for (const auto& r : records)
    if (r.status == RunStatus::Converged) ++converged;
  agg.convergence_fraction =
      records.empty() ? 0.0 : static_cast<double>(converged) / static_cast<double>(records.size());
  return agg;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const Landscape l = build_landscape(cfg.landscape_spec);
  if (cfg.search.dense_trace && (l.dimension > 100 || cfg.search.max_outer > 100000))
    throw std::invalid_argument("dense_trace is limited to d <= 100 and max_outer <= 1e5");
  const OraclePair oracles = build_oracles(l, cfg.noise, cfg.hvp_mode);

  std::filesystem::create_directories(cfg.out_dir);
  {
    std::ofstream echo(cfg.out_dir + "/config.json", std::ios::binary);
    echo << cfg.raw.dump(2) << "\n";
  }
  const std::string sha = cfg.config_sha();

  KnownSpaceSpec known;
  if (cfg.mode == ExperimentConfig::Mode::KnownSpace) {
    if (cfg.raw.contains("known_space") && cfg.raw["known_space"].contains("basis")) {
      known.basis = json_to_mat(cfg.raw["known_space"]["basis"]);
    } else if (std::holds_alternative<ConstrainedLagrangianSpec>(cfg.landscape_spec)) {
      const auto& lag = std::get<ConstrainedLagrangianSpec>(cfg.landscape_spec);
      known = KnownSpaceSpec::lagrangian_multipliers(static_cast<int>(lag.P.rows()),
                                                     static_cast<int>(lag.A.rows()));
    } else {
      throw std::invalid_argument("known_space mode needs a basis or a lagrangian landscape");
    }
  }

  const std::size_t n_runs = cfg.seeds.size();
  ExperimentResult result;
  result.records.resize(n_runs);
  result.traces.resize(n_runs);

  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t i = next.fetch_add(1); i < n_runs; i = next.fetch_add(1)) {
      const std::uint64_t seed = cfg.seeds[i];
      const std::string trace_path =
          cfg.out_dir + "/trace_seed" + std::to_string(seed) + ".csv";
      try {
        StreamFactory streams{seed, 0};
        RngState init_rng = streams.make(phase::init);
        const Vec x0 = resolve_init(cfg.init, l, cfg.landscape_spec, init_rng);

        SaddleSearchConfig search = cfg.search;
        if (search.lipschitz <= 0.0) {
          if (l.lipschitz_L) {
            search.lipschitz = *l.lipschitz_L;
          } else {
            RngState probe = streams.make(phase::data);
            search.lipschitz = estimate_lipschitz(l, x0, probe);
          }
        }
        search.eigen_cfg.lipschitz = search.lipschitz;

        RunResult run;
        switch (cfg.mode) {
          case ExperimentConfig::Mode::SaddleSearch:
            run = run_saddle_search(l, oracles, search, x0, streams);
            break;
          case ExperimentConfig::Mode::KnownSpace:
            run = run_known_space(l, known, oracles, search, x0, streams);
            break;
          case ExperimentConfig::Mode::DeterministicHisd: {
            const Mat H = dense_hessian(l, x0);
            const UnstableFrame frame0 = exact_smallest_eigvecs(H, search.k);
            run = run_deterministic_hisd(l, search, x0, frame0);
            run.trace.seed = seed;
            break;
          }
        }
        run.trace.config_sha = sha;
        emit_trace_csv(run.trace, trace_path);
        if (cfg.emit_json_traces)
          emit_trace_json(run.trace, cfg.out_dir + "/trace_seed" + std::to_string(seed) + ".json");
        result.records[i] = make_record(seed, run, l, trace_path);
        result.traces[i] = std::move(run.trace);
      } catch (const std::exception& err) {
        RunRecord rec;
        rec.seed = seed;
        rec.status = RunStatus::Diverged;
        rec.trace_path = trace_path;
        rec.error = err.what();
        result.records[i] = rec;
        result.traces[i].seed = seed;
        result.traces[i].config_sha = sha;
      }
    }
  };

  const int workers = std::max(1, std::min<int>(cfg.workers, static_cast<int>(n_runs)));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  result.aggregate = aggregate_traces(result.traces, sha, result.records);
  emit_aggregate_csv(result.aggregate, cfg.out_dir + "/aggregate.csv");
  emit_records_json(result.records, cfg.out_dir + "/records.json");
  return result;
}

RateFit fit_rate(const std::vector<std::int64_t>& ns, const std::vector<double>& values,
                 std::int64_t n_lo, std::int64_t n_hi) {
  if (ns.size() != values.size()) throw std::invalid_argument("fit_rate: length mismatch");
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (ns[i] < n_lo || ns[i] > n_hi || ns[i] <= 0) continue;
    if (!(values[i] > 0.0)) throw std::invalid_argument("fit_rate: nonpositive value in window");
    xs.push_back(std::log(static_cast<double>(ns[i])));
    ys.push_back(std::log(values[i]));
  }
  if (xs.size() < 10) throw std::invalid_argument("fit_rate: fewer than 10 points in window");
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double denom = n * sxx - sx * sx;
  RateFit fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double ymean = sy / n;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double pred = fit.intercept + fit.slope * xs[i];
    ss_res += (ys[i] - pred) * (ys[i] - pred);
    ss_tot += (ys[i] - ymean) * (ys[i] - ymean);
  }
  fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  if (xs.size() > 2) {
    const double var = ss_res / (n - 2.0);
    fit.slope_stderr = std::sqrt(var * n / denom);
  }
  return fit;
}

void emit_aggregate_csv(const AggregateReport& agg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_aggregate_csv: cannot open " + path);
  out << "# config_sha=" << agg.config_sha << "\n";
  out << "n,count,grad_norm_sq_mean,grad_norm_sq_p10,grad_norm_sq_p90,"
         "dist_sq_mean,dist_sq_p10,dist_sq_p90\n";
  auto field = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
  for (std::size_t i = 0; i < agg.ns.size(); ++i) {
    out << agg.ns[i] << ',' << agg.counts[i] << ',' << field(agg.grad_mean[i]) << ','
        << field(agg.grad_p10[i]) << ',' << field(agg.grad_p90[i]) << ','
        << field(agg.dist_mean[i]) << ',' << field(agg.dist_p10[i]) << ','
        << field(agg.dist_p90[i]) << "\n";
  }
}

void emit_records_json(const std::vector<RunRecord>& records, const std::string& path) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json row;
    row["seed"] = r.seed;
    row["status"] = to_string(r.status);
    row["final_grad_norm_sq"] = r.final_grad_norm_sq;
    if (r.final_dist_sq) row["final_dist_sq"] = *r.final_dist_sq;
    row["iterations"] = r.iterations;
    row["trace"] = r.trace_path;
    if (!r.error.empty()) row["error"] = r.error;
    doc.push_back(std::move(row));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_records_json: cannot open " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace stosaddle
