#include "stosaddle/saddlesearch.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace stosaddle {

std::string to_string(RunStatus status) {
  switch (status) {
    case RunStatus::Converged: return "converged";
    case RunStatus::MaxIter: return "max_iter";
    case RunStatus::Diverged: return "diverged";
    case RunStatus::RestartExhausted: return "restart_exhausted";
  }
  return "unknown";
}

void KnownSpaceSpec::validate() const {
  const Mat gram = basis.transpose() * basis;
  if ((gram - Mat::Identity(basis.cols(), basis.cols())).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("KnownSpaceSpec: basis is not orthonormal");
}

KnownSpaceSpec KnownSpaceSpec::lagrangian_multipliers(int dim_x, int dim_nu) {
  KnownSpaceSpec spec;
  spec.basis = Mat::Zero(dim_x + dim_nu, dim_nu);
  for (int i = 0; i < dim_nu; ++i) spec.basis(dim_x + i, i) = 1.0;
  return spec;
}

Vec reflect(const Vec& g, const UnstableFrame& frame) {
  if (frame.k() == 0) return g;
  if (frame.dim() != g.size()) throw std::invalid_argument("reflect: dimension mismatch");
  return g - 2.0 * (frame.vectors * (frame.vectors.transpose() * g));
}

SearchRngs SearchRngs::from(const StreamFactory& streams) {
  SearchRngs rngs;
  rngs.x_update = streams.make(phase::x_update);
  rngs.eigensearch = streams.make(phase::eigensearch);
  rngs.init = streams.make(phase::init);
  rngs.guard = streams.make(phase::guard);
  return rngs;
}

namespace {

HvpOracle make_hvp_oracle(const OraclePair& oracles, const Vec& x, int residual_samples,
                          RngState residual_rng) {
  HvpOracle oracle;
  oracle.stochastic = [&oracles, &x](const Vec& v, RngState& rng) {
    return oracles.hvp(x, v, rng);
  };
  if (oracles.exact_hvp) {
    oracle.residual = [&oracles, &x](const Vec& v) { return oracles.exact_hvp(x, v); };
  } else {
    // Noiseless product unavailable: average fresh samples.
    auto guard_rng = std::make_shared<RngState>(residual_rng);
    oracle.residual = [&oracles, &x, residual_samples, guard_rng](const Vec& v) {
      Vec acc = Vec::Zero(v.size());
      for (int i = 0; i < residual_samples; ++i) acc += oracles.hvp(x, v, *guard_rng);
      return Vec(acc / residual_samples);
    };
  }
  return oracle;
}

void refresh_frame(SearchState& state, const Landscape& l, const OraclePair& oracles,
                   const SaddleSearchConfig& cfg, RngState& rng, bool* restart_exhausted) {
  const HvpOracle oracle =
      make_hvp_oracle(oracles, state.x, cfg.eigen_cfg.residual_samples, rng.fork());
  const UnstableFrame* warm = state.frame.k() == cfg.k ? &state.frame : nullptr;
  EigenSearchReport report =
      search_unstable_directions(oracle, l.dimension, cfg.k, cfg.eigen_cfg, warm, rng);
  state.frame = std::move(report.frame);
  state.last_residuals = std::move(report.residuals);
  state.eig_inner_since_record += report.total_inner();
  if (restart_exhausted) *restart_exhausted = report.restart_exhausted;
}

struct GuardResult {
  double grad_norm_sq;
  Vec grad;
};

GuardResult evaluate_guard(const OraclePair& oracles, const SaddleSearchConfig& cfg, const Vec& x,
                           RngState& guard_rng) {
  GuardResult res;
  if (oracles.exact_grad) {
    res.grad = oracles.exact_grad(x);
  } else {
    res.grad = averaged_gradient(oracles, x, cfg.grad_check_samples, guard_rng);
  }
  res.grad_norm_sq = res.grad.squaredNorm();
  return res;
}

struct RunContext {
  const Landscape& l;
  const OraclePair& oracles;
  const SaddleSearchConfig& cfg;
  Trace trace;
  std::chrono::steady_clock::time_point t0;

  RunContext(const Landscape& l_, const OraclePair& o_, const SaddleSearchConfig& c_,
             std::uint64_t seed)
      : l(l_), oracles(o_), cfg(c_) {
    trace.seed = seed;
    trace.landscape = l.name;
    trace.k = c_.k;
    t0 = std::chrono::steady_clock::now();
  }

  void record(SearchState& state, double grad_norm_sq) {
    TraceRecord r;
    r.n = state.n;
    r.alpha = cfg.x_schedule.at(state.n);
    if (grad_norm_sq >= 0.0) r.grad_norm_sq = grad_norm_sq;
    if (l.known_saddle) r.dist_sq = (state.x - *l.known_saddle).squaredNorm();
    if (oracles.exact_energy) r.energy = oracles.exact_energy(state.x);
    if (state.frame.k() > 0)
      r.rayleigh.assign(state.frame.rayleigh.data(),
                        state.frame.rayleigh.data() + state.frame.rayleigh.size());
    r.eig_iters = state.eig_inner_since_record;
    state.eig_inner_since_record = 0;
    if (cfg.collect_timing) {
      const auto now = std::chrono::steady_clock::now();
      r.wall_ms = std::chrono::duration<double, std::milli>(now - t0).count();
    }
    trace.records.push_back(std::move(r));
  }

  void record_dense_point(const SearchState& state) {
    if (!cfg.dense_trace) return;
    trace.iterates.push_back(state.x);
  }

  void record_dense_step(double alpha, const SearchState& state) {
    if (!cfg.dense_trace) return;
    trace.alphas.push_back(alpha);
    trace.iterates.push_back(state.x);
  }
};

}  // namespace

void saddle_step(SearchState& state, const Landscape& l, const OraclePair& oracles,
                 const SaddleSearchConfig& cfg, SearchRngs& rngs) {
  const double alpha = cfg.x_schedule.at(state.n);
  const Vec g = oracles.grad(state.x, rngs.x_update);
  state.x -= alpha * reflect(g, state.frame);
  state.n += 1;
  if (!state.x.allFinite() || state.x.cwiseAbs().maxCoeff() > cfg.divergence_norm) {
    state.status = RunStatus::Diverged;
    return;
  }
  if ((state.n - cfg.x_schedule.n0) % cfg.refresh_period == 0) {
    bool exhausted = false;
    refresh_frame(state, l, oracles, cfg, rngs.eigensearch, &exhausted);
    if (exhausted && cfg.abort_on_restart_exhaustion) state.status = RunStatus::RestartExhausted;
  }
}

RunResult run_saddle_search(const Landscape& l, const OraclePair& oracles,
                            const SaddleSearchConfig& cfg, const Vec& x0,
                            const StreamFactory& streams, const UnstableFrame* frame0) {
  if (x0.size() != l.dimension) throw std::invalid_argument("run_saddle_search: x0 dimension mismatch");
  if (!x0.allFinite()) throw std::invalid_argument("run_saddle_search: x0 not finite");

  SearchRngs rngs = SearchRngs::from(streams);
  RunContext ctx(l, oracles, cfg, streams.seed);

  SearchState state;
  state.x = x0;
  state.n = cfg.x_schedule.n0;
  if (frame0) {
    frame0->validate();
    state.frame = *frame0;
  }
  if (cfg.refresh_at_start) {
    bool exhausted = false;
    refresh_frame(state, l, oracles, cfg, rngs.eigensearch, &exhausted);
    if (exhausted && cfg.abort_on_restart_exhaustion) {
      state.status = RunStatus::RestartExhausted;
      ctx.record(state, -1.0);
      return {std::move(ctx.trace), std::move(state), 0};
    }
  } else if (state.frame.k() == 0) {
    // No frame supplied and no initial search requested: random frame.
    Mat V(l.dimension, cfg.k);
    for (int j = 0; j < cfg.k; ++j) {
      Vec v = rngs.init.unit_vec(l.dimension);
      if (j > 0) {
        const Mat prev = V.leftCols(j);
        v -= prev * (prev.transpose() * v);
      }
      V.col(j) = v / v.norm();
    }
    state.frame.vectors = V;
    state.frame.rayleigh = Vec::Zero(cfg.k);
  }

  const std::int64_t n_end = cfg.x_schedule.n0 + cfg.max_outer;
  std::int64_t iterations = 0;
  state.status = RunStatus::MaxIter;
  ctx.record_dense_point(state);

  while (true) {
    if ((state.n - cfg.x_schedule.n0) % cfg.grad_check_period == 0) {
      const GuardResult guard = evaluate_guard(oracles, cfg, state.x, rngs.guard);
      state.last_grad_norm_sq = guard.grad_norm_sq;
      ctx.record(state, guard.grad_norm_sq);
      if (guard.grad_norm_sq < cfg.grad_threshold()) {
        state.status = RunStatus::Converged;
        break;
      }
    }
    if (state.n >= n_end) break;

    const double alpha_used = cfg.x_schedule.at(state.n);
    saddle_step(state, l, oracles, cfg, rngs);
    ++iterations;
    ctx.record_dense_step(alpha_used, state);
    if (state.status == RunStatus::Diverged || state.status == RunStatus::RestartExhausted) break;
  }

  if (state.status != RunStatus::Converged &&
      (ctx.trace.records.empty() || ctx.trace.records.back().n != state.n)) {
    const GuardResult guard = evaluate_guard(oracles, cfg, state.x, rngs.guard);
    state.last_grad_norm_sq = guard.grad_norm_sq;
    ctx.record(state, guard.grad_norm_sq);
  }
  return {std::move(ctx.trace), std::move(state), iterations};
}

RunResult run_known_space(const Landscape& l, const KnownSpaceSpec& spec,
                          const OraclePair& oracles, const SaddleSearchConfig& cfg, const Vec& z0,
                          const StreamFactory& streams) {
  spec.validate();
  if (spec.basis.rows() != l.dimension)
    throw std::invalid_argument("run_known_space: basis dimension mismatch");
  SaddleSearchConfig fixed = cfg;
  fixed.k = static_cast<int>(spec.basis.cols());
  fixed.refresh_at_start = false;
  fixed.refresh_period = std::numeric_limits<std::int64_t>::max();
  UnstableFrame frame;
  frame.vectors = spec.basis;
  frame.rayleigh = Vec::Zero(spec.basis.cols());
  return run_saddle_search(l, oracles, fixed, z0, streams, &frame);
}

RunResult run_deterministic_hisd(const Landscape& l, const SaddleSearchConfig& cfg, const Vec& x0,
                                 const UnstableFrame& frame0) {
  const OraclePair oracles = build_oracles(l, NoiseModel::exact(), HvpMode::analytic_noisy());
  StreamFactory streams{0, 0};
  return run_saddle_search(l, oracles, cfg, x0, streams, &frame0);
}

SampledPath integrate_saddle_dynamics(const Landscape& l, const Vec& x0,
                                      const UnstableFrame& frame0, double horizon, double dt,
                                      bool evolve_frame, int sample_stride) {
  if (!(dt > 0.0) || horizon < dt)
    throw std::invalid_argument("integrate_saddle_dynamics: need dt > 0 and horizon >= dt");
  frame0.validate();
  const int k = frame0.k();
  const int d = l.dimension;

  // State is (x, V) packed; the v_i equations follow the continuous
  // dynamics with doubled deflation of the previously found directions.
  auto deriv = [&](const Vec& x, const Mat& V, Vec& dx, Mat& dV) {
    UnstableFrame f;
    f.vectors = V;
    f.rayleigh = Vec::Zero(k);
    dx = -reflect(l.gradient(x), f);
    if (evolve_frame) {
      for (int i = 0; i < k; ++i) {
        const Vec hv = l.hvp(x, V.col(i));
        Vec r = hv - V.col(i) * V.col(i).dot(hv);
        for (int j = 0; j < i; ++j) r -= 2.0 * V.col(j) * V.col(j).dot(hv);
        dV.col(i) = -r;
      }
    } else {
      dV.setZero();
    }
  };

  const auto steps = static_cast<std::int64_t>(std::llround(horizon / dt));
  SampledPath path;
  path.t.reserve(steps / sample_stride + 2);
  path.x.reserve(steps / sample_stride + 2);

  Vec x = x0;
  Mat V = frame0.vectors;
  path.t.push_back(0.0);
  path.x.push_back(x);

  Vec k1x(d), k2x(d), k3x(d), k4x(d);
  Mat k1v(d, k), k2v(d, k), k3v(d, k), k4v(d, k);
  for (std::int64_t s = 0; s < steps; ++s) {
    deriv(x, V, k1x, k1v);
    deriv(x + 0.5 * dt * k1x, V + 0.5 * dt * k1v, k2x, k2v);
    deriv(x + 0.5 * dt * k2x, V + 0.5 * dt * k2v, k3x, k3v);
    deriv(x + dt * k3x, V + dt * k3v, k4x, k4v);
    x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    if (evolve_frame) {
      V += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
      // Re-orthonormalize in order (modified Gram-Schmidt).
      for (int i = 0; i < k; ++i) {
        for (int j = 0; j < i; ++j) V.col(i) -= V.col(j) * V.col(j).dot(V.col(i));
        V.col(i) /= V.col(i).norm();
      }
    }
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 1e8)
      throw std::runtime_error("integrate_saddle_dynamics: blow-up detected");
    if ((s + 1) % sample_stride == 0 || s + 1 == steps) {
      path.t.push_back(dt * static_cast<double>(s + 1));
      path.x.push_back(x);
    }
  }
  return path;
}

PiecewiseLinearPath::PiecewiseLinearPath(std::vector<Vec> points,
                                         const std::vector<double>& alphas)
    : points_(std::move(points)) {
  if (points_.size() < 2 || alphas.size() + 1 < points_.size())
    throw std::invalid_argument("PiecewiseLinearPath: need consecutive iterates and step sizes");
  knots_.resize(points_.size());
  knots_[0] = 0.0;
  for (std::size_t i = 0; i + 1 < points_.size(); ++i) knots_[i + 1] = knots_[i] + alphas[i];
}

Vec PiecewiseLinearPath::at(double t) const {
  if (t < 0.0 || t > knots_.back())
    throw std::invalid_argument("PiecewiseLinearPath: query outside [0, t_max]");
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
  const std::size_t hi = std::min<std::size_t>(it - knots_.begin(), knots_.size() - 1);
  const std::size_t lo = hi - 1;
  const double span = knots_[hi] - knots_[lo];
  const double w = span > 0.0 ? (t - knots_[lo]) / span : 0.0;
  return points_[lo] + w * (points_[hi] - points_[lo]);
}

PiecewiseLinearPath interpolate_trace(const Trace& trace) {
  if (trace.iterates.size() < 2)
    throw std::invalid_argument("interpolate_trace: trace has no dense iterates");
  return PiecewiseLinearPath(trace.iterates, trace.alphas);
}

}  // namespace stosaddle
