#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stosaddle/eigensearch.hpp"
#include "stosaddle/landscape.hpp"
#include "stosaddle/oracles.hpp"
#include "stosaddle/trace.hpp"

namespace stosaddle {

enum class RunStatus { Converged, MaxIter, Diverged, RestartExhausted };

std::string to_string(RunStatus status);

struct SaddleSearchConfig {
  int k = 1;
  StepSchedule x_schedule = StepSchedule::constant(1e-3);
  EigenSearchConfig eigen_cfg;
  double eps_x = 1e-10;    // unscaled; the guard threshold is L^2 eps_x
  double lipschitz = 1.0;  // L
  std::int64_t max_outer = 100000;
  std::int64_t grad_check_period = 100;
  int grad_check_samples = 32;
  /// Frame refresh cadence; 1 refreshes every outer step as written in the
  /// update rule, larger values allow stale frames on expensive landscapes.
  std::int64_t refresh_period = 1;
  bool refresh_at_start = true;
  /// Abort the run when the eigenvector search exhausts its restart budget
  /// with only stable directions left (off by default: the run continues
  /// with the least-stable frame found, which is what lets the search climb
  /// out of convex regions).
  bool abort_on_restart_exhaustion = false;
  bool dense_trace = false;
  bool collect_timing = false;
  double divergence_norm = 1e8;

  double grad_threshold() const { return lipschitz * lipschitz * eps_x; }
};

struct SearchState {
  Vec x;
  UnstableFrame frame;
  std::int64_t n = 0;
  RunStatus status = RunStatus::MaxIter;
  double last_grad_norm_sq = -1.0;
  std::vector<double> last_residuals;
  std::int64_t eig_inner_since_record = 0;
};

struct RunResult {
  Trace trace;
  SearchState state;
  std::int64_t iterations = 0;
};

/// Coordinate split for the known-unstable-space iteration: the unstable
/// space V is spanned by orthonormal basis columns; ascent on V, descent on
/// its complement.
struct KnownSpaceSpec {
  Mat basis;  // d x k, orthonormal within 1e-12
  void validate() const;
  /// Coordinate projector onto the multiplier block of a Lagrangian
  /// landscape (the last d_nu coordinates).
  static KnownSpaceSpec lagrangian_multipliers(int dim_x, int dim_nu);
};

/// Reflection operator (I - 2 sum v_i v_i') g; norm-preserving.
Vec reflect(const Vec& g, const UnstableFrame& frame);

/// Rng streams owned by one run.
struct SearchRngs {
  RngState x_update;
  RngState eigensearch;
  RngState init;
  RngState guard;
  static SearchRngs from(const StreamFactory& streams);
};

/// One outer update: x <- x - alpha(n) (I - 2 sum v v') grad(x; w), followed
/// by a warm-started frame refresh on the refresh cadence.
void saddle_step(SearchState& state, const Landscape& l, const OraclePair& oracles,
                 const SaddleSearchConfig& cfg, SearchRngs& rngs);

/// Index-k stochastic saddle search (gradient guard every
/// grad_check_period outer steps, trace row per check).
RunResult run_saddle_search(const Landscape& l, const OraclePair& oracles,
                            const SaddleSearchConfig& cfg, const Vec& x0,
                            const StreamFactory& streams,
                            const UnstableFrame* frame0 = nullptr);

/// Known-unstable-space iteration: z <- z - alpha(n) (I - 2 P_V) grad(z; w).
/// Converges a.s. for strongly convex-concave objectives.
RunResult run_known_space(const Landscape& l, const KnownSpaceSpec& spec,
                          const OraclePair& oracles, const SaddleSearchConfig& cfg, const Vec& z0,
                          const StreamFactory& streams);

/// Deterministic high-index saddle dynamics baseline: the same loop with the
/// exact oracle pair and exact residual guard; fully determined by
/// (x0, frame0).
RunResult run_deterministic_hisd(const Landscape& l, const SaddleSearchConfig& cfg, const Vec& x0,
                                 const UnstableFrame& frame0);

/// Sampled continuous path from the reference integrator.
struct SampledPath {
  std::vector<double> t;
  std::vector<Vec> x;
};

/// Fourth-order (classical Runge-Kutta) integration of the coupled saddle
/// dynamics; the frame columns are renormalized and re-orthogonalized after
/// each step. With evolve_frame = false the frame is held fixed, which is
/// the known-space / reflected-gradient flow.
SampledPath integrate_saddle_dynamics(const Landscape& l, const Vec& x0,
                                      const UnstableFrame& frame0, double horizon, double dt,
                                      bool evolve_frame = true, int sample_stride = 1);

/// Piecewise-linear interpolant of dense iterates over t(n) = sum alpha(i).
class PiecewiseLinearPath {
 public:
  PiecewiseLinearPath(std::vector<Vec> points, const std::vector<double>& alphas);
  Vec at(double t) const;
  double t_max() const { return knots_.back(); }

 private:
  std::vector<double> knots_;
  std::vector<Vec> points_;
};

PiecewiseLinearPath interpolate_trace(const Trace& trace);

}  // namespace stosaddle
