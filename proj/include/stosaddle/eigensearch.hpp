#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "stosaddle/rng.hpp"
#include "stosaddle/schedule.hpp"

namespace stosaddle {

/// Ordered orthonormal approximations of the k smallest-eigenvalue
/// eigenvectors, with the Rayleigh quotient of each at its last residual
/// evaluation.
struct UnstableFrame {
  Mat vectors;   // d x k, orthonormal columns
  Vec rayleigh;  // k

  int k() const { return static_cast<int>(vectors.cols()); }
  int dim() const { return static_cast<int>(vectors.rows()); }
  void validate() const;  // unit norms within 1e-12, orthogonality within 1e-10
};

struct EigenSearchConfig {
  double eps_v = 1e-8;       // unscaled tolerance; the guard threshold is L^2 eps_v
  double lipschitz = 1.0;    // L
  StepSchedule schedule = StepSchedule::power(0.05, 25.0, 1.0);
  std::int64_t max_inner = 10000;         // per direction
  int max_restarts = -1;                  // -1 resolves to d; 0 disables restarts
  int residual_check_period = 25;
  int residual_samples = 32;              // averaged fallback when no exact hvp

  double residual_threshold() const { return lipschitz * lipschitz * eps_v; }
};

struct EigenSearchReport {
  UnstableFrame frame;
  std::vector<std::int64_t> inner_iterations;  // per returned direction
  std::vector<double> residuals;               // per returned direction
  int restarts_used = 0;
  bool converged = false;          // all residuals met the guard and frame is unstable
  bool restart_exhausted = false;  // a stable direction remained after the restart budget
  std::int64_t total_inner() const;
};

/// Stochastic + residual-guard product oracles at a fixed point. The
/// residual oracle is the noiseless product when available, otherwise an
/// average over fresh stochastic samples (assembled by make_hvp_oracle).
struct HvpOracle {
  std::function<Vec(const Vec&, RngState&)> stochastic;
  std::function<Vec(const Vec&)> residual;
};

/// One stochastic eigenvector-search update: normalize(v - alpha (I - v v' -
/// sum_j u_j u_j') h) for a sampled h = H(w) v. Deflation columns must be
/// orthonormal and orthogonal to v; the result stays orthogonal to them.
Vec oja_step(const Vec& v, const Vec& hvp_sample, const Mat& deflation, double alpha);

/// Squared norm of the deflected eigen-residual (I - v v' - sum u u') H v,
/// given H v exactly; zero iff v is an eigenvector modulo the deflated
/// subspace.
double eigen_residual(const Vec& v, const Vec& exact_hvp, const Mat& deflation);

/// Sequential stochastic search for the k most-unstable directions. Each
/// direction is re-orthogonalized against the previous ones, iterated until
/// the residual guard passes (checked every residual_check_period steps),
/// and restarted with extra deflation when it converges onto a stable
/// direction — at most max_restarts times in total.
EigenSearchReport search_unstable_directions(const HvpOracle& oracle, int d, int k,
                                             const EigenSearchConfig& cfg,
                                             const UnstableFrame* warm_start, RngState& rng);

/// Dense symmetric eigendecomposition oracle: the k smallest-eigenvalue
/// eigenvectors, ascending, sign-normalized.
UnstableFrame exact_smallest_eigvecs(const Mat& symmetric, int k);

/// Squared spectral norm of the projector difference between two frames.
double projection_distance(const UnstableFrame& a, const UnstableFrame& b);

}  // namespace stosaddle
