#pragma once

#include <functional>
#include <optional>
#include <string>

#include "stosaddle/landscape.hpp"
#include "stosaddle/rng.hpp"
#include "stosaddle/schedule.hpp"

namespace stosaddle {

/// Gradient noise mechanisms. gaussian_additive adds sigma * xi with xi
/// i.i.d. standard normal per coordinate; minibatch draws an index set
/// uniformly without replacement and evaluates the (N/|I|-scaled) sub-sum
/// loss; coordinate_mask zeroes every coordinate outside a uniformly drawn
/// set of ceil(rho d) indices, so its mean is (ceil(rho d)/d) * grad — a
/// scaled, not unbiased, estimate.
struct NoiseModel {
  enum class Kind { Exact, GaussianAdditive, Minibatch, CoordinateMask };
  Kind kind = Kind::Exact;
  double sigma = 0.0;       // gaussian_additive scale
  int batch_size = 0;       // minibatch |I|
  double keep_fraction = 0; // coordinate_mask rho

  static NoiseModel exact() { return {}; }
  static NoiseModel gaussian(double sigma);
  static NoiseModel minibatch(int batch_size);
  static NoiseModel coordinate_mask(double keep_fraction);
};

/// How the stochastic Hessian-vector product is realized.
///  - analytic_noisy: the landscape's analytic product with the NoiseModel
///    applied to it (symmetrized (Xi + Xi')/2 matrix noise for the gaussian
///    kind, coordinate mask for the mask kind, nothing for exact);
///  - minibatch: analytic product of the sub-sum loss on a fresh index set;
///  - dimer: (g(x + l v; w) - g(x - l v; w)) / (2 l) with a fresh shared w,
///    which carries an O(l^2) deterministic bias.
struct HvpMode {
  enum class Kind { AnalyticNoisy, Minibatch, Dimer };
  Kind kind = Kind::AnalyticNoisy;
  double dimer_length = 0.0;  // 0 resolves to 1e-3 (1 + |x|_inf) per call

  static HvpMode analytic_noisy() { return {}; }
  static HvpMode minibatch();
  static HvpMode dimer(double length = 0.0);
};

/// Paired stochastic gradient / Hessian-vector-product oracles plus the
/// exact evaluators used by residual guards and stopping tests. Oracles are
/// immutable; the RngState passed per call is owned by a single run.
struct OraclePair {
  std::function<Vec(const Vec&, RngState&)> grad;
  std::function<Vec(const Vec&, const Vec&, RngState&)> hvp;
  std::function<Vec(const Vec&)> exact_grad;             // may be empty
  std::function<Vec(const Vec&, const Vec&)> exact_hvp;  // may be empty
  std::function<double(const Vec&)> exact_energy;        // may be empty
  NoiseModel noise;
  HvpMode hvp_mode;
};

OraclePair build_oracles(const Landscape& l, const NoiseModel& noise,
                         const HvpMode& hvp_mode = HvpMode::analytic_noisy());

Vec sample_gradient(const OraclePair& o, const Vec& x, RngState& rng);
Vec sample_hvp(const OraclePair& o, const Vec& x, const Vec& v, RngState& rng);

/// Mean of n_samples fresh stochastic gradients; the stopping-test fallback
/// when no exact gradient is available.
Vec averaged_gradient(const OraclePair& o, const Vec& x, int n_samples, RngState& rng);

/// step_size(s, n); thin wrapper kept for symmetry with the other ops.
inline double step_size(const StepSchedule& s, std::int64_t n) { return s.at(n); }

}  // namespace stosaddle
