#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "stosaddle/rng.hpp"

namespace stosaddle {

/// An objective with energy, exact gradient and Hessian-vector-product
/// evaluators. Landscapes are immutable after construction; all evaluators
/// are pure and safe for concurrent calls.
struct Landscape {
  int dimension = 0;
  std::string name;

  std::function<double(const Vec&)> energy;
  std::function<Vec(const Vec&)> gradient;
  std::function<Vec(const Vec&, const Vec&)> hvp;

  std::optional<Vec> known_saddle;
  std::optional<double> lipschitz_L;

  /// Sample-structured losses expose per-subset evaluators for minibatch
  /// oracles; sample_count == 0 means the loss has no sample structure.
  /// Minibatch evaluators are the plain sub-sum quantities, so their mean
  /// over a uniformly drawn index set is (|I|/N) times the full-data one.
  int sample_count = 0;
  std::function<Vec(const Vec&, const std::vector<int>&)> minibatch_gradient;
  std::function<Vec(const Vec&, const Vec&, const std::vector<int>&)> minibatch_hvp;
};

/// Muller-Brown potential parameters; defaults are the standard benchmark
/// values.
struct MbParams {
  std::array<double, 4> A{-200.0, -100.0, -170.0, 15.0};
  std::array<double, 4> a{-1.0, -1.0, -6.5, 0.7};
  std::array<double, 4> b{0.0, 0.0, 11.0, 0.6};
  std::array<double, 4> c{-10.0, -10.0, -6.5, 0.7};
  std::array<double, 4> xbar{1.0, 0.0, -0.5, -1.0};
  std::array<double, 4> ybar{0.0, 0.5, 1.5, 1.0};
};

struct ButterflySpec {};

struct QuadraticSpec {
  Vec diag;  // f(x) = x' diag(D) x / 2
};

/// Fully-connected linear network least-squares loss
/// f(W) = || W_H ... W_1 X - Y ||_F^2.
struct LinearNnSpec {
  int depth = 5;                    // H
  std::vector<int> dims;            // d_0 .. d_H
  Mat X;                            // d_0 x N
  Mat Y;                            // d_H x N
  std::vector<int> modes;           // index set S into the modes of
                                    // Sigma = Sigma_YX Sigma_XX^-1 Sigma_YX',
                                    // 0-based, ordered by decreasing eigenvalue
};

/// Convenience data draw for LinearNnSpec: X, Y entries i.i.d. standard
/// normal from a dedicated stream.
LinearNnSpec make_linear_nn_spec(int depth, const std::vector<int>& dims, int n_samples,
                                 std::uint64_t data_seed, std::vector<int> modes);

/// Reduced Landau-de Gennes energy on [-1,1]^2 with the traceless symmetric
/// order tensor stored as (q1, q2), Q = [[q1, q2], [q2, -q1]]. The grid has
/// (grid_n + 1)^2 nodes; the unknowns are (q1, q2) at interior nodes with
/// tangent Dirichlet values on the boundary, so d = 2 (grid_n - 1)^2.
struct LdgSpec {
  int grid_n = 32;
  double lambda2 = 15.0;
  double B = 0.64e4;
  double C = 0.35e4;
  /// Optional boundary override, one row per boundary node: i, j, q1, q2.
  std::optional<std::string> boundary_csv;
};

/// Regularized Lagrangian L(x, nu) = x'Px/2 + nu'(A x - b) - eta |nu|^2 / 2,
/// treated as one landscape over the concatenated variable z = (x; nu).
struct ConstrainedLagrangianSpec {
  Mat P;
  Mat A;
  Vec b;
  double eta = 0.0;
};

using LandscapeSpec = std::variant<MbParams, ButterflySpec, QuadraticSpec, LinearNnSpec,
                                   LdgSpec, ConstrainedLagrangianSpec>;

Landscape build_mb(const MbParams& params = MbParams{});
Landscape build_butterfly();
Landscape build_quadratic(const Vec& diag);
Landscape build_linear_nn(const LinearNnSpec& spec);
Landscape build_ldg(const LdgSpec& spec);
Landscape build_lagrangian(const ConstrainedLagrangianSpec& spec);
Landscape build_landscape(const LandscapeSpec& spec);

double evaluate(const Landscape& l, const Vec& x);
Vec gradient(const Landscape& l, const Vec& x);
Vec hessian_vp(const Landscape& l, const Vec& x, const Vec& v);

/// Closed-form saddle of the linear network loss: W_1* stacks the selected
/// modes of the least-squares map over zeros, the hidden layers are
/// identities and W_H* embeds the selected left modes. Returned flattened
/// (column-major per layer, layers concatenated W_1..W_H).
Vec nn_reference_saddle(const LinearNnSpec& spec);

/// Dense Hessian assembled column-by-column from hvp; intended for test
/// oracles and end-of-run index checks.
Mat dense_hessian(const Landscape& l, const Vec& x);

/// Fallback Lipschitz estimate: max ||hvp(x, v)|| over n_probes random unit
/// vectors at x.
double estimate_lipschitz(const Landscape& l, const Vec& x, RngState& rng, int n_probes = 100);

/// Newton iteration on the gradient; used to pin critical points that the
/// benchmark definitions do not provide in closed form.
Vec newton_critical_point(const Landscape& l, const Vec& x0, int max_iter = 100,
                          double tol = 1e-12);

// LdG helpers used by the harness presets and tests.
int ldg_dimension(const LdgSpec& spec);
/// Boundary order parameter s = B/C (bulk-minimizing magnitude).
double ldg_boundary_s(const LdgSpec& spec);
/// Interior state aligned with one of the two diagonal states: q1 = 0,
/// q2 = +/- s/2 (sign +1 for D1, -1 for D2).
Vec ldg_diagonal_state(const LdgSpec& spec, int sign);
/// Mirror map (x, y) -> (x, -y), q2 -> -q2; sends D1-like states to D2-like
/// states and preserves the discrete energy.
Vec ldg_mirror_state(const LdgSpec& spec, const Vec& q);

}  // namespace stosaddle
