#include "stosaddle/landscape.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace stosaddle {

namespace {

void require_finite(const Vec& x, const char* what) {
  if (!x.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite input");
}

void require_dim(const Vec& x, int d, const char* what) {
  if (x.size() != d) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
  require_finite(x, what);
}

}  // namespace

double evaluate(const Landscape& l, const Vec& x) {
  require_dim(x, l.dimension, "evaluate");
  return l.energy(x);
}

Vec gradient(const Landscape& l, const Vec& x) {
  require_dim(x, l.dimension, "gradient");
  return l.gradient(x);
}

Vec hessian_vp(const Landscape& l, const Vec& x, const Vec& v) {
  require_dim(x, l.dimension, "hessian_vp");
  require_dim(v, l.dimension, "hessian_vp");
  return l.hvp(x, v);
}

Landscape build_mb(const MbParams& params) {
  Landscape l;
  l.dimension = 2;
  l.name = "mb";
  const MbParams pp = params;

  l.energy = [pp](const Vec& x) {
    double e = 0.0;
    for (int i = 0; i < 4; ++i) {
      const double dx = x[0] - pp.xbar[i];
      const double dy = x[1] - pp.ybar[i];
      e += pp.A[i] * std::exp(pp.a[i] * dx * dx + pp.b[i] * dx * dy + pp.c[i] * dy * dy);
    }
    return e;
  };
  l.gradient = [pp](const Vec& x) {
    Vec g = Vec::Zero(2);
    for (int i = 0; i < 4; ++i) {
      const double dx = x[0] - pp.xbar[i];
      const double dy = x[1] - pp.ybar[i];
      const double t = pp.A[i] * std::exp(pp.a[i] * dx * dx + pp.b[i] * dx * dy + pp.c[i] * dy * dy);
      g[0] += t * (2.0 * pp.a[i] * dx + pp.b[i] * dy);
      g[1] += t * (pp.b[i] * dx + 2.0 * pp.c[i] * dy);
    }
    return g;
  };
  l.hvp = [pp](const Vec& x, const Vec& v) {
    double h00 = 0.0, h01 = 0.0, h11 = 0.0;
    for (int i = 0; i < 4; ++i) {
      const double dx = x[0] - pp.xbar[i];
      const double dy = x[1] - pp.ybar[i];
      const double t = pp.A[i] * std::exp(pp.a[i] * dx * dx + pp.b[i] * dx * dy + pp.c[i] * dy * dy);
      const double ux = 2.0 * pp.a[i] * dx + pp.b[i] * dy;
      const double uy = pp.b[i] * dx + 2.0 * pp.c[i] * dy;
      h00 += t * (ux * ux + 2.0 * pp.a[i]);
      h01 += t * (ux * uy + pp.b[i]);
      h11 += t * (uy * uy + 2.0 * pp.c[i]);
    }
    Vec out(2);
    out[0] = h00 * v[0] + h01 * v[1];
    out[1] = h01 * v[0] + h11 * v[1];
    return out;
  };

  // The transition state is not part of the potential's definition; pin it
  // once by Newton from a point between the two lower minima.
  Vec start(2);
  start << -0.8, 0.6;
  l.known_saddle = newton_critical_point(l, start);
  return l;
}

Landscape build_butterfly() {
  Landscape l;
  l.dimension = 2;
  l.name = "butterfly";
  l.energy = [](const Vec& p) {
    const double x = p[0], y = p[1];
    const double x2 = x * x, y2 = y * y;
    return x2 * x2 - 2.0 * x2 + y2 * y2 + y2 - 1.5 * x2 * y2 + x2 * y - y2 * y;
  };
  l.gradient = [](const Vec& p) {
    const double x = p[0], y = p[1];
    Vec g(2);
    g[0] = 4.0 * x * x * x - 4.0 * x - 3.0 * x * y * y + 2.0 * x * y;
    g[1] = 4.0 * y * y * y + 2.0 * y - 3.0 * x * x * y + x * x - 3.0 * y * y;
    return g;
  };
  l.hvp = [](const Vec& p, const Vec& v) {
    const double x = p[0], y = p[1];
    const double h00 = 12.0 * x * x - 4.0 - 3.0 * y * y + 2.0 * y;
    const double h01 = -6.0 * x * y + 2.0 * x;
    const double h11 = 12.0 * y * y + 2.0 - 3.0 * x * x - 6.0 * y;
    Vec out(2);
    out[0] = h00 * v[0] + h01 * v[1];
    out[1] = h01 * v[0] + h11 * v[1];
    return out;
  };
  // The origin is the index-1 saddle between the two deep wells.
  Vec saddle = Vec::Zero(2);
  l.known_saddle = saddle;
  return l;
}

Landscape build_quadratic(const Vec& diag) {
  if (diag.size() < 1) throw std::invalid_argument("quadratic: empty diagonal");
  require_finite(diag, "quadratic");
  Landscape l;
  l.dimension = static_cast<int>(diag.size());
  l.name = "quadratic";
  const Vec d = diag;
  l.energy = [d](const Vec& x) { return 0.5 * x.dot(d.cwiseProduct(x)); };
  l.gradient = [d](const Vec& x) { return Vec(d.cwiseProduct(x)); };
  l.hvp = [d](const Vec&, const Vec& v) { return Vec(d.cwiseProduct(v)); };
  l.known_saddle = Vec::Zero(d.size());
  l.lipschitz_L = d.cwiseAbs().maxCoeff();
  return l;
}

Landscape build_lagrangian(const ConstrainedLagrangianSpec& spec) {
  const int dx = static_cast<int>(spec.P.rows());
  const int dn = static_cast<int>(spec.A.rows());
  if (spec.P.cols() != dx) throw std::invalid_argument("lagrangian: P must be square");
  if ((spec.P - spec.P.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("lagrangian: P must be symmetric");
  if (spec.A.cols() != dx || spec.b.size() != dn)
    throw std::invalid_argument("lagrangian: constraint dimensions mismatch");
  if (spec.eta < 0.0) throw std::invalid_argument("lagrangian: eta must be nonnegative");
  Eigen::SelfAdjointEigenSolver<Mat> es(spec.P);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw std::invalid_argument("lagrangian: P must be positive definite");

  Landscape l;
  l.dimension = dx + dn;
  l.name = "lagrangian";
  const Mat P = spec.P;
  const Mat A = spec.A;
  const Vec b = spec.b;
  const double eta = spec.eta;

  l.energy = [P, A, b, eta, dx, dn](const Vec& z) {
    const Vec x = z.head(dx);
    const Vec nu = z.tail(dn);
    return 0.5 * x.dot(P * x) + nu.dot(A * x - b) - 0.5 * eta * nu.squaredNorm();
  };
  l.gradient = [P, A, b, eta, dx, dn](const Vec& z) {
    Vec g(dx + dn);
    const Vec x = z.head(dx);
    const Vec nu = z.tail(dn);
    g.head(dx) = P * x + A.transpose() * nu;
    g.tail(dn) = A * x - b - eta * nu;
    return g;
  };
  l.hvp = [P, A, eta, dx, dn](const Vec&, const Vec& v) {
    Vec out(dx + dn);
    out.head(dx) = P * v.head(dx) + A.transpose() * v.tail(dn);
    out.tail(dn) = A * v.head(dx) - eta * v.tail(dn);
    return out;
  };

  // Stationary pair from the linear system [P A'; A -eta I] z = (0; b).
  Mat K(dx + dn, dx + dn);
  K.topLeftCorner(dx, dx) = P;
  K.topRightCorner(dx, dn) = A.transpose();
  K.bottomLeftCorner(dn, dx) = A;
  K.bottomRightCorner(dn, dn) = -eta * Mat::Identity(dn, dn);
  Vec rhs = Vec::Zero(dx + dn);
  rhs.tail(dn) = b;
  Eigen::FullPivLU<Mat> lu(K);
  if (lu.isInvertible()) l.known_saddle = lu.solve(rhs);

  l.lipschitz_L = K.cwiseAbs().rowwise().sum().maxCoeff();
  return l;
}

Landscape build_landscape(const LandscapeSpec& spec) {
  return std::visit(
      [](const auto& s) -> Landscape {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, MbParams>) return build_mb(s);
        if constexpr (std::is_same_v<T, ButterflySpec>) return build_butterfly();
        if constexpr (std::is_same_v<T, QuadraticSpec>) return build_quadratic(s.diag);
        if constexpr (std::is_same_v<T, LinearNnSpec>) return build_linear_nn(s);
        if constexpr (std::is_same_v<T, LdgSpec>) return build_ldg(s);
        if constexpr (std::is_same_v<T, ConstrainedLagrangianSpec>) return build_lagrangian(s);
      },
      spec);
}

Mat dense_hessian(const Landscape& l, const Vec& x) {
  const int d = l.dimension;
  Mat H(d, d);
  Vec e = Vec::Zero(d);
  for (int j = 0; j < d; ++j) {
    e[j] = 1.0;
    H.col(j) = l.hvp(x, e);
    e[j] = 0.0;
  }
  // Symmetrize away the last-bit asymmetry of column assembly.
  return 0.5 * (H + H.transpose());
}

double estimate_lipschitz(const Landscape& l, const Vec& x, RngState& rng, int n_probes) {
  double best = 0.0;
  for (int i = 0; i < n_probes; ++i) {
    const Vec v = rng.unit_vec(l.dimension);
    best = std::max(best, l.hvp(x, v).norm());
  }
  return best;
}

Vec newton_critical_point(const Landscape& l, const Vec& x0, int max_iter, double tol) {
  Vec x = x0;
  for (int it = 0; it < max_iter; ++it) {
    const Vec g = l.gradient(x);
    if (g.norm() < tol) return x;
    const Mat H = dense_hessian(l, x);
    x -= H.fullPivLu().solve(g);
  }
  if (l.gradient(x).norm() >= tol)
    throw std::runtime_error("newton_critical_point: no convergence from the given start");
  return x;
}

}  // namespace stosaddle
