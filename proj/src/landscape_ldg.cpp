#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "stosaddle/landscape.hpp"

namespace stosaddle {

namespace {

// Discretization of the reduced LdG functional on [-1,1]^2:
//   E[Q] = int 1/2 |grad Q|^2 + lambda^2 (-B^2/(8C^2) tr(Q^2) + (tr Q^2)^2 / 8)
// with Q = [[q1, q2], [q2, -q1]], so 1/2 |grad Q|^2 = |grad q1|^2 + |grad q2|^2
// and tr(Q^2) = 2 (q1^2 + q2^2).
//
// The Dirichlet part uses central differences at edge midpoints with
// trapezoidal weights transverse to each edge; the bulk term is integrated
// with the 2d trapezoidal rule. Unknowns are interior-node values; boundary
// nodes carry fixed tangent Dirichlet data.
struct LdgGrid {
  int n;                 // cells per side; nodes are (n+1)^2
  double h;              // mesh size
  double lambda2, B, C;
  int interior;          // (n-1)^2
  int dim;               // 2 * interior
  // Full nodal fields including boundary data; interior entries are zero
  // placeholders overwritten per evaluation.
  Mat bq1, bq2;          // (n+1) x (n+1), boundary values only

  explicit LdgGrid(const LdgSpec& spec) : n(spec.grid_n), lambda2(spec.lambda2), B(spec.B), C(spec.C) {
    if (n < 2) throw std::invalid_argument("ldg: grid_n must be >= 2");
    if (!(lambda2 > 0.0) || !(B > 0.0) || !(C > 0.0))
      throw std::invalid_argument("ldg: lambda^2, B, C must be positive");
    h = 2.0 / n;
    interior = (n - 1) * (n - 1);
    dim = 2 * interior;
    bq1 = Mat::Zero(n + 1, n + 1);
    bq2 = Mat::Zero(n + 1, n + 1);
    const double s = B / C;
    // Tangent anchoring: director along each edge; corners average to zero.
    for (int i = 1; i < n; ++i) {
      bq1(i, 0) = 0.5 * s;   // bottom, tangent (1,0)
      bq1(i, n) = 0.5 * s;   // top
      bq1(0, i) = -0.5 * s;  // left, tangent (0,1)
      bq1(n, i) = -0.5 * s;  // right
    }
    // Tangent data has q2 = 0 on the whole boundary.
  }

  int node_index(int i, int j) const { return (j - 1) * (n - 1) + (i - 1); }

  // Scatter the interior unknowns into full nodal fields.
  void fill(const Vec& q, Mat& f1, Mat& f2) const {
    f1 = bq1;
    f2 = bq2;
    for (int j = 1; j < n; ++j)
      for (int i = 1; i < n; ++i) {
        const int p = node_index(i, j);
        f1(i, j) = q[p];
        f2(i, j) = q[interior + p];
      }
  }

  double trapezoid_weight(int i, int j) const {
    double w = 1.0;
    if (i == 0 || i == n) w *= 0.5;
    if (j == 0 || j == n) w *= 0.5;
    return w;
  }

  double bulk(double t) const {
    return lambda2 * (-B * B / (8.0 * C * C) * t + t * t / 8.0);
  }
  double bulk_d(double t) const { return lambda2 * (-B * B / (8.0 * C * C) + t / 4.0); }
  double bulk_dd() const { return lambda2 / 4.0; }

  double energy(const Vec& q) const {
    Mat f1, f2;
    fill(q, f1, f2);
    double e = 0.0;
    // x-edges: transverse trapezoid weight in j.
    for (int j = 0; j <= n; ++j) {
      const double w = (j == 0 || j == n) ? 0.5 : 1.0;
      for (int i = 0; i < n; ++i) {
        const double d1 = f1(i + 1, j) - f1(i, j);
        const double d2 = f2(i + 1, j) - f2(i, j);
        e += w * (d1 * d1 + d2 * d2);
      }
    }
    // y-edges.
    for (int i = 0; i <= n; ++i) {
      const double w = (i == 0 || i == n) ? 0.5 : 1.0;
      for (int j = 0; j < n; ++j) {
        const double d1 = f1(i, j + 1) - f1(i, j);
        const double d2 = f2(i, j + 1) - f2(i, j);
        e += w * (d1 * d1 + d2 * d2);
      }
    }
    // Bulk term over all nodes (boundary nodes contribute constants).
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i <= n; ++i) {
        const double t = 2.0 * (f1(i, j) * f1(i, j) + f2(i, j) * f2(i, j));
        e += trapezoid_weight(i, j) * h * h * bulk(t);
      }
    return e;
  }

  // Dirichlet stencil applied to one field; out += factor * K f at interior
  // nodes. K row at (i,j): sum over the four incident edges of
  // 2 w_edge (f_ij - f_nb).
  template <typename F>
  void apply_stencil(const Mat& f, F&& accumulate) const {
    // All edges incident to an interior node carry transverse weight 1.
    for (int j = 1; j < n; ++j) {
      for (int i = 1; i < n; ++i) {
        // x-edges at row j (j in 1..n-1 is never a boundary row).
        double acc = 2.0 * (f(i, j) - f(i - 1, j)) + 2.0 * (f(i, j) - f(i + 1, j));
        // y-edges at column i.
        acc += 2.0 * (f(i, j) - f(i, j - 1)) + 2.0 * (f(i, j) - f(i, j + 1));
        accumulate(i, j, acc);
      }
    }
  }

  Vec gradient(const Vec& q) const {
    Mat f1, f2;
    fill(q, f1, f2);
    Vec g = Vec::Zero(dim);
    apply_stencil(f1, [&](int i, int j, double v) { g[node_index(i, j)] += v; });
    apply_stencil(f2, [&](int i, int j, double v) { g[interior + node_index(i, j)] += v; });
    for (int j = 1; j < n; ++j)
      for (int i = 1; i < n; ++i) {
        const int p = node_index(i, j);
        const double q1 = f1(i, j), q2 = f2(i, j);
        const double t = 2.0 * (q1 * q1 + q2 * q2);
        const double c = h * h * bulk_d(t) * 4.0;  // trapezoid weight is 1 at interior nodes
        g[p] += c * q1;
        g[interior + p] += c * q2;
      }
    return g;
  }

  Vec hvp(const Vec& q, const Vec& v) const {
    Mat f1, f2, v1, v2;
    fill(q, f1, f2);
    // Direction fields with zero boundary (Dirichlet data is fixed).
    v1 = Mat::Zero(n + 1, n + 1);
    v2 = Mat::Zero(n + 1, n + 1);
    for (int j = 1; j < n; ++j)
      for (int i = 1; i < n; ++i) {
        const int p = node_index(i, j);
        v1(i, j) = v[p];
        v2(i, j) = v[interior + p];
      }
    Vec out = Vec::Zero(dim);
    apply_stencil(v1, [&](int i, int j, double val) { out[node_index(i, j)] += val; });
    apply_stencil(v2, [&](int i, int j, double val) { out[interior + node_index(i, j)] += val; });
    const double gdd = bulk_dd();
    for (int j = 1; j < n; ++j)
      for (int i = 1; i < n; ++i) {
        const int p = node_index(i, j);
        const double q1 = f1(i, j), q2 = f2(i, j);
        const double t = 2.0 * (q1 * q1 + q2 * q2);
        const double gd = bulk_d(t);
        const double w = h * h;
        const double a11 = w * (16.0 * q1 * q1 * gdd + 4.0 * gd);
        const double a22 = w * (16.0 * q2 * q2 * gdd + 4.0 * gd);
        const double a12 = w * (16.0 * q1 * q2 * gdd);
        out[p] += a11 * v1(i, j) + a12 * v2(i, j);
        out[interior + p] += a12 * v1(i, j) + a22 * v2(i, j);
      }
    return out;
  }
};

void load_boundary_csv(LdgGrid& grid, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("ldg: cannot open boundary csv: " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string cell;
    std::array<double, 4> vals{};
    int c = 0;
    while (std::getline(row, cell, ',') && c < 4) vals[c++] = std::stod(cell);
    if (c != 4) throw std::invalid_argument("ldg: boundary csv rows must be i,j,q1,q2");
    const int i = static_cast<int>(vals[0]), j = static_cast<int>(vals[1]);
    if (i < 0 || i > grid.n || j < 0 || j > grid.n)
      throw std::invalid_argument("ldg: boundary csv index out of range");
    if (i != 0 && i != grid.n && j != 0 && j != grid.n)
      throw std::invalid_argument("ldg: boundary csv refers to an interior node");
    grid.bq1(i, j) = vals[2];
    grid.bq2(i, j) = vals[3];
  }
}

}  // namespace

int ldg_dimension(const LdgSpec& spec) { return 2 * (spec.grid_n - 1) * (spec.grid_n - 1); }

double ldg_boundary_s(const LdgSpec& spec) { return spec.B / spec.C; }

Vec ldg_diagonal_state(const LdgSpec& spec, int sign) {
  const int m = spec.grid_n - 1;
  Vec q = Vec::Zero(2 * m * m);
  const double s = ldg_boundary_s(spec);
  q.tail(m * m).setConstant((sign >= 0 ? 0.5 : -0.5) * s);
  return q;
}

Vec ldg_mirror_state(const LdgSpec& spec, const Vec& q) {
  const int m = spec.grid_n - 1;
  if (q.size() != 2 * m * m) throw std::invalid_argument("ldg_mirror_state: dimension mismatch");
  Vec out(q.size());
  for (int j = 1; j < spec.grid_n; ++j)
    for (int i = 1; i < spec.grid_n; ++i) {
      const int p = (j - 1) * m + (i - 1);
      const int pm = (spec.grid_n - j - 1) * m + (i - 1);  // node (i, n - j)
      out[p] = q[pm];
      out[m * m + p] = -q[m * m + pm];
    }
  return out;
}

Landscape build_ldg(const LdgSpec& spec) {
  auto grid = std::make_shared<LdgGrid>(spec);
  if (spec.boundary_csv) load_boundary_csv(*grid, *spec.boundary_csv);

  Landscape l;
  l.dimension = grid->dim;
  l.name = "ldg";
  l.energy = [grid](const Vec& q) { return grid->energy(q); };
  l.gradient = [grid](const Vec& q) { return grid->gradient(q); };
  l.hvp = [grid](const Vec& q, const Vec& v) { return grid->hvp(q, v); };
  return l;
}

}  // namespace stosaddle
