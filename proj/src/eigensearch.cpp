#include "stosaddle/eigensearch.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

namespace stosaddle {

namespace {

/// Flip so the first coordinate larger than 1e-12 in magnitude is positive;
/// fixes the +/-v ambiguity for trace comparisons.
void sign_normalize(Eigen::Ref<Vec> v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > 1e-12) {
      if (v[i] < 0.0) v = -v;
      return;
    }
  }
}

/// Project out the columns of D and normalize; returns false when the
/// residual direction degenerates.
bool orthonormalize_against(Vec& v, const Mat& D) {
  if (D.cols() > 0) v -= D * (D.transpose() * v);
  const double nrm = v.norm();
  if (nrm < 1e-14) return false;
  v /= nrm;
  return true;
}

Vec random_orthogonal_unit(const Mat& D, RngState& rng) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    Vec v = rng.unit_vec(D.rows());
    if (orthonormalize_against(v, D)) return v;
  }
  throw std::runtime_error("eigensearch: no direction orthogonal to the deflation set");
}

}  // namespace

void UnstableFrame::validate() const {
  for (int i = 0; i < k(); ++i) {
    if (std::abs(vectors.col(i).norm() - 1.0) > 1e-12)
      throw std::invalid_argument("UnstableFrame: column is not unit");
    for (int j = 0; j < i; ++j)
      if (std::abs(vectors.col(i).dot(vectors.col(j))) > 1e-10)
        throw std::invalid_argument("UnstableFrame: columns are not orthogonal");
  }
}

std::int64_t EigenSearchReport::total_inner() const {
  return std::accumulate(inner_iterations.begin(), inner_iterations.end(), std::int64_t{0});
}

Vec oja_step(const Vec& v, const Vec& hvp_sample, const Mat& deflation, double alpha) {
  if (hvp_sample.size() != v.size()) throw std::invalid_argument("oja_step: dimension mismatch");
  Vec step = hvp_sample;
  step -= v * v.dot(hvp_sample);
  if (deflation.cols() > 0) step -= deflation * (deflation.transpose() * hvp_sample);
  Vec out = v - alpha * step;
  const double nrm = out.norm();
  if (nrm < 1e-14) throw std::runtime_error("oja_step: degenerate update");
  out /= nrm;
  return out;
}

double eigen_residual(const Vec& v, const Vec& exact_hvp, const Mat& deflation) {
  Vec r = exact_hvp;
  r -= v * v.dot(exact_hvp);
  if (deflation.cols() > 0) r -= deflation * (deflation.transpose() * exact_hvp);
  return r.squaredNorm();
}

EigenSearchReport search_unstable_directions(const HvpOracle& oracle, int d, int k,
                                             const EigenSearchConfig& cfg,
                                             const UnstableFrame* warm_start, RngState& rng) {
  if (k < 1 || k > d - 1) throw std::invalid_argument("search_unstable_directions: need 1 <= k <= d-1");
  if (warm_start) {
    if (warm_start->dim() != d || warm_start->k() != k)
      throw std::invalid_argument("search_unstable_directions: warm start dimension mismatch");
    warm_start->validate();
  }
  const int max_restarts = cfg.max_restarts < 0 ? d : std::min(cfg.max_restarts, d);
  const double threshold = cfg.residual_threshold();
  const int check_period = std::max(1, cfg.residual_check_period);

  EigenSearchReport report;
  report.frame.vectors = Mat(d, k);
  report.frame.rayleigh = Vec::Zero(k);
  report.inner_iterations.assign(k, 0);
  report.residuals.assign(k, 0.0);
  bool all_met = true;
  bool any_stable = false;

  // Stable directions parked by restarts stay deflated for every
  // subsequent direction.
  Mat parked(d, 0);

  for (int j = 0; j < k; ++j) {
    RngState dir_rng = rng.fork();

    // Deflation set: accepted directions 1..j-1 plus parked stable ones.
    Mat defl(d, j + parked.cols());
    if (j > 0) defl.leftCols(j) = report.frame.vectors.leftCols(j);
    if (parked.cols() > 0) defl.rightCols(parked.cols()) = parked;

    Vec v;
    if (warm_start) {
      v = warm_start->vectors.col(j);
      if (!orthonormalize_against(v, defl)) v = random_orthogonal_unit(defl, dir_rng);
    } else {
      v = random_orthogonal_unit(defl, dir_rng);
    }

    // Best candidate seen for this slot (smallest Rayleigh quotient),
    // used when the restart budget runs out.
    Vec best_v;
    double best_q = std::numeric_limits<double>::infinity();
    double best_res = 0.0;

    std::int64_t n_v = cfg.schedule.n0;
    std::int64_t inner = 0;
    bool accepted = false;

    while (!accepted) {
      // Guard first: warm starts exit without any stochastic step.
      const Vec hv = oracle.residual(v);
      const double res = eigen_residual(v, hv, defl);
      const double q = v.dot(hv);

      if (res < threshold) {
        if (q <= 0.0) {
          report.frame.vectors.col(j) = v;
          report.frame.rayleigh[j] = q;
          report.residuals[j] = res;
          accepted = true;
          break;
        }
        // Converged onto a stable direction.
        if (q < best_q) {
          best_q = q;
          best_v = v;
          best_res = res;
        }
        const bool room = (j + static_cast<int>(parked.cols()) + 1) < d;
        if (report.restarts_used < max_restarts && room) {
          parked.conservativeResize(Eigen::NoChange, parked.cols() + 1);
          parked.col(parked.cols() - 1) = v;
          defl.conservativeResize(Eigen::NoChange, defl.cols() + 1);
          defl.col(defl.cols() - 1) = v;
          ++report.restarts_used;
          v = random_orthogonal_unit(defl, dir_rng);
          n_v = cfg.schedule.n0;
          continue;
        }
        // Budget or space exhausted: accept the least-stable candidate.
        report.frame.vectors.col(j) = best_v;
        report.frame.rayleigh[j] = best_q;
        report.residuals[j] = best_res;
        report.restart_exhausted = true;
        any_stable = true;
        accepted = true;
        break;
      }

      // Inner stochastic iterations until the next guard.
      bool exhausted = false;
      for (int s = 0; s < check_period; ++s) {
        if (inner >= cfg.max_inner) {
          exhausted = true;
          break;
        }
        const Vec sample = oracle.stochastic(v, dir_rng);
        v = oja_step(v, sample, defl, cfg.schedule.at(n_v));
        ++n_v;
        ++inner;
      }
      if (exhausted) {
        const Vec hv2 = oracle.residual(v);
        report.frame.vectors.col(j) = v;
        report.frame.rayleigh[j] = v.dot(hv2);
        report.residuals[j] = eigen_residual(v, hv2, defl);
        all_met = false;
        accepted = true;
      }
    }
    report.inner_iterations[j] = inner;
    sign_normalize(report.frame.vectors.col(j));
  }

  report.converged = all_met && !any_stable;
  return report;
}

UnstableFrame exact_smallest_eigvecs(const Mat& symmetric, int k) {
  const Eigen::Index d = symmetric.rows();
  if (symmetric.cols() != d) throw std::invalid_argument("exact_smallest_eigvecs: matrix not square");
  if (d > 2000) throw std::invalid_argument("exact_smallest_eigvecs: dimension above the dense cap");
  if (k < 1 || k > d) throw std::invalid_argument("exact_smallest_eigvecs: bad k");
  const double scale = std::max(1.0, symmetric.cwiseAbs().maxCoeff());
  if ((symmetric - symmetric.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument("exact_smallest_eigvecs: matrix not symmetric");

  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (symmetric + symmetric.transpose()));
  UnstableFrame frame;
  frame.vectors = es.eigenvectors().leftCols(k);
  frame.rayleigh = es.eigenvalues().head(k);
  for (int j = 0; j < k; ++j) sign_normalize(frame.vectors.col(j));
  return frame;
}

double projection_distance(const UnstableFrame& a, const UnstableFrame& b) {
  if (a.dim() != b.dim() || a.k() != b.k())
    throw std::invalid_argument("projection_distance: frames must share k and d");
  a.validate();
  b.validate();
  const Mat diff = a.vectors * a.vectors.transpose() - b.vectors * b.vectors.transpose();
  Eigen::SelfAdjointEigenSolver<Mat> es(diff);
  const double spectral = es.eigenvalues().cwiseAbs().maxCoeff();
  return spectral * spectral;
}

}  // namespace stosaddle
