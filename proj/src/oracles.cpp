#include "stosaddle/oracles.hpp"

#include <cmath>
#include <stdexcept>

namespace stosaddle {

NoiseModel NoiseModel::gaussian(double sigma) {
  if (sigma < 0.0) throw std::invalid_argument("gaussian noise: sigma must be >= 0");
  NoiseModel n;
  n.kind = Kind::GaussianAdditive;
  n.sigma = sigma;
  return n;
}

NoiseModel NoiseModel::minibatch(int batch_size) {
  if (batch_size < 1) throw std::invalid_argument("minibatch noise: batch_size must be >= 1");
  NoiseModel n;
  n.kind = Kind::Minibatch;
  n.batch_size = batch_size;
  return n;
}

NoiseModel NoiseModel::coordinate_mask(double keep_fraction) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw std::invalid_argument("coordinate_mask noise: need 0 < rho <= 1");
  NoiseModel n;
  n.kind = Kind::CoordinateMask;
  n.keep_fraction = keep_fraction;
  return n;
}

HvpMode HvpMode::minibatch() {
  HvpMode m;
  m.kind = Kind::Minibatch;
  return m;
}

HvpMode HvpMode::dimer(double length) {
  if (length < 0.0) throw std::invalid_argument("dimer hvp: length must be >= 0");
  HvpMode m;
  m.kind = Kind::Dimer;
  m.dimer_length = length;
  return m;
}

namespace {

void require_result_finite(const Vec& v, const char* what) {
  if (!v.allFinite())
    throw std::runtime_error(std::string(what) + ": non-finite intermediate (landscape blow-up)");
}

Vec masked(const Vec& full, const std::vector<int>& keep) {
  Vec out = Vec::Zero(full.size());
  for (int i : keep) out[i] = full[i];
  return out;
}

/// (Xi + Xi')/2 v computed in one pass over the (virtual) matrix entries;
/// Xi is never materialized.
Vec symmetric_noise_apply(const Vec& v, double sigma, RngState& rng) {
  const Eigen::Index d = v.size();
  Vec xi_v = Vec::Zero(d);   // Xi v
  Vec xit_v = Vec::Zero(d);  // Xi' v
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      const double e = rng.normal();
      xi_v[i] += e * v[j];
      xit_v[j] += e * v[i];
    }
  return 0.5 * sigma * (xi_v + xit_v);
}

}  // namespace

OraclePair build_oracles(const Landscape& l, const NoiseModel& noise, const HvpMode& hvp_mode) {
  const int d = l.dimension;
  if (noise.kind == NoiseModel::Kind::Minibatch || hvp_mode.kind == HvpMode::Kind::Minibatch) {
    if (l.sample_count == 0)
      throw std::invalid_argument("build_oracles: minibatch on a landscape without sample structure");
    if (noise.kind == NoiseModel::Kind::Minibatch && noise.batch_size > l.sample_count)
      throw std::invalid_argument("build_oracles: batch_size exceeds the sample count");
  }
  if (noise.kind == NoiseModel::Kind::CoordinateMask &&
      static_cast<int>(std::ceil(noise.keep_fraction * d)) < 1)
    throw std::invalid_argument("build_oracles: rho d < 1");

  OraclePair pair;
  pair.noise = noise;
  pair.hvp_mode = hvp_mode;
  pair.exact_grad = l.gradient;
  pair.exact_hvp = l.hvp;
  pair.exact_energy = l.energy;

  const auto grad_fn = l.gradient;
  const auto hvp_fn = l.hvp;
  const auto mb_grad = l.minibatch_gradient;
  const auto mb_hvp = l.minibatch_hvp;
  const int n_samples = l.sample_count;

  switch (noise.kind) {
    case NoiseModel::Kind::Exact:
      pair.grad = [grad_fn](const Vec& x, RngState&) { return grad_fn(x); };
      break;
    case NoiseModel::Kind::GaussianAdditive: {
      const double sigma = noise.sigma;
      pair.grad = [grad_fn, sigma](const Vec& x, RngState& rng) {
        Vec g = grad_fn(x);
        if (sigma > 0.0) g += sigma * rng.normal_vec(g.size());
        require_result_finite(g, "sample_gradient");
        return g;
      };
      break;
    }
    case NoiseModel::Kind::Minibatch: {
      const int m = noise.batch_size;
      pair.grad = [mb_grad, m, n_samples](const Vec& x, RngState& rng) {
        const auto idx = rng.index_subset(n_samples, m);
        Vec g = mb_grad(x, idx);
        require_result_finite(g, "sample_gradient");
        return g;
      };
      break;
    }
    case NoiseModel::Kind::CoordinateMask: {
      const int keep = static_cast<int>(std::ceil(noise.keep_fraction * d));
      pair.grad = [grad_fn, keep, d](const Vec& x, RngState& rng) {
        Vec g = masked(grad_fn(x), rng.index_subset(d, keep));
        require_result_finite(g, "sample_gradient");
        return g;
      };
      break;
    }
  }

  switch (hvp_mode.kind) {
    case HvpMode::Kind::AnalyticNoisy: {
      if (noise.kind == NoiseModel::Kind::GaussianAdditive && noise.sigma > 0.0) {
        const double sigma = noise.sigma;
        pair.hvp = [hvp_fn, sigma](const Vec& x, const Vec& v, RngState& rng) {
          Vec out = hvp_fn(x, v) + symmetric_noise_apply(v, sigma, rng);
          require_result_finite(out, "sample_hvp");
          return out;
        };
      } else if (noise.kind == NoiseModel::Kind::CoordinateMask) {
        const int keep = static_cast<int>(std::ceil(noise.keep_fraction * d));
        pair.hvp = [hvp_fn, keep, d](const Vec& x, const Vec& v, RngState& rng) {
          Vec out = masked(hvp_fn(x, v), rng.index_subset(d, keep));
          require_result_finite(out, "sample_hvp");
          return out;
        };
      } else {
        pair.hvp = [hvp_fn](const Vec& x, const Vec& v, RngState&) { return hvp_fn(x, v); };
      }
      break;
    }
    case HvpMode::Kind::Minibatch: {
      const int m = noise.kind == NoiseModel::Kind::Minibatch ? noise.batch_size
                                                              : std::max(1, n_samples / 10);
      pair.hvp = [mb_hvp, m, n_samples](const Vec& x, const Vec& v, RngState& rng) {
        const auto idx = rng.index_subset(n_samples, m);
        Vec out = mb_hvp(x, v, idx);
        require_result_finite(out, "sample_hvp");
        return out;
      };
      break;
    }
    case HvpMode::Kind::Dimer: {
      const double length = hvp_mode.dimer_length;
      const auto grad_oracle = pair.grad;
      pair.hvp = [grad_oracle, length](const Vec& x, const Vec& v, RngState& rng) {
        const double vn = v.norm();
        if (!(vn > 0.0)) throw std::invalid_argument("sample_hvp: zero direction");
        const double ell =
            (length > 0.0 ? length : 1e-3 * (1.0 + x.cwiseAbs().maxCoeff())) / vn;
        // Shared fresh omega: both endpoint gradients replay the same stream.
        RngState shared = rng.fork();
        RngState shared2 = shared;
        const Vec gp = grad_oracle(x + ell * v, shared);
        const Vec gm = grad_oracle(x - ell * v, shared2);
        Vec out = (gp - gm) / (2.0 * ell);
        require_result_finite(out, "sample_hvp");
        return out;
      };
      break;
    }
  }
  return pair;
}

Vec sample_gradient(const OraclePair& o, const Vec& x, RngState& rng) {
  if (!x.allFinite()) throw std::invalid_argument("sample_gradient: non-finite input");
  return o.grad(x, rng);
}

Vec sample_hvp(const OraclePair& o, const Vec& x, const Vec& v, RngState& rng) {
  if (!x.allFinite() || !v.allFinite()) throw std::invalid_argument("sample_hvp: non-finite input");
  return o.hvp(x, v, rng);
}

Vec averaged_gradient(const OraclePair& o, const Vec& x, int n_samples, RngState& rng) {
  Vec acc = Vec::Zero(x.size());
  for (int i = 0; i < n_samples; ++i) acc += o.grad(x, rng);
  return acc / n_samples;
}

}  // namespace stosaddle
