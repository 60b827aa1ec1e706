#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace stosaddle {

/// Step-size schedule: either a power-law decay alpha(n) = gamma / (n + m)^p
/// with p in (1/2, 1] (which satisfies the divergent-sum / square-summable
/// conditions by construction), or a constant alpha0.
///
/// n0 is the first iteration index the schedule may be evaluated at; loops
/// driven by a schedule start counting at n0 (e.g. n0 = 1 for alpha = 0.5/n).
struct StepSchedule {
  enum class Kind { Power, Constant };

  Kind kind = Kind::Constant;
  double gamma = 0.0;
  double m = 0.0;
  double p = 1.0;
  double alpha0 = 0.0;
  std::int64_t n0 = 0;

  static StepSchedule power(double gamma, double m, double p, std::int64_t n0 = 0) {
    if (!(gamma > 0.0)) throw std::invalid_argument("power schedule: gamma must be positive");
    if (m < 0.0) throw std::invalid_argument("power schedule: m must be nonnegative");
    if (!(p > 0.5 && p <= 1.0)) throw std::invalid_argument("power schedule: p must lie in (1/2, 1]");
    if (m == 0.0 && n0 < 1)
      throw std::invalid_argument("power schedule: m = 0 divides by zero at n = 0; use n0 >= 1");
    StepSchedule s;
    s.kind = Kind::Power;
    s.gamma = gamma;
    s.m = m;
    s.p = p;
    s.n0 = n0;
    return s;
  }

  static StepSchedule constant(double alpha0, std::int64_t n0 = 0) {
    if (!(alpha0 > 0.0)) throw std::invalid_argument("constant schedule: alpha0 must be positive");
    StepSchedule s;
    s.kind = Kind::Constant;
    s.alpha0 = alpha0;
    s.n0 = n0;
    return s;
  }

  double at(std::int64_t n) const {
    if (n < n0) throw std::invalid_argument("schedule evaluated before its offset n0");
    if (kind == Kind::Constant) return alpha0;
    return gamma / std::pow(static_cast<double>(n) + m, p);
  }
};

}  // namespace stosaddle
