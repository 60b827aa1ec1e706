#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace stosaddle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace detail

/// Splittable RNG stream addressed by (seed, run, phase).
///
/// Streams with distinct ids are derived through splitmix64 mixing and are
/// statistically independent for practical purposes; replay with the same
/// address is exact. The generator itself is xoshiro256++, and all
/// distributions are implemented on top of it so that sequences do not
/// depend on the C++ standard library in use.
class RngState {
 public:
  RngState() : RngState(0, 0, 0) {}

  RngState(std::uint64_t seed, std::uint64_t run, std::uint64_t phase) {
    std::uint64_t h = seed;
    (void)detail::splitmix64(h);
    h ^= 0x9e3779b97f4a7c15ULL * (run + 1);
    (void)detail::splitmix64(h);
    h ^= 0xbf58476d1ce4e5b9ULL * (phase + 1);
    for (auto& word : state_) word = detail::splitmix64(h);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via the Box-Muller transform (no cached second value,
  /// so the draw count per call is fixed and replay is position-exact).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  Vec normal_vec(Eigen::Index d) {
    Vec out(d);
    for (Eigen::Index i = 0; i < d; ++i) out[i] = normal();
    return out;
  }

  /// Uniform integer in [0, n).
  std::int64_t uniform_int(std::int64_t n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return static_cast<std::int64_t>(x % un);
  }

  /// m distinct indices drawn uniformly from {0,...,d-1}, returned sorted
  /// (Floyd's subset sampling).
  std::vector<int> index_subset(int d, int m) {
    if (m < 1 || m > d) throw std::invalid_argument("index_subset: need 1 <= m <= d");
    std::vector<int> chosen;
    chosen.reserve(m);
    for (int j = d - m; j < d; ++j) {
      const int t = static_cast<int>(uniform_int(j + 1));
      bool present = false;
      for (int c : chosen) {
        if (c == t) {
          present = true;
          break;
        }
      }
      chosen.push_back(present ? j : t);
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
  }

  /// Unit vector uniform on the sphere in R^d.
  Vec unit_vec(Eigen::Index d) {
    Vec v = normal_vec(d);
    double nrm = v.norm();
    while (nrm < 1e-12) {
      v = normal_vec(d);
      nrm = v.norm();
    }
    return v / nrm;
  }

  /// Child stream derived from the next draw of this one.
  RngState fork() {
    std::uint64_t h = next_u64();
    RngState child;
    for (auto& word : child.state_) word = detail::splitmix64(h);
    return child;
  }

 private:
  std::array<std::uint64_t, 4> state_{};
};

/// Factory for the per-(run, phase) streams owned by one logical run.
struct StreamFactory {
  std::uint64_t seed = 0;
  std::uint64_t run = 0;

  RngState make(std::uint64_t phase) const { return RngState(seed, run, phase); }
};

/// Phase ids used by the solvers; kept stable so traces replay bit-exactly.
namespace phase {
inline constexpr std::uint64_t x_update = 0;
inline constexpr std::uint64_t eigensearch = 1;
inline constexpr std::uint64_t init = 2;
inline constexpr std::uint64_t guard = 3;
inline constexpr std::uint64_t data = 4;
}  // namespace phase

}  // namespace stosaddle
