#ifndef HMVAE_RNG_HPP_
#define HMVAE_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hmvae/errors.hpp"

namespace hmvae {

// Fixed stream tags. One run seed fans out into independent streams so
// that e.g. adding an epoch does not perturb data generation.
namespace streams {
inline constexpr std::uint64_t kInit = 0x1a2b3c01;
inline constexpr std::uint64_t kTrain = 0x1a2b3c02;      // shuffling + eps draws
inline constexpr std::uint64_t kSynth = 0x1a2b3c03;
inline constexpr std::uint64_t kFolds = 0x1a2b3c04;
inline constexpr std::uint64_t kSampler = 0x1a2b3c05;    // standalone elbo/marginal calls
inline constexpr std::uint64_t kLouvain = 0x1a2b3c06;
inline constexpr std::uint64_t kPermute = 0x1a2b3c07;
}  // namespace streams

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic random stream. Wraps std::mt19937_64 (whose output
/// sequence is pinned by the standard) and supplies its own value
/// transforms, so draws are bit-identical across platforms and library
/// versions. All stochastic code in the library goes through this type.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}
  Rng(std::uint64_t seed, std::uint64_t stream_tag)
      : engine_(splitmix64(splitmix64(seed) ^ stream_tag)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform draw strictly inside (0,1); never returns an endpoint.
  double uniform01() {
    // 53-bit mantissa, offset half a ulp so 0 and 1 are unreachable.
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller (both variates used, one cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n) {
    if (n == 0) throw ArgumentError("Rng::below: n must be positive");
    return static_cast<std::size_t>(engine_() % n);
  }

  /// Seeded Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
      std::swap(p[i - 1], p[below(i)]);
    }
    return p;
  }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_ << ' ' << (have_spare_ ? 1 : 0) << ' ';
    os.precision(17);
    os << spare_;
    return os.str();
  }

  static Rng deserialize(const std::string& state) {
    Rng r(0);
    std::istringstream is(state);
    int have = 0;
    is >> r.engine_ >> have >> r.spare_;
    if (!is) throw ValidationError("Rng::deserialize: malformed state string");
    r.have_spare_ = have != 0;
    return r;
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace hmvae

#endif  // HMVAE_RNG_HPP_
