#pragma once
// Deterministic random streams.
//
// Reproducibility across platforms requires owning every transformation from
// raw bits to variates: std::normal_distribution et al. are implementation
// defined, so only std::mt19937_64 (whose output sequence *is* pinned by the
// standard) is taken from the library.  Substreams are derived by hashing
// (seed, purpose, index) through splitmix64 so that work units (replicates,
// chains, datasets) can be generated independently and in any order.

#include <cmath>
#include <cstdint>
#include <random>

#include "epr/errors.hpp"

namespace epr {

// Fixed purpose labels for substream derivation.  Values are arbitrary but
// frozen: changing them changes every downstream artifact.
namespace stream_purpose {
inline constexpr std::uint64_t epr_replicate = 0x45505252u;   // "EPRR"
inline constexpr std::uint64_t mcmc_chain = 0x4d434d43u;      // "MCMC"
inline constexpr std::uint64_t sim_dataset = 0x53494d44u;     // "SIMD"
inline constexpr std::uint64_t sim_partition = 0x53494d50u;   // "SIMP"
inline constexpr std::uint64_t sim_covariate = 0x53494d43u;   // "SIMC"
inline constexpr std::uint64_t test = 0x54455354u;            // "TEST"
}  // namespace stream_purpose

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : gen_(seed) {}

  // Independent stream for a (purpose, index) work unit under a master seed.
  static RandomStream substream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
    std::uint64_t s = seed;
    std::uint64_t h = splitmix64(s);
    s ^= purpose * 0x9e3779b97f4a7c15ull;
    h ^= splitmix64(s);
    s ^= index + 0x632be59bd9b4e019ull;
    h ^= splitmix64(s);
    return RandomStream(h);
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on the open interval (0,1): 2^53 equispaced midpoints, never 0 or 1,
  // so log(u) and logit(u) are always finite.
  double uniform() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // log of a Gamma(shape, 1) draw, Marsaglia-Tsang squeeze.  Returning the
  // draw on the log scale keeps shape < 1 (boost step multiplies by
  // U^{1/shape}) and tiny draws exact where a linear-scale value would
  // underflow -- the Bernoulli-partition sampler consumes logs directly.
  double log_gamma(double shape) {
    if (!(shape > 0.0) || !std::isfinite(shape))
      throw NumericalError("log_gamma: shape must be positive and finite");
    if (shape < 1.0) {
      // boost: G_a = G_{a+1} * U^{1/a}
      const double lg = log_gamma(shape + 1.0);
      return lg + std::log(uniform()) / shape;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / (3.0 * std::sqrt(d));
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      const double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return std::log(d * v);
      if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return std::log(d * v);
    }
  }

  double gamma(double shape) { return std::exp(log_gamma(shape)); }

  double gamma(double shape, double scale) { return scale * gamma(shape); }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace epr
