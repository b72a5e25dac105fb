#pragma once

#include <cstdint>
#include <limits>

namespace gnice {

/// xoshiro256** generator keyed by (seed, stream). The same pair always yields the
/// same sequence; distinct streams get decorrelated states through SplitMix64.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next(); }
  std::uint64_t next();

  /// Uniform on the open interval (0,1), 53-bit resolution.
  double uniform();
  /// Standard normal by inversion (one uniform per draw).
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t state_[4];
  std::uint64_t seed_;
  std::uint64_t stream_;
};

/// Mixes a seed with a tag so that sub-components (e.g. "simulation", "dropout")
/// draw from unrelated seed spaces.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace gnice
