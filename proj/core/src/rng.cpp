#include "gnice/rng.hpp"

#include "gnice/distributions.hpp"

namespace gnice {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t x = seed ^ (tag * 0xd1b54a32d192ed03ULL);
  splitmix64(x);
  return splitmix64(x);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {
  std::uint64_t x = seed;
  const std::uint64_t key = splitmix64(x) ^ (stream * 0xa0761d6478bd642fULL + 0xe7037ed1a0b428dbULL);
  std::uint64_t s = key;
  for (auto& word : state_) word = splitmix64(s);
  // All-zero state is the one fixed point of xoshiro.
  if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
}

std::uint64_t RngStream::next() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double RngStream::uniform() {
  // (bits + 0.5) * 2^-53 never hits 0 or 1.
  return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() { return normal_quantile(uniform()); }

std::uint64_t RngStream::below(std::uint64_t n) {
  // Lemire's nearly divisionless method.
  __uint128_t m = static_cast<__uint128_t>(next()) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      m = static_cast<__uint128_t>(next()) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

}  // namespace gnice
