#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace dfecsim {

// Deterministic random stream. Every stochastic component of a run owns its
// own stream, derived from (run seed, component name), so adding draws to one
// component never perturbs another and identical (scenario, seed) pairs
// replay bit-identically.
class RngStream {
 public:
  RngStream() : RngStream(0, "default") {}

  RngStream(std::uint64_t seed, std::string_view stream_name) {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the name
    for (char c : stream_name) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    std::uint64_t x = seed ^ h;
    for (auto& word : state_) {
      word = splitmix64(x);
    }
  }

  // xoshiro256** core.
  std::uint64_t next_u64() {
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

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive bounds.
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
    return lo + next_u64() % (hi - lo + 1);
  }

  bool chance(double p) { return uniform() < p; }

  double exponential(double mean) { return -mean * std::log1p(-uniform()); }

  // Pareto with minimum `scale` and tail index `shape` (> 1 for finite mean).
  double pareto(double scale, double shape) {
    return scale / std::pow(1.0 - uniform(), 1.0 / shape);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_[4];
};

}  // namespace dfecsim
