#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace april {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// FNV-1a, for turning stream tags into seed material.
constexpr std::uint64_t tag_hash(std::string_view tag) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

inline std::uint64_t seed_hash(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6A09E667F3BCC909ull;
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

// Deterministic RNG with hand-rolled distributions so results do not depend
// on the standard library's <random> distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  // [0, 1)
  double uniform() { return std::ldexp(static_cast<double>(next() >> 11), -53); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n), unbiased enough for sampling (Lemire multiply-shift)
  std::int64_t uniform_int(std::int64_t n) {
    const auto wide = static_cast<unsigned __int128>(next());
    return static_cast<std::int64_t>((wide * static_cast<unsigned __int128>(n)) >> 64);
  }

  double normal() {
    constexpr double kTwoPi = 6.28318530717958647692;
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Independent child stream; stable under calls made on the parent.
  Rng fork(std::uint64_t stream) const { return Rng(seed_hash({seed_, stream})); }
  Rng fork(std::string_view tag) const { return fork(tag_hash(tag)); }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 eng_;
};

}  // namespace april
