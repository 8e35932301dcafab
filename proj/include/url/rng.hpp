#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace url {

// splitmix64: cheap avalanche mix used to derive independent child seeds from
// one master seed. Standard constants from Vigna's reference implementation.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// FNV-1a over a label, so named streams ("dropout", "shuffle", ...) derive
// stable sub-seeds regardless of the order in which they are created.
inline uint64_t hash_label(std::string_view label) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Deterministic random stream. Wraps mt19937_64 but supplies its own
// uniform/normal transforms: the std:: distributions are not bit-identical
// across standard libraries, and training runs must reproduce exactly for a
// fixed seed on any platform.
class RngStream {
 public:
  explicit RngStream(uint64_t seed)
      : lineage_(seed), engine_(splitmix64(seed)) {}
  RngStream(uint64_t seed, std::string_view label)
      : RngStream(splitmix64(seed ^ hash_label(label))) {}

  // Child stream derived from this stream's seed lineage, independent of how
  // many numbers have been drawn from this stream so far.
  RngStream child(std::string_view label) const {
    return RngStream(lineage_, label);
  }
  RngStream child(uint64_t salt) const {
    return RngStream(splitmix64(lineage_^ splitmix64(salt)));
  }

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1): 53 mantissa bits, the standard exact construction.
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Modulo would bias small n; rejection keeps
  // every value equally likely.
  uint64_t next_below(uint64_t n) {
    if (n == 0) return 0;
    uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller. One value per call; the spare is cached.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_uniform();
    while (u1 <= 0.0) u1 = next_uniform();
    double u2 = next_uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  double next_normal(double mean, double stddev) {
    return mean + stddev * next_normal();
  }

  // Fisher-Yates shuffle driven by this stream (std::shuffle's draw pattern
  // is implementation-defined, so it is avoided).
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  uint64_t lineage_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace url
