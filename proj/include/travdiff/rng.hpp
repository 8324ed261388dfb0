#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace travdiff {

// Counter-based pseudo-random stream. Every consumer derives its own stream
// from a root seed plus a purpose label, so adding a new consumer never
// shifts the draws seen by existing ones. Implemented on top of splitmix64;
// no <random> distributions are used anywhere because their output is
// implementation-defined and we need byte-identical runs.
class Rng {
 public:
  Rng() = default;
  explicit Rng(uint64_t key) : key_(key) {}

  static uint64_t mix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static uint64_t hash_label(std::string_view label) {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64
    for (char c : label) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  // Child stream for a named purpose (optionally indexed, e.g. per sample).
  static Rng derive(uint64_t root, std::string_view label, uint64_t index = 0) {
    uint64_t k = mix(root ^ hash_label(label));
    k = mix(k ^ (index * 0x9e3779b97f4a7c15ULL + 0x452821e638d01377ULL));
    return Rng(k);
  }

  Rng derive(std::string_view label, uint64_t index = 0) const {
    return derive(key_, label, index);
  }

  uint64_t next_u64() { return mix(key_ + (++ctr_) * 0x9e3779b97f4a7c15ULL); }

  // Uniform in [0,1), 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [lo, hi] inclusive.
  int next_int(int lo, int hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  // Standard normal via Box-Muller. The second variate is discarded so the
  // draw count stays one-to-one with calls.
  double next_gaussian() {
    double u1 = 0.0;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  uint64_t key() const { return key_; }
  uint64_t counter() const { return ctr_; }

 private:
  uint64_t key_ = 0;
  uint64_t ctr_ = 0;
};

}  // namespace travdiff
