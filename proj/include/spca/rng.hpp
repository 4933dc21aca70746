#pragma once

#include <cmath>
#include <cstdint>

namespace spca {

// Deterministic, seed-stable random numbers. Streams are derived from a
// (seed, counter) pair so that substream i is the same no matter which
// thread draws it or in which order substreams are created.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Stateless mixing of two 64-bit values into one stream key.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (0x9e3779b97f4a7c15ull + (b << 1));
  (void)splitmix64(s);
  return splitmix64(s);
}

// Mix a short tag into a seed; used to split one user seed into
// independent streams (model / data / solver init).
inline std::uint64_t tag_seed(std::uint64_t seed, const char* tag) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const char* p = tag; *p; ++p) h = (h ^ static_cast<std::uint64_t>(*p)) * 0x100000001b3ull;
  return mix_seed(seed, h);
}

class Xoshiro256pp {
 public:
  explicit Xoshiro256pp(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& w : s_) w = splitmix64(s);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; second value of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Counter-based stream handle. fork() hands out the substream at the current
// cursor and advances it; at() addresses a substream without advancing, which
// is what per-sample parallel generation uses.
class RngState {
 public:
  explicit RngState(std::uint64_t seed) : seed_(seed) {}

  Xoshiro256pp at(std::uint64_t index) const { return Xoshiro256pp(mix_seed(seed_, index)); }

  Xoshiro256pp fork() { return at(cursor_++); }

  void skip(std::uint64_t n) { cursor_ += n; }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t cursor() const { return cursor_; }

 private:
  std::uint64_t seed_;
  std::uint64_t cursor_ = 0;
};

}  // namespace spca
