#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace freqact {

// xoshiro256** with splitmix64 seeding. Self-contained so that sequences are
// reproducible bit-for-bit independent of the standard library in use, which
// keeps golden files and checkpoint resume stable.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& w : s_) w = splitmix64(x);
  }

  // Independent stream derived from (seed, stream_id); used for per-episode
  // and per-draw parallelism so results do not depend on thread scheduling.
  static Rng stream(uint64_t seed, uint64_t stream_id) {
    return Rng(seed ^ (0x9e3779b97f4a7c15ULL + stream_id * 0xbf58476d1ce4e5b9ULL));
  }

  uint64_t next() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive bounds. Fixed-point scaling; bias is O(2^-64).
  int uniform_int(int lo, int hi) {
    const uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
    const uint64_t r = static_cast<uint64_t>(
        (static_cast<unsigned __int128>(next()) * range) >> 64);
    return lo + static_cast<int>(r);
  }

  // Standard normal, Marsaglia polar method. No cached spare so the full
  // generator state is s_[0..3], which keeps checkpointing trivial.
  double normal() {
    for (;;) {
      const double u = uniform(-1.0, 1.0);
      const double v = uniform(-1.0, 1.0);
      const double q = u * u + v * v;
      if (q > 0.0 && q < 1.0) return u * std::sqrt(-2.0 * std::log(q) / q);
    }
  }

  std::array<uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<uint64_t, 4>& s) { s_ = s; }

 private:
  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<uint64_t, 4> s_{};
};

}  // namespace freqact
