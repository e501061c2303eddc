#pragma once

#include <cstdint>

namespace flowtse {

// Deterministic RNG with a portable output sequence. The standard
// distributions are implementation-defined, so uniform/normal are
// generated here from raw 64-bit draws; identical seeds give identical
// streams on every platform and standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {
    // decorrelate small seeds
    next_u64();
    next_u64();
  }

  // splitmix64 step
  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform on [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  uint64_t uniform_int(uint64_t n);

  // standard normal via Box-Muller (one value per call, no caching so
  // the stream stays position-independent)
  double normal();

  // child stream for parallel-safe per-item derivation
  static uint64_t derive_seed(uint64_t base_seed, uint64_t index);

 private:
  uint64_t state_;
};

}  // namespace flowtse
