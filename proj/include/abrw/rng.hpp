#pragma once

#include <cmath>
#include <cstdint>

namespace abrw {

// Counter-based generator: output i of stream s is a pure function of
// (seed, s, i), so replica streams are independent and replayable without
// storing state. The mixer is the SplitMix64 finalizer.
class CounterRng {
 public:
  CounterRng() = default;
  CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : base_(mix(seed ^ 0x9e3779b97f4a7c15ull) ^
              mix(stream + 0xbf58476d1ce4e5b9ull)) {}

  std::uint64_t next_u64() { return mix(base_ + (++counter_) * 0x9e3779b97f4a7c15ull); }

  // uniform in [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n); multiply-shift map, deterministic across platforms
  std::uint64_t uniform_index(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  double exponential(double rate) {
    // uniform() < 1 always, so the log argument stays positive
    return -std::log1p(-uniform()) / rate;
  }

  double normal() {
    // Box-Muller, one value per call (the sine branch is discarded)
    double u1 = uniform();
    double u2 = uniform();
    while (u1 == 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  std::uint64_t counter() const { return counter_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t base_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace abrw
