#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace advdrop {

// Deterministic generator behind every stochastic choice in the library.
// Distributions are hand-rolled on top of the (bit-exact) mt19937_64 stream
// so that results are reproducible across platforms. Draw counts are
// tracked so inference paths can be audited for sampler use.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), gen_(splitmix(seed)) {}

  uint64_t next_u64() {
    ++draws_;
    return gen_();
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
    const uint64_t span = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return static_cast<int>(v % span);
  }

  bool bernoulli(double p_true) { return uniform() < p_true; }

  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  uint64_t draws() const { return draws_; }
  uint64_t seed() const { return seed_; }

  // Independent child stream; deterministic in (seed, stream).
  Rng split(uint64_t stream) const {
    return Rng(splitmix(seed_ ^ (0x9e3779b97f4a7c15ULL * (2 * stream + 1))));
  }

 private:
  static uint64_t splitmix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  uint64_t seed_;
  std::mt19937_64 gen_;
  uint64_t draws_ = 0;
};

}  // namespace advdrop
