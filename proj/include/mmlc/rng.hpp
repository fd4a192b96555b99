#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace mmlc {

// All stochastic behaviour in the library flows through these helpers.
// std::uniform_real_distribution and std::normal_distribution are
// implementation-defined, so seeded runs would not be bit-identical across
// standard libraries; the transforms below are pinned instead.

// Uniform double in [0, 1): top 53 bits of one mt19937_64 draw.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, bound). Bias from the modulo-free scaling is below
// 2^-53 per draw, which is irrelevant for minibatch sampling.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t bound) {
  return static_cast<std::uint64_t>(uniform01(rng) * static_cast<double>(bound));
}

// Standard normal via Box-Muller. u1 is shifted into (0, 1] so log(u1) is
// always finite.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = (static_cast<double>(rng_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// splitmix64 finaliser; used to derive independent substreams (init, batch
// schedule, noise injection, ...) from one run seed without overlap.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace mmlc
