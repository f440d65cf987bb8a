#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mmsr {

// Seed mixing. Every stochastic component derives its stream from a parent
// seed plus a salt, so results never depend on call order across modules.
std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept;
std::uint64_t mix_seed(std::uint64_t seed, std::string_view salt) noexcept;

// 64-bit FNV-1a, used for content hashes (config hashes, artifact keys).
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

// Thin wrapper over mt19937_64. The standard distributions are
// implementation-defined, so bounded integers, uniforms and normals are
// derived here to keep datasets and checkpoints byte-identical across
// toolchains.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  // Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);
  // Uniform double in [0, 1) with 53 random bits.
  double uniform();
  bool bernoulli(double p) { return uniform() < p; }
  // Standard normal via Box-Muller.
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mmsr
