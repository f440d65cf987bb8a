#include <doctest.h>

#include <array>
#include <cmath>
#include <stdexcept>

#include "mmsr/rng.hpp"

using namespace mmsr;

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("splitmix64 first output from a zero state") {
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
}

TEST_CASE("mix_seed separates salts and seeds") {
  CHECK(mix_seed(1, "audio") != mix_seed(1, "ocr"));
  CHECK(mix_seed(1, "audio") != mix_seed(2, "audio"));
  CHECK(mix_seed(7, std::uint64_t{3}) == mix_seed(7, std::uint64_t{3}));
}

TEST_CASE("Rng streams are reproducible") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a() == b());
}

TEST_CASE("below covers its range uniformly") {
  Rng rng(5);
  constexpr int kBins = 7;
  constexpr int kDraws = 70000;
  std::array<int, kBins> counts{};
  for (int i = 0; i < kDraws; ++i) {
    const auto v = rng.below(kBins);
    REQUIRE(v < kBins);
    ++counts[v];
  }
  double chi2 = 0.0;
  const double expected = static_cast<double>(kDraws) / kBins;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 22.46);  // chi-squared, 6 dof, p = 0.001
  CHECK_THROWS_AS(rng.below(0), std::invalid_argument);
}

TEST_CASE("uniform and normal moments") {
  Rng rng(9);
  constexpr int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(std::abs(su / n - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
  CHECK(std::abs(sn / n) < 4.0 / std::sqrt(n));
  CHECK(std::abs(sn2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
}
