#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "hawkes/random.hpp"

using namespace hawkes;

// Known-answer vectors for Philox4x32-10 from the reference implementation.
TEST(Philox, KnownAnswers) {
  auto zero = Philox4x32::generate({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(zero, (Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));

  auto ones = Philox4x32::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(ones, (Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));

  auto pi = Philox4x32::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(pi, (Philox4x32::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Random, OpenUnitNeverHitsEndpoints) {
  EXPECT_GT(to_open_unit(0), 0.0);
  EXPECT_LT(to_open_unit(~0ULL), 1.0);
}

TEST(Random, DerivedSeedsDiffer) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(42, i));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
}

TEST(Random, MarkStreamIsReproducibleAndStreamsAreDistinct) {
  MarkStream a(7, 3), b(7, 3), c(7, 4);
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    EXPECT_NE(x, c.uniform());
  }
}

TEST(Random, GaussianMoments) {
  // 10^4 standard normal draws: mean 0 +- 0.03, variance 1 +- 0.05.
  const int n = 10000;
  double s = 0, ss = 0;
  for (int i = 0; i < n; ++i) {
    const double g = gaussian_at(2024, 0, i);
    s += g;
    ss += g * g;
  }
  const double mean = s / n, var = ss / n - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.03);
  EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(Random, ExponentialMean) {
  MarkStream m(11, 0);
  double s = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) s += m.exponential();
  EXPECT_NEAR(s / n, 1.0, 0.03);
}
