#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "ccv/random.hpp"

TEST(Random, DeriveSeedIsDeterministic) {
  static_assert(ccv::derive_seed(1, 2, 3) == ccv::derive_seed(1, 2, 3));
  EXPECT_EQ(ccv::derive_seed(42, 0), ccv::derive_seed(42, 0, 0));
}

TEST(Random, DerivedSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t index = 0; index < 64; ++index)
    for (std::uint64_t stream = 0; stream < 4; ++stream)
      seen.insert(ccv::derive_seed(7, index, stream));
  EXPECT_EQ(seen.size(), 64u * 4u);
  EXPECT_NE(ccv::derive_seed(7, 0), ccv::derive_seed(8, 0));
}

TEST(Random, Uniform01StaysInOpenInterval) {
  ccv::Rng rng(1);
  double sum = 0.0;
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    const double u = ccv::uniform01(rng);
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  // SE of the mean is sqrt(1/12/n).
  EXPECT_NEAR(sum / n, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST(Random, ExponentialMean) {
  ccv::Rng rng(2);
  const double rate = 2.5;
  const int n = 200000;
  double sum = 0.0;
  for (int k = 0; k < n; ++k) sum += ccv::exponential(rng, rate);
  EXPECT_NEAR(sum / n, 1.0 / rate, 4.0 / rate / std::sqrt(n));
}

TEST(Random, SameSeedSameSequence) {
  ccv::Rng a(99), b(99);
  for (int k = 0; k < 1000; ++k) ASSERT_EQ(ccv::uniform01(a), ccv::uniform01(b));
}
