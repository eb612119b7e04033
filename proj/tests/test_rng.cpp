#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "pompkit/rng.hpp"

using namespace pompkit;

TEST(Philox, KnownAnswerVectors) {
  using P = Philox4x32;
  EXPECT_EQ(P::apply({0, 0, 0, 0}, {0, 0}), (P::Counter{0x6627e8d5U, 0xe169c58dU, 0xbc57ac4cU, 0x9b00dbd8U}));
  EXPECT_EQ(P::apply({0xffffffffU, 0xffffffffU, 0xffffffffU, 0xffffffffU}, {0xffffffffU, 0xffffffffU}),
            (P::Counter{0x408f276dU, 0x41c83b0eU, 0xa20bc7c6U, 0x6d5451fdU}));
  EXPECT_EQ(P::apply({0x243f6a88U, 0x85a308d3U, 0x13198a2eU, 0x03707344U}, {0xa4093822U, 0x299f31d0U}),
            (P::Counter{0xd16cfe09U, 0x94fdccebU, 0x5001e420U, 0x24126ea1U}));
}

TEST(RngStream, SameSeedAndPathReplays) {
  const RngStream a = RngStream(7).substream("rep").substream("3");
  const RngStream b = RngStream(7).substream({"rep", "3"});
  EXPECT_EQ(a, b);
  auto ea = a.engine(5);
  auto eb = b.engine(5);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(ea(), eb());
  EXPECT_EQ(RngStream(7).substream("rep", 3), a);
  EXPECT_EQ(a.path_string(), "rep/3");
}

TEST(RngStream, DistinctLabelsGiveDistinctDraws) {
  auto ea = RngStream(1).substream("a").engine();
  auto eb = RngStream(1).substream("b").engine();
  int equal = 0;
  for (int i = 0; i < 1000; ++i) equal += ea() == eb();
  EXPECT_EQ(equal, 0);
  EXPECT_NE(RngStream(1).engine(0)(), RngStream(1).engine(1)());
}

TEST(RngStream, SubstreamsPassTwoSampleKolmogorovSmirnov) {
  const std::size_t n = 10000;
  std::vector<double> a(n), b(n);
  auto ea = RngStream(42).substream("a").engine();
  auto eb = RngStream(42).substream("b").engine();
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = ea.uniform();
    b[i] = eb.uniform();
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < n && j < n) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    d = std::max(d, std::abs(static_cast<double>(i) - static_cast<double>(j)) / static_cast<double>(n));
  }
  const double critical = std::sqrt(-0.5 * std::log(0.001 / 2.0)) * std::sqrt(2.0 / static_cast<double>(n));
  EXPECT_LT(d, critical);
}

TEST(RandomEngine, NormalMomentsAndUniformRange) {
  auto e = RngStream(3).engine();
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = e.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
  for (int i = 0; i < 10000; ++i) {
    const double u = e.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[e.below(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}
