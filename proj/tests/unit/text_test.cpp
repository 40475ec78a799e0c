#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "coachpipe/text.hpp"

using namespace coachpipe::text;

TEST(Text, SplitWhitespaceDropsEmptyTokens) {
  EXPECT_EQ(split_whitespace("  a \t b\n\nc  "), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_TRUE(split_whitespace("   ").empty());
  EXPECT_TRUE(split_whitespace("").empty());
}

TEST(Text, JoinAndTrim) {
  EXPECT_EQ(join({"a", "b", "c"}, ", "), "a, b, c");
  EXPECT_EQ(join({}, ","), "");
  EXPECT_EQ(trim("  x y \n"), "x y");
  EXPECT_TRUE(is_blank(" \t\n"));
  EXPECT_FALSE(is_blank(" a "));
}

TEST(Text, LowerCasesAsciiOnly) {
  EXPECT_EQ(to_lower_ascii("Walk ÄB 5K"), "walk Äb 5k");
}

TEST(Text, Fnv1aKnownValues) {
  // Published FNV-1a 64-bit test vectors.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Text, MixSeedSeparatesStreams) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 4; ++s)
    for (std::uint64_t stream = 0; stream < 64; ++stream) seen.insert(mix_seed(s, stream));
  EXPECT_EQ(seen.size(), 256u);
  EXPECT_EQ(mix_seed(7, 3), mix_seed(7, 3));
}

TEST(Text, Uniform01InRangeAndReproducible) {
  std::mt19937_64 a(5), b(5);
  for (int i = 0; i < 1000; ++i) {
    double x = uniform01(a);
    ASSERT_GE(x, 0.0);
    ASSERT_LT(x, 1.0);
    ASSERT_EQ(x, uniform01(b));
  }
}

TEST(Text, UniformIndexCoversRange) {
  std::mt19937_64 rng(1);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) ++counts[uniform_index(rng, 7)];
  for (int c : counts) EXPECT_GT(c, 800);
}

TEST(Text, ShuffleIsAPermutation) {
  std::mt19937_64 rng(9);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  auto w = v;
  shuffle(w, rng);
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(Text, FormatNumberRoundTrips) {
  EXPECT_EQ(format_number(3.0), "3");
  EXPECT_EQ(format_number(0.5), "0.5");
  for (double x : {0.1, 1.0 / 3.0, 12345.678, -2.5e-7}) EXPECT_EQ(std::stod(format_number(x)), x);
}
