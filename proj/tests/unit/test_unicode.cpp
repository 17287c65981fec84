#include <gtest/gtest.h>

#include "mtlens/rng.hpp"
#include "mtlens/unicode.hpp"

using namespace mtlens;
using namespace mtlens::unicode;

TEST(Unicode, DecodeEncodeRoundTrip) {
  const std::string s = "héllo 東京 🇫🇷 é";
  EXPECT_TRUE(is_valid_utf8(s));
  EXPECT_EQ(encode(decode(s)), s);
  EXPECT_FALSE(is_valid_utf8("\xc3\x28"));
  EXPECT_FALSE(is_valid_utf8("\xed\xa0\x80"));  // surrogate
  EXPECT_EQ(decode("\xff")[0], U'�');
}

TEST(Unicode, Classes) {
  EXPECT_TRUE(is_punctuation(U','));
  EXPECT_TRUE(is_punctuation(U'、'));
  EXPECT_TRUE(is_symbol(U'$'));
  EXPECT_TRUE(is_symbol(U'€'));
  EXPECT_TRUE(is_number(U'٣'));
  EXPECT_TRUE(is_mark(U'́'));
  EXPECT_TRUE(is_space(U'　'));
  EXPECT_FALSE(is_punctuation(U'a'));
}

TEST(Unicode, Lower) {
  EXPECT_EQ(lower(std::string_view("ÀÉÎ Straße")), "àéî straße");
  EXPECT_EQ(encode(lower(decode("İ"))), "i̇");
  EXPECT_EQ(lower(std::string_view("ΟΔΟΣ")), "οδος");
}

TEST(Unicode, SplitAndStrip) {
  EXPECT_EQ(split_whitespace(std::string_view("  a\t b　c ")), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(rstrip("abc \t\n"), "abc");
  EXPECT_EQ(rstrip("\xff  "), "\xff");
}

TEST(Unicode, Graphemes) {
  EXPECT_EQ(grapheme_count("éa"), 2u);
  EXPECT_EQ(grapheme_count("🇫🇷"), 1u);
  EXPECT_EQ(grapheme_count("👍🏽"), 1u);
  EXPECT_EQ(grapheme_count("👨‍👩‍👧"), 1u);
  EXPECT_EQ(grapheme_count("東京"), 2u);
}

TEST(Rng, SplitMixKnownValues) {
  // Reference outputs of SplitMix64 seeded with 0.
  SplitMix64 g(0);
  EXPECT_EQ(g.next(), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(g.next(), 0x6E789E6AA1B965F4ULL);
  SplitMix64 b(123);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(b.bounded(7), 7u);
}
