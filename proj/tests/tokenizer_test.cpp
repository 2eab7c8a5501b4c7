#include <sstream>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace frugal;

namespace {

// Independent count: stream extraction splits on whitespace.
std::size_t word_count(const std::string& s) {
  std::istringstream in(s);
  std::size_t n = 0;
  std::string w;
  while (in >> w) ++n;
  return n;
}

}  // namespace

TEST(Tokenizer, Whitespace) {
  EXPECT_EQ(measure_length("a b  c"), 3u);
  EXPECT_EQ(measure_length(""), 0u);
  EXPECT_EQ(measure_length("  \n\t "), 0u);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    auto s = fptest::random_words(rng, 0, 30);
    for (auto& c : s) {
      if (c == ' ' && rng() % 3 == 0) c = '\n';
    }
    EXPECT_EQ(measure_length(s), word_count(s));
  }
}

TEST(Tokenizer, Char4) {
  EXPECT_EQ(measure_length("", "char4"), 0u);
  EXPECT_EQ(measure_length("abcd", "char4"), 1u);
  EXPECT_EQ(measure_length("abcde", "char4"), 2u);
}

TEST(Tokenizer, Unknown) { EXPECT_THROW(measure_length("x", "nope"), UnknownTokenizer); }

TEST(Hashing, KnownDigest) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
