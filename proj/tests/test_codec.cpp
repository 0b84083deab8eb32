#include <abpe/codec.hpp>

#include <gtest/gtest.h>

#include <sstream>

using namespace abpe;

TEST(Codec, RegionEndpoints) {
  EXPECT_EQ(tokens_to_unicode({0}), "\xE4\xB8\x80");      // U+4E00
  EXPECT_EQ(tokens_to_unicode({20991}), "\xE9\xBF\xBF");  // U+9FFF
  EXPECT_EQ(tokens_to_unicode({}), "");
  EXPECT_EQ(kCodecCapacity, 20992u);
}

TEST(Codec, CapacityIsEnforced) { EXPECT_THROW(tokens_to_unicode({20992}), VocabularyError); }

TEST(Codec, DecodesInOrder) {
  EXPECT_EQ(unicode_to_tokens("\xE4\xB8\x81\xE4\xB8\x80"), (TokenSequence{1, 0}));
}

TEST(Codec, RejectsOutOfRegionWithOffset) {
  try {
    unicode_to_tokens("A");
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  try {
    unicode_to_tokens("\xE4\xB8\x80\xE3\x80\x80"); // U+3000 after one valid char
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.offset(), 1u);
  }
  EXPECT_THROW(unicode_to_tokens("\xE4\xB8"), DecodeError);
}

TEST(Codec, RoundTripPreservesLength) {
  Rng rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    TokenSequence s(rng.index(60));
    for (auto& id : s) id = static_cast<TokenId>(rng.index(kCodecCapacity));
    const auto text = tokens_to_unicode(s);
    EXPECT_EQ(text.size(), 3 * s.size());
    EXPECT_EQ(unicode_to_tokens(text), s);
  }
}

TEST(Codec, EveryRegionScalarRoundTrips) {
  for (char32_t cp = kCodecBase; cp <= kCodecLast; ++cp) {
    std::string s{char(0xE0 | (cp >> 12)), char(0x80 | ((cp >> 6) & 0x3F)), char(0x80 | (cp & 0x3F))};
    ASSERT_EQ(tokens_to_unicode(unicode_to_tokens(s)), s);
  }
}

TEST(Codec, CorpusFileRoundTrip) {
  const Corpus c{{{0, 5, 5}, {20991}}, 20992};
  std::stringstream s;
  write_unicode_corpus(s, c);
  const Corpus back = parse_unicode_corpus(s);
  EXPECT_EQ(back.utterances, c.utterances);
  std::istringstream bad("\xE4\xB8\x80\nxyz\n");
  try {
    parse_unicode_corpus(bad, "u.txt");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}
