#include <abpe/corpus_io.hpp>

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace abpe;

namespace {

Corpus parse(const std::string& text) {
  std::istringstream in(text);
  return parse_tokens(in, "mem");
}

} // namespace

TEST(TokenFile, ParsesUtterancesAndInfersVocab) {
  const Corpus c = parse("0 1 2\n3 3\n");
  EXPECT_EQ(c.utterances, (std::vector<TokenSequence>{{0, 1, 2}, {3, 3}}));
  EXPECT_EQ(c.vocab_size, 4u);
}

TEST(TokenFile, HeaderOverridesVocab) {
  auto dir = test::scratch_dir("header");
  test::write_file(dir / "a.tok", "#vocab 2000\n5\n");
  const Corpus c = load_tokens(dir / "a.tok");
  EXPECT_EQ(c.vocab_size, 2000u);
  save_tokens(c, dir / "b.tok");
  EXPECT_EQ(load_tokens(dir / "b.tok"), c);
}

TEST(TokenFile, SkipsBlankLines) {
  EXPECT_EQ(parse("1\n\n2\n").utterances.size(), 2u);
}

TEST(TokenFile, RejectsNegativeIdWithLineNumber) {
  try {
    parse("1 -2\n");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 1u);
    EXPECT_NE(std::string(e.what()).find("negative"), std::string::npos);
  }
}

TEST(TokenFile, RejectsMalformedAndEmpty) {
  try {
    parse("1 2\n3 x\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse(""), FormatError);
  EXPECT_THROW(parse("#vocab 4\n"), FormatError);
  EXPECT_THROW(parse("1  2\n"), FormatError); // double space
  EXPECT_THROW(parse("#vocab 2\n0 5\n"), FormatError);
}

TEST(TokenFile, WritesHeaderAndRejectsEmptyUtterances) {
  std::ostringstream s;
  write_tokens(s, Corpus{{{0}}, 1});
  EXPECT_EQ(s.str(), "#vocab 1\n0\n");
  std::ostringstream t;
  EXPECT_THROW(write_tokens(t, Corpus{{{0}, {}}, 1}), ArgumentError);
}

TEST(TokenFile, RoundTripRandomCorpus) {
  Rng rng(11);
  Corpus c{{}, 300};
  for (int i = 0; i < 1000; ++i) {
    TokenSequence u(rng.between(1, 40));
    for (auto& id : u) id = static_cast<TokenId>(rng.index(300));
    c.utterances.push_back(u);
  }
  std::stringstream s;
  write_tokens(s, c);
  EXPECT_EQ(parse_tokens(s), c);
}

TEST(Features, CsvParse) {
  std::istringstream in("1,2,3\n4,5,6");
  const auto m = read_features_csv(in);
  EXPECT_EQ(m.rows, 2u);
  EXPECT_EQ(m.dim, 3u);
  EXPECT_EQ(m.values, (std::vector<double>{1, 2, 3, 4, 5, 6}));
  std::istringstream ragged("1,2\n3\n");
  EXPECT_THROW(read_features_csv(ragged), FormatError);
  std::istringstream bad("1,nan\n");
  EXPECT_THROW(read_features_csv(bad), FormatError);
}

TEST(Features, BinaryRejectsZeroRowsBadMagicAndTruncation) {
  std::ostringstream s;
  binary::write_magic(s, kFeatureMagic);
  binary::write_le<std::uint32_t>(s, 1);
  binary::write_le<std::uint64_t>(s, 0);
  binary::write_le<std::uint64_t>(s, 3);
  std::istringstream zero(s.str());
  EXPECT_THROW(read_features_binary(zero), FormatError);

  std::ostringstream good;
  write_features_binary(good, FeatureMatrix(2, 2, {1, 2, 3, 4}));
  std::string bytes = good.str();
  std::istringstream truncated(bytes.substr(0, bytes.size() - 1));
  EXPECT_THROW(read_features_binary(truncated), FormatError);
  bytes[0] = 'X';
  std::istringstream magic(bytes);
  EXPECT_THROW(read_features_binary(magic), FormatError);
}

TEST(Features, BinaryRejectsNonFinite) {
  std::ostringstream s;
  binary::write_magic(s, kFeatureMagic);
  binary::write_le<std::uint32_t>(s, 1);
  binary::write_le<std::uint64_t>(s, 1);
  binary::write_le<std::uint64_t>(s, 1);
  binary::write_f32(s, std::numeric_limits<float>::infinity());
  std::istringstream in(s.str());
  EXPECT_THROW(read_features_binary(in), FormatError);
}

TEST(Features, BinaryAndCsvCrossLoadAgree) {
  auto dir = test::scratch_dir("features");
  Rng rng(3);
  std::vector<double> v(7 * 5);
  for (double& x : v) x = static_cast<float>(rng.normal() * 4.0); // float-exact values
  const FeatureMatrix m(7, 5, v);
  save_features(m, dir / "f.bin", FeatureFormat::binary);
  save_features(m, dir / "f.csv", FeatureFormat::csv);
  const auto a = load_features(dir / "f.bin");
  const auto b = load_features(dir / "f.csv");
  ASSERT_EQ(a.rows, b.rows);
  ASSERT_EQ(a.dim, b.dim);
  for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-6);
  EXPECT_EQ(a, m);
}

TEST(Synth, DeterministicAndInVocabulary) {
  SynthSpec spec;
  spec.n_utts = 200;
  spec.motif_rate = 0.0;
  spec.seed = 5;
  const Corpus a = synth_corpus(spec);
  const Corpus b = synth_corpus(spec);
  EXPECT_EQ(a, b);
  EXPECT_NO_THROW(check_vocabulary(a));
  std::ostringstream sa, sb;
  write_tokens(sa, a);
  write_tokens(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  spec.seed = 6;
  EXPECT_NE(synth_corpus(spec), a);
}

TEST(Synth, FullMotifRateConcatenatesTheMotif) {
  SynthSpec spec;
  spec.vocab_size = 10;
  spec.n_utts = 50;
  spec.motif_rate = 1.0;
  spec.motifs = {{3, 1, 4}};
  spec.seed = 1;
  for (const auto& u : synth_corpus(spec).utterances) {
    ASSERT_EQ(u.size() % 3, 0u);
    for (std::size_t i = 0; i < u.size(); i += 3) EXPECT_EQ(TokenSequence(u.begin() + i, u.begin() + i + 3), (TokenSequence{3, 1, 4}));
  }
}

TEST(Synth, RejectsInvalidSpecs) {
  SynthSpec spec;
  spec.vocab_size = 1;
  EXPECT_THROW(synth_corpus(spec), ArgumentError);
  spec = {};
  spec.motif_rate = 1.5;
  EXPECT_THROW(synth_corpus(spec), ArgumentError);
  spec = {};
  spec.len_min = 10;
  spec.len_max = 5;
  EXPECT_THROW(synth_corpus(spec), ArgumentError);
}

TEST(Synth, FeaturesFollowLabels) {
  const Corpus labels{{{0, 1, 0}, {1}}, 2};
  const auto f = synth_features(labels, 3, 0.0, 9);
  EXPECT_EQ(f.rows, 4u);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(f.row(0)[j], f.row(2)[j]);
    EXPECT_EQ(f.row(1)[j], f.row(3)[j]);
  }
}
