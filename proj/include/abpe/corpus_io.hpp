#pragma once

// Token corpora, feature matrices, their on-disk formats, and deterministic
// synthetic data for desk-scale experiments.

#include <abpe/binary_io.hpp>
#include <abpe/error.hpp>
#include <abpe/random.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace abpe {

using TokenId = std::uint32_t;
using TokenSequence = std::vector<TokenId>;

struct Corpus {
  std::vector<TokenSequence> utterances;
  std::size_t vocab_size = 0;

  std::size_t total_tokens() const {
    std::size_t n = 0;
    for (const auto& u : utterances) n += u.size();
    return n;
  }

  bool operator==(const Corpus&) const = default;
};

/// Throws VocabularyError if any id is >= vocab_size.
inline void check_vocabulary(const Corpus& corpus) {
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i)
    for (TokenId id : corpus.utterances[i])
      if (id >= corpus.vocab_size)
        throw VocabularyError("utterance " + std::to_string(i) + ": id " + std::to_string(id) +
                              " >= vocab size " + std::to_string(corpus.vocab_size));
}

/// Row-major N x D matrix of finite reals.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t n, std::size_t d, std::vector<double> v) : rows(n), dim(d), values(std::move(v)) {
    if (n == 0 || d == 0) throw ArgumentError("feature matrix needs N >= 1 and D >= 1");
    if (values.size() != n * d) throw ArgumentError("feature matrix payload does not match N x D");
    for (double x : values)
      if (!std::isfinite(x)) throw ArgumentError("feature matrix contains a non-finite value");
  }

  const double* row(std::size_t i) const { return values.data() + i * dim; }

  bool operator==(const FeatureMatrix&) const = default;
};

// ---------------------------------------------------------------------------
// Token files: optional "#vocab N" header, one utterance per line.

namespace detail {

inline std::uint64_t parse_uint(std::string_view field, const std::string& source, std::size_t line) {
  if (field.empty()) throw FormatError(source, line, "empty token field");
  if (field.front() == '-') throw FormatError(source, line, "negative id \"" + std::string(field) + "\"");
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw FormatError(source, line, "malformed integer \"" + std::string(field) + "\"");
  return value;
}

} // namespace detail

inline Corpus parse_tokens(std::istream& in, const std::string& source = "") {
  Corpus corpus;
  std::optional<std::uint64_t> header_vocab;
  std::uint64_t max_id = 0;
  bool any = false;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (line_no == 1 && text.starts_with("#vocab")) {
      std::string_view rest(text);
      rest.remove_prefix(6);
      if (rest.empty() || rest.front() != ' ') throw FormatError(source, line_no, "malformed #vocab header");
      rest.remove_prefix(1);
      header_vocab = detail::parse_uint(rest, source, line_no);
      if (*header_vocab == 0) throw FormatError(source, line_no, "#vocab must be positive");
      continue;
    }
    if (text.empty()) continue;
    TokenSequence seq;
    std::string_view rest(text);
    while (true) {
      const auto space = rest.find(' ');
      const auto field = rest.substr(0, space);
      const std::uint64_t id = detail::parse_uint(field, source, line_no);
      if (id > UINT32_MAX - 2) throw FormatError(source, line_no, "id out of range");
      if (header_vocab && id >= *header_vocab)
        throw FormatError(source, line_no, "id " + std::to_string(id) + " >= #vocab " + std::to_string(*header_vocab));
      max_id = std::max(max_id, id);
      seq.push_back(static_cast<TokenId>(id));
      if (space == std::string_view::npos) break;
      rest.remove_prefix(space + 1);
    }
    any = true;
    corpus.utterances.push_back(std::move(seq));
  }
  if (!any) throw FormatError(source, line_no, "no utterances in token file");
  corpus.vocab_size = header_vocab ? static_cast<std::size_t>(*header_vocab) : static_cast<std::size_t>(max_id + 1);
  return corpus;
}

inline Corpus load_tokens(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_tokens(in, path.string());
}

inline void write_tokens(std::ostream& out, const Corpus& corpus) {
  if (corpus.vocab_size == 0) throw ArgumentError("corpus vocab size must be positive");
  check_vocabulary(corpus);
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i)
    if (corpus.utterances[i].empty())
      throw ArgumentError("utterance " + std::to_string(i) + " is empty; empty sequences cannot be serialized");
  out << "#vocab " << corpus.vocab_size << '\n';
  std::string line;
  for (const auto& utt : corpus.utterances) {
    line.clear();
    for (std::size_t j = 0; j < utt.size(); ++j) {
      if (j) line += ' ';
      line += std::to_string(utt[j]);
    }
    line += '\n';
    out << line;
  }
}

inline void save_tokens(const Corpus& corpus, const std::filesystem::path& path) {
  std::ostringstream buffer;
  write_tokens(buffer, corpus);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << buffer.str();
  if (!out) throw Error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Features: binary "ABPEFEAT" v1 (f32 payload) or CSV.

inline constexpr std::string_view kFeatureMagic = "ABPEFEAT";
inline constexpr std::uint32_t kFeatureVersion = 1;

inline void write_features_binary(std::ostream& out, const FeatureMatrix& m) {
  binary::write_magic(out, kFeatureMagic);
  binary::write_le<std::uint32_t>(out, kFeatureVersion);
  binary::write_le<std::uint64_t>(out, m.rows);
  binary::write_le<std::uint64_t>(out, m.dim);
  for (double x : m.values) binary::write_f32(out, static_cast<float>(x));
}

inline void write_features_csv(std::ostream& out, const FeatureMatrix& m) {
  char buf[40];
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.dim; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m.values[i * m.dim + j]);
      if (j) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

inline FeatureMatrix read_features_binary(std::istream& in, const std::string& source = "") {
  binary::Reader r(in, source);
  r.expect_magic(kFeatureMagic);
  if (const auto v = r.read_le<std::uint32_t>(); v != kFeatureVersion)
    r.fail("unsupported feature version " + std::to_string(v));
  const auto n = r.read_le<std::uint64_t>();
  const auto d = r.read_le<std::uint64_t>();
  if (n == 0 || d == 0) r.fail("feature matrix needs N >= 1 and D >= 1");
  if (d > (1ull << 32) || n > (1ull << 40) / d) r.fail("implausible feature dimensions");
  std::vector<double> values;
  values.reserve(n * d);
  for (std::uint64_t i = 0; i < n * d; ++i) {
    const float x = r.read_f32();
    if (!std::isfinite(x)) r.fail("non-finite value at index " + std::to_string(i));
    values.push_back(x);
  }
  r.expect_end();
  return FeatureMatrix(n, d, std::move(values));
}

inline FeatureMatrix read_features_csv(std::istream& in, const std::string& source = "") {
  std::vector<double> values;
  std::size_t dim = 0, rows = 0, line_no = 0;
  std::string text;
  while (std::getline(in, text)) {
    ++line_no;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.empty()) continue;
    std::size_t cols = 0;
    std::string_view rest(text);
    while (true) {
      const auto comma = rest.find(',');
      auto field = rest.substr(0, comma);
      while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
      while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
      double x = 0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), x);
      if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size())
        throw FormatError(source, line_no, "malformed number \"" + std::string(field) + "\"");
      if (!std::isfinite(x)) throw FormatError(source, line_no, "non-finite value");
      values.push_back(x);
      ++cols;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (rows == 0) dim = cols;
    else if (cols != dim)
      throw FormatError(source, line_no, "expected " + std::to_string(dim) + " columns, got " + std::to_string(cols));
    ++rows;
  }
  if (rows == 0) throw FormatError(source, line_no, "no rows in feature CSV");
  return FeatureMatrix(rows, dim, std::move(values));
}

/// Detects the binary format by its magic; anything else is parsed as CSV.
inline FeatureMatrix load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char head[8] = {};
  in.read(head, sizeof head);
  const bool is_binary = in.gcount() == 8 && std::string_view(head, 8) == kFeatureMagic;
  in.clear();
  in.seekg(0);
  return is_binary ? read_features_binary(in, path.string()) : read_features_csv(in, path.string());
}

enum class FeatureFormat { binary, csv };

inline void save_features(const FeatureMatrix& m, const std::filesystem::path& path,
                          FeatureFormat format = FeatureFormat::binary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  if (format == FeatureFormat::binary) write_features_binary(out, m);
  else write_features_csv(out, m);
  if (!out) throw Error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Synthetic corpora.

struct SynthSpec {
  std::size_t vocab_size = 50;
  std::size_t n_utts = 2000;
  std::size_t len_min = 20;
  std::size_t len_max = 80;
  std::size_t motif_count = 5;
  std::size_t motif_len_min = 3;
  std::size_t motif_len_max = 8;
  double motif_rate = 0.6;
  double zipf_exponent = 1.1;
  std::uint64_t seed = 0;
  /// Explicit motifs; when empty, motif_count motifs are drawn from the seed.
  std::vector<TokenSequence> motifs;
};

namespace detail {

class ZipfSampler {
public:
  ZipfSampler(std::size_t n, double exponent) : cdf_(n) {
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      total += 1.0 / std::pow(static_cast<double>(r + 1), exponent);
      cdf_[r] = total;
    }
    for (double& c : cdf_) c /= total;
  }

  TokenId operator()(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return static_cast<TokenId>(std::min<std::size_t>(it - cdf_.begin(), cdf_.size() - 1));
  }

private:
  std::vector<double> cdf_;
};

} // namespace detail

/// Motif list actually used for a spec (explicit ones, or the seeded draw).
inline std::vector<TokenSequence> synth_motifs(const SynthSpec& spec, Rng& rng) {
  if (!spec.motifs.empty()) return spec.motifs;
  std::vector<TokenSequence> motifs(spec.motif_count);
  for (auto& m : motifs) {
    m.resize(rng.between(spec.motif_len_min, spec.motif_len_max));
    for (auto& id : m) id = static_cast<TokenId>(rng.index(spec.vocab_size));
  }
  return motifs;
}

/// Utterances interleave Zipf-distributed tokens with whole motifs: at each
/// step a motif is appended with probability motif_rate, otherwise a single
/// Zipf token. Generation stops once the drawn target length is reached, so
/// motifs are never truncated.
inline Corpus synth_corpus(const SynthSpec& spec) {
  if (spec.vocab_size < 2) throw ArgumentError("synth: vocab_size must be >= 2");
  if (spec.n_utts == 0) throw ArgumentError("synth: n_utts must be >= 1");
  if (spec.len_min == 0 || spec.len_min > spec.len_max) throw ArgumentError("synth: invalid length range");
  if (!(spec.motif_rate >= 0.0 && spec.motif_rate <= 1.0)) throw ArgumentError("synth: motif_rate must lie in [0,1]");
  if (!(spec.zipf_exponent >= 0.0) || !std::isfinite(spec.zipf_exponent))
    throw ArgumentError("synth: zipf_exponent must be finite and >= 0");
  if (spec.motifs.empty() && spec.motif_rate > 0.0) {
    if (spec.motif_count == 0) throw ArgumentError("synth: motif_rate > 0 needs at least one motif");
    if (spec.motif_len_min == 0 || spec.motif_len_min > spec.motif_len_max)
      throw ArgumentError("synth: invalid motif length range");
  }
  for (const auto& m : spec.motifs) {
    if (m.empty()) throw ArgumentError("synth: explicit motifs must be non-empty");
    for (TokenId id : m)
      if (id >= spec.vocab_size) throw ArgumentError("synth: motif id out of vocabulary");
  }

  Rng rng(spec.seed);
  const detail::ZipfSampler zipf(spec.vocab_size, spec.zipf_exponent);
  const auto motifs = spec.motif_rate > 0.0 ? synth_motifs(spec, rng) : std::vector<TokenSequence>{};

  Corpus corpus;
  corpus.vocab_size = spec.vocab_size;
  corpus.utterances.reserve(spec.n_utts);
  for (std::size_t u = 0; u < spec.n_utts; ++u) {
    const auto target = rng.between(spec.len_min, spec.len_max);
    TokenSequence seq;
    while (seq.size() < target) {
      if (!motifs.empty() && rng.uniform() < spec.motif_rate) {
        const auto& m = motifs[rng.index(motifs.size())];
        seq.insert(seq.end(), m.begin(), m.end());
      } else {
        seq.push_back(zipf(rng));
      }
    }
    corpus.utterances.push_back(std::move(seq));
  }
  return corpus;
}

/// Feature frames for the concatenated token stream of a corpus: each token
/// id owns a centre drawn uniformly in [-10, 10]^dim and every frame is that
/// centre plus isotropic Gaussian noise of the given spread.
inline FeatureMatrix synth_features(const Corpus& labels, std::size_t dim, double spread, std::uint64_t seed) {
  if (dim == 0) throw ArgumentError("synth_features: dim must be >= 1");
  if (!(spread >= 0.0) || !std::isfinite(spread)) throw ArgumentError("synth_features: spread must be finite and >= 0");
  const std::size_t rows = labels.total_tokens();
  if (rows == 0) throw ArgumentError("synth_features: empty label corpus");
  Rng rng(seed);
  std::vector<double> centres(labels.vocab_size * dim);
  for (double& c : centres) c = -10.0 + 20.0 * rng.uniform();
  std::vector<double> values;
  values.reserve(rows * dim);
  for (const auto& utt : labels.utterances)
    for (TokenId id : utt)
      for (std::size_t j = 0; j < dim; ++j) values.push_back(centres[id * dim + j] + spread * rng.normal());
  return FeatureMatrix(rows, dim, std::move(values));
}

} // namespace abpe
