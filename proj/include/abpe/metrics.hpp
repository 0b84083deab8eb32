#pragma once

// Evaluation metrics: compression, syntax discrimination, n-gram diversity
// (self-BLEU, auto-BLEU, VERT) and cross-entropy under a reference model.

#include <abpe/corpus_io.hpp>
#include <abpe/error.hpp>
#include <abpe/random.hpp>
#include <abpe/slm.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace abpe {

/// Ordered key/value pairs; every report renders through these.
using ReportFields = std::vector<std::pair<std::string, std::string>>;

inline std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

/// Single machine-readable line: "metric=<name> key=value ...".
inline std::string format_record(const std::string& metric, const ReportFields& fields) {
  std::string out = "metric=" + metric;
  for (const auto& [k, v] : fields) out += " " + k + "=" + v;
  return out;
}

inline std::string format_table(const ReportFields& fields) {
  std::size_t width = 0;
  for (const auto& f : fields) width = std::max(width, f.first.size());
  std::string out;
  for (const auto& [k, v] : fields) out += k + std::string(width - k.size() + 2, ' ') + v + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Compression

struct CompressionReport {
  double avg_len_base = 0;
  double avg_len_encoded = 0;
  double ratio = 0;
  std::size_t vocab_size = 0;

  ReportFields fields() const {
    return {{"avg_len_base", format_number(avg_len_base)},
            {"avg_len_encoded", format_number(avg_len_encoded)},
            {"ratio", format_number(ratio)},
            {"vocab_size", std::to_string(vocab_size)}};
  }
};

inline CompressionReport compression_stats(const Corpus& base, const Corpus& encoded, std::size_t vocab_size) {
  if (base.utterances.size() != encoded.utterances.size())
    throw ArgumentError("compression_stats: " + std::to_string(base.utterances.size()) + " base utterances vs " +
                        std::to_string(encoded.utterances.size()) + " encoded");
  if (base.utterances.empty()) throw ArgumentError("compression_stats: empty corpus");
  const auto n = static_cast<double>(base.utterances.size());
  const auto enc_total = static_cast<double>(encoded.total_tokens());
  if (enc_total == 0) throw ArgumentError("compression_stats: encoded corpus has zero length");
  CompressionReport r;
  r.avg_len_base = static_cast<double>(base.total_tokens()) / n;
  r.avg_len_encoded = enc_total / n;
  r.ratio = r.avg_len_base / r.avg_len_encoded;
  r.vocab_size = vocab_size;
  return r;
}

// ---------------------------------------------------------------------------
// Syntax discrimination

struct SyntaxPair {
  TokenSequence correct;
  TokenSequence corrupted;
};

struct SyntaxReport {
  std::size_t pairs = 0;
  std::size_t correct = 0;
  std::size_t ties = 0;
  double accuracy = 0;

  ReportFields fields() const {
    return {{"pairs", std::to_string(pairs)},
            {"correct", std::to_string(correct)},
            {"ties", std::to_string(ties)},
            {"accuracy", format_number(accuracy)}};
  }
};

/// A pair counts as correct only when the intact member scores strictly higher.
template <SequenceModel M>
SyntaxReport syntax_accuracy(const M& model, std::span<const SyntaxPair> pairs) {
  if (pairs.empty()) throw ArgumentError("syntax_accuracy: no pairs");
  SyntaxReport r;
  r.pairs = pairs.size();
  for (const auto& p : pairs) {
    const double good = slm_logprob(model, p.correct);
    const double bad = slm_logprob(model, p.corrupted);
    if (good > bad) ++r.correct;
    else if (good == bad) ++r.ties;
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.pairs);
  return r;
}

/// Uniform permutation of contiguous blocks of block_size tokens (the last
/// block may be shorter). A single block comes back unchanged.
inline TokenSequence shuffle_corrupt(const TokenSequence& seq, std::size_t block_size, std::uint64_t seed) {
  if (block_size == 0) throw ArgumentError("shuffle_corrupt: block size must be >= 1");
  if (seq.size() < 2) throw ArgumentError("shuffle_corrupt: need at least 2 tokens");
  const std::size_t blocks = (seq.size() + block_size - 1) / block_size;
  std::vector<std::size_t> order(blocks);
  for (std::size_t i = 0; i < blocks; ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = blocks; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  TokenSequence out;
  out.reserve(seq.size());
  for (std::size_t b : order) {
    const auto begin = seq.begin() + static_cast<std::ptrdiff_t>(b * block_size);
    const auto end = seq.begin() + static_cast<std::ptrdiff_t>(std::min(seq.size(), (b + 1) * block_size));
    out.insert(out.end(), begin, end);
  }
  return out;
}

// ---------------------------------------------------------------------------
// n-gram diversity

namespace detail {

using NgramKey = std::u32string;
using NgramCounts = std::unordered_map<NgramKey, std::size_t>;

inline NgramCounts count_ngrams(std::span<const TokenId> seq, std::size_t n) {
  NgramCounts counts;
  NgramKey key(n, U'\0');
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    for (std::size_t j = 0; j < n; ++j) key[j] = static_cast<char32_t>(seq[i + j]);
    ++counts[key];
  }
  return counts;
}

inline void check_ngram_input(std::span<const TokenId> seq, std::size_t n, const char* who) {
  if (n == 0) throw ArgumentError(std::string(who) + ": n must be >= 1");
  if (seq.size() < n)
    throw ArgumentError(std::string(who) + ": sequence of length " + std::to_string(seq.size()) + " is shorter than n=" +
                        std::to_string(n));
}

} // namespace detail

/// Fraction of the sequence's n-gram occurrences whose n-gram occurs at least
/// twice in that same sequence.
inline double auto_bleu(std::span<const TokenId> seq, std::size_t n) {
  detail::check_ngram_input(seq, n, "auto_bleu");
  const auto counts = detail::count_ngrams(seq, n);
  std::size_t repeated = 0;
  for (const auto& [g, c] : counts)
    if (c >= 2) repeated += c;
  return static_cast<double>(repeated) / static_cast<double>(seq.size() - n + 1);
}

/// Mean over texts of clipped n-gram precision against all other texts;
/// each count is clipped by its maximum count in any single other text.
inline double self_bleu(std::span<const TokenSequence> texts, std::size_t n) {
  if (texts.size() < 2) throw ArgumentError("self_bleu: need at least 2 texts");
  std::vector<detail::NgramCounts> counts;
  counts.reserve(texts.size());
  for (const auto& t : texts) {
    detail::check_ngram_input(t, n, "self_bleu");
    counts.push_back(detail::count_ngrams(t, n));
  }
  // Largest and second-largest count of every n-gram, with the owner of the
  // largest, so "max over the other texts" is O(1).
  struct Top2 {
    std::size_t first = 0, second = 0, owner = SIZE_MAX;
  };
  std::unordered_map<detail::NgramKey, Top2> top;
  for (std::size_t i = 0; i < counts.size(); ++i)
    for (const auto& [g, c] : counts[i]) {
      auto& t = top[g];
      if (c > t.first) {
        t.second = t.first;
        t.first = c;
        t.owner = i;
      } else if (c > t.second) {
        t.second = c;
      }
    }
  double sum = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    std::size_t clipped = 0;
    for (const auto& [g, c] : counts[i]) {
      const auto& t = top.at(g);
      const std::size_t ref = t.owner == i ? t.second : t.first;
      clipped += std::min(c, ref);
    }
    sum += static_cast<double>(clipped) / static_cast<double>(texts[i].size() - n + 1);
  }
  return sum / static_cast<double>(texts.size());
}

struct VertReport {
  std::size_t n = 0;
  double self_bleu = 0;
  double auto_bleu = 0;
  double vert = 0;

  ReportFields fields() const {
    return {{"n", std::to_string(n)},
            {"self_bleu", format_number(self_bleu)},
            {"auto_bleu", format_number(auto_bleu)},
            {"vert", format_number(vert)}};
  }
};

inline double vert_score(double self, double autob) { return 100.0 * std::sqrt(self * autob); }

/// auto_bleu is averaged over texts; vert = 100 * sqrt(self * auto).
inline VertReport vert(std::span<const TokenSequence> texts, std::size_t n) {
  VertReport r;
  r.n = n;
  r.self_bleu = self_bleu(texts, n);
  double sum = 0.0;
  for (const auto& t : texts) sum += auto_bleu(t, n);
  r.auto_bleu = sum / static_cast<double>(texts.size());
  r.vert = vert_score(r.self_bleu, r.auto_bleu);
  return r;
}

// ---------------------------------------------------------------------------
// Cross-entropy under a reference model

struct CrossEntropyReport {
  std::size_t n_samples = 0;
  double entropy = 0; // nats per sample

  ReportFields fields() const {
    return {{"n_samples", std::to_string(n_samples)}, {"H", format_number(entropy)}};
  }
};

template <SequenceModel M>
CrossEntropyReport cross_entropy(std::span<const TokenSequence> samples, const M& reference) {
  if (samples.empty()) throw ArgumentError("cross_entropy: no samples");
  double sum = 0.0;
  for (const auto& s : samples) sum += slm_logprob(reference, s);
  return {samples.size(), -sum / static_cast<double>(samples.size())};
}

} // namespace abpe
