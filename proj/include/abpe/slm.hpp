#pragma once

// Autoregressive sequence model. Any type satisfying SequenceModel can be
// scored, sampled, and used for rescoring; NgramModel is the reference
// implementation (interpolated add-k n-gram with an explicit EOS event).

#include <abpe/binary_io.hpp>
#include <abpe/corpus_io.hpp>
#include <abpe/error.hpp>
#include <abpe/random.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace abpe {

/// next_dist returns vocab_size() + 1 probabilities; index vocab_size() is EOS.
template <typename M>
concept SequenceModel = requires(const M& m, std::span<const TokenId> context, TokenId token) {
  { m.vocab_size() } -> std::convertible_to<std::size_t>;
  { m.next_dist(context) } -> std::convertible_to<std::vector<double>>;
  { m.prob(context, token) } -> std::convertible_to<double>;
};

struct NgramOptions {
  std::size_t order = 4;
  double add_k = 0.1;
  /// Per-order interpolation weights (unigram first). Empty means uniform.
  std::vector<double> weights;
};

class NgramModel {
public:
  using ContextKey = std::u32string;

  struct ContextCounts {
    std::uint64_t total = 0;
    std::unordered_map<TokenId, std::uint64_t> next;
    bool operator==(const ContextCounts&) const = default;
  };
  using Table = std::unordered_map<ContextKey, ContextCounts>;

  NgramModel(std::size_t vocab_size, NgramOptions options) : vocab_(vocab_size), order_(options.order), add_k_(options.add_k) {
    if (vocab_ == 0 || vocab_ > UINT32_MAX - 2) throw ArgumentError("slm: vocab size out of range");
    if (order_ == 0 || order_ > 64) throw ArgumentError("slm: order must lie in [1, 64]");
    if (!(add_k_ > 0.0) || !std::isfinite(add_k_)) throw ArgumentError("slm: add_k must be a finite value > 0");
    weights_ = options.weights.empty() ? std::vector<double>(order_, 1.0 / static_cast<double>(order_)) : options.weights;
    if (weights_.size() != order_) throw ArgumentError("slm: need exactly one interpolation weight per order");
    double sum = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw ArgumentError("slm: interpolation weights must be finite and >= 0");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ArgumentError("slm: interpolation weights must sum to 1");
    tables_.resize(order_);
  }

  std::size_t vocab_size() const { return vocab_; }
  std::size_t order() const { return order_; }
  double add_k() const { return add_k_; }
  const std::vector<double>& weights() const { return weights_; }
  TokenId eos() const { return static_cast<TokenId>(vocab_); }
  TokenId bos() const { return static_cast<TokenId>(vocab_ + 1); }
  /// Table for n-gram order m (1-based): contexts of length m - 1.
  const Table& table(std::size_t m) const { return tables_.at(m - 1); }

  /// Adds one event (context of exactly order-1 ids, BOS-padded).
  void add_event(const ContextKey& context, TokenId token, std::uint64_t count = 1) {
    for (std::size_t m = 1; m <= order_; ++m) {
      auto& entry = tables_[m - 1][context.substr(order_ - m)];
      entry.total += count;
      entry.next[token] += count;
    }
  }

  /// Sets a single order-m count (used when loading); false if already present.
  bool insert_count(std::size_t m, const ContextKey& context, TokenId token, std::uint64_t count) {
    auto& entry = tables_.at(m - 1)[context];
    if (!entry.next.emplace(token, count).second) return false;
    entry.total += count;
    return true;
  }

  /// Last order-1 ids of the context, left-padded with BOS.
  ContextKey context_tail(std::span<const TokenId> context) const {
    const std::size_t width = order_ - 1;
    ContextKey key(width, static_cast<char32_t>(bos()));
    const std::size_t take = std::min(width, context.size());
    for (std::size_t i = 0; i < take; ++i) {
      const TokenId id = context[context.size() - take + i];
      if (id >= vocab_) throw VocabularyError("slm: context id " + std::to_string(id) + " >= vocab size " + std::to_string(vocab_));
      key[width - take + i] = static_cast<char32_t>(id);
    }
    return key;
  }

  /// P(token | context); token == eos() is the end event.
  double prob(std::span<const TokenId> context, TokenId token) const {
    if (token > vocab_) throw VocabularyError("slm: token " + std::to_string(token) + " out of range");
    const ContextKey tail = context_tail(context);
    double p = 0.0;
    for (std::size_t m = 1; m <= order_; ++m) {
      const ContextCounts* entry = find(m, tail);
      std::uint64_t c = 0;
      if (entry) {
        const auto it = entry->next.find(token);
        if (it != entry->next.end()) c = it->second;
      }
      p += weights_[m - 1] * ((static_cast<double>(c) + add_k_) / denominator(entry));
    }
    return p;
  }

  /// Full next-token distribution over vocab plus EOS. Each entry is
  /// computed with the same arithmetic as prob().
  std::vector<double> next_dist(std::span<const TokenId> context) const {
    const ContextKey tail = context_tail(context);
    std::vector<double> dist(vocab_ + 1, 0.0);
    std::vector<double> counts(vocab_ + 1);
    for (std::size_t m = 1; m <= order_; ++m) {
      const ContextCounts* entry = find(m, tail);
      std::fill(counts.begin(), counts.end(), 0.0);
      if (entry)
        for (const auto& [tok, c] : entry->next) counts[tok] = static_cast<double>(c);
      const double denom = denominator(entry);
      for (std::size_t w = 0; w <= vocab_; ++w) dist[w] += weights_[m - 1] * ((counts[w] + add_k_) / denom);
    }
    return dist;
  }

  bool operator==(const NgramModel&) const = default;

private:
  const ContextCounts* find(std::size_t m, const ContextKey& tail) const {
    const auto& table = tables_[m - 1];
    const auto it = table.find(tail.substr(order_ - m));
    return it == table.end() ? nullptr : &it->second;
  }

  double denominator(const ContextCounts* entry) const {
    const double total = entry ? static_cast<double>(entry->total) : 0.0;
    return total + add_k_ * static_cast<double>(vocab_ + 1);
  }

  std::size_t vocab_;
  std::size_t order_;
  double add_k_;
  std::vector<double> weights_;
  std::vector<Table> tables_;
};

static_assert(SequenceModel<NgramModel>);

/// Counts every utterance with BOS padding and a terminal EOS event.
inline NgramModel slm_train(const Corpus& corpus, const NgramOptions& options) {
  if (corpus.utterances.empty()) throw ArgumentError("slm_train: empty corpus");
  check_vocabulary(corpus);
  NgramModel model(corpus.vocab_size, options);
  const std::size_t width = options.order - 1;
  NgramModel::ContextKey padded;
  for (const auto& utt : corpus.utterances) {
    padded.assign(width, static_cast<char32_t>(model.bos()));
    for (TokenId id : utt) padded.push_back(static_cast<char32_t>(id));
    for (std::size_t i = 0; i <= utt.size(); ++i) {
      const TokenId target = i < utt.size() ? utt[i] : model.eos();
      model.add_event(padded.substr(i, width), target);
    }
  }
  return model;
}

/// Natural-log probability of the whole sequence including its EOS event.
/// An empty sequence scores the immediate-EOS event alone.
template <SequenceModel M>
double slm_logprob(const M& model, std::span<const TokenId> seq) {
  for (std::size_t i = 0; i < seq.size(); ++i)
    if (seq[i] >= model.vocab_size())
      throw VocabularyError("slm_logprob: id " + std::to_string(seq[i]) + " at position " + std::to_string(i) +
                            " >= vocab size " + std::to_string(model.vocab_size()));
  double total = 0.0;
  for (std::size_t i = 0; i < seq.size(); ++i) total += std::log(model.prob(seq.first(i), seq[i]));
  total += std::log(model.prob(seq, static_cast<TokenId>(model.vocab_size())));
  return total;
}

template <SequenceModel M>
std::vector<double> slm_next_dist(const M& model, std::span<const TokenId> context) {
  return model.next_dist(context);
}

// ---------------------------------------------------------------------------
// Sampling

struct SamplingOptions {
  double temperature = 1.0;
  std::optional<std::size_t> top_k;
  /// Zero-temperature limit: always take the most probable token (lowest id on ties).
  bool greedy = false;
};

inline void check_sampling(const SamplingOptions& opt) {
  if (!opt.greedy && (!(opt.temperature > 0.0) || !std::isfinite(opt.temperature)))
    throw ArgumentError("sampling: temperature must be a finite value > 0");
  if (opt.top_k && *opt.top_k == 0) throw ArgumentError("sampling: top_k must be >= 1");
}

inline std::size_t argmax_lowest(std::span<const double> p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;
  return best;
}

/// Temperature on log-probabilities, then top-k, then renormalization.
inline std::vector<double> adjust_distribution(std::vector<double> p, const SamplingOptions& opt) {
  if (opt.temperature != 1.0) {
    double max_logit = -std::numeric_limits<double>::infinity();
    for (double& x : p) {
      x = x > 0.0 ? std::log(x) / opt.temperature : -std::numeric_limits<double>::infinity();
      max_logit = std::max(max_logit, x);
    }
    for (double& x : p) x = std::exp(x - max_logit);
  }
  if (opt.top_k && *opt.top_k < p.size()) {
    std::vector<std::size_t> idx(p.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
    for (std::size_t i = *opt.top_k; i < idx.size(); ++i) p[idx[i]] = 0.0;
  }
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& x : p) x /= total;
  return p;
}

/// Inverse-CDF draw in id order.
inline std::size_t sample_index(std::span<const double> p, Rng& rng) {
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

inline std::size_t sample_next(const std::vector<double>& dist, const SamplingOptions& opt, Rng& rng) {
  if (opt.greedy) return argmax_lowest(dist);
  if (opt.temperature == 1.0 && !opt.top_k) return sample_index(dist, rng);
  return sample_index(adjust_distribution(dist, opt), rng);
}

/// Prompt followed by up to max_new sampled tokens; stops early on EOS
/// (which is not emitted).
template <SequenceModel M>
TokenSequence slm_continue(const M& model, const TokenSequence& prompt, std::size_t max_new,
                           const SamplingOptions& opt, Rng& rng) {
  check_sampling(opt);
  for (TokenId id : prompt)
    if (id >= model.vocab_size()) throw VocabularyError("slm_continue: prompt id " + std::to_string(id) + " out of vocabulary");
  TokenSequence out = prompt;
  for (std::size_t step = 0; step < max_new; ++step) {
    const auto next = sample_next(model.next_dist(out), opt, rng);
    if (next == model.vocab_size()) break;
    out.push_back(static_cast<TokenId>(next));
  }
  return out;
}

template <SequenceModel M>
TokenSequence slm_continue(const M& model, const TokenSequence& prompt, std::size_t max_new,
                           const SamplingOptions& opt, std::uint64_t seed) {
  Rng rng(seed);
  return slm_continue(model, prompt, max_new, opt, rng);
}

// ---------------------------------------------------------------------------
// Model file: "ABPENGRM", u32 version, u64 vocab, u32 order, f64 add_k,
// order x f64 weights, then per order m = 1..n: u64 entry count followed by
// sorted entries of (m-1 context ids, token, count), all u64. BOS is stored
// as vocab+1 and EOS as vocab.

inline constexpr std::string_view kNgramMagic = "ABPENGRM";
inline constexpr std::uint32_t kNgramVersion = 1;

inline void write_ngram(std::ostream& out, const NgramModel& model) {
  binary::write_magic(out, kNgramMagic);
  binary::write_le<std::uint32_t>(out, kNgramVersion);
  binary::write_le<std::uint64_t>(out, model.vocab_size());
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.order()));
  binary::write_f64(out, model.add_k());
  for (double w : model.weights()) binary::write_f64(out, w);
  for (std::size_t m = 1; m <= model.order(); ++m) {
    std::vector<std::tuple<NgramModel::ContextKey, TokenId, std::uint64_t>> rows;
    for (const auto& [ctx, entry] : model.table(m))
      for (const auto& [tok, c] : entry.next) rows.emplace_back(ctx, tok, c);
    std::sort(rows.begin(), rows.end());
    binary::write_le<std::uint64_t>(out, rows.size());
    for (const auto& [ctx, tok, c] : rows) {
      for (char32_t id : ctx) binary::write_le<std::uint64_t>(out, id);
      binary::write_le<std::uint64_t>(out, tok);
      binary::write_le<std::uint64_t>(out, c);
    }
  }
}

inline NgramModel read_ngram(std::istream& in, const std::string& source = "") {
  binary::Reader r(in, source);
  r.expect_magic(kNgramMagic);
  if (const auto v = r.read_le<std::uint32_t>(); v != kNgramVersion)
    r.fail("unsupported n-gram model version " + std::to_string(v));
  const auto vocab = r.read_le<std::uint64_t>();
  const auto order = r.read_le<std::uint32_t>();
  if (vocab == 0 || vocab > UINT32_MAX - 2) r.fail("invalid vocab size");
  if (order == 0 || order > 64) r.fail("invalid order");
  NgramOptions options;
  options.order = order;
  options.add_k = r.read_f64();
  options.weights.resize(order);
  for (double& w : options.weights) w = r.read_f64();
  std::optional<NgramModel> model;
  try {
    model.emplace(vocab, options);
  } catch (const ArgumentError& e) {
    r.fail(e.what());
  }
  for (std::size_t m = 1; m <= order; ++m) {
    const auto rows = r.read_le<std::uint64_t>();
    for (std::uint64_t i = 0; i < rows; ++i) {
      NgramModel::ContextKey ctx(m - 1, U'\0');
      for (auto& id : ctx) {
        const auto v = r.read_le<std::uint64_t>();
        if (v > vocab + 1 || v == vocab) r.fail("context id out of range");
        id = static_cast<char32_t>(v);
      }
      const auto tok = r.read_le<std::uint64_t>();
      const auto c = r.read_le<std::uint64_t>();
      if (tok > vocab) r.fail("token id out of range");
      if (c == 0) r.fail("zero count entry");
      if (!model->insert_count(m, ctx, static_cast<TokenId>(tok), c)) r.fail("duplicate n-gram entry");
    }
  }
  r.expect_end();
  return std::move(*model);
}

inline void save_ngram(const NgramModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_ngram(out, model);
}

inline NgramModel load_ngram(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_ngram(in, path.string());
}

} // namespace abpe
