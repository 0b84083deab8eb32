#pragma once

// Byte-pair encoding over integer unit ids. Base units are [0, base_size);
// merge i creates unit base_size + i.

#include <abpe/corpus_io.hpp>
#include <abpe/error.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

namespace abpe {

using UnitPair = std::pair<TokenId, TokenId>;

namespace detail {
inline std::uint64_t pair_key(TokenId left, TokenId right) { return (std::uint64_t(left) << 32) | right; }
inline UnitPair unpack_pair(std::uint64_t key) { return {TokenId(key >> 32), TokenId(key & 0xFFFFFFFFu)}; }
} // namespace detail

class BpeModel {
public:
  BpeModel() = default;

  /// Validates operand ranges and rejects duplicate pairs.
  BpeModel(std::size_t base_size, std::vector<UnitPair> merges) : base_size_(base_size), merges_(std::move(merges)) {
    if (base_size_ == 0) throw ArgumentError("bpe: base size must be >= 1");
    if (base_size_ + merges_.size() > UINT32_MAX) throw ArgumentError("bpe: too many units");
    unit_len_.assign(base_size_, 1);
    unit_len_.reserve(base_size_ + merges_.size());
    for (std::size_t i = 0; i < merges_.size(); ++i) {
      const auto [l, r] = merges_[i];
      const std::size_t limit = base_size_ + i;
      if (l >= limit || r >= limit)
        throw ArgumentError("bpe: merge " + std::to_string(i) + " (" + std::to_string(l) + " " + std::to_string(r) +
                            ") references a unit not defined before it");
      if (!rank_.emplace(detail::pair_key(l, r), static_cast<std::uint32_t>(i)).second)
        throw ArgumentError("bpe: duplicate merge pair at " + std::to_string(i));
      unit_len_.push_back(unit_len_[l] + unit_len_[r]);
    }
  }

  std::size_t base_size() const { return base_size_; }
  std::size_t unit_count() const { return base_size_ + merges_.size(); }
  const std::vector<UnitPair>& merges() const { return merges_; }
  std::size_t unit_len(TokenId unit) const { return unit_len_.at(unit); }

  /// Training rank of a pair, or -1 when the pair is not a merge.
  std::int64_t rank(TokenId left, TokenId right) const {
    const auto it = rank_.find(detail::pair_key(left, right));
    return it == rank_.end() ? -1 : static_cast<std::int64_t>(it->second);
  }

  bool operator==(const BpeModel& other) const {
    return base_size_ == other.base_size_ && merges_ == other.merges_;
  }

private:
  std::size_t base_size_ = 0;
  std::vector<UnitPair> merges_;
  std::vector<std::size_t> unit_len_;
  std::unordered_map<std::uint64_t, std::uint32_t> rank_;
};

namespace detail {

/// Non-overlapping left-to-right pair occurrences: a run "a a a" yields a
/// single (a, a).
template <typename Visit>
void for_each_counted_pair(const TokenSequence& s, Visit&& visit) {
  bool prev_same_counted = false;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const bool same = s[i] == s[i + 1];
    if (same && prev_same_counted) {
      prev_same_counted = false;
      continue;
    }
    visit(pair_key(s[i], s[i + 1]));
    prev_same_counted = same;
  }
}

inline void apply_merge(TokenSequence& s, TokenId left, TokenId right, TokenId unit) {
  std::size_t w = 0;
  for (std::size_t i = 0; i < s.size();) {
    if (i + 1 < s.size() && s[i] == left && s[i + 1] == right) {
      s[w++] = unit;
      i += 2;
    } else {
      s[w++] = s[i++];
    }
  }
  s.resize(w);
}

} // namespace detail

/// Greedy training: every round merges the most frequent adjacent pair (count
/// >= 2, ties to the smallest (left, right)) across all utterances. Stops at
/// vocab_size units or when no pair repeats.
inline BpeModel bpe_train(const Corpus& corpus, std::size_t vocab_size) {
  if (corpus.utterances.empty()) throw ArgumentError("bpe_train: empty corpus");
  if (corpus.vocab_size == 0) throw ArgumentError("bpe_train: corpus vocab size must be positive");
  if (vocab_size < corpus.vocab_size)
    throw ArgumentError("bpe_train: target vocab " + std::to_string(vocab_size) + " < base alphabet " +
                        std::to_string(corpus.vocab_size));
  if (vocab_size > UINT32_MAX) throw ArgumentError("bpe_train: target vocab too large");
  check_vocabulary(corpus);

  std::vector<TokenSequence> seqs = corpus.utterances;
  std::unordered_map<std::uint64_t, std::int64_t> counts;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> where;
  // Ordered by (-count, left, right): begin() is the next merge.
  std::set<std::tuple<std::int64_t, TokenId, TokenId>> queue;

  auto adjust = [&](std::uint64_t key, std::int64_t delta) {
    auto& c = counts[key];
    const auto [l, r] = detail::unpack_pair(key);
    if (c > 0) queue.erase({-c, l, r});
    c += delta;
    if (c > 0) queue.insert({-c, l, r});
  };

  for (std::uint32_t u = 0; u < seqs.size(); ++u) {
    std::unordered_map<std::uint64_t, std::int64_t> local;
    detail::for_each_counted_pair(seqs[u], [&](std::uint64_t key) { ++local[key]; });
    for (const auto& [key, c] : local) {
      counts[key] += c;
      where[key].push_back(u);
    }
  }
  for (const auto& [key, c] : counts) {
    const auto [l, r] = detail::unpack_pair(key);
    queue.insert({-c, l, r});
  }

  std::vector<UnitPair> merges;
  std::vector<std::uint32_t> stamp(seqs.size(), UINT32_MAX);
  const std::size_t target = vocab_size - corpus.vocab_size;
  while (merges.size() < target && !queue.empty()) {
    const auto [neg, left, right] = *queue.begin();
    if (-neg < 2) break;
    const auto unit = static_cast<TokenId>(corpus.vocab_size + merges.size());
    const auto round = static_cast<std::uint32_t>(merges.size());
    const auto merged_key = detail::pair_key(left, right);
    const auto users = std::move(where[merged_key]);
    where.erase(merged_key);
    for (std::uint32_t u : users) {
      if (stamp[u] == round) continue;
      stamp[u] = round;
      std::unordered_map<std::uint64_t, std::int64_t> delta;
      detail::for_each_counted_pair(seqs[u], [&](std::uint64_t key) { --delta[key]; });
      detail::apply_merge(seqs[u], left, right, unit);
      detail::for_each_counted_pair(seqs[u], [&](std::uint64_t key) { ++delta[key]; });
      for (const auto& [key, d] : delta) {
        if (d == 0) continue;
        adjust(key, d);
        if (d > 0) where[key].push_back(u); // duplicates are skipped via stamp
      }
    }
    merges.emplace_back(left, right);
  }
  return BpeModel(corpus.vocab_size, std::move(merges));
}

/// Applies merges by training rank: repeatedly merges the lowest-rank
/// adjacent pair, leftmost first among equal ranks.
inline TokenSequence bpe_encode(const BpeModel& model, const TokenSequence& seq) {
  for (std::size_t i = 0; i < seq.size(); ++i)
    if (seq[i] >= model.base_size())
      throw VocabularyError("bpe_encode: id " + std::to_string(seq[i]) + " at position " + std::to_string(i) +
                            " is not a base unit (base size " + std::to_string(model.base_size()) + ")");
  if (seq.size() < 2 || model.merges().empty()) return seq;

  constexpr std::size_t none = SIZE_MAX;
  const std::size_t n = seq.size();
  std::vector<TokenId> value = seq;
  std::vector<std::size_t> next(n), prev(n);
  std::vector<bool> alive(n, true);
  for (std::size_t i = 0; i < n; ++i) {
    next[i] = i + 1 < n ? i + 1 : none;
    prev[i] = i > 0 ? i - 1 : none;
  }

  struct Candidate {
    std::int64_t rank;
    std::size_t pos;
    TokenId left, right;
    bool operator>(const Candidate& o) const { return std::tie(rank, pos) > std::tie(o.rank, o.pos); }
  };
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> heap;
  auto offer = [&](std::size_t pos) {
    if (pos == none || next[pos] == none) return;
    const auto r = model.rank(value[pos], value[next[pos]]);
    if (r >= 0) heap.push({r, pos, value[pos], value[next[pos]]});
  };
  for (std::size_t i = 0; i + 1 < n; ++i) offer(i);

  while (!heap.empty()) {
    const Candidate c = heap.top();
    heap.pop();
    if (!alive[c.pos] || next[c.pos] == none || value[c.pos] != c.left || value[next[c.pos]] != c.right) continue;
    const std::size_t gone = next[c.pos];
    value[c.pos] = static_cast<TokenId>(model.base_size() + c.rank);
    alive[gone] = false;
    next[c.pos] = next[gone];
    if (next[gone] != none) prev[next[gone]] = c.pos;
    offer(prev[c.pos]);
    offer(c.pos);
  }

  TokenSequence out;
  for (std::size_t i = 0; i != none; i = next[i]) out.push_back(value[i]);
  return out;
}

inline TokenSequence bpe_decode(const BpeModel& model, const TokenSequence& seq) {
  TokenSequence out;
  std::vector<TokenId> stack;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i] >= model.unit_count())
      throw VocabularyError("bpe_decode: id " + std::to_string(seq[i]) + " at position " + std::to_string(i) +
                            " exceeds unit count " + std::to_string(model.unit_count()));
    stack.push_back(seq[i]);
    while (!stack.empty()) {
      const TokenId unit = stack.back();
      stack.pop_back();
      if (unit < model.base_size()) {
        out.push_back(unit);
      } else {
        const auto [l, r] = model.merges()[unit - model.base_size()];
        stack.push_back(r);
        stack.push_back(l);
      }
    }
  }
  return out;
}

inline Corpus bpe_encode(const BpeModel& model, const Corpus& corpus) {
  if (corpus.vocab_size > model.base_size())
    throw VocabularyError("bpe_encode: corpus vocab " + std::to_string(corpus.vocab_size) + " exceeds base size " +
                          std::to_string(model.base_size()));
  Corpus out{{}, model.unit_count()};
  out.utterances.reserve(corpus.utterances.size());
  for (const auto& u : corpus.utterances) out.utterances.push_back(bpe_encode(model, u));
  return out;
}

inline Corpus bpe_decode(const BpeModel& model, const Corpus& corpus) {
  Corpus out{{}, model.base_size()};
  out.utterances.reserve(corpus.utterances.size());
  for (const auto& u : corpus.utterances) out.utterances.push_back(bpe_decode(model, u));
  return out;
}

// Merges file: "#abpe 1", "#base N", then "left right" per line in rank order.

inline constexpr int kBpeFormatVersion = 1;

inline void write_bpe(std::ostream& out, const BpeModel& model) {
  out << "#abpe " << kBpeFormatVersion << "\n#base " << model.base_size() << '\n';
  for (const auto& [l, r] : model.merges()) out << l << ' ' << r << '\n';
}

inline BpeModel parse_bpe(std::istream& in, const std::string& source = "") {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    return true;
  };
  if (!next_line() || !line.starts_with("#abpe "))
    throw FormatError(source, line_no ? line_no : 1, "missing \"#abpe\" header");
  if (detail::parse_uint(std::string_view(line).substr(6), source, line_no) != kBpeFormatVersion)
    throw FormatError(source, line_no, "unsupported merges version \"" + line.substr(6) + "\"");
  if (!next_line() || !line.starts_with("#base "))
    throw FormatError(source, line_no ? line_no : 2, "missing \"#base\" header");
  const auto base = detail::parse_uint(std::string_view(line).substr(6), source, line_no);
  if (base == 0 || base > UINT32_MAX) throw FormatError(source, line_no, "invalid base size");

  std::vector<UnitPair> merges;
  while (next_line()) {
    if (line.empty()) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos) throw FormatError(source, line_no, "expected \"left right\"");
    const auto l = detail::parse_uint(std::string_view(line).substr(0, space), source, line_no);
    const auto r = detail::parse_uint(std::string_view(line).substr(space + 1), source, line_no);
    const auto limit = base + merges.size();
    if (l >= limit || r >= limit)
      throw FormatError(source, line_no, "merge references unit " + std::to_string(std::max(l, r)) +
                                             " which is not defined before it");
    merges.emplace_back(static_cast<TokenId>(l), static_cast<TokenId>(r));
  }
  try {
    return BpeModel(base, std::move(merges));
  } catch (const ArgumentError& e) {
    throw FormatError(source, 0, e.what());
  }
}

inline void save_bpe(const BpeModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_bpe(out, model);
}

inline BpeModel load_bpe(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_bpe(in, path.string());
}

} // namespace abpe
