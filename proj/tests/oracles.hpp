#pragma once

// Brute-force reference implementations used only by tests. They share no
// code with the library beyond plain data types.

#include <abpe/corpus_io.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

namespace abpe::oracle {

/// Non-overlapping left-to-right count of one specific pair.
inline std::size_t count_pair(const TokenSequence& s, TokenId a, TokenId b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < s.size();) {
    if (s[i] == a && s[i + 1] == b) {
      ++n;
      i += 2;
    } else {
      ++i;
    }
  }
  return n;
}

inline std::vector<std::pair<TokenId, TokenId>> train_merges(const Corpus& corpus, std::size_t vocab_size) {
  std::vector<TokenSequence> seqs = corpus.utterances;
  std::vector<std::pair<TokenId, TokenId>> merges;
  while (corpus.vocab_size + merges.size() < vocab_size) {
    std::map<std::pair<TokenId, TokenId>, std::size_t> counts; // ordered => lexicographic ties
    for (const auto& s : seqs)
      for (std::size_t i = 0; i + 1 < s.size(); ++i) counts[{s[i], s[i + 1]}] = 0;
    for (auto& [p, c] : counts)
      for (const auto& s : seqs) c += count_pair(s, p.first, p.second);
    std::pair<TokenId, TokenId> best{};
    std::size_t best_count = 0;
    for (const auto& [p, c] : counts)
      if (c > best_count) {
        best = p;
        best_count = c;
      }
    if (best_count < 2) break;
    const auto unit = static_cast<TokenId>(corpus.vocab_size + merges.size());
    for (auto& s : seqs) {
      TokenSequence out;
      for (std::size_t i = 0; i < s.size();) {
        if (i + 1 < s.size() && s[i] == best.first && s[i + 1] == best.second) {
          out.push_back(unit);
          i += 2;
        } else {
          out.push_back(s[i++]);
        }
      }
      s = out;
    }
    merges.push_back(best);
  }
  return merges;
}

/// Repeatedly replaces the single leftmost occurrence of the lowest-rank pair.
inline TokenSequence encode(std::size_t base, const std::vector<std::pair<TokenId, TokenId>>& merges,
                            TokenSequence s) {
  while (true) {
    std::size_t best_rank = merges.size(), best_pos = 0;
    for (std::size_t i = 0; i + 1 < s.size(); ++i)
      for (std::size_t r = 0; r < best_rank; ++r)
        if (merges[r].first == s[i] && merges[r].second == s[i + 1]) {
          best_rank = r;
          best_pos = i;
          break;
        }
    if (best_rank == merges.size()) return s;
    s[best_pos] = static_cast<TokenId>(base + best_rank);
    s.erase(s.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
  }
}

/// Interpolated add-k probability straight from the corpus. Contexts are
/// represented with -1 for BOS and the target EOS as vocab.
inline double ngram_prob(const Corpus& corpus, std::size_t order, double add_k, const std::vector<double>& weights,
                         const TokenSequence& context, std::int64_t target) {
  const auto V = static_cast<std::int64_t>(corpus.vocab_size);
  std::vector<std::int64_t> ctx(order - 1, -1);
  for (TokenId id : context) {
    ctx.push_back(id);
  }
  ctx.erase(ctx.begin(), ctx.end() - static_cast<std::ptrdiff_t>(order - 1));
  double p = 0.0;
  for (std::size_t m = 1; m <= order; ++m) {
    std::size_t hist = 0, joint = 0;
    for (const auto& u : corpus.utterances) {
      std::vector<std::int64_t> padded(order - 1, -1);
      for (TokenId id : u) padded.push_back(id);
      padded.push_back(V);
      for (std::size_t i = order - 1; i < padded.size(); ++i) {
        bool match = true;
        for (std::size_t j = 1; j < m; ++j)
          if (padded[i - j] != ctx[ctx.size() - j]) match = false;
        if (!match) continue;
        ++hist;
        if (padded[i] == target) ++joint;
      }
    }
    p += weights[m - 1] * ((static_cast<double>(joint) + add_k) / (static_cast<double>(hist) + add_k * static_cast<double>(V + 1)));
  }
  return p;
}

/// Self-BLEU by explicit enumeration of every n-gram and every reference.
inline double self_bleu(const std::vector<TokenSequence>& texts, std::size_t n) {
  auto occurrences = [n](const TokenSequence& t, const TokenSequence& g) {
    std::size_t c = 0;
    for (std::size_t i = 0; i + n <= t.size(); ++i)
      if (std::equal(g.begin(), g.end(), t.begin() + static_cast<std::ptrdiff_t>(i))) ++c;
    return c;
  };
  double sum = 0.0;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    std::map<TokenSequence, std::size_t> grams;
    for (std::size_t p = 0; p + n <= texts[i].size(); ++p)
      ++grams[TokenSequence(texts[i].begin() + static_cast<std::ptrdiff_t>(p),
                            texts[i].begin() + static_cast<std::ptrdiff_t>(p + n))];
    std::size_t clipped = 0, total = 0;
    for (const auto& [g, c] : grams) {
      std::size_t ref = 0;
      for (std::size_t j = 0; j < texts.size(); ++j)
        if (j != i) ref = std::max(ref, occurrences(texts[j], g));
      clipped += std::min(c, ref);
      total += c;
    }
    sum += static_cast<double>(clipped) / static_cast<double>(total);
  }
  return sum / static_cast<double>(texts.size());
}

} // namespace abpe::oracle
