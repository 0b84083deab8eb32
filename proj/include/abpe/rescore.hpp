#pragma once

// Candidate rescoring: pick the candidate the sequence model finds most
// probable, and measure agreement with human naturalness rankings.

#include <abpe/bpe.hpp>
#include <abpe/corpus_io.hpp>
#include <abpe/error.hpp>
#include <abpe/slm.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace abpe {

struct CandidateSet {
  std::vector<TokenSequence> candidates;
  /// Rank per candidate, 1 = most natural; a permutation of 1..n.
  std::optional<std::vector<std::size_t>> human_ranks;
};

struct RescoreResult {
  std::vector<double> scores; // log-probabilities (optionally length-normalized)
  std::size_t best_index = 0;
};

struct RescoreOptions {
  bool length_norm = false;
  /// When set, candidates are base tokens and get encoded before scoring.
  const BpeModel* bpe = nullptr;
};

inline void check_rank_permutation(std::span<const std::size_t> ranks, std::size_t n) {
  if (ranks.size() != n)
    throw ArgumentError("human ranks: expected " + std::to_string(n) + " ranks, got " + std::to_string(ranks.size()));
  std::vector<bool> seen(n + 1, false);
  for (std::size_t r : ranks) {
    if (r < 1 || r > n || seen[r]) throw ArgumentError("human ranks must be a permutation of 1.." + std::to_string(n));
    seen[r] = true;
  }
}

/// Argmax with ties going to the lowest index.
inline RescoreResult select_best(std::vector<double> scores) {
  if (scores.empty()) throw ArgumentError("select_best: no scores");
  RescoreResult result{std::move(scores), 0};
  for (std::size_t i = 1; i < result.scores.size(); ++i)
    if (result.scores[i] > result.scores[result.best_index]) result.best_index = i;
  return result;
}

template <SequenceModel M>
RescoreResult rescore(const M& model, const CandidateSet& set, const RescoreOptions& options = {}) {
  const std::size_t n = set.candidates.size();
  if (n < 2) throw ArgumentError("rescore: need at least 2 candidates, got " + std::to_string(n));
  if (set.human_ranks) check_rank_permutation(*set.human_ranks, n);
  if (options.bpe && options.bpe->unit_count() != model.vocab_size())
    throw VocabularyError("rescore: BPE unit count " + std::to_string(options.bpe->unit_count()) +
                          " != model vocab " + std::to_string(model.vocab_size()));
  std::vector<double> scores;
  scores.reserve(n);
  for (const auto& raw : set.candidates) {
    if (raw.empty()) throw ArgumentError("rescore: empty candidate");
    const TokenSequence units = options.bpe ? bpe_encode(*options.bpe, raw) : raw;
    double score = slm_logprob(model, units);
    if (options.length_norm) score /= static_cast<double>(units.size());
    scores.push_back(score);
  }
  return select_best(std::move(scores));
}

/// Fraction of cases whose selected candidate is within the human top x.
inline double topx_accuracy(std::span<const RescoreResult> results,
                            std::span<const std::vector<std::size_t>> rank_sets, std::size_t x) {
  if (results.size() != rank_sets.size())
    throw ArgumentError("topx_accuracy: " + std::to_string(results.size()) + " results but " +
                        std::to_string(rank_sets.size()) + " rank sets");
  if (results.empty()) throw ArgumentError("topx_accuracy: no cases");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& ranks = rank_sets[i];
    check_rank_permutation(ranks, ranks.size());
    if (x < 1 || x > ranks.size()) throw ArgumentError("topx_accuracy: x must lie in 1..n");
    if (results[i].best_index >= ranks.size()) throw ArgumentError("topx_accuracy: best_index out of range");
    if (ranks[results[i].best_index] <= x) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

// ---------------------------------------------------------------------------
// Candidate manifest: TSV "case_id candidate_id token_file_path [human_rank]".
// An optional header row starting with "case_id" is skipped. Token file paths
// are relative to the manifest; each file holds exactly one utterance.

struct ManifestCase {
  std::string case_id;
  std::vector<std::string> candidate_ids;
  CandidateSet set;
};

inline std::vector<ManifestCase> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  const auto base_dir = path.parent_path();
  const std::string source = path.string();

  std::vector<ManifestCase> cases;
  std::map<std::string, std::size_t> index;
  std::vector<std::size_t> ranked_rows, unranked_rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (line_no == 1 && line.starts_with("case_id"))) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() != 3 && cols.size() != 4)
      throw FormatError(source, line_no, "expected 3 or 4 tab-separated columns, got " + std::to_string(cols.size()));
    auto [it, fresh] = index.emplace(cols[0], cases.size());
    if (fresh) {
      cases.push_back({cols[0], {}, {}});
      ranked_rows.push_back(0);
      unranked_rows.push_back(0);
    }
    auto& c = cases[it->second];
    std::filesystem::path token_path = cols[2];
    if (token_path.is_relative()) token_path = base_dir / token_path;
    const Corpus tokens = load_tokens(token_path);
    if (tokens.utterances.size() != 1)
      throw FormatError(source, line_no, "token file " + token_path.string() + " must hold exactly one utterance");
    c.candidate_ids.push_back(cols[1]);
    c.set.candidates.push_back(tokens.utterances.front());
    if (cols.size() == 4 && !cols[3].empty()) {
      if (!c.set.human_ranks) c.set.human_ranks.emplace();
      c.set.human_ranks->push_back(detail::parse_uint(cols[3], source, line_no));
      ++ranked_rows[it->second];
    } else {
      ++unranked_rows[it->second];
    }
  }
  if (cases.empty()) throw FormatError(source, line_no, "manifest lists no candidates");
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (ranked_rows[i] && unranked_rows[i])
      throw FormatError(source, 0, "case " + cases[i].case_id + ": either all or none of its candidates need a rank");
    if (cases[i].set.human_ranks) {
      try {
        check_rank_permutation(*cases[i].set.human_ranks, cases[i].set.candidates.size());
      } catch (const ArgumentError& e) {
        throw FormatError(source, 0, "case " + cases[i].case_id + ": " + e.what());
      }
    }
  }
  return cases;
}

} // namespace abpe
