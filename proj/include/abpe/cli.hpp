#pragma once

// The `abpe` command-line front end. Every subcommand maps onto one library
// operation; run() is kept separate from main() so it can be driven
// in-process.
//
// Exit codes: 0 success, 1 data/format error, 2 usage error.

#include <abpe/abpe.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace abpe::cli {

/// Raised for flag combinations CLI11 cannot express (maps to exit 2).
class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

namespace fs = std::filesystem;

inline std::string version_text() {
  return std::string("abpe ") + kToolVersion +
         "\nformats: tokens #vocab, merges #abpe 1, features ABPEFEAT v1, kmeans ABPEKMNS v1, ngram ABPENGRM v1\n";
}

/// Writes to --out when given, otherwise to stdout.
inline void emit(const std::string& data, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << data;
    return;
  }
  std::ofstream file(out_path, std::ios::binary);
  if (!file) throw Error("cannot write " + out_path);
  file << data;
  if (!file) throw Error("write failed: " + out_path);
}

inline std::string tokens_text(const Corpus& corpus) {
  std::ostringstream s;
  write_tokens(s, corpus);
  return s.str();
}

enum class TextFormat { automatic, tokens, unicode };

inline const std::map<std::string, TextFormat> kTextFormats{
    {"auto", TextFormat::automatic}, {"tokens", TextFormat::tokens}, {"unicode", TextFormat::unicode}};

/// Token or Unicode corpus. "auto" picks Unicode when the first byte is a
/// UTF-8 lead byte of a three-byte scalar.
inline Corpus load_corpus(const std::string& path, TextFormat format) {
  if (format == TextFormat::automatic) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    const int first = in.get();
    format = (first != std::char_traits<char>::eof() && (first & 0xF0) == 0xE0) ? TextFormat::unicode
                                                                                : TextFormat::tokens;
  }
  return format == TextFormat::unicode ? load_unicode_corpus(path) : load_tokens(path);
}

inline std::string metric_output(const std::string& metric, const ReportFields& fields) {
  return format_record(metric, fields) + "\n" + format_table(fields);
}

inline void emit_report(const std::string& text, const std::string& report_path, std::ostream& out) {
  out << text;
  if (!report_path.empty()) emit(text, report_path, out);
}

} // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace detail;

  CLI::App app{"Acoustic BPE toolkit: discretize, encode, model and evaluate discrete token sequences", "abpe"};
  app.require_subcommand(0, 1);
  bool show_version = false;
  app.add_flag("--version", show_version, "Print tool and file-format versions");

  // synth -------------------------------------------------------------------
  SynthSpec synth;
  std::optional<std::uint64_t> synth_seed;
  std::string synth_out, feat_out, feat_format = "binary";
  std::size_t feat_dim = 8;
  double feat_spread = 0.5;
  auto* c_synth = app.add_subcommand("synth", "Generate a deterministic motif-structured token corpus");
  c_synth->add_option("--vocab", synth.vocab_size, "Base alphabet size")->capture_default_str();
  c_synth->add_option("--utts", synth.n_utts, "Number of utterances")->capture_default_str();
  c_synth->add_option("--len-min", synth.len_min)->capture_default_str();
  c_synth->add_option("--len-max", synth.len_max)->capture_default_str();
  c_synth->add_option("--motifs", synth.motif_count, "Number of motifs")->capture_default_str();
  c_synth->add_option("--motif-len-min", synth.motif_len_min)->capture_default_str();
  c_synth->add_option("--motif-len-max", synth.motif_len_max)->capture_default_str();
  c_synth->add_option("--motif-rate", synth.motif_rate, "Probability of a motif at each step")->capture_default_str();
  c_synth->add_option("--zipf", synth.zipf_exponent, "Zipf exponent of background tokens")->capture_default_str();
  c_synth->add_option("--seed", synth_seed, "Random seed")->required();
  c_synth->add_option("--out", synth_out, "Token file (stdout when absent)");
  c_synth->add_option("--features-out", feat_out, "Also write feature frames for the corpus");
  c_synth->add_option("--features-dim", feat_dim)->capture_default_str();
  c_synth->add_option("--features-spread", feat_spread, "Gaussian noise around each token centre")->capture_default_str();
  c_synth->add_option("--features-format", feat_format)->check(CLI::IsMember({"binary", "csv"}))->capture_default_str();

  // kmeans-fit --------------------------------------------------------------
  KMeansOptions km;
  std::optional<std::uint64_t> km_seed;
  std::string km_in, km_out;
  std::size_t km_sample = 0;
  auto* c_kfit = app.add_subcommand("kmeans-fit", "Fit k-means centroids to a feature matrix");
  c_kfit->add_option("--in", km_in, "Feature file (binary or CSV)")->required();
  c_kfit->add_option("--k", km.k, "Number of centroids")->required()->check(CLI::PositiveNumber);
  c_kfit->add_option("--seed", km_seed)->required();
  c_kfit->add_option("--max-iters", km.max_iters)->capture_default_str()->check(CLI::PositiveNumber);
  c_kfit->add_option("--tol", km.tol)->capture_default_str()->check(CLI::NonNegativeNumber);
  c_kfit->add_option("--sample", km_sample, "Fit on a seeded reservoir sample of this many rows");
  c_kfit->add_option("--out", km_out, "Model file")->required();

  // discretize ---------------------------------------------------------------
  std::string disc_model, disc_out;
  std::vector<std::string> disc_in;
  std::size_t frames_per_utt = 0;
  auto* c_disc = app.add_subcommand("discretize", "Assign feature frames to their nearest centroid");
  c_disc->add_option("--model", disc_model, "k-means model file")->required();
  c_disc->add_option("--in", disc_in, "Feature file(s); each becomes one utterance")->required();
  c_disc->add_option("--frames-per-utt", frames_per_utt, "Split each file into utterances of this many frames");
  c_disc->add_option("--out", disc_out);

  // to-unicode / from-unicode ------------------------------------------------
  std::string tu_in, tu_out, fu_in, fu_out;
  std::size_t fu_vocab = 0;
  auto* c_tou = app.add_subcommand("to-unicode", "Map token ids to CJK characters");
  c_tou->add_option("--in", tu_in)->required();
  c_tou->add_option("--out", tu_out);
  auto* c_fromu = app.add_subcommand("from-unicode", "Map CJK characters back to token ids");
  c_fromu->add_option("--in", fu_in)->required();
  c_fromu->add_option("--vocab", fu_vocab, "Vocabulary size for the header (default 1 + max id)");
  c_fromu->add_option("--out", fu_out);

  // bpe-train / bpe-encode / bpe-decode ---------------------------------------
  std::string bt_in, bt_out, be_model, be_in, be_out, bd_model, bd_in, bd_out;
  std::size_t bt_vocab = 0;
  TextFormat bt_format = TextFormat::automatic, be_format = TextFormat::automatic;
  bool bd_unicode = false;
  auto* c_btrain = app.add_subcommand("bpe-train", "Learn BPE merges up to a target vocabulary");
  c_btrain->add_option("--in", bt_in, "Token or Unicode corpus")->required();
  c_btrain->add_option("--vocab", bt_vocab, "Target vocabulary size (base + merges)")->required();
  c_btrain->add_option("--format", bt_format)->transform(CLI::CheckedTransformer(kTextFormats, CLI::ignore_case).description("auto|tokens|unicode"))->option_text("auto|tokens|unicode [auto]");
  c_btrain->add_option("--out", bt_out, "Merges file");
  auto* c_benc = app.add_subcommand("bpe-encode", "Encode base tokens into BPE units");
  c_benc->add_option("--model", be_model, "Merges file")->required();
  c_benc->add_option("--in", be_in)->required();
  c_benc->add_option("--format", be_format)->transform(CLI::CheckedTransformer(kTextFormats, CLI::ignore_case).description("auto|tokens|unicode"))->option_text("auto|tokens|unicode [auto]");
  c_benc->add_option("--out", be_out);
  auto* c_bdec = app.add_subcommand("bpe-decode", "Expand BPE units back to base tokens");
  c_bdec->add_option("--model", bd_model, "Merges file")->required();
  c_bdec->add_option("--in", bd_in)->required();
  c_bdec->add_flag("--unicode", bd_unicode, "Emit Unicode text instead of a token file");
  c_bdec->add_option("--out", bd_out);

  // slm-train / score / continue ---------------------------------------------
  NgramOptions ngram;
  std::string st_in, st_out;
  auto* c_strain = app.add_subcommand("slm-train", "Train the interpolated n-gram sequence model");
  c_strain->add_option("--in", st_in)->required();
  c_strain->add_option("--order", ngram.order)->capture_default_str()->check(CLI::PositiveNumber);
  c_strain->add_option("--add-k", ngram.add_k)->capture_default_str();
  c_strain->add_option("--weights", ngram.weights, "Interpolation weights, unigram first (default uniform)");
  c_strain->add_option("--out", st_out, "Model file")->required();

  std::string sc_model, sc_in, sc_out;
  auto* c_score = app.add_subcommand("score", "Natural-log probability of every utterance");
  c_score->add_option("--model", sc_model)->required();
  c_score->add_option("--in", sc_in)->required();
  c_score->add_option("--out", sc_out);

  SamplingOptions sampling;
  std::optional<std::uint64_t> ct_seed;
  std::size_t ct_max_new = 0, ct_prompt_len = 0, ct_samples = 1, ct_top_k = 0;
  std::string ct_model, ct_in, ct_out;
  auto* c_cont = app.add_subcommand("continue", "Sample continuations of prompt utterances");
  c_cont->add_option("--model", ct_model)->required();
  c_cont->add_option("--in", ct_in, "Prompt token file")->required();
  c_cont->add_option("--max-new", ct_max_new, "Maximum tokens to append")->required();
  c_cont->add_option("--prompt-len", ct_prompt_len, "Crop each prompt to its first N tokens (0 = whole)");
  c_cont->add_option("--samples", ct_samples, "Continuations per prompt")->capture_default_str()->check(CLI::PositiveNumber);
  c_cont->add_option("--seed", ct_seed);
  c_cont->add_option("--temperature", sampling.temperature)->capture_default_str();
  c_cont->add_option("--top-k", ct_top_k)->check(CLI::PositiveNumber);
  c_cont->add_flag("--greedy", sampling.greedy, "Deterministic argmax decoding (zero-temperature limit)");
  c_cont->add_option("--out", ct_out);

  // rescore ------------------------------------------------------------------
  std::string rs_model, rs_manifest, rs_bpe, rs_out;
  bool rs_length_norm = false;
  std::vector<std::size_t> rs_x{1, 2, 3};
  auto* c_rescore = app.add_subcommand("rescore", "Pick the most probable candidate per case");
  c_rescore->add_option("--model", rs_model)->required();
  c_rescore->add_option("--manifest", rs_manifest, "TSV: case_id, candidate_id, token_file, [human_rank]")->required();
  c_rescore->add_option("--bpe", rs_bpe, "Merges file; candidates are base tokens to encode first");
  c_rescore->add_flag("--length-norm", rs_length_norm, "Divide log-probabilities by candidate length");
  c_rescore->add_option("--x", rs_x, "Top-x cut-offs for the summary")->capture_default_str();
  c_rescore->add_option("--out", rs_out);

  // metrics ------------------------------------------------------------------
  std::string mc_base, mc_enc, mc_report;
  std::size_t mc_vocab = 0;
  auto* c_mcomp = app.add_subcommand("metrics-compress", "Average sequence lengths and compression ratio");
  c_mcomp->add_option("--base", mc_base)->required();
  c_mcomp->add_option("--encoded", mc_enc)->required();
  c_mcomp->add_option("--vocab", mc_vocab, "Vocabulary size to report (default: encoded file's)");
  c_mcomp->add_option("--report", mc_report);

  std::string mv_in, mv_report;
  std::size_t mv_n = 3;
  bool mv_drop_short = false;
  auto* c_mvert = app.add_subcommand("metrics-vert", "Self-BLEU, auto-BLEU and VERT diversity");
  c_mvert->add_option("--in", mv_in)->required();
  c_mvert->add_option("--n", mv_n)->capture_default_str()->check(CLI::PositiveNumber);
  c_mvert->add_flag("--drop-short", mv_drop_short, "Skip utterances shorter than n instead of failing");
  c_mvert->add_option("--report", mv_report);

  std::string ms_model, ms_in, ms_corrupted, ms_report;
  std::size_t ms_block = 1;
  std::optional<std::uint64_t> ms_seed;
  auto* c_msyn = app.add_subcommand("metrics-syntax", "Accuracy at preferring intact over corrupted utterances");
  c_msyn->add_option("--model", ms_model)->required();
  c_msyn->add_option("--in", ms_in, "Intact utterances")->required();
  c_msyn->add_option("--corrupted", ms_corrupted, "Paired corrupted utterances (default: block-shuffle --in)");
  c_msyn->add_option("--block", ms_block)->capture_default_str()->check(CLI::PositiveNumber);
  c_msyn->add_option("--seed", ms_seed, "Shuffle seed (required without --corrupted)");
  c_msyn->add_option("--report", ms_report);

  std::string mx_model, mx_in, mx_report;
  auto* c_mxent = app.add_subcommand("metrics-xent", "Cross-entropy of samples under a reference model");
  c_mxent->add_option("--model", mx_model, "Reference model")->required();
  c_mxent->add_option("--in", mx_in)->required();
  c_mxent->add_option("--report", mx_report);

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\nRun with --help for usage.\n";
    return 2;
  }

  if (show_version) {
    out << version_text();
    return 0;
  }

  try {
    if (*c_synth) {
      synth.seed = *synth_seed;
      const Corpus corpus = synth_corpus(synth);
      emit(tokens_text(corpus), synth_out, out);
      if (!feat_out.empty())
        save_features(synth_features(corpus, feat_dim, feat_spread, synth.seed), feat_out,
                      feat_format == "csv" ? FeatureFormat::csv : FeatureFormat::binary);
    } else if (*c_kfit) {
      km.seed = *km_seed;
      FeatureMatrix x = load_features(km_in);
      if (km_sample > 0) x = reservoir_sample(x, km_sample, km.seed);
      const KMeansFit fit = kmeans_fit(x, km);
      save_kmeans(fit.model, km_out);
      err << "kmeans: k=" << fit.model.k << " iterations=" << fit.iterations
          << " inertia=" << format_number(fit.inertia()) << "\n";
    } else if (*c_disc) {
      const KMeansModel model = load_kmeans(disc_model);
      Corpus corpus{{}, model.k};
      for (const auto& path : disc_in) {
        const TokenSequence ids = kmeans_assign(model, load_features(path));
        const std::size_t chunk = frames_per_utt ? frames_per_utt : ids.size();
        for (std::size_t i = 0; i < ids.size(); i += chunk)
          corpus.utterances.emplace_back(ids.begin() + i, ids.begin() + std::min(ids.size(), i + chunk));
      }
      emit(tokens_text(corpus), disc_out, out);
    } else if (*c_tou) {
      std::ostringstream s;
      write_unicode_corpus(s, load_tokens(tu_in));
      emit(s.str(), tu_out, out);
    } else if (*c_fromu) {
      Corpus corpus = load_unicode_corpus(fu_in);
      if (fu_vocab) {
        if (fu_vocab < corpus.vocab_size) throw UsageError("--vocab is smaller than the largest id in the input");
        corpus.vocab_size = fu_vocab;
      }
      emit(tokens_text(corpus), fu_out, out);
    } else if (*c_btrain) {
      const BpeModel model = bpe_train(load_corpus(bt_in, bt_format), bt_vocab);
      std::ostringstream s;
      write_bpe(s, model);
      emit(s.str(), bt_out, out);
      err << "bpe-train: " << model.merges().size() << " merges, " << model.unit_count() << " units\n";
    } else if (*c_benc) {
      const BpeModel model = load_bpe(be_model);
      emit(tokens_text(bpe_encode(model, load_corpus(be_in, be_format))), be_out, out);
    } else if (*c_bdec) {
      const BpeModel model = load_bpe(bd_model);
      const Corpus decoded = bpe_decode(model, load_tokens(bd_in));
      if (bd_unicode) {
        std::ostringstream s;
        write_unicode_corpus(s, decoded);
        emit(s.str(), bd_out, out);
      } else {
        emit(tokens_text(decoded), bd_out, out);
      }
    } else if (*c_strain) {
      save_ngram(slm_train(load_tokens(st_in), ngram), st_out);
    } else if (*c_score) {
      const NgramModel model = load_ngram(sc_model);
      const Corpus corpus = load_tokens(sc_in);
      std::string text;
      for (const auto& u : corpus.utterances) text += format_number(slm_logprob(model, u)) + "\n";
      emit(text, sc_out, out);
    } else if (*c_cont) {
      if (!ct_seed && !sampling.greedy) throw UsageError("continue: --seed is required unless --greedy is set");
      if (ct_top_k) sampling.top_k = ct_top_k;
      const NgramModel model = load_ngram(ct_model);
      const Corpus prompts = load_tokens(ct_in);
      Rng rng(ct_seed.value_or(0));
      Corpus result{{}, model.vocab_size()};
      for (const auto& p : prompts.utterances) {
        TokenSequence prompt = p;
        if (ct_prompt_len && prompt.size() > ct_prompt_len) prompt.resize(ct_prompt_len);
        for (std::size_t s = 0; s < ct_samples; ++s) {
          TokenSequence seq = slm_continue(model, prompt, ct_max_new, sampling, rng);
          if (seq.empty()) continue; // empty prompt immediately followed by EOS
          result.utterances.push_back(std::move(seq));
        }
      }
      if (result.utterances.empty()) throw Error("continue: every sample was empty");
      emit(tokens_text(result), ct_out, out);
    } else if (*c_rescore) {
      const NgramModel model = load_ngram(rs_model);
      std::optional<BpeModel> bpe;
      if (!rs_bpe.empty()) bpe = load_bpe(rs_bpe);
      const RescoreOptions options{rs_length_norm, bpe ? &*bpe : nullptr};
      const auto cases = load_manifest(rs_manifest);
      std::string text = "case_id\tbest_candidate\tbest_index\tbest_score\n";
      std::vector<RescoreResult> results;
      std::vector<std::vector<std::size_t>> ranks;
      bool all_ranked = true;
      for (const auto& c : cases) {
        RescoreResult r = rescore(model, c.set, options);
        text += c.case_id + "\t" + c.candidate_ids[r.best_index] + "\t" + std::to_string(r.best_index) + "\t" +
                format_number(r.scores[r.best_index]) + "\n";
        if (c.set.human_ranks) ranks.push_back(*c.set.human_ranks);
        else all_ranked = false;
        results.push_back(std::move(r));
      }
      if (all_ranked) {
        ReportFields fields{{"cases", std::to_string(results.size())}};
        for (std::size_t x : rs_x) fields.emplace_back("top" + std::to_string(x), format_number(topx_accuracy(results, ranks, x)));
        text += metric_output("topx", fields);
      }
      emit(text, rs_out, out);
    } else if (*c_mcomp) {
      const Corpus base = load_tokens(mc_base);
      const Corpus encoded = load_tokens(mc_enc);
      const auto report = compression_stats(base, encoded, mc_vocab ? mc_vocab : encoded.vocab_size);
      emit_report(metric_output("compress", report.fields()), mc_report, out);
    } else if (*c_mvert) {
      Corpus corpus = load_tokens(mv_in);
      std::size_t dropped = 0;
      if (mv_drop_short)
        dropped = std::erase_if(corpus.utterances, [&](const TokenSequence& u) { return u.size() < mv_n; });
      auto fields = vert(corpus.utterances, mv_n).fields();
      if (mv_drop_short) fields.emplace_back("dropped", std::to_string(dropped));
      emit_report(metric_output("vert", fields), mv_report, out);
    } else if (*c_msyn) {
      const NgramModel model = load_ngram(ms_model);
      const Corpus intact = load_tokens(ms_in);
      std::vector<SyntaxPair> pairs;
      if (!ms_corrupted.empty()) {
        const Corpus corrupted = load_tokens(ms_corrupted);
        if (corrupted.utterances.size() != intact.utterances.size())
          throw Error("metrics-syntax: --in and --corrupted hold different utterance counts");
        for (std::size_t i = 0; i < intact.utterances.size(); ++i)
          pairs.push_back({intact.utterances[i], corrupted.utterances[i]});
      } else {
        if (!ms_seed) throw UsageError("metrics-syntax: --seed is required unless --corrupted is given");
        for (std::size_t i = 0; i < intact.utterances.size(); ++i) {
          const auto& u = intact.utterances[i];
          if (u.size() < 2) continue;
          pairs.push_back({u, shuffle_corrupt(u, ms_block, *ms_seed + i)});
        }
      }
      emit_report(metric_output("syntax", syntax_accuracy(model, std::span<const SyntaxPair>(pairs)).fields()),
                  ms_report, out);
    } else if (*c_mxent) {
      const NgramModel model = load_ngram(mx_model);
      const Corpus samples = load_tokens(mx_in);
      emit_report(metric_output("xent", cross_entropy(samples.utterances, model).fields()), mx_report, out);
    } else {
      out << app.help();
      return 2;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, out, err);
}

} // namespace abpe::cli
