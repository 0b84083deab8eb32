#pragma once

// Token ids <-> CJK Unified Ideographs (U+4E00..U+9FFF), one scalar per token.

#include <abpe/corpus_io.hpp>
#include <abpe/error.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

namespace abpe {

inline constexpr char32_t kCodecBase = 0x4E00;
inline constexpr char32_t kCodecLast = 0x9FFF;
inline constexpr std::size_t kCodecCapacity = kCodecLast - kCodecBase + 1; // 20992

/// UTF-8 text made only of in-region scalars.
using UnicodeUtterance = std::string;

/// Raised on an out-of-region or malformed character; offset() is the index
/// of the offending character within the utterance.
class DecodeError : public Error {
public:
  DecodeError(std::size_t offset, const std::string& what)
      : Error("character " + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

inline UnicodeUtterance tokens_to_unicode(const TokenSequence& seq) {
  UnicodeUtterance out;
  out.reserve(seq.size() * 3);
  for (TokenId id : seq) {
    if (id >= kCodecCapacity)
      throw VocabularyError("id " + std::to_string(id) + " exceeds the 20992-character codec capacity");
    const char32_t cp = kCodecBase + id;
    // Every scalar in the region encodes to three bytes.
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return out;
}

inline TokenSequence unicode_to_tokens(std::string_view text) {
  TokenSequence out;
  out.reserve(text.size() / 3);
  std::size_t i = 0;
  for (std::size_t index = 0; i < text.size(); ++index) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    if ((b0 & 0xF0) != 0xE0 || i + 3 > text.size()) throw DecodeError(index, "character outside U+4E00..U+9FFF");
    const auto b1 = static_cast<unsigned char>(text[i + 1]);
    const auto b2 = static_cast<unsigned char>(text[i + 2]);
    if ((b1 & 0xC0) != 0x80 || (b2 & 0xC0) != 0x80) throw DecodeError(index, "malformed UTF-8");
    const char32_t cp = (char32_t(b0 & 0x0F) << 12) | (char32_t(b1 & 0x3F) << 6) | char32_t(b2 & 0x3F);
    if (cp < kCodecBase || cp > kCodecLast) throw DecodeError(index, "character outside U+4E00..U+9FFF");
    out.push_back(static_cast<TokenId>(cp - kCodecBase));
    i += 3;
  }
  return out;
}

// Unicode corpus files: UTF-8, one utterance per line.

inline void write_unicode_corpus(std::ostream& out, const Corpus& corpus) {
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
    if (corpus.utterances[i].empty())
      throw ArgumentError("utterance " + std::to_string(i) + " is empty; empty sequences cannot be serialized");
    out << tokens_to_unicode(corpus.utterances[i]) << '\n';
  }
}

/// vocab_size is 1 + max id, like header-less token files.
inline Corpus parse_unicode_corpus(std::istream& in, const std::string& source = "") {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  TokenId max_id = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      corpus.utterances.push_back(unicode_to_tokens(line));
    } catch (const DecodeError& e) {
      throw FormatError(source, line_no, e.what());
    }
    for (TokenId id : corpus.utterances.back()) max_id = std::max(max_id, id);
  }
  if (corpus.utterances.empty()) throw FormatError(source, line_no, "no utterances in Unicode corpus");
  corpus.vocab_size = static_cast<std::size_t>(max_id) + 1;
  return corpus;
}

inline Corpus load_unicode_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return parse_unicode_corpus(in, path.string());
}

inline void save_unicode_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ostringstream buffer;
  write_unicode_corpus(buffer, corpus);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << buffer.str();
}

} // namespace abpe
