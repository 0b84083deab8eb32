#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace abpe {

/// Base class for every data/format failure raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the source name and 1-based line (0 when
/// the failure is not line-addressable, e.g. binary payloads).
class FormatError : public Error {
public:
  FormatError(std::string source, std::size_t line, const std::string& what)
      : Error(describe(source, line, what)), source_(std::move(source)), line_(line) {}

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

private:
  static std::string describe(const std::string& source, std::size_t line, const std::string& what) {
    std::string out = source.empty() ? std::string("<input>") : source;
    if (line > 0) out += ":" + std::to_string(line);
    return out + ": " + what;
  }

  std::string source_;
  std::size_t line_;
};

/// A token id outside the vocabulary or alphabet it is used with.
class VocabularyError : public Error {
public:
  using Error::Error;
};

/// Precondition violated by caller-supplied parameters.
class ArgumentError : public Error {
public:
  using Error::Error;
};

} // namespace abpe
