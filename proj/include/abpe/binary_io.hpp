#pragma once

// Little-endian helpers shared by the binary model/feature formats.

#include <abpe/error.hpp>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

namespace abpe::binary {

inline void write_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

template <typename UInt>
void write_le(std::ostream& out, UInt value) {
  std::array<char, sizeof(UInt)> bytes{};
  for (std::size_t i = 0; i < sizeof(UInt); ++i)
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

inline void write_f32(std::ostream& out, float value) { write_le(out, std::bit_cast<std::uint32_t>(value)); }
inline void write_f64(std::ostream& out, double value) { write_le(out, std::bit_cast<std::uint64_t>(value)); }

/// Sequential reader that turns short reads into FormatError.
class Reader {
public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  void expect_magic(std::string_view magic) {
    std::string got(magic.size(), '\0');
    in_.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (in_.gcount() != static_cast<std::streamsize>(magic.size()) || got != magic)
      fail("bad magic, expected \"" + std::string(magic) + "\"");
  }

  template <typename UInt>
  UInt read_le() {
    std::array<unsigned char, sizeof(UInt)> bytes{};
    in_.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (in_.gcount() != static_cast<std::streamsize>(bytes.size())) fail("truncated payload");
    UInt value = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) value |= static_cast<UInt>(bytes[i]) << (8 * i);
    return value;
  }

  float read_f32() { return std::bit_cast<float>(read_le<std::uint32_t>()); }
  double read_f64() { return std::bit_cast<double>(read_le<std::uint64_t>()); }

  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) fail("trailing bytes after payload");
  }

  [[noreturn]] void fail(const std::string& what) const { throw FormatError(source_, 0, what); }

private:
  std::istream& in_;
  std::string source_;
};

} // namespace abpe::binary
