#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rankprompt/matrix.hpp"

namespace rankprompt {

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

/// Little-endian byte sink.
class ByteWriter {
 public:
  void magic(std::string_view m);
  void u64(std::uint64_t v);
  void f64(double v);
  void matrix_values(const Matrix& m);

  const std::vector<unsigned char>& bytes() const noexcept { return bytes_; }
  std::size_t size() const noexcept { return bytes_.size(); }

 private:
  std::vector<unsigned char> bytes_;
};

/// Little-endian byte source; throws FormatError(Truncated) on short reads.
class ByteReader {
 public:
  explicit ByteReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  /// Throws FormatError(BadMagic) on mismatch.
  void expect_magic(std::string_view m);
  std::uint64_t u64();
  double f64();
  /// Reads rows*cols reals; throws FormatError(NonFinite) naming row/col.
  Matrix matrix_values(std::size_t rows, std::size_t cols, std::string_view what);

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, std::string_view what);

  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const unsigned char> bytes);

}  // namespace rankprompt
