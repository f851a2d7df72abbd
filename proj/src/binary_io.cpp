#include "rankprompt/binary_io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rankprompt/errors.hpp"

namespace rankprompt {

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  return fnv1a64(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(bytes.data()),
                                                bytes.size()));
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void ByteWriter::magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::matrix_values(const Matrix& m) {
  for (double v : m.values()) f64(v);
}

void ByteReader::need(std::size_t n, std::string_view what) {
  if (remaining() < n) {
    throw FormatError(FormatError::Kind::Truncated,
                      "truncated record while reading " + std::string(what) + " at byte " +
                          std::to_string(pos_));
  }
}

void ByteReader::expect_magic(std::string_view m) {
  if (remaining() < m.size() || std::memcmp(bytes_.data() + pos_, m.data(), m.size()) != 0) {
    throw FormatError(FormatError::Kind::BadMagic, "bad magic, expected \"" + std::string(m) + "\"");
  }
  pos_ += m.size();
}

std::uint64_t ByteReader::u64() {
  need(8, "count");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

Matrix ByteReader::matrix_values(std::size_t rows, std::size_t cols, std::string_view what) {
  if (cols != 0 && rows > remaining() / 8 / cols) {
    throw FormatError(FormatError::Kind::Truncated,
                      std::string(what) + ": header promises " + std::to_string(rows) + "x" +
                          std::to_string(cols) + " values but only " + std::to_string(remaining()) +
                          " bytes remain");
  }
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = f64();
      if (!std::isfinite(v)) {
        throw FormatError(FormatError::Kind::NonFinite, std::string(what) + ": non-finite value at row " +
                                                            std::to_string(r) + ", col " +
                                                            std::to_string(c));
      }
      m(r, c) = v;
    }
  }
  return m;
}

std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot open " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::string& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::Io, "short write to " + path);
}

}  // namespace rankprompt
