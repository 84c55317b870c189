#pragma once

// Little-endian binary encoding shared by the encoder weights file and the
// model archive. Readers throw DataError on truncation.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "hybridsa/tensor.hpp"

namespace hybridsa {

class BinaryWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void bytes(std::string_view raw);
  /// u32 length prefix followed by the raw bytes.
  void string(std::string_view s);
  /// Elements only, row-major; the shape is implied by the caller's layout.
  void matrix_values(const Matrix& m);
  /// u64 rows, u64 cols, then values.
  void matrix(const Matrix& m);

  const std::string& buffer() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class BinaryReader {
 public:
  BinaryReader(std::string_view data, std::string context)
      : data_(data), context_(std::move(context)) {}

  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string_view bytes(std::size_t n);
  std::string string();
  void matrix_values(Matrix& m);
  Matrix matrix();

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }
  /// Throws DataError unless every byte was consumed.
  void expect_end() const;
  [[noreturn]] void fail(const std::string& what) const;

 private:
  std::string_view data_;
  std::string context_;
  std::size_t pos_ = 0;
};

std::string read_file_bytes(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace hybridsa
