#include "hybridsa/binary_io.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "hybridsa/error.hpp"

namespace hybridsa {

void BinaryWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void BinaryWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::bytes(std::string_view raw) { buf_.append(raw); }

void BinaryWriter::string(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s);
}

void BinaryWriter::matrix_values(const Matrix& m) {
  for (double v : m.values()) f64(v);
}

void BinaryWriter::matrix(const Matrix& m) {
  u64(m.rows());
  u64(m.cols());
  matrix_values(m);
}

std::string_view BinaryReader::bytes(std::size_t n) {
  if (n > remaining()) fail("truncated");
  const std::string_view out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::uint32_t BinaryReader::u32() {
  const auto raw = bytes(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[i])) << (8 * i);
  return v;
}

std::uint64_t BinaryReader::u64() {
  const auto raw = bytes(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(raw[i])) << (8 * i);
  return v;
}

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::string BinaryReader::string() {
  const std::uint32_t n = u32();
  return std::string(bytes(n));
}

void BinaryReader::matrix_values(Matrix& m) {
  if (m.size() * 8 > remaining()) fail("truncated");
  for (double& v : m.values()) v = f64();
}

Matrix BinaryReader::matrix() {
  const std::uint64_t rows = u64();
  const std::uint64_t cols = u64();
  if (cols != 0 && rows > remaining() / 8 / cols) fail("truncated matrix");
  Matrix m(rows, cols);
  matrix_values(m);
  return m;
}

void BinaryReader::expect_end() const {
  if (!at_end()) fail(std::to_string(remaining()) + " trailing bytes");
}

void BinaryReader::fail(const std::string& what) const {
  throw DataError("corrupt " + context_ + ": " + what + " at byte " + std::to_string(pos_));
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace hybridsa
