#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace esmhc::io {

/// Little-endian writer over an in-memory buffer; flush with write_file().
class ByteWriter {
 public:
  void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void f32(float v);
  void f64(double v);
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  const std::vector<char>& bytes() const { return bytes_; }
  /// Throws DataError when the file cannot be written.
  void write_file(const std::filesystem::path& path) const;

 private:
  std::vector<char> bytes_;
};

/// Bounds-checked little-endian reader. Every short read is a DataError
/// naming `what`.
class ByteReader {
 public:
  ByteReader(std::vector<char> bytes, std::string what)
      : bytes_(std::move(bytes)), what_(std::move(what)) {}
  static ByteReader from_file(const std::filesystem::path& path);

  void expect_magic(std::string_view tag);
  std::uint16_t u16();
  std::uint32_t u32();
  float f32();
  double f64();
  std::string raw(std::size_t n);

  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& why) const;

 private:
  const char* take(std::size_t n);

  std::vector<char> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace esmhc::io
