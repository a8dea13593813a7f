#pragma once

// Little-endian binary encoding with a CRC-32 trailer, shared by the dataset
// and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nfem::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

class Writer {
 public:
  explicit Writer(std::string_view magic);

  template <class T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    buffer_.insert(buffer_.end(), p, p + sizeof(T));
  }
  void put_doubles(std::span<const double> values);
  void put_string(std::string_view s);  // u32 length + bytes

  /// Appends the CRC-32 of everything after the magic and writes the file.
  void write_file(const std::filesystem::path& path, const char* module) const;
  /// Bytes that write_file would produce.
  std::vector<std::uint8_t> finish() const;

 private:
  std::size_t magic_size_;
  std::vector<std::uint8_t> buffer_;
};

class Reader {
 public:
  /// Reads the whole file, checks the magic and the CRC-32 trailer.
  Reader(const std::filesystem::path& path, std::string_view magic, const char* module);

  template <class T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  void get_doubles(std::span<double> out);
  std::string get_string();
  void expect_end() const;

 private:
  void need(std::size_t n) const;

  const char* module_;
  std::vector<std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
};

}  // namespace nfem::io
