#include "nfem/binary_io.hpp"

#include <fstream>
#include <iterator>

#include <zlib.h>

#include "nfem/error.hpp"

namespace nfem::io {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for large payloads.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
    crc = ::crc32(crc, bytes.data() + offset, static_cast<uInt>(chunk));
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

Writer::Writer(std::string_view magic) : magic_size_(magic.size()), buffer_(magic.begin(), magic.end()) {}

void Writer::put_doubles(std::span<const double> values) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
  buffer_.insert(buffer_.end(), p, p + values.size_bytes());
}

void Writer::put_string(std::string_view s) {
  put(static_cast<std::uint32_t>(s.size()));
  buffer_.insert(buffer_.end(), s.begin(), s.end());
}

std::vector<std::uint8_t> Writer::finish() const {
  std::vector<std::uint8_t> out = buffer_;
  const std::uint32_t crc = crc32(std::span(buffer_).subspan(magic_size_));
  const auto* p = reinterpret_cast<const std::uint8_t*>(&crc);
  out.insert(out.end(), p, p + sizeof(crc));
  return out;
}

void Writer::write_file(const std::filesystem::path& path, const char* module) const {
  const auto bytes = finish();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(module, "cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError(module, "write failed for " + path.string());
}

Reader::Reader(const std::filesystem::path& path, std::string_view magic, const char* module) : module_(module) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(module, "cannot open " + path.string());
  bytes_.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
  if (bytes_.size() < magic.size() || std::memcmp(bytes_.data(), magic.data(), magic.size()) != 0)
    throw FormatError(module, "bad magic or unsupported version in " + path.string());
  if (bytes_.size() < magic.size() + sizeof(std::uint32_t))
    throw FormatError(module, "truncated file " + path.string());
  end_ = bytes_.size() - sizeof(std::uint32_t);
  std::uint32_t stored;
  std::memcpy(&stored, bytes_.data() + end_, sizeof(stored));
  const auto payload = std::span<const std::uint8_t>(bytes_).subspan(magic.size(), end_ - magic.size());
  if (crc32(payload) != stored) throw FormatError(module, "checksum mismatch (truncated or corrupt) in " + path.string());
  pos_ = magic.size();
}

void Reader::need(std::size_t n) const {
  if (pos_ + n > end_) throw FormatError(module_, "unexpected end of payload (length mismatch)");
}

void Reader::get_doubles(std::span<double> out) {
  need(out.size_bytes());
  std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
  pos_ += out.size_bytes();
}

std::string Reader::get_string() {
  const auto n = get<std::uint32_t>();
  need(n);
  std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
  pos_ += n;
  return s;
}

void Reader::expect_end() const {
  if (pos_ != end_) throw FormatError(module_, "trailing bytes after payload (length mismatch)");
}

}  // namespace nfem::io
