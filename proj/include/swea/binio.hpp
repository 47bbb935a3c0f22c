#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "swea/error.hpp"

namespace swea {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

/// FNV-1a 64-bit hash, hex-encoded. Used for manifest and vocab fingerprints.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a temporary sibling then renames, so readers never see a
/// partially written file.
inline void atomic_write_file(const std::filesystem::path& path,
                              const std::string& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write file: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Append-only little-endian byte sink.
class ByteWriter {
 public:
  void put_bytes(const void* data, std::size_t n) {
    const char* p = static_cast<const char*>(data);
    bytes_.append(p, p + n);
  }
  void put_u32(std::uint32_t v) { put_bytes(&v, sizeof(v)); }
  void put_u64(std::uint64_t v) { put_bytes(&v, sizeof(v)); }
  void put_f32(float v) { put_bytes(&v, sizeof(v)); }
  void put_string(const std::string& s) { bytes_ += s; }

  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

/// Bounds-checked little-endian byte source.
class ByteReader {
 public:
  explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}

  void get_bytes(void* out, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError("truncated file");
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t get_u32() {
    std::uint32_t v;
    get_bytes(&v, sizeof(v));
    return v;
  }
  std::uint64_t get_u64() {
    std::uint64_t v;
    get_bytes(&v, sizeof(v));
    return v;
  }
  float get_f32() {
    float v;
    get_bytes(&v, sizeof(v));
    return v;
  }
  std::string get_string(std::size_t n) {
    std::string s(n, '\0');
    get_bytes(s.data(), n);
    return s;
  }
  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace swea
