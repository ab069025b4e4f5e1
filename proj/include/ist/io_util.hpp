#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "ist/errors.hpp"

namespace ist::io {

std::uint32_t crc32(const void* data, std::size_t n, std::uint32_t seed = 0);

struct ByteWriter {
  std::vector<std::uint8_t> buf;
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f32(float v) { raw(&v, 4); }
  void str(const std::string& s) {
    u32(std::uint32_t(s.size()));
    raw(s.data(), s.size());
  }
};

struct ByteReader {
  const std::uint8_t* p;
  const std::uint8_t* end;
  void raw(void* out, std::size_t n) {
    if (p + n > end) throw ChecksumMismatch("truncated payload");
    std::memcpy(out, p, n);
    p += n;
  }
  std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
  float f32() { float v; raw(&v, 4); return v; }
  std::string str() {
    const std::uint32_t n = u32();
    if (p + n > end) throw ChecksumMismatch("truncated string");
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    return s;
  }
};

// whole-file helpers; write goes through a temp file + rename so a crash
// never leaves a corrupt artifact at the target path
void write_file_atomic(const std::string& path,
                       const std::vector<std::uint8_t>& buf);
std::vector<std::uint8_t> read_file(const std::string& path);

}  // namespace ist::io
