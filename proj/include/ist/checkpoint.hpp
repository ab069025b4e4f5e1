#pragma once

// Checkpoint format: header {magic "ISTC", version, config hash}, named
// parameter entries {name, shape, f32 payload}, an optimizer-state section
// (same entry layout, plus step counter and learning rate), trailing CRC32.

#include <string>

#include "ist/io_util.hpp"
#include "ist/optim.hpp"

namespace ist::ckpt {

constexpr char kMagic[4] = {'I', 'S', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void save_checkpoint(const std::string& path, const ParamStore<T>& params,
                     std::uint64_t config_hash,
                     AdamOptimizer<T>* opt = nullptr) {
  io::ByteWriter w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  w.u64(config_hash);
  w.u32(std::uint32_t(params.entries().size()));
  for (const auto& [name, t] : params.entries()) {
    w.str(name);
    w.u32(std::uint32_t(t.rows()));
    w.u32(std::uint32_t(t.cols()));
    for (const T v : t.data()) w.f32(float(v));
  }
  if (opt) {
    opt->ensure_state(const_cast<ParamStore<T>&>(params));
    w.u32(1);  // optimizer section present
    w.u64(opt->steps());
    w.f32(float(opt->lr_value()));
    for (const auto& m : opt->moment1())
      for (const T v : m) w.f32(float(v));
    for (const auto& m : opt->moment2())
      for (const T v : m) w.f32(float(v));
  } else {
    w.u32(0);
  }
  w.u32(io::crc32(w.buf.data(), w.buf.size()));
  io::write_file_atomic(path, w.buf);
}

template <typename T>
void load_checkpoint(const std::string& path, ParamStore<T>& params,
                     std::uint64_t expected_config_hash,
                     AdamOptimizer<T>* opt = nullptr) {
  auto buf = io::read_file(path);
  if (buf.size() < 24) throw ChecksumMismatch("checkpoint: file too short");
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw FormatVersionMismatch("checkpoint: bad magic bytes");
  std::uint32_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 4, 4);
  if (io::crc32(buf.data(), buf.size() - 4) != stored)
    throw ChecksumMismatch("checkpoint: CRC mismatch");
  io::ByteReader r{buf.data() + 4, buf.data() + buf.size() - 4};
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw FormatVersionMismatch("checkpoint: unsupported version " +
                                std::to_string(version));
  const std::uint64_t hash = r.u64();
  if (hash != expected_config_hash)
    throw ConfigHashMismatch("checkpoint: config hash mismatch");
  const std::uint32_t n = r.u32();
  if (n != params.entries().size())
    throw ConfigHashMismatch("checkpoint: parameter count mismatch");
  for (auto& [name, t] : params.entries()) {
    const std::string ename = r.str();
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (ename != name || rows != t.rows() || cols != t.cols())
      throw ConfigHashMismatch("checkpoint: entry '" + ename +
                               "' does not match model layout");
    for (auto& v : t.data()) v = T(r.f32());
  }
  const std::uint32_t has_opt = r.u32();
  if (opt) {
    if (!has_opt)
      throw ConfigHashMismatch("checkpoint: optimizer state missing");
    const std::uint64_t step = r.u64();
    const T lr = T(r.f32());
    opt->ensure_state(params);
    opt->restore_state(step, lr);
    for (auto& m : opt->moment1())
      for (auto& v : m) v = T(r.f32());
    for (auto& m : opt->moment2())
      for (auto& v : m) v = T(r.f32());
  }
}

}  // namespace ist::ckpt
