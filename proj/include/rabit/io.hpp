#pragma once

// RBIT single-layer container and the multi-layer JSON manifest.
//
// Layout, all little-endian:
//   "RBIT" | u16 version=1 | u16 flags | u32 d_out | u32 d_in | u8 k
//   k x { g: d_out f32 | h: d_in f32 | bits: d_out*ceil(d_in/32) u32 }
//   [flags bit0] w_fp: d_out*d_in f32 row-major
//   [flags bit1] s_in: d_in f32 | s_out: d_out f32 | alpha_in f32 | alpha_out f32

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rabit/binarize.hpp"
#include "rabit/error.hpp"
#include "rabit/init.hpp"
#include "rabit/kernel.hpp"
#include "rabit/matrix.hpp"

namespace rabit::io {

inline constexpr std::array<char, 4> kMagic{'R', 'B', 'I', 'T'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::uint16_t kFlagWfp = 1u << 0;
inline constexpr std::uint16_t kFlagCalib = 1u << 1;
inline constexpr std::size_t kHeaderBytes = 4 + 2 + 2 + 4 + 4 + 1;

enum class IoErrc {
  bad_magic,
  bad_version,
  bad_header,
  truncated,
  dirty_padding,
  trailing_bytes,
  unreadable,
  unwritable,
  bad_manifest,
};

inline std::string_view to_string(IoErrc e) {
  switch (e) {
    case IoErrc::bad_magic: return "bad_magic";
    case IoErrc::bad_version: return "bad_version";
    case IoErrc::bad_header: return "bad_header";
    case IoErrc::truncated: return "truncated";
    case IoErrc::dirty_padding: return "dirty_padding";
    case IoErrc::trailing_bytes: return "trailing_bytes";
    case IoErrc::unreadable: return "unreadable";
    case IoErrc::unwritable: return "unwritable";
    case IoErrc::bad_manifest: return "bad_manifest";
  }
  return "?";
}

class IoError : public Error {
 public:
  IoError(IoErrc code, const std::string& what)
      : Error(std::string(to_string(code)) + ": " + what), code_(code) {}
  IoErrc code() const noexcept { return code_; }

 private:
  IoErrc code_;
};

/// Calibration profile as stored (fp32).
struct StoredCalib {
  std::vector<float> s_in;
  std::vector<float> s_out;
  float alpha_in = 0.0f;
  float alpha_out = 0.0f;

  static StoredCalib from(const CalibProfile& c) {
    StoredCalib s;
    for (double v : c.s_in().data()) s.s_in.push_back(static_cast<float>(v));
    for (double v : c.s_out().data()) s.s_out.push_back(static_cast<float>(v));
    s.alpha_in = static_cast<float>(c.alpha_in());
    s.alpha_out = static_cast<float>(c.alpha_out());
    return s;
  }
  CalibProfile to_profile() const {
    return CalibProfile(ChannelVec(Axis::input, std::vector<double>(s_in.begin(), s_in.end())),
                        ChannelVec(Axis::output, std::vector<double>(s_out.begin(), s_out.end())),
                        alpha_in, alpha_out);
  }
  friend bool operator==(const StoredCalib&, const StoredCalib&) = default;
};

struct Container {
  kernel::PackedStack stack;
  std::optional<std::vector<float>> w_fp;
  std::optional<StoredCalib> calib;

  friend bool operator==(const Container&, const Container&) = default;
};

inline Container make_container(const ResidualStack& s,
                                const std::optional<CalibProfile>& calib = std::nullopt) {
  Container c;
  c.stack = kernel::pack(s);
  if (s.has_w_fp()) {
    const auto d = s.w_fp()->data();
    c.w_fp.emplace(d.begin(), d.end());
  }
  if (calib) c.calib = StoredCalib::from(*calib);
  return c;
}

/// Unpacked stack with fp32 values widened to double.
inline ResidualStack to_stack(const Container& c) {
  std::vector<BinaryPath> paths;
  for (const auto& p : c.stack.paths())
    paths.emplace_back(kernel::unpack(p),
                       ChannelVec(Axis::output, std::vector<double>(p.g().begin(), p.g().end())),
                       ChannelVec(Axis::input, std::vector<double>(p.h().begin(), p.h().end())));
  std::optional<Matrix> w;
  if (c.w_fp)
    w.emplace(c.stack.rows(), c.stack.cols(),
              std::vector<double>(c.w_fp->begin(), c.w_fp->end()));
  return ResidualStack(std::move(paths), std::move(w));
}

inline std::size_t encoded_size(const Container& c) {
  const std::size_t r = c.stack.rows(), n = c.stack.cols();
  std::size_t bytes = kHeaderBytes + c.stack.k() * (4 * r + 4 * n + kernel::packed_weight_bytes(r, n));
  if (c.w_fp) bytes += 4 * r * n;
  if (c.calib) bytes += 4 * (n + r + 2);
  return bytes;
}

namespace detail {

class Sink {
 public:
  void u8(std::uint8_t v) { buf.push_back(static_cast<std::byte>(v)); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f32s(std::span<const float> v) {
    for (float x : v) f32(x);
  }
  std::vector<std::byte> buf;

 private:
  void le(std::uint32_t v, int n) {
    for (int i = 0; i < n; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Source {
 public:
  explicit Source(std::span<const std::byte> b) : b_(b) {}
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(b_[pos_++]);
  }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return le(4); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::vector<float> f32s(std::size_t n) {
    need(4 * n);
    std::vector<float> v(n);
    for (auto& x : v) x = f32();
    return v;
  }
  std::vector<std::uint32_t> u32s(std::size_t n) {
    need(4 * n);
    std::vector<std::uint32_t> v(n);
    for (auto& x : v) x = u32();
    return v;
  }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n)
      throw IoError(IoErrc::truncated, "need " + std::to_string(n) + " bytes at offset " +
                                           std::to_string(pos_) + ", have " +
                                           std::to_string(remaining()));
  }
  std::uint32_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint32_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint32_t{u8()} << (8 * i);
    return v;
  }
  std::span<const std::byte> b_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::byte> encode(const Container& c) {
  const auto& s = c.stack;
  if (s.k() == 0 || s.k() > 255) throw IoError(IoErrc::bad_header, "k must be in [1, 255]");
  if (s.rows() > UINT32_MAX || s.cols() > UINT32_MAX)
    throw IoError(IoErrc::bad_header, "dimension exceeds u32");
  if (c.w_fp && c.w_fp->size() != s.rows() * s.cols())
    throw IoError(IoErrc::bad_header, "w_fp size != d_out * d_in");
  if (c.calib && (c.calib->s_in.size() != s.cols() || c.calib->s_out.size() != s.rows()))
    throw IoError(IoErrc::bad_header, "calibration profile dimensions differ");
  detail::Sink out;
  out.buf.reserve(encoded_size(c));
  for (char ch : kMagic) out.u8(static_cast<std::uint8_t>(ch));
  out.u16(kVersion);
  out.u16(static_cast<std::uint16_t>((c.w_fp ? kFlagWfp : 0) | (c.calib ? kFlagCalib : 0)));
  out.u32(static_cast<std::uint32_t>(s.rows()));
  out.u32(static_cast<std::uint32_t>(s.cols()));
  out.u8(static_cast<std::uint8_t>(s.k()));
  for (const auto& p : s.paths()) {
    out.f32s(p.g());
    out.f32s(p.h());
    for (std::uint32_t w : p.bits()) out.u32(w);
  }
  if (c.w_fp) out.f32s(*c.w_fp);
  if (c.calib) {
    out.f32s(c.calib->s_in);
    out.f32s(c.calib->s_out);
    out.f32(c.calib->alpha_in);
    out.f32(c.calib->alpha_out);
  }
  return std::move(out.buf);
}

inline Container decode(std::span<const std::byte> bytes) {
  detail::Source in(bytes);
  if (bytes.size() < kMagic.size())
    throw IoError(IoErrc::truncated, "file shorter than magic");
  for (char ch : kMagic)
    if (in.u8() != static_cast<std::uint8_t>(ch)) throw IoError(IoErrc::bad_magic, "not an RBIT file");
  const std::uint16_t version = in.u16();
  if (version != kVersion)
    throw IoError(IoErrc::bad_version, "unsupported version " + std::to_string(version));
  const std::uint16_t flags = in.u16();
  if (flags & ~(kFlagWfp | kFlagCalib))
    throw IoError(IoErrc::bad_header, "unknown flag bits");
  const std::size_t rows = in.u32(), cols = in.u32(), k = in.u8();
  if (k == 0) throw IoError(IoErrc::bad_header, "k = 0");
  if (rows == 0 || cols == 0) throw IoError(IoErrc::bad_header, "empty dimension");

  std::vector<kernel::PackedPath> paths;
  const std::size_t words = rows * kernel::words_per_row(cols);
  for (std::size_t i = 0; i < k; ++i) {
    auto g = in.f32s(rows);
    auto h = in.f32s(cols);
    auto bits = in.u32s(words);
    const std::uint32_t pad = ~kernel::tail_mask(cols);
    const std::size_t wpr = kernel::words_per_row(cols);
    for (std::size_t r = 0; r < rows; ++r)
      if (bits[r * wpr + wpr - 1] & pad)
        throw IoError(IoErrc::dirty_padding, "path " + std::to_string(i) + " row " +
                                                 std::to_string(r) + " has padding bits set");
    paths.emplace_back(rows, cols, std::move(bits), std::move(g), std::move(h));
  }
  Container c;
  c.stack = kernel::PackedStack(std::move(paths));
  if (flags & kFlagWfp) c.w_fp = in.f32s(rows * cols);
  if (flags & kFlagCalib) {
    StoredCalib s;
    s.s_in = in.f32s(cols);
    s.s_out = in.f32s(rows);
    s.alpha_in = in.f32();
    s.alpha_out = in.f32();
    c.calib = std::move(s);
  }
  if (in.remaining() != 0)
    throw IoError(IoErrc::trailing_bytes, std::to_string(in.remaining()) + " bytes after payload");
  return c;
}

inline void write_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(IoErrc::unwritable, path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError(IoErrc::unwritable, path.string());
}

inline std::vector<std::byte> read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(IoErrc::unreadable, path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  if (!raw.empty()) std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

inline void save(const Container& c, const std::filesystem::path& path) {
  write_bytes(path, encode(c));
}

inline void save(const ResidualStack& s, const std::filesystem::path& path,
                 const std::optional<CalibProfile>& calib = std::nullopt) {
  save(make_container(s, calib), path);
}

inline Container load(const std::filesystem::path& path) { return decode(read_bytes(path)); }

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::span<const std::byte> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Manifest: {"format": "rbit-manifest", "version": 1, "layers": {name: file}}
// File paths are relative to the manifest's directory.

using Manifest = std::map<std::string, std::string>;

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "rbit-manifest";
  j["version"] = 1;
  j["layers"] = nlohmann::json::object();
  for (const auto& [name, file] : m) j["layers"][name] = file;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError(IoErrc::unwritable, path.string());
  f << j.dump(2) << '\n';
  if (!f) throw IoError(IoErrc::unwritable, path.string());
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError(IoErrc::unreadable, path.string());
  nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
  if (j.is_discarded() || !j.is_object() || j.value("format", "") != "rbit-manifest" ||
      !j.contains("layers") || !j["layers"].is_object())
    throw IoError(IoErrc::bad_manifest, path.string());
  Manifest m;
  for (auto it = j["layers"].begin(); it != j["layers"].end(); ++it) {
    if (!it.value().is_string()) throw IoError(IoErrc::bad_manifest, "layer entry not a string");
    m[it.key()] = it.value().get<std::string>();
  }
  return m;
}

/// Loads every container named in a manifest, keyed by layer name.
inline std::map<std::string, Container> load_model(const std::filesystem::path& manifest) {
  std::map<std::string, Container> out;
  const auto dir = manifest.parent_path();
  for (const auto& [name, file] : load_manifest(manifest)) out.emplace(name, load(dir / file));
  return out;
}

}  // namespace rabit::io
