#pragma once

// Binary container for a final-layer attention tensor.
//
// Layout (little-endian):
//   bytes  0..7   magic "MMVUATN1"
//   bytes  8..39  u32 version, heads, n_sys, n_vis, n_q, n_a, grid_rows, grid_cols
//   bytes 40..    f32[heads * N * N], [head][row][column], N = n_sys + n_vis + n_q + n_a
//
// Row i is the attending token, column j the attended token.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mmvu/error.hpp"

namespace mmvu {

inline constexpr std::string_view kDumpMagic = "MMVUATN1";
inline constexpr std::uint32_t kDumpVersion = 1;
inline constexpr std::size_t kDumpHeaderBytes = 40;

struct SegmentLengths {
  std::uint32_t n_sys = 0;
  std::uint32_t n_vis = 0;
  std::uint32_t n_q = 0;
  std::uint32_t n_a = 0;
  std::uint32_t heads = 0;
  std::uint32_t grid_rows = 0;
  std::uint32_t grid_cols = 0;

  std::size_t total() const { return std::size_t{n_sys} + n_vis + n_q + n_a; }

  // Half-open token ranges of each segment.
  std::size_t sys_begin() const { return 0; }
  std::size_t vis_begin() const { return n_sys; }
  std::size_t q_begin() const { return std::size_t{n_sys} + n_vis; }
  std::size_t a_begin() const { return q_begin() + n_q; }

  bool operator==(const SegmentLengths&) const = default;
};

enum class DumpErrorKind { BadMagic, UnsupportedVersion, InvalidHeader, SizeMismatch, NonFinite,
                           NegativeValue };

class DumpError : public ValidationError {
 public:
  DumpError(DumpErrorKind kind, const std::string& detail)
      : ValidationError("attention dump: " + detail), kind_(kind), detail_(detail) {}
  DumpErrorKind kind() const { return kind_; }
  const std::string& detail() const { return detail_; }

 private:
  DumpErrorKind kind_;
  std::string detail_;
};

inline void validate(const SegmentLengths& seg) {
  if (!seg.n_sys || !seg.n_vis || !seg.n_q || !seg.n_a || !seg.heads || !seg.grid_rows ||
      !seg.grid_cols)
    throw DumpError(DumpErrorKind::InvalidHeader, "all segment lengths, heads and grid dims must be positive");
  if (std::uint64_t{seg.grid_rows} * seg.grid_cols != seg.n_vis)
    throw DumpError(DumpErrorKind::InvalidHeader,
                    "grid " + std::to_string(seg.grid_rows) + "x" + std::to_string(seg.grid_cols) +
                        " does not cover n_vis=" + std::to_string(seg.n_vis));
}

struct AttentionDump {
  SegmentLengths segments;
  std::vector<float> tensor;

  std::size_t tokens() const { return segments.total(); }

  float at(std::size_t head, std::size_t row, std::size_t col) const {
    const auto n = tokens();
    return tensor[(head * n + row) * n + col];
  }
  float& at(std::size_t head, std::size_t row, std::size_t col) {
    const auto n = tokens();
    return tensor[(head * n + row) * n + col];
  }

  static AttentionDump zeros(const SegmentLengths& seg) {
    AttentionDump d{seg, {}};
    d.tensor.assign(std::size_t{seg.heads} * seg.total() * seg.total(), 0.0f);
    return d;
  }
};

inline std::size_t expected_payload_floats(const SegmentLengths& seg) {
  const std::uint64_t n = seg.total();
  const std::uint64_t count = std::uint64_t{seg.heads} * n * n;
  if (n != 0 && count / n / n != seg.heads)
    throw DumpError(DumpErrorKind::InvalidHeader, "tensor size overflows");
  return static_cast<std::size_t>(count);
}

inline void validate_values(const std::vector<float>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]))
      throw DumpError(DumpErrorKind::NonFinite, "non-finite value at index " + std::to_string(i));
    if (values[i] < 0.0f)
      throw DumpError(DumpErrorKind::NegativeValue, "negative value at index " + std::to_string(i));
  }
}

inline void validate(const AttentionDump& dump) {
  validate(dump.segments);
  if (dump.tensor.size() != expected_payload_floats(dump.segments))
    throw DumpError(DumpErrorKind::SizeMismatch,
                    "tensor holds " + std::to_string(dump.tensor.size()) + " values, segments imply " +
                        std::to_string(expected_payload_floats(dump.segments)));
  validate_values(dump.tensor);
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

}  // namespace detail

inline std::string encode_attention_dump(const AttentionDump& dump) {
  validate(dump);
  const auto& s = dump.segments;
  std::string out;
  out.reserve(kDumpHeaderBytes + dump.tensor.size() * 4);
  out.append(kDumpMagic);
  for (auto v : {kDumpVersion, s.heads, s.n_sys, s.n_vis, s.n_q, s.n_a, s.grid_rows, s.grid_cols})
    detail::put_u32(out, v);
  for (float f : dump.tensor) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

inline void write_attention_dump(const AttentionDump& dump, std::ostream& sink) {
  const auto bytes = encode_attention_dump(dump);
  sink.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!sink) throw Error("attention dump: write failed");
}

// Header is fully validated before the payload is touched.
inline AttentionDump decode_attention_dump(std::string_view bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < kDumpMagic.size() || bytes.substr(0, kDumpMagic.size()) != kDumpMagic)
    throw DumpError(DumpErrorKind::BadMagic, "bad magic");
  if (bytes.size() < kDumpHeaderBytes)
    throw DumpError(DumpErrorKind::SizeMismatch, "truncated header (" + std::to_string(bytes.size()) + " bytes)");
  const auto version = detail::get_u32(p + 8);
  if (version != kDumpVersion)
    throw DumpError(DumpErrorKind::UnsupportedVersion, "unsupported version " + std::to_string(version));

  AttentionDump dump;
  auto& s = dump.segments;
  s.heads = detail::get_u32(p + 12);
  s.n_sys = detail::get_u32(p + 16);
  s.n_vis = detail::get_u32(p + 20);
  s.n_q = detail::get_u32(p + 24);
  s.n_a = detail::get_u32(p + 28);
  s.grid_rows = detail::get_u32(p + 32);
  s.grid_cols = detail::get_u32(p + 36);
  validate(s);

  const auto floats = expected_payload_floats(s);
  const auto payload = bytes.size() - kDumpHeaderBytes;
  if (floats > std::numeric_limits<std::size_t>::max() / 4 || payload != floats * 4)
    throw DumpError(DumpErrorKind::SizeMismatch, "payload is " + std::to_string(payload) +
                                                     " bytes, header implies " +
                                                     std::to_string(floats * 4));
  dump.tensor.resize(floats);
  const auto* q = p + kDumpHeaderBytes;
  for (std::size_t i = 0; i < floats; ++i)
    dump.tensor[i] = std::bit_cast<float>(detail::get_u32(q + 4 * i));
  validate_values(dump.tensor);
  return dump;
}

inline AttentionDump read_attention_dump(std::istream& source) {
  std::ostringstream buf;
  buf << source.rdbuf();
  return decode_attention_dump(buf.view());
}

inline AttentionDump read_attention_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open attention dump " + path.string());
  try {
    return read_attention_dump(in);
  } catch (const DumpError& e) {
    throw DumpError(e.kind(), e.detail() + " [" + path.string() + "]");
  }
}

inline void write_attention_dump(const AttentionDump& dump, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot create attention dump " + path.string());
  write_attention_dump(dump, out);
}

}  // namespace mmvu
