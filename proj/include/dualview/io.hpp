#pragma once

// Binary tensor files and small text helpers.
//
// DPT1 layout (all integers little-endian):
//   "DPT1"                  4 bytes
//   rank                    u8
//   dims                    rank x u64
//   payload                 prod(dims) x IEEE-754 binary32, row-major

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dualview/error.hpp"
#include "dualview/tensor.hpp"

namespace dualview::io {

using Bytes = std::vector<std::uint8_t>;

inline constexpr char kTensorMagic[4] = {'D', 'P', 'T', '1'};

namespace detail {

inline void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return v;
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

}  // namespace detail

inline Bytes encode_tensor(const Tensor& t) {
  if (t.rank() > std::numeric_limits<std::uint8_t>::max()) {
    throw Error(ErrorCode::InvalidArgument, "tensor rank exceeds 255");
  }
  Bytes out;
  out.reserve(5 + 8 * t.rank() + 4 * t.size());
  out.insert(out.end(), std::begin(kTensorMagic), std::end(kTensorMagic));
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape()) detail::put_u64(out, d);
  for (double v : t.values()) {
    const float f = static_cast<float>(v);
    if (!std::isfinite(f)) throw Error(ErrorCode::NonFinite, "tensor value not representable as finite float");
    detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

inline Tensor decode_tensor(std::span<const std::uint8_t> in) {
  if (in.size() < 5 || std::memcmp(in.data(), kTensorMagic, 4) != 0) {
    throw Error(ErrorCode::CorruptFile, "missing DPT1 header");
  }
  const std::size_t rank = in[4];
  std::size_t at = 5;
  if (in.size() < at + 8 * rank) throw Error(ErrorCode::CorruptFile, "truncated DPT1 dims");
  Shape shape(rank);
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < rank; ++i, at += 8) {
    const std::uint64_t d = detail::get_u64(in, at);
    if (d != 0 && count > std::numeric_limits<std::uint64_t>::max() / 4 / d) {
      throw Error(ErrorCode::CorruptFile, "DPT1 dims overflow");
    }
    count *= d;
    shape[i] = static_cast<std::size_t>(d);
  }
  if (in.size() - at != 4 * count) {
    throw Error(ErrorCode::CorruptFile, "DPT1 payload is " + std::to_string(in.size() - at) + " bytes, header says " +
                                            std::to_string(4 * count));
  }
  std::vector<double> data(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < data.size(); ++i, at += 4) {
    const float f = std::bit_cast<float>(detail::get_u32(in, at));
    if (!std::isfinite(f)) throw Error(ErrorCode::CorruptFile, "non-finite value in DPT1 payload");
    data[i] = f;
  }
  return Tensor(std::move(shape), std::move(data));
}

// ---------------------------------------------------------------------------
// Files

inline Bytes read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Writes to a sibling temp file and renames it over the target.
inline void write_bytes_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_bytes_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::string read_text(const std::filesystem::path& path) {
  const Bytes b = read_bytes(path);
  return std::string(b.begin(), b.end());
}

inline void write_tensor(const std::filesystem::path& path, const Tensor& t) { write_bytes_atomic(path, encode_tensor(t)); }

inline Tensor read_tensor(const std::filesystem::path& path) { return decode_tensor(read_bytes(path)); }

// ---------------------------------------------------------------------------
// key=value text. Blank lines and lines starting with '#' are skipped.

using KeyValues = std::vector<std::pair<std::string, std::string>>;

inline KeyValues parse_key_values(const std::string& text) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::CorruptFile, "line " + std::to_string(lineno) + ": expected key=value");
    }
    out.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return out;
}

inline std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

inline const std::string* find_value(const KeyValues& kv, const std::string& key) {
  for (const auto& [k, v] : kv)
    if (k == key) return &v;
  return nullptr;
}

inline const std::string& require_value(const KeyValues& kv, const std::string& key) {
  if (const std::string* v = find_value(kv, key)) return *v;
  throw Error(ErrorCode::CorruptFile, "missing key '" + key + "'");
}

inline std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &used, 10);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || s[0] == '-') {
    throw Error(ErrorCode::InvalidArgument, "'" + s + "' is not a valid unsigned integer for " + what);
  }
  return v;
}

inline bool parse_bool(const std::string& s, const std::string& what) {
  if (s == "1" || s == "true" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "no") return false;
  throw Error(ErrorCode::InvalidArgument, "'" + s + "' is not a valid flag for " + what);
}

}  // namespace dualview::io
