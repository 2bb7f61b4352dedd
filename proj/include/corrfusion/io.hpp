#pragma once

// Little-endian f64 blobs and small text/JSON file helpers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "corrfusion/errors.hpp"

namespace corrfusion::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xFFu) << (8 * (7 - i));
    return out;
  }
}

inline void append_f64_le(std::string& buf, std::span<const double> values) {
  const std::size_t start = buf.size();
  buf.resize(start + values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(values[i]));
    std::memcpy(buf.data() + start + 8 * i, &bits, 8);
  }
}

inline std::vector<double> decode_f64_le(std::string_view bytes) {
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, bytes.data() + 8 * i, 8);
    out[i] = std::bit_cast<double>(to_little_endian(bits));
  }
  return out;
}

inline void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw IoError("missing file: " + p.string());
}

inline std::string read_bytes(const fs::path& p) {
  require_file(p);
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_bytes(const fs::path& p, std::string_view bytes) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + p.string());
}

inline void write_f64(const fs::path& p, std::span<const double> values) {
  std::string buf;
  append_f64_le(buf, values);
  write_bytes(p, buf);
}

// Reads exactly `expected` doubles; any other payload length is corruption.
inline std::vector<double> read_f64(const fs::path& p, std::size_t expected) {
  const std::string bytes = read_bytes(p);
  if (bytes.size() != expected * 8)
    throw IoError(p.filename().string() + ": expected " + std::to_string(expected * 8) +
                  " bytes, found " + std::to_string(bytes.size()));
  return decode_f64_le(bytes);
}

inline json read_json(const fs::path& p) {
  const std::string text = read_bytes(p);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw IoError(p.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& p, const json& j) { write_bytes(p, j.dump(2) + "\n"); }

}  // namespace corrfusion::io
