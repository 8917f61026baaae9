#pragma once

// Internal file helpers shared by the serialization code. Raw blobs are
// little-endian; we require a little-endian host rather than byte-swap.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rayreg/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "raw blob I/O assumes a little-endian host");

namespace rayreg::detail {

using nlohmann::json;

inline void write_json_file(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw FormatError("write failed: " + path.string());
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("invalid JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

// "foo.vol.json" -> "foo.vol.raw" (same directory).
inline std::filesystem::path raw_sibling(const std::filesystem::path& json_path) {
  std::filesystem::path p = json_path;
  p.replace_extension(".raw");
  return p;
}

template <typename T>
void write_raw(const std::vector<T>& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(T)));
  if (!out) throw FormatError("write failed: " + path.string());
}

template <typename T>
std::vector<T> read_raw(const std::filesystem::path& path,
                        std::size_t expected_count) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("cannot open: " + path.string());
  const auto bytes = static_cast<std::uint64_t>(in.tellg());
  if (bytes != expected_count * sizeof(T)) {
    throw FormatError("size mismatch in " + path.string() + ": expected " +
                      std::to_string(expected_count * sizeof(T)) +
                      " bytes, found " + std::to_string(bytes));
  }
  std::vector<T> data(expected_count);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(bytes));
  if (!in) throw FormatError("read failed: " + path.string());
  return data;
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw FormatError(what);
}

}  // namespace rayreg::detail
