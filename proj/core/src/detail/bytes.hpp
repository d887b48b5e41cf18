#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

namespace archrecon::detail {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

inline bool slurp(const std::filesystem::path& path, std::string& out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return false;
  out.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
  return true;
}

}  // namespace archrecon::detail
