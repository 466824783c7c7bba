#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

// Small byte-level helpers shared by the log format, trace format, wire
// protocol and dictionary file.
namespace tierkv::codec {

std::string base64_encode(std::string_view bytes);

// Strict RFC 4648 decoding with padding. Returns nullopt on any
// non-alphabet character, bad length or non-canonical padding bits.
std::optional<std::string> base64_decode(std::string_view text);

// CRC-32C (Castagnoli), reflected, init/xorout 0xFFFFFFFF.
std::uint32_t crc32c(std::string_view bytes, std::uint32_t seed = 0);

std::uint64_t fnv1a64(std::string_view bytes) noexcept;
std::uint64_t fnv1a64(std::uint64_t value) noexcept;

inline void put_u16le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

inline void put_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint16_t get_u16le(const char* p) {
  auto b = reinterpret_cast<const unsigned char*>(p);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t get_u32le(const char* p) {
  auto b = reinterpret_cast<const unsigned char*>(p);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace tierkv::codec
