#pragma once

// Shared binary container used for datasets, encoder checkpoints and memory
// bank dumps: a fixed 32-byte little-endian header followed by f32 payloads.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace repair::io {

inline constexpr std::size_t kHeaderBytes = 32;

using Magic = std::array<char, 4>;

/// Layout: magic[4] version:u32 f0:u32 f1:u32 f2:u32 f3:u32 f4:u64.
/// The meaning of f0..f4 is per container kind.
struct Header {
  Magic magic{};
  std::uint32_t version = 0;
  std::array<std::uint32_t, 4> fields{};
  std::uint64_t tail = 0;
};

void write_header(std::ostream& out, const Header& h);
/// Reads a header and validates magic and version. Throws FormatError.
Header read_header(std::istream& in, const Magic& expected_magic, std::uint32_t expected_version);

void write_u32(std::ostream& out, std::uint32_t v);
void write_u8(std::ostream& out, std::uint8_t v);
void write_f32(std::ostream& out, std::span<const float> values);

/// Each reader names `what` in the FormatError raised on truncation.
std::uint32_t read_u32(std::istream& in, const std::string& what);
std::uint8_t read_u8(std::istream& in, const std::string& what);
void read_f32(std::istream& in, std::span<float> values, const std::string& what);

std::uint32_t float_bits(float f);
float bits_float(std::uint32_t bits);

/// 64-bit FNV-1a over the raw bytes of a file.
std::uint64_t file_fingerprint(const std::string& path);
std::string hex64(std::uint64_t v);

}  // namespace repair::io
