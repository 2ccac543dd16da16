#include "repair/binary_io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

#include "repair/errors.hpp"

namespace repair::io {
namespace {

void put_le(std::ostream& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_le(std::istream& in, int bytes, const std::string& what) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw FormatError("truncated payload while reading " + what);
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

}  // namespace

void write_header(std::ostream& out, const Header& h) {
  out.write(h.magic.data(), 4);
  put_le(out, h.version, 4);
  for (auto f : h.fields) put_le(out, f, 4);
  put_le(out, h.tail, 8);
}

Header read_header(std::istream& in, const Magic& expected_magic, std::uint32_t expected_version) {
  Header h;
  in.read(h.magic.data(), 4);
  if (in.gcount() != 4) throw FormatError("truncated header: magic");
  if (h.magic != expected_magic) {
    throw FormatError("bad header field 'magic': expected '" + std::string(expected_magic.data(), 4) + "'");
  }
  h.version = static_cast<std::uint32_t>(get_le(in, 4, "header field 'version'"));
  if (h.version != expected_version) {
    throw FormatError("bad header field 'version': " + std::to_string(h.version));
  }
  for (std::size_t i = 0; i < h.fields.size(); ++i) {
    h.fields[i] = static_cast<std::uint32_t>(get_le(in, 4, "header field " + std::to_string(i)));
  }
  h.tail = get_le(in, 8, "header tail field");
  return h;
}

void write_u32(std::ostream& out, std::uint32_t v) { put_le(out, v, 4); }
void write_u8(std::ostream& out, std::uint8_t v) { put_le(out, v, 1); }

void write_f32(std::ostream& out, std::span<const float> values) {
  for (float f : values) put_le(out, std::bit_cast<std::uint32_t>(f), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& what) {
  return static_cast<std::uint32_t>(get_le(in, 4, what));
}

std::uint8_t read_u8(std::istream& in, const std::string& what) {
  return static_cast<std::uint8_t>(get_le(in, 1, what));
}

void read_f32(std::istream& in, std::span<float> values, const std::string& what) {
  for (float& f : values) f = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(in, 4, what)));
}

std::uint32_t float_bits(float f) { return std::bit_cast<std::uint32_t>(f); }
float bits_float(std::uint32_t bits) { return std::bit_cast<float>(bits); }

std::uint64_t file_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::uint64_t h = 14695981039346656037ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace repair::io
