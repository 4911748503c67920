#include "gcpl/binary_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>

#include "gcpl/errors.hpp"

namespace gcpl::binio {

namespace {

void put_bytes(std::ostream& os, const unsigned char* bytes, std::size_t n) {
  os.write(reinterpret_cast<const char*>(bytes), static_cast<std::streamsize>(n));
  if (!os) throw IoError("write failed");
}

void get_bytes(std::istream& is, unsigned char* bytes, std::size_t n) {
  is.read(reinterpret_cast<char*>(bytes), static_cast<std::streamsize>(n));
  if (is.gcount() != static_cast<std::streamsize>(n)) throw FormatError("unexpected end of file");
}

}  // namespace

void write_magic(std::ostream& os, std::string_view magic) {
  os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!os) throw IoError("write failed");
}

void write_u32(std::ostream& os, std::uint32_t value) {
  std::array<unsigned char, 4> b{};
  for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<unsigned char>(value >> (8 * i));
  put_bytes(os, b.data(), b.size());
}

void write_i32(std::ostream& os, std::int32_t value) { write_u32(os, static_cast<std::uint32_t>(value)); }

void write_f32(std::ostream& os, float value) { write_u32(os, std::bit_cast<std::uint32_t>(value)); }

void write_f32s(std::ostream& os, std::span<const float> values) {
  for (float v : values) write_f32(os, v);
}

void write_string(std::ostream& os, std::string_view s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!os) throw IoError("write failed");
}

void expect_magic(std::istream& is, std::string_view magic, std::string_view what) {
  std::string got(magic.size(), '\0');
  is.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (is.gcount() != static_cast<std::streamsize>(magic.size()) || got != magic) {
    throw FormatError("not a " + std::string(what) + " file (bad magic bytes)");
  }
}

std::uint32_t read_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  get_bytes(is, b.data(), b.size());
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

std::int32_t read_i32(std::istream& is) { return static_cast<std::int32_t>(read_u32(is)); }

float read_f32(std::istream& is) { return std::bit_cast<float>(read_u32(is)); }

void read_f32s(std::istream& is, std::span<float> out) {
  for (auto& v : out) v = read_f32(is);
}

std::string read_string(std::istream& is, std::uint32_t max_length) {
  const std::uint32_t n = read_u32(is);
  if (n > max_length) throw FormatError("string length " + std::to_string(n) + " exceeds limit");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (is.gcount() != static_cast<std::streamsize>(n)) throw FormatError("unexpected end of file");
  return s;
}

std::string peek_magic(const std::filesystem::path& path, std::size_t length) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::string s(length, '\0');
  in.read(s.data(), static_cast<std::streamsize>(length));
  s.resize(static_cast<std::size_t>(in.gcount()));
  return s;
}

std::vector<char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace gcpl::binio
