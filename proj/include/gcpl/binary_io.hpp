#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Little-endian primitives shared by the versioned file formats.
namespace gcpl::binio {

void write_magic(std::ostream& os, std::string_view magic);
void write_u32(std::ostream& os, std::uint32_t value);
void write_i32(std::ostream& os, std::int32_t value);
void write_f32(std::ostream& os, float value);
void write_f32s(std::ostream& os, std::span<const float> values);
void write_string(std::ostream& os, std::string_view s);

/// Throws FormatError naming `what` if the stream does not start with `magic`.
void expect_magic(std::istream& is, std::string_view magic, std::string_view what);
std::uint32_t read_u32(std::istream& is);
std::int32_t read_i32(std::istream& is);
float read_f32(std::istream& is);
void read_f32s(std::istream& is, std::span<float> out);
std::string read_string(std::istream& is, std::uint32_t max_length = 1u << 20);

/// Peeks the leading magic bytes of a file; empty if unreadable.
std::string peek_magic(const std::filesystem::path& path, std::size_t length);

std::vector<char> read_file_bytes(const std::filesystem::path& path);

}  // namespace gcpl::binio
