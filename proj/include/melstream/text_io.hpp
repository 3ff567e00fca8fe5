#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace melstream::text {

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// "key = value" lines; '#' starts a comment line. Order preserved.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

// RFC 4180-style: quoted fields, doubled quotes, CRLF tolerated.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);
std::string csv_field(std::string_view value);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

// 64-bit FNV-1a, used for reproducibility stamps.
std::uint64_t fnv1a(std::string_view data);
std::string hex64(std::uint64_t v);

}  // namespace melstream::text
