#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "nerd/types.hpp"

namespace nerd::text {

/// Shortest decimal form that round-trips, capped at 17 significant digits.
std::string format_double(double value);

/// Parses a full token as a double; throws std::invalid_argument otherwise.
double parse_double(std::string_view token);
long long parse_int(std::string_view token);

std::vector<std::string_view> split_ws(std::string_view line);
std::vector<std::string> split(std::string_view s, char sep);

std::string join_doubles(const Vector& v, char sep = ' ');

/// FNV-1a, used for config hashes and RNG substream tags.
std::uint64_t fnv1a(std::string_view data);
std::string hex64(std::uint64_t value);

/// Writes to a sibling temp file and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace nerd::text
