#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace protosphere::text {

// 17 significant digits, enough for an exact double round trip.
std::string format_double(double value);

std::string join_doubles(const double* values, std::size_t n, char sep);

std::vector<std::string_view> split(std::string_view line, char sep);

std::string_view trim(std::string_view s);

// Parsers throw FormatError mentioning `where` on failure.
double parse_double(std::string_view token, const std::string& where);
long long parse_int(std::string_view token, const std::string& where);

std::vector<std::string> read_lines(const std::filesystem::path& path);

// Writes to `path` atomically enough for our needs (truncate + write).
void write_file(const std::filesystem::path& path, const std::string& contents);

// Parses a header line of the form `# <magic> v1 key=value key=value ...`.
// Throws FormatError if the magic token or version does not match.
std::map<std::string, std::string> parse_header(const std::string& line, std::string_view magic);

std::string line_ref(const std::filesystem::path& path, std::size_t line_number);

}  // namespace protosphere::text
