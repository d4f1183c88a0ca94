#include "text_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "protosphere/error.hpp"

namespace protosphere::text {

std::string format_double(double value) {
  char buf[40];
  const int n = std::snprintf(buf, sizeof(buf), "%.17g", value);
  return std::string(buf, static_cast<std::size_t>(n));
}

std::string join_doubles(const double* values, std::size_t n, char sep) {
  std::string out;
  out.reserve(n * 24);
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) out.push_back(sep);
    out += format_double(values[i]);
  }
  return out;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(line.substr(start));
      break;
    }
    parts.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double parse_double(std::string_view token, const std::string& where) {
  token = trim(token);
  double value = 0.0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (token.empty() || ec != std::errc() || ptr != end) {
    throw FormatError(where + ": expected a number, got '" + std::string(token) + "'");
  }
  return value;
}

long long parse_int(std::string_view token, const std::string& where) {
  token = trim(token);
  long long value = 0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (token.empty() || ec != std::errc() || ptr != end) {
    throw FormatError(where + ": expected an integer, got '" + std::string(token) + "'");
  }
  return value;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << contents;
  if (!out) throw IoError("write failed for " + path.string());
}

std::map<std::string, std::string> parse_header(const std::string& line, std::string_view magic) {
  std::istringstream in(line);
  std::string hash, tag, version;
  in >> hash >> tag >> version;
  if (hash != "#" || tag != magic) {
    throw FormatError("malformed header: expected '# " + std::string(magic) + " v1 ...'");
  }
  if (version != "v1") {
    throw FormatError("unsupported " + std::string(magic) + " version '" + version + "'");
  }
  std::map<std::string, std::string> fields;
  std::string kv;
  while (in >> kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw FormatError("malformed header field '" + kv + "'");
    }
    fields[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return fields;
}

std::string line_ref(const std::filesystem::path& path, std::size_t line_number) {
  return path.string() + ":" + std::to_string(line_number);
}

}  // namespace protosphere::text
