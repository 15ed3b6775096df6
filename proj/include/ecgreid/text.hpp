#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ecgreid::text {

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

/// Strict full-string parse; returns false on trailing garbage or empty input.
bool parse_double(std::string_view s, double& out);
bool parse_int(std::string_view s, long long& out);

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace ecgreid::text
