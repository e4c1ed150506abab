#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ctrecon::csv {

/// Splits one CSV record. Supports double-quoted fields with "" escapes;
/// embedded newlines are not supported.
std::vector<std::string> split(std::string_view line, char delim = ',');

std::string trim(std::string_view s);

/// Lines of a text file with trailing '\r' removed; empty lines dropped.
std::vector<std::string> read_lines(const std::filesystem::path& path);
std::vector<std::string> split_lines(const std::string& text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

/// Index of `name` in a header row, or -1.
int column(const std::vector<std::string>& header, std::string_view name);

/// Shortest text that parses back to the same double ("3" for 3.0).
std::string format_double(double v);

}  // namespace ctrecon::csv
