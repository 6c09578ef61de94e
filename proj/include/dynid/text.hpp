#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

// Locale-independent number formatting and small file helpers shared by the
// CSV writers and readers.
namespace dynid::text {

/// Shortest representation that round-trips.
std::string format_double(double v);
/// Fixed number of significant digits, for human-facing tables.
std::string format_double(double v, int significant);
double parse_double(std::string_view s);

std::vector<std::string> split_lines(std::string_view text);
std::vector<std::string> split(std::string_view line, char sep);

std::string read_file(const std::filesystem::path& path);
/// Creates parent directories as needed.
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace dynid::text
