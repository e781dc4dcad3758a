#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace chatter {

/// Shortest round-trip decimal form; infinities print as "inf"/"-inf".
std::string fmt_double(double x);
/// Accepts "inf", "-inf", "nan" in addition to ordinary decimals.
double parse_double(const std::string& s);

/// Comma-separated rows without quoting; blank lines are skipped.
std::vector<std::vector<std::string>> read_csv(std::istream& is);
std::vector<std::vector<std::string>> read_csv_file(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace chatter
