#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace rba {

/// Parses the `key = value` format shared by every configuration file in
/// this project. Blank lines and lines starting with `#` are ignored;
/// surrounding whitespace is trimmed; duplicate keys are an error.
std::map<std::string, std::string> parse_key_values(std::string_view text);
std::map<std::string, std::string> load_key_values(const std::filesystem::path& path);

double parse_double(std::string_view key, std::string_view value);
bool parse_bool(std::string_view key, std::string_view value);
std::size_t parse_size(std::string_view key, std::string_view value);
std::vector<double> parse_double_list(std::string_view key, std::string_view value);

/// Throws ConfigError naming every key left in `entries`.
void reject_unknown_keys(const std::map<std::string, std::string>& entries);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

}  // namespace rba
