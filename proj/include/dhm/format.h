#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dhm {

// Shortest round-trip decimal form with 17 significant digits.
std::string format_real(double x);
std::string format_reals(const std::vector<double>& xs, std::string_view sep = ",");
double parse_real(std::string_view text);
long long parse_integer(std::string_view text);
std::vector<double> parse_real_list(std::string_view text, char sep = ',');
std::vector<std::string> split_whitespace(std::string_view line);
std::string trim(std::string_view s);

} // namespace dhm
