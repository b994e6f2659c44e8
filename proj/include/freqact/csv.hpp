#pragma once

#include <string>
#include <vector>

namespace freqact::csv {

// Renders with 17 significant digits so a parse of the output is bit-faithful.
std::string fmt(double v);

// Throws DataError naming ctx on malformed or non-finite-unfriendly text.
double parse_double(const std::string& s, const std::string& ctx);
long parse_long(const std::string& s, const std::string& ctx);

std::vector<std::string> split(const std::string& line, char sep = ',');

// Splits on '\n', tolerates trailing '\r' and a trailing newline.
std::vector<std::string> lines(const std::string& text);

}  // namespace freqact::csv
