#pragma once

#include <string>
#include <string_view>

namespace crashgan {

// Locale-independent decimal text with 17 significant digits, so that
// parse_double(format_double(x)) == x for every finite x.
std::string format_double(double value);

// Locale-independent parse; the whole token must be consumed.
// Throws ParseError on failure.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

std::string_view trim(std::string_view s);

}  // namespace crashgan
