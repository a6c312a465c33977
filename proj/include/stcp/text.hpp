#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace stcp {

/// Shortest text that parses back to the same double.
[[nodiscard]] std::string format_double(double v);

/// Whole-string parse; format error naming `what` otherwise. Accepts "inf".
[[nodiscard]] double parse_double(std::string_view text, std::string_view what);

[[nodiscard]] std::vector<std::string> split(std::string_view text, char sep);

}  // namespace stcp
