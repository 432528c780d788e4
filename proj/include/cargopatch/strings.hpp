#pragma once

// Shortest round-trip decimal formatting for CSV artifacts, plus small
// string helpers.

#include <charconv>
#include <string>

#include "cargopatch/error.hpp"

namespace cargopatch {

inline std::string format_double(double v) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), v);
  return std::string(buffer, result.ptr);
}

inline double parse_double(const std::string& text, const std::string& context) {
  double v = 0.0;
  const auto result = std::from_chars(text.data(), text.data() + text.size(), v);
  if (result.ec != std::errc() || result.ptr != text.data() + text.size())
    throw ParseError(context, "expected a number in " + context + ", got '" + text + "'");
  return v;
}

}  // namespace cargopatch
