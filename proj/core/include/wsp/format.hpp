#pragma once

#include <charconv>
#include <cstdio>
#include <string>

namespace wsp {

/// Shortest text that round-trips a double exactly.
inline std::string format_real(double value) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

/// Fixed-precision text for human-facing output.
inline std::string format_fixed(double value, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
  return buf;
}

}  // namespace wsp
