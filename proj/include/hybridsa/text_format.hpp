#pragma once

#include <cstdio>
#include <string>

namespace hybridsa {

/// Shortest form that round-trips through strtod.
inline std::string format_roundtrip(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace hybridsa
