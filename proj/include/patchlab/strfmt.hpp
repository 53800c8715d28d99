#pragma once

#include <charconv>
#include <string>

namespace patchlab {

// Shortest round-trip decimal form; keeps CSV and JSON output byte-stable.
inline std::string fmt_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string fmt_int(long long v) {
  char buf[24];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace patchlab
