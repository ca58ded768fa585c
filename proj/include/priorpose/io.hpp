#pragma once

#include <charconv>
#include <fstream>
#include <stdexcept>
#include <string>

namespace priorpose {

// Shortest decimal form that round-trips the exact double, so text files and
// CSV reports reproduce values bit-for-bit.
inline std::string fmtDouble(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::ifstream openInput(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return in;
}

inline std::ofstream openOutput(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

}  // namespace priorpose
