// Shared error types and small utilities used across the library.
#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <sstream>
#include <cmath>
#include <vector>

namespace nio {

// Error taxonomy maps onto CLI exit codes: config/usage -> 2, file format -> 3,
// numerical failure (CFL, resonance, divergence, NaN) -> 4.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& msg) : Error("format error: " + msg) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error("numerical error: " + msg) {}
};

// printf-free message building: msg("bad n=", n, " expected ", m)
template <class... Args>
std::string msg(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

inline bool finite(double x) { return std::isfinite(x); }

template <class T>
T sq(T x) { return x * x; }

inline double max_abs(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace nio
