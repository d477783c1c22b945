// Relative error norms and their per-split summaries. All accumulation is in
// double regardless of the stored precision; quantiles use the linear
// interpolation convention (position q*(n-1) in the sorted vector).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "nio/common.hpp"

namespace nio {

enum class Norm { l1, l2 };

// ||pred - truth||_q / ||truth||_q with grid-uniform weights (the common grid
// factor cancels in the ratio, so plain sums are used)
template <class A, class B>
double relative_error(const A* pred, const B* truth, std::size_t count, Norm norm) {
  if (count == 0) throw ConfigError("relative_error on an empty field");
  double num = 0, den = 0;
  for (std::size_t i = 0; i < count; ++i) {
    double d = static_cast<double>(pred[i]) - static_cast<double>(truth[i]);
    double t = static_cast<double>(truth[i]);
    if (norm == Norm::l1) {
      num += std::abs(d);
      den += std::abs(t);
    } else {
      num += d * d;
      den += t * t;
    }
  }
  if (den == 0) throw NumericError("relative_error denominator vanishes: zero reference field");
  return norm == Norm::l1 ? num / den : std::sqrt(num / den);
}

template <class A, class B>
double relative_error(const std::vector<A>& pred, const std::vector<B>& truth, Norm norm) {
  if (pred.size() != truth.size())
    throw ShapeError(msg("relative_error sizes ", pred.size(), " vs ", truth.size()));
  return relative_error(pred.data(), truth.data(), pred.size(), norm);
}

// q-quantile of a sorted vector, linear interpolation between order statistics
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw ConfigError("quantile of an empty vector");
  if (q < 0.0 || q > 1.0) throw ConfigError(msg("quantile level ", q, " outside [0,1]"));
  double pos = q * static_cast<double>(sorted.size() - 1);
  std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

struct ErrorSummary {
  std::vector<double> errors;  // as given, unsorted
  double median = 0;
  double q25 = 0, q75 = 0;
  double mean = 0, stddev = 0;
  int n = 0;
};

inline ErrorSummary summarize(std::vector<double> errors) {
  if (errors.empty()) throw ConfigError("summarize needs at least one error value");
  ErrorSummary s;
  s.n = static_cast<int>(errors.size());
  double sum = 0;
  for (double e : errors) {
    if (!std::isfinite(e) || e < 0) throw NumericError(msg("invalid error value ", e));
    sum += e;
  }
  s.mean = sum / s.n;
  double var = 0;
  for (double e : errors) var += (e - s.mean) * (e - s.mean);
  s.stddev = s.n > 1 ? std::sqrt(var / (s.n - 1)) : 0.0;
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  s.median = quantile_sorted(sorted, 0.5);
  s.q25 = quantile_sorted(sorted, 0.25);
  s.q75 = quantile_sorted(sorted, 0.75);
  s.errors = std::move(errors);
  return s;
}

}  // namespace nio
