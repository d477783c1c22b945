// Input/output normalization fitted on the training split only. minmax maps
// the train extrema to exactly [-1, 1]; log_minmax first applies the signed
// logarithm sign(x)*log1p(|x|) (smooth and invertible through zero) and then
// minmax in log space.
#pragma once

#include <cmath>
#include <string>

#include "nio/common.hpp"
#include "nio/tensor.hpp"

namespace nio {

enum class ScalerKind { identity, minmax, log_minmax };

inline const char* to_string(ScalerKind k) {
  switch (k) {
    case ScalerKind::identity: return "identity";
    case ScalerKind::minmax: return "minmax";
    case ScalerKind::log_minmax: return "log-minmax";
  }
  throw ConfigError("unknown scaler kind");
}

inline ScalerKind scaler_kind_from_string(const std::string& s) {
  if (s == "identity") return ScalerKind::identity;
  if (s == "minmax") return ScalerKind::minmax;
  if (s == "log-minmax" || s == "log_minmax") return ScalerKind::log_minmax;
  throw ConfigError(msg("unknown scaler kind '", s, "'"));
}

struct Scaler {
  ScalerKind kind = ScalerKind::identity;
  double lo = 0, hi = 0;  // train extrema in (possibly log-) transformed units
  bool fitted = false;

  static double signed_log(double x) {
    return x >= 0 ? std::log1p(x) : -std::log1p(-x);
  }
  static double signed_exp(double y) {
    return y >= 0 ? std::expm1(y) : -std::expm1(-y);
  }

  double pre(double x) const { return kind == ScalerKind::log_minmax ? signed_log(x) : x; }

  template <class It>
  void fit(It begin, It end) {
    fitted = true;
    if (kind == ScalerKind::identity) return;
    if (begin == end) throw ConfigError("scaler fit on empty data");
    lo = hi = pre(static_cast<double>(*begin));
    for (It it = begin; it != end; ++it) {
      double t = pre(static_cast<double>(*it));
      if (!std::isfinite(t)) throw NumericError("non-finite value in scaler fit");
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
    if (hi == lo)
      throw ConfigError(msg("degenerate range in scaler fit: all values map to ", lo));
  }

  template <class T>
  void fit(const Tensor<T>& t) {
    fit(t.data().begin(), t.data().end());
  }

  double apply(double x) const {
    if (!fitted) throw ConfigError("scaler used before fit");
    if (kind == ScalerKind::identity) return x;
    double t = pre(x);
    return 2.0 * (t - lo) / (hi - lo) - 1.0;
  }

  double invert(double y) const {
    if (!fitted) throw ConfigError("scaler used before fit");
    if (kind == ScalerKind::identity) return y;
    double t = lo + (y + 1.0) * 0.5 * (hi - lo);
    return kind == ScalerKind::log_minmax ? signed_exp(t) : t;
  }

  template <class T>
  Tensor<T> apply(const Tensor<T>& in) const {
    Tensor<T> out = Tensor<T>::zeros(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i)
      out.data()[i] = static_cast<T>(apply(static_cast<double>(in.data()[i])));
    return out;
  }

  template <class T>
  Tensor<T> invert(const Tensor<T>& in) const {
    Tensor<T> out = Tensor<T>::zeros(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i)
      out.data()[i] = static_cast<T>(invert(static_cast<double>(in.data()[i])));
    return out;
  }
};

}  // namespace nio
