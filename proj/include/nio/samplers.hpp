// Random coefficient fields for the four inverse problems: trigonometric
// conductivities and their higher-frequency OOD variants, quartic-exponential
// inclusions, the perturbed heart-and-lungs phantom, the transport step
// absorption, and synthetic layered velocity media. Deterministic evaluators
// are exposed separately from the parameter draws so fixed-parameter fields
// can be constructed directly.
#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "nio/grid.hpp"
#include "nio/rng.hpp"

namespace nio {

enum class CoeffKind {
  trig,
  trig_ood_a,
  trig_ood_b,
  inclusions,
  inclusions_ood_a,
  inclusions_ood_b,
  heart_lungs,
  rte_step,
  layered_velocity,
};

inline const char* coeff_kind_name(CoeffKind k) {
  switch (k) {
    case CoeffKind::trig: return "trig";
    case CoeffKind::trig_ood_a: return "trig-ood-a";
    case CoeffKind::trig_ood_b: return "trig-ood-b";
    case CoeffKind::inclusions: return "inclusions";
    case CoeffKind::inclusions_ood_a: return "inclusions-ood-a";
    case CoeffKind::inclusions_ood_b: return "inclusions-ood-b";
    case CoeffKind::heart_lungs: return "heart-lungs";
    case CoeffKind::rte_step: return "rte-step";
    case CoeffKind::layered_velocity: return "layered-velocity";
  }
  return "?";
}

inline CoeffKind coeff_kind_from(const std::string& s) {
  for (CoeffKind k :
       {CoeffKind::trig, CoeffKind::trig_ood_a, CoeffKind::trig_ood_b, CoeffKind::inclusions,
        CoeffKind::inclusions_ood_a, CoeffKind::inclusions_ood_b, CoeffKind::heart_lungs,
        CoeffKind::rte_step, CoeffKind::layered_velocity})
    if (s == coeff_kind_name(k)) return k;
  throw ConfigError(msg("unknown coefficient kind '", s, "'"));
}

struct CoefficientSpec {
  CoeffKind kind = CoeffKind::trig;
  double hl_perturbation = 0.08;              // heart-lungs noise amplitude
  double layer_amin = 1.5, layer_amax = 3.0;  // layered-velocity speed range

  void validate() const {
    if (!(hl_perturbation >= 0 && hl_perturbation < 1))
      throw ConfigError(msg("heart-lungs perturbation ", hl_perturbation, " out of [0,1)"));
    if (!(layer_amin > 0) || !(layer_amax >= layer_amin))
      throw ConfigError("layered velocity needs 0 < amin <= amax");
  }
};

// ---- deterministic evaluators ----

// a = exp(sum_k c_k sin(k pi x) sin(k pi y) / k^decay), k = 1..|c|
inline Field trig_coefficient(const Grid2d& g, const std::vector<double>& c, double decay = 0) {
  return eval_on_grid(g, [&](double x, double y) {
    double s = 0;
    for (std::size_t k = 1; k <= c.size(); ++k)
      s += c[k - 1] * std::sin(k * M_PI * x) * std::sin(k * M_PI * y) /
           std::pow(static_cast<double>(k), decay);
    return std::exp(s);
  });
}

constexpr double kInclusionWidth = 2e4 / 3.0;

// a = sum_k exp(-w_k (x-c1k)^4 - w_k (y-c2k)^4)
inline Field inclusions_coefficient(const Grid2d& g,
                                    const std::vector<std::array<double, 2>>& centers,
                                    const std::vector<double>& widths) {
  if (centers.size() != widths.size())
    throw ShapeError("inclusions: one width per center required");
  return eval_on_grid(g, [&](double x, double y) {
    double s = 0;
    for (std::size_t k = 0; k < centers.size(); ++k)
      s += std::exp(-widths[k] * std::pow(x - centers[k][0], 4) -
                    widths[k] * std::pow(y - centers[k][1], 4));
    return s;
  });
}

// 15 phantom parameters in a fixed order; the defaults reproduce the
// unperturbed body: heart conductivity 2, lungs 0.7, background 1
struct HeartLungsPhantom {
  double eh1 = 0.8, eh2 = 1.0;                              // heart eccentricities
  double el11 = 3.0, el12 = 1.0, el21 = 3.0, el22 = 1.0;    // lung eccentricities
  double ch1 = -0.1, ch2 = 0.4;                             // heart center
  double cl11 = 0.5, cl12 = 0.2, cl21 = -0.6, cl22 = 0.1;   // lung centers (rotated frame)
  double ah = 2.0, al1 = 0.7, al2 = 0.7;                    // conductivities

  // multiplicative noise: each parameter scaled by 1 + amp * xi, xi ~ N(0,1)
  void perturb(Rng& rng, double amp) {
    for (double* p : {&eh1, &eh2, &el11, &el12, &el21, &el22, &ch1, &ch2, &cl11, &cl12, &cl21,
                      &cl22, &ah, &al1, &al2})
      *p *= 1.0 + amp * rng.normal();
  }

  double value(double x, double y) const {
    constexpr double alpha = M_PI / 7;
    double ca = std::cos(alpha), sa = std::sin(alpha);
    double rx = ca * x + sa * y, ry = -sa * x + ca * y;  // lungs live in a rotated frame
    if (std::sqrt(eh1 * sq(x - ch1) + eh2 * sq(y - ch2)) < 0.2) return ah;
    if (std::sqrt(el11 * sq(rx - cl11) + el12 * sq(ry - cl12)) < 0.5) return al1;
    if (std::sqrt(el21 * sq(rx - cl21) + el22 * sq(ry - cl22)) < 0.4) return al2;
    return 1.0;
  }
};

inline Field phantom_coefficient(const Grid2d& g, const HeartLungsPhantom& ph) {
  return eval_on_grid(g, [&](double x, double y) { return ph.value(x, y); });
}

// a(x) = c chi_{[-1/2,1/2]}(r x - x0) + 1 on nx nodes over [0,1]
inline std::vector<double> step_coefficient_1d(int nx, double c, double x0, double r) {
  if (nx < 2) throw ConfigError("step coefficient needs at least 2 nodes");
  std::vector<double> a(nx);
  for (int i = 0; i < nx; ++i) {
    double t = r * static_cast<double>(i) / (nx - 1) - x0;
    a[i] = (t >= -0.5 && t <= 0.5 ? c : 0.0) + 1.0;
  }
  return a;
}

// horizontal layers split by y-cuts (ascending), optionally perturbed by a
// sinusoidal interface; speeds has one entry more than cuts
struct LayeredMedium {
  std::vector<double> cuts;
  std::vector<double> speeds;
  std::vector<double> amp, freq, phase;  // per-cut interface wobble (may be empty)

  double value(double x, double y) const {
    int layer = 0;
    for (std::size_t k = 0; k < cuts.size(); ++k) {
      double cut = cuts[k];
      if (!amp.empty()) cut += amp[k] * std::sin(2.0 * M_PI * freq[k] * x + phase[k]);
      if (y > cut) layer = static_cast<int>(k) + 1;
    }
    return speeds[layer];
  }
};

inline Field layered_coefficient(const Grid2d& g, const LayeredMedium& m) {
  if (m.speeds.size() != m.cuts.size() + 1)
    throw ShapeError("layered medium needs one speed per layer (cuts+1)");
  if (!m.amp.empty() &&
      (m.amp.size() != m.cuts.size() || m.freq.size() != m.cuts.size() ||
       m.phase.size() != m.cuts.size()))
    throw ShapeError("layered medium wobble arrays must match the cut count");
  return eval_on_grid(g, [&](double x, double y) { return m.value(x, y); });
}

// ---- random samplers ----

namespace sampler_detail {

inline Field trig_like(const Grid2d& g, Rng& rng, int mlo, int mhi, double clo, double chi,
                       double decay) {
  int m = static_cast<int>(std::lround(rng.uniform(mlo, mhi)));
  std::vector<double> c(m);
  for (auto& v : c) v = rng.uniform(clo, chi);
  return trig_coefficient(g, c, decay);
}

inline Field inclusions_like(const Grid2d& g, Rng& rng, int m, bool random_width) {
  std::vector<std::array<double, 2>> centers(m);
  std::vector<double> widths(m);
  for (int k = 0; k < m; ++k) {
    centers[k] = {rng.uniform(0, 1), rng.uniform(0, 1)};
    // the base width multiplies the quartic directly; the varying-shape
    // variant draws b and uses b^4
    widths[k] = random_width ? std::pow(rng.uniform(5.0, 15.0), 4) : kInclusionWidth;
  }
  return inclusions_coefficient(g, centers, widths);
}

}  // namespace sampler_detail

// 2D coefficient kinds; heart-lungs expects the [-1,1]^2 grid
inline Field sample_coefficient(const CoefficientSpec& spec, const Grid2d& g, Rng& rng) {
  spec.validate();
  using sampler_detail::inclusions_like;
  using sampler_detail::trig_like;
  switch (spec.kind) {
    case CoeffKind::trig:
      return trig_like(g, rng, 1, 5, -1, 1, 0.0);
    case CoeffKind::trig_ood_a:
      return trig_like(g, rng, 6, 6, 0, 1, 1.5);
    case CoeffKind::trig_ood_b:
      return trig_like(g, rng, 6, 6, 0, 1, 1.0);
    case CoeffKind::inclusions:
      return inclusions_like(g, rng, static_cast<int>(std::lround(rng.uniform(1, 4))), false);
    case CoeffKind::inclusions_ood_a:
      return inclusions_like(g, rng, 5, false);
    case CoeffKind::inclusions_ood_b:
      return inclusions_like(g, rng, static_cast<int>(std::lround(rng.uniform(1, 4))), true);
    case CoeffKind::heart_lungs: {
      HeartLungsPhantom ph;
      ph.perturb(rng, spec.hl_perturbation);
      return phantom_coefficient(g, ph);
    }
    case CoeffKind::layered_velocity: {
      LayeredMedium m;
      int nl = rng.uniform_int(2, 5);
      m.cuts.resize(nl - 1);
      for (auto& c : m.cuts) c = rng.uniform(0.15, 0.85);
      std::sort(m.cuts.begin(), m.cuts.end());
      m.speeds.resize(nl);
      for (auto& s : m.speeds) s = rng.uniform(spec.layer_amin, spec.layer_amax);
      m.amp.resize(nl - 1);
      m.freq.resize(nl - 1);
      m.phase.resize(nl - 1);
      for (int k = 0; k < nl - 1; ++k) {
        m.amp[k] = rng.uniform(0.0, 0.05);
        m.freq[k] = rng.uniform_int(1, 3);
        m.phase[k] = rng.uniform(0, 2 * M_PI);
      }
      return layered_coefficient(g, m);
    }
    case CoeffKind::rte_step:
      throw ConfigError("rte-step is a 1D coefficient; use sample_coefficient_1d");
  }
  throw ConfigError("unhandled coefficient kind");
}

// 1D transport absorption on nx nodes over [0,1]
inline std::vector<double> sample_coefficient_1d(const CoefficientSpec& spec, int nx, Rng& rng) {
  spec.validate();
  if (spec.kind != CoeffKind::rte_step)
    throw ConfigError("only rte-step samples a 1D coefficient");
  double c = rng.uniform(0.5, 1.0);
  double x0 = rng.uniform(0.0, 1.0);
  double r = rng.uniform(0.0, 0.8);
  return step_coefficient_1d(nx, c, x0, r);
}

}  // namespace nio
