// Boundary-condition families, per-problem measurement assembly, and dataset
// generation. An experiment family fixes L inputs per problem: 20 directional
// cosines (calderon, scattering), 32 complex boundary exponentials
// (heart-lungs), 32 velocity-concentrated inflows (rte), 5 point sources
// (seismic). One sample = draw a coefficient, run all L forward solves,
// stack the observations.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <tuple>
#include <utility>
#include <vector>

#include "nio/dataset.hpp"
#include "nio/elliptic.hpp"
#include "nio/helmholtz.hpp"
#include "nio/measurement.hpp"
#include "nio/rng.hpp"
#include "nio/rte.hpp"
#include "nio/samplers.hpp"
#include "nio/wave.hpp"

namespace nio {

struct ProblemConfig {
  ProblemKind problem = ProblemKind::calderon;
  int n = 32;                   // nodes per side (2D problems) or slab nodes (rte)
  double omega_family = M_PI;   // frequency of the directional-cosine inputs
  double omega_pde = 2.0;       // helmholtz wavenumber; keeps 4-a^2 omega^2 h^-2 diagonally
                                // dominant-free but resonance-free for a <= 4.9
  int nquad = 32;               // rte ordinates
  double t_end = 0.6;           // seismic recording window
  double src_freq = 10.0;       // ricker peak frequency
  double max_speed = 3.0;       // global speed bound fixing the shared time step
  int str_stride = 4;           // temporal subsampling of the receiver image
  int n_receivers = 15;

  int L() const {
    switch (problem) {
      case ProblemKind::calderon:
      case ProblemKind::scattering: return 20;
      case ProblemKind::heart_lungs: return 32;
      case ProblemKind::rte: return nquad;
      case ProblemKind::seismic: return 5;
    }
    return 0;
  }

  Grid2d grid() const {
    // the phantom formulas live on [-1,1]^2; everything else on the unit square
    if (problem == ProblemKind::heart_lungs) return Grid2d{n, -1, -1, 1, 1};
    return Grid2d{n, 0, 0, 1, 1};
  }

  CoeffKind default_coeff() const {
    switch (problem) {
      case ProblemKind::calderon: return CoeffKind::trig;
      case ProblemKind::heart_lungs: return CoeffKind::heart_lungs;
      case ProblemKind::scattering: return CoeffKind::inclusions;
      case ProblemKind::rte: return CoeffKind::rte_step;
      case ProblemKind::seismic: return CoeffKind::layered_velocity;
    }
    return CoeffKind::trig;
  }

  // fixed time step shared by every seismic sample so all images align
  double wave_dt() const { return 0.5 * (1.0 / (n - 1)) / max_speed; }
  int wave_nt() const { return static_cast<int>(std::ceil(t_end / wave_dt() - 1e-9)) + 1; }

  std::vector<std::uint32_t> meas_dims() const {
    switch (problem) {
      case ProblemKind::calderon:
      case ProblemKind::scattering:
        return {static_cast<std::uint32_t>(boundary_length(n))};
      case ProblemKind::heart_lungs: return {2, 32};
      case ProblemKind::rte: return {static_cast<std::uint32_t>(nquad)};
      case ProblemKind::seismic: {
        std::uint32_t nts = static_cast<std::uint32_t>((wave_nt() - 1) / str_stride + 1);
        return {nts, static_cast<std::uint32_t>(n_receivers)};
      }
    }
    return {};
  }

  std::size_t coeff_size() const {
    return problem == ProblemKind::rte ? static_cast<std::size_t>(n)
                                       : static_cast<std::size_t>(n) * n;
  }

  void validate() const {
    if (n < 8) throw ConfigError(msg("grid n=", n, " too small (need >= 8)"));
    if (problem == ProblemKind::rte && nquad < 4)
      throw ConfigError("rte needs at least 4 ordinates");
    if (!(omega_pde >= 0)) throw ConfigError("omega must be non-negative");
    if (problem == ProblemKind::seismic) {
      if (!(t_end > 0) || !(src_freq > 0) || !(max_speed > 0))
        throw ConfigError("seismic time window, frequency and speed bound must be positive");
      if (str_stride < 1) throw ConfigError("receiver stride must be >= 1");
      if (n_receivers < 1 || n_receivers > n - 2)
        throw ConfigError(msg("receiver count ", n_receivers, " does not fit n=", n));
    }
  }
};

// ---- boundary families ----

// g_l = cos(omega (x cos th_l + y sin th_l)), th_l = 2 pi l / L, l = 1..L
inline BoundaryTrace trig_family(const Grid2d& g, int ell, int L, double omega) {
  if (ell < 1 || ell > L) throw ConfigError(msg("experiment index ", ell, " outside 1..", L));
  double th = 2.0 * M_PI * ell / L;
  double cx = std::cos(th), cy = std::sin(th);
  return eval_on_boundary(
      g, [&](double x, double y) { return std::cos(omega * (x * cx + y * cy)); });
}

// f = {-16..-1} u {1..16}; the printed list in the source material is
// internally inconsistent, this is the consistent 32-entry reading
inline std::vector<int> heart_lungs_freqs() {
  std::vector<int> f;
  for (int k = -16; k <= 16; ++k)
    if (k != 0) f.push_back(k);
  return f;
}

// g_l(th) = (1/2pi) exp(i 2 pi th f_l) with th = p/P the normalized CCW
// boundary parameter; returned as (re, im)
inline std::pair<BoundaryTrace, BoundaryTrace> heart_lungs_family(const Grid2d& g, int ell) {
  auto freqs = heart_lungs_freqs();
  if (ell < 1 || ell > static_cast<int>(freqs.size()))
    throw ConfigError(msg("experiment index ", ell, " outside 1..", freqs.size()));
  int f = freqs[ell - 1];
  int P = boundary_length(g.n);
  BoundaryTrace re(P), im(P);
  for (int p = 0; p < P; ++p) {
    double th = static_cast<double>(p) / P;
    re[p] = std::cos(2.0 * M_PI * th * f) / (2.0 * M_PI);
    im[p] = std::sin(2.0 * M_PI * th * f) / (2.0 * M_PI);
  }
  return {std::move(re), std::move(im)};
}

// phi_l(v) = exp(-200 (v - v_l)^2) on the inflow end matching the sign of
// v_l, zero on the other end; v_l is the l-th quadrature ordinate
inline std::vector<double> rte_inflow_family(const GaussLegendre& q, int ell) {
  int nv = static_cast<int>(q.x.size());
  if (ell < 1 || ell > nv) throw ConfigError(msg("experiment index ", ell, " outside 1..", nv));
  double vl = q.x[ell - 1];
  std::vector<double> inflow(nv, 0.0);
  for (int m = 0; m < nv; ++m)
    if ((vl > 0 && q.x[m] > 0) || (vl < 0 && q.x[m] < 0))
      inflow[m] = std::exp(-200.0 * sq(q.x[m] - vl));
  return inflow;
}

// source abscissae x_l = (2l-1)/(2L) on the free surface, l = 1..L
inline double seismic_source_x(int ell, int L = 5) {
  if (ell < 1 || ell > L) throw ConfigError(msg("source index ", ell, " outside 1..", L));
  return (2.0 * ell - 1.0) / (2.0 * L);
}

// ---- per-problem measurement assembly ----

namespace datagen_detail {

// weighted Neumann traces a du/dnu of the 32 complex heart-lungs experiments
inline std::pair<std::vector<BoundaryTrace>, std::vector<BoundaryTrace>> hl_traces(
    const Grid2d& g, const Field& a) {
  EllipticSystem sys(g, a);
  std::vector<BoundaryTrace> re, im;
  for (int ell = 1; ell <= 32; ++ell) {
    auto [gre, gim] = heart_lungs_family(g, ell);
    re.push_back(observe_dtn(g, a, sys.solve(gre), true));
    im.push_back(observe_dtn(g, a, sys.solve(gim), true));
  }
  return {std::move(re), std::move(im)};
}

}  // namespace datagen_detail

// Builds measurement sets for one problem configuration. For heart-lungs the
// a==1 reference traces are computed once at construction and subtracted from
// every sample before the angular Fourier transform.
class Measurer {
 public:
  explicit Measurer(const ProblemConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.problem == ProblemKind::heart_lungs) {
      Field ones(cfg_.grid().num_points(), 1.0);
      std::tie(ref_re_, ref_im_) = datagen_detail::hl_traces(cfg_.grid(), ones);
    }
  }

  const ProblemConfig& config() const { return cfg_; }

  MeasurementSet operator()(const std::vector<double>& coeff) const {
    switch (cfg_.problem) {
      case ProblemKind::calderon: return measure_dtn(coeff, true);
      case ProblemKind::scattering: return measure_dtn(coeff, false);
      case ProblemKind::heart_lungs: return measure_heart_lungs(coeff);
      case ProblemKind::rte: return measure_rte(coeff);
      case ProblemKind::seismic: return measure_seismic(coeff);
    }
    throw ConfigError("unhandled problem kind");
  }

 private:
  MeasurementSet measure_dtn(const Field& a, bool elliptic) const {
    Grid2d g = cfg_.grid();
    MeasurementSet ms;
    ms.kind = elliptic ? MeasKind::dtn_elliptic : MeasKind::dtn_helmholtz;
    // current a du/dnu for the conductivity problem, plain du/dnu for waves
    if (elliptic) {
      EllipticSystem sys(g, a);
      for (int ell = 1; ell <= cfg_.L(); ++ell) {
        auto bd = trig_family(g, ell, cfg_.L(), cfg_.omega_family);
        ms.psi.push_back(observe_dtn(g, a, sys.solve(bd), true));
        ms.inputs.push_back(std::move(bd));
      }
    } else {
      HelmholtzSystem sys(g, a, cfg_.omega_pde);
      for (int ell = 1; ell <= cfg_.L(); ++ell) {
        auto bd = trig_family(g, ell, cfg_.L(), cfg_.omega_family);
        ms.psi.push_back(observe_dtn(g, a, sys.solve(bd), false));
        ms.inputs.push_back(std::move(bd));
      }
    }
    return ms;
  }

  MeasurementSet measure_heart_lungs(const Field& a) const {
    Grid2d g = cfg_.grid();
    auto [tre, tim] = datagen_detail::hl_traces(g, a);
    auto freqs = heart_lungs_freqs();
    int P = boundary_length(g.n);
    MeasurementSet ms;
    ms.kind = MeasKind::dtn_elliptic;
    for (int ell = 0; ell < 32; ++ell) {
      // d = (trace at a) - (trace at 1), then F(f) = (1/P) sum_p d_p e^{-i2pi f p/P}
      std::vector<double> psi(64, 0.0);  // channels: re(F) over f, then im(F)
      for (std::size_t j = 0; j < freqs.size(); ++j) {
        double fre = 0, fim = 0;
        for (int p = 0; p < P; ++p) {
          double dre = tre[ell][p] - ref_re_[ell][p];
          double dim = tim[ell][p] - ref_im_[ell][p];
          double w = 2.0 * M_PI * freqs[j] * p / P;
          double cw = std::cos(w), sw = std::sin(w);
          fre += dre * cw + dim * sw;
          fim += dim * cw - dre * sw;
        }
        psi[j] = fre / P;
        psi[32 + j] = fim / P;
      }
      ms.psi.push_back(std::move(psi));
    }
    return ms;
  }

  MeasurementSet measure_rte(const std::vector<double>& a) const {
    RteSystem sys(a, cfg_.nquad);
    MeasurementSet ms;
    ms.kind = MeasKind::albedo;
    for (int ell = 1; ell <= cfg_.nquad; ++ell) {
      auto inflow = rte_inflow_family(sys.quad(), ell);
      ms.psi.push_back(observe_albedo(sys.solve(inflow)));
      ms.inputs.push_back(std::move(inflow));
    }
    return ms;
  }

  MeasurementSet measure_seismic(const Field& a) const {
    Grid2d g = cfg_.grid();
    MeasurementSet ms;
    ms.kind = MeasKind::str;
    std::vector<std::pair<int, int>> recv;
    for (int k = 0; k < cfg_.n_receivers; ++k) {
      // interior top-edge positions: corner nodes are clamped and read zero
      int i = 1 + static_cast<int>(std::lround((k + 1) * double(g.n - 3) / (cfg_.n_receivers + 1)));
      recv.emplace_back(std::min(i, g.n - 2), g.n - 1);
    }
    for (int ell = 1; ell <= cfg_.L(); ++ell) {
      WaveConfig wc;
      wc.t_end = cfg_.t_end;
      wc.dt = cfg_.wave_dt();
      wc.freq = cfg_.src_freq;
      wc.src_x = seismic_source_x(ell, cfg_.L());
      wc.src_y = 1.0;
      auto wf = solve_wave(g, a, wc);
      auto img = observe_str(wf, recv, cfg_.str_stride);
      ms.psi.push_back(std::move(img.v));
    }
    return ms;
  }

  ProblemConfig cfg_;
  std::vector<BoundaryTrace> ref_re_, ref_im_;  // heart-lungs a==1 reference
};

// ---- dataset generation ----

struct GenCounts {
  int train = 0, val = 0, test = 0;
  int total() const { return train + val + test; }
};

struct GenResult {
  InverseDataset ds;
  int regenerated = 0;  // solver-failure resamples across all samples
};

namespace datagen_detail {

inline bool coeff_is_1d(CoeffKind k) { return k == CoeffKind::rte_step; }

inline void check_compat(const ProblemConfig& cfg, const CoefficientSpec& cs) {
  if (coeff_is_1d(cs.kind) != (cfg.problem == ProblemKind::rte))
    throw ConfigError(msg("coefficient kind ", coeff_kind_name(cs.kind),
                          " does not match problem ", problem_kind_name(cfg.problem)));
  if (cfg.problem == ProblemKind::seismic) {
    if (cs.kind != CoeffKind::layered_velocity)
      throw ConfigError("seismic datasets need the layered-velocity coefficient");
    if (cs.layer_amax > cfg.max_speed)
      throw ConfigError(msg("layer speed bound ", cs.layer_amax,
                            " exceeds the CFL speed bound ", cfg.max_speed));
  }
}

}  // namespace datagen_detail

inline GenResult generate_dataset(const ProblemConfig& cfg, const CoefficientSpec& cs,
                                  const GenCounts& counts, std::uint64_t seed) {
  cfg.validate();
  cs.validate();
  datagen_detail::check_compat(cfg, cs);
  if (counts.total() < 1) throw ConfigError("dataset needs at least one sample");

  Measurer measure(cfg);
  GenResult out;
  InverseDataset& ds = out.ds;
  ds.header.problem = cfg.problem;
  ds.header.n = static_cast<std::uint32_t>(cfg.n);
  ds.header.L = static_cast<std::uint32_t>(cfg.L());
  ds.header.meas_dims = cfg.meas_dims();
  ds.header.count = static_cast<std::uint32_t>(counts.total());
  ds.header.precision = 0;
  ds.header.seed = seed;
  bool trig_bc = cfg.problem == ProblemKind::calderon || cfg.problem == ProblemKind::scattering;
  ds.header.omega_family = trig_bc ? cfg.omega_family : 0.0;
  ds.header.omega_pde = cfg.problem == ProblemKind::scattering ? cfg.omega_pde : 0.0;

  std::size_t msz = ds.header.meas_size(), csz = ds.header.coeff_size();
  ds.psi.resize(ds.header.count * ds.header.L * msz);
  ds.coeff.resize(ds.header.count * csz);
  ds.split.resize(ds.header.count);

  constexpr int kMaxRetries = 50;
  Grid2d g = cfg.grid();
  for (int s = 0; s < counts.total(); ++s) {
    std::uint64_t sample_seed = derive_seed(seed, static_cast<std::uint64_t>(s));
    bool done = false;
    for (int retry = 0; retry <= kMaxRetries && !done; ++retry) {
      Rng rng(derive_seed(sample_seed, static_cast<std::uint64_t>(retry)));
      try {
        std::vector<double> coeff = cfg.problem == ProblemKind::rte
                                        ? sample_coefficient_1d(cs, cfg.n, rng)
                                        : sample_coefficient(cs, g, rng);
        MeasurementSet ms = measure(coeff);
        ms.validate();
        if (ms.psi.size() != ds.header.L || ms.psi[0].size() != msz)
          throw ShapeError(msg("measurement shape drifted on sample ", s));
        float* pp = ds.psi_of(s);
        for (std::size_t l = 0; l < ms.psi.size(); ++l)
          for (std::size_t k = 0; k < msz; ++k) pp[l * msz + k] = static_cast<float>(ms.psi[l][k]);
        float* cp = ds.coeff_of(s);
        for (std::size_t k = 0; k < csz; ++k) cp[k] = static_cast<float>(coeff[k]);
        done = true;
      } catch (const NumericError&) {
        // resonance or other solver failure: resample with a fresh seed
        ++out.regenerated;
        if (retry == kMaxRetries)
          throw NumericError(msg("sample ", s, " failed ", kMaxRetries + 1,
                                 " consecutive solves; check problem parameters"));
      }
    }
    ds.split[s] = s < counts.train ? kSplitTrain
                  : s < counts.train + counts.val ? kSplitVal
                                                  : kSplitTest;
  }
  return out;
}

}  // namespace nio
