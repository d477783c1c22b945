// Acoustic wave equation u_tt = a^2 lap(u) + s on the square, leapfrog time
// stepping from zero initial data. Boundaries: zero Dirichlet on the two sides
// and the bottom, mirror (free-surface) condition on the top edge where the
// receivers sit. The default source is a Ricker wavelet injected at the grid
// node nearest the requested location; a custom per-step signal or a smooth
// space-time source term can be supplied instead (the latter mainly for
// manufactured-solution verification).
#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "nio/grid.hpp"

namespace nio {

// standard Ricker wavelet with peak frequency f, delayed so it starts near 0
inline double ricker(double t, double f, double delay_periods = 1.5) {
  double arg = sq(M_PI * f * (t - delay_periods / f));
  return (1.0 - 2.0 * arg) * std::exp(-arg);
}

struct WaveConfig {
  double t_end = 0.6;
  double dt = 0.0;     // 0 -> largest CFL-admissible step
  double freq = 10.0;  // Ricker peak frequency
  double amplitude = 1.0;
  double src_x = 0.5, src_y = 1.0;
  std::vector<double> signal;  // optional per-step source samples, overrides the Ricker
};

struct WaveField {
  Grid2d grid;
  int nt = 0;  // stored time levels (including t=0)
  double dt = 0;
  std::vector<double> u;  // u[k*n*n + j*n + i], level k at time k*dt
  const double* level(int k) const {
    return u.data() + static_cast<std::size_t>(k) * grid.num_points();
  }
};

inline double cfl_limit(const Grid2d& g, const Field& a) {
  return 0.5 * g.h() / std::max(max_abs(a), 1e-300);
}

namespace wave_detail {

inline void check_speed(const Grid2d& g, const Field& a) {
  if (a.size() != g.num_points()) throw ShapeError("coefficient field size mismatch");
  for (double v : a)
    if (!(v > 0)) throw ConfigError("wave speed must be positive");
}

inline double pick_dt(const Grid2d& g, const Field& a, double requested) {
  double dtmax = cfl_limit(g, a);
  double dt = requested > 0 ? requested : dtmax;
  if (dt > dtmax * (1.0 + 1e-12))
    throw ConfigError(msg("CFL violation: dt=", dt, " exceeds 0.5*h/max(a)=", dtmax));
  return dt;
}

// interior + free-surface-top five-point Laplacian; ghost u(i,n) = u(i,n-2)
inline double lap(const Grid2d& g, const double* f, int i, int j, double ih2) {
  int n = g.n;
  double up = (j == n - 1) ? f[g.idx(i, n - 2)] : f[g.idx(i, j + 1)];
  return (f[g.idx(i - 1, j)] + f[g.idx(i + 1, j)] + f[g.idx(i, j - 1)] + up -
          4.0 * f[g.idx(i, j)]) * ih2;
}

}  // namespace wave_detail

// generic form: source(x, y, t) is a smooth space-time term added at every
// evolved node (interior plus the free-surface top row)
template <class SourceFn>
WaveField solve_wave_src(const Grid2d& g, const Field& a, double t_end, double dt_req,
                         SourceFn&& source) {
  wave_detail::check_speed(g, a);
  if (!(t_end > 0)) throw ConfigError("wave needs t_end > 0");
  double dt = wave_detail::pick_dt(g, a, dt_req);
  int n = g.n;
  int nt = static_cast<int>(std::ceil(t_end / dt - 1e-9)) + 1;
  WaveField wf;
  wf.grid = g;
  wf.nt = nt;
  wf.dt = dt;
  std::size_t np = g.num_points();
  wf.u.assign(static_cast<std::size_t>(nt) * np, 0.0);
  double ih2 = 1.0 / (g.h() * g.h());
  double dt2 = dt * dt;

  // first step from rest: u^1 = (dt^2/2) s(0) since u^0 = 0
  {
    double* u1 = wf.u.data() + np;
    for (int j = 1; j < n; ++j)
      for (int i = 1; i < n - 1; ++i)
        u1[g.idx(i, j)] = 0.5 * dt2 * source(g.x(i), g.y(j), 0.0);
  }
  for (int k = 1; k + 1 < nt; ++k) {
    const double* um = wf.u.data() + static_cast<std::size_t>(k - 1) * np;
    const double* uc = wf.u.data() + static_cast<std::size_t>(k) * np;
    double* un = wf.u.data() + static_cast<std::size_t>(k + 1) * np;
    double t = k * dt;
    for (int j = 1; j < n; ++j)
      for (int i = 1; i < n - 1; ++i) {
        double c2 = sq(a[g.idx(i, j)]);
        un[g.idx(i, j)] = 2.0 * uc[g.idx(i, j)] - um[g.idx(i, j)] +
                          dt2 * (c2 * wave_detail::lap(g, uc, i, j, ih2) +
                                 source(g.x(i), g.y(j), t));
      }
  }
  return wf;
}

// point-source form used for data generation
inline WaveField solve_wave(const Grid2d& g, const Field& a, const WaveConfig& cfg) {
  wave_detail::check_speed(g, a);
  if (!(cfg.t_end > 0)) throw ConfigError("wave needs t_end > 0");
  double dt = wave_detail::pick_dt(g, a, cfg.dt);
  int n = g.n;
  int nt = static_cast<int>(std::ceil(cfg.t_end / dt - 1e-9)) + 1;
  int si = static_cast<int>(std::lround((cfg.src_x - g.x0) / g.h()));
  int sj = static_cast<int>(std::lround((cfg.src_y - g.y0) / g.h()));
  si = std::min(std::max(si, 0), n - 1);
  sj = std::min(std::max(sj, 0), n - 1);
  if (si == 0 || si == n - 1 || sj == 0)
    throw ConfigError(msg("source node (", si, ",", sj, ") sits on a clamped boundary"));

  auto sig = [&](int k) {
    if (!cfg.signal.empty())
      return k < static_cast<int>(cfg.signal.size()) ? cfg.amplitude * cfg.signal[k] : 0.0;
    return cfg.amplitude * ricker(k * dt, cfg.freq);
  };

  WaveField wf;
  wf.grid = g;
  wf.nt = nt;
  wf.dt = dt;
  std::size_t np = g.num_points();
  wf.u.assign(static_cast<std::size_t>(nt) * np, 0.0);
  double ih2 = 1.0 / (g.h() * g.h());
  double dt2 = dt * dt;

  wf.u[np + g.idx(si, sj)] = 0.5 * dt2 * sig(0);
  for (int k = 1; k + 1 < nt; ++k) {
    const double* um = wf.u.data() + static_cast<std::size_t>(k - 1) * np;
    const double* uc = wf.u.data() + static_cast<std::size_t>(k) * np;
    double* un = wf.u.data() + static_cast<std::size_t>(k + 1) * np;
    for (int j = 1; j < n; ++j)
      for (int i = 1; i < n - 1; ++i) {
        double c2 = sq(a[g.idx(i, j)]);
        un[g.idx(i, j)] =
            2.0 * uc[g.idx(i, j)] - um[g.idx(i, j)] + dt2 * c2 * wave_detail::lap(g, uc, i, j, ih2);
      }
    un[g.idx(si, sj)] += dt2 * sig(k);
  }
  return wf;
}

// receivers are (i,j) grid nodes that must lie on the boundary; the image is
// (time levels sampled every `stride`) x receivers, time-major
struct StrImage {
  int nt = 0, nr = 0;
  std::vector<double> v;  // v[t*nr + r]
};

inline StrImage observe_str(const WaveField& wf, const std::vector<std::pair<int, int>>& receivers,
                            int stride) {
  if (stride < 1) throw ConfigError("stride must be >= 1");
  const Grid2d& g = wf.grid;
  for (auto [i, j] : receivers)
    if (i < 0 || i >= g.n || j < 0 || j >= g.n ||
        (i != 0 && i != g.n - 1 && j != 0 && j != g.n - 1))
      throw ConfigError(msg("receiver (", i, ",", j, ") not on the boundary"));
  StrImage img;
  img.nr = static_cast<int>(receivers.size());
  img.nt = (wf.nt + stride - 1) / stride;
  img.v.resize(static_cast<std::size_t>(img.nt) * img.nr);
  for (int t = 0; t < img.nt; ++t) {
    const double* lvl = wf.level(t * stride);
    for (int r = 0; r < img.nr; ++r)
      img.v[static_cast<std::size_t>(t) * img.nr + r] =
          lvl[g.idx(receivers[r].first, receivers[r].second)];
  }
  return img;
}

// evenly spaced receivers along the top edge
inline std::vector<std::pair<int, int>> top_edge_receivers(const Grid2d& g, int count) {
  if (count < 1 || count > g.n) throw ConfigError("bad receiver count");
  std::vector<std::pair<int, int>> r;
  r.reserve(count);
  for (int k = 0; k < count; ++k) {
    int i = count == 1 ? g.n / 2
                       : static_cast<int>(std::lround(k * double(g.n - 1) / (count - 1)));
    r.emplace_back(i, g.n - 1);
  }
  return r;
}

// discrete energy 0.5 * sum h^2 [ u_t^2 + a^2 |grad u|^2 ], centered u_t at
// level k (needs 1 <= k <= nt-2); used by conservation checks
inline double wave_energy(const WaveField& wf, const Field& a, int k) {
  const Grid2d& g = wf.grid;
  if (k < 1 || k + 1 >= wf.nt) throw ConfigError("energy needs an interior time level");
  const double* um = wf.level(k - 1);
  const double* uc = wf.level(k);
  const double* up = wf.level(k + 1);
  double h = g.h(), e = 0;
  for (int j = 0; j < g.n; ++j)
    for (int i = 0; i < g.n; ++i) {
      double ut = (up[g.idx(i, j)] - um[g.idx(i, j)]) / (2 * wf.dt);
      e += 0.5 * ut * ut * h * h;
      if (i + 1 < g.n) {
        double gx = (uc[g.idx(i + 1, j)] - uc[g.idx(i, j)]) / h;
        e += 0.5 * sq(a[g.idx(i, j)]) * gx * gx * h * h;
      }
      if (j + 1 < g.n) {
        double gy = (uc[g.idx(i, j + 1)] - uc[g.idx(i, j)]) / h;
        e += 0.5 * sq(a[g.idx(i, j)]) * gy * gy * h * h;
      }
    }
  return e;
}

}  // namespace nio
