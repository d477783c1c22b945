// Neumann eigenpairs of -lap on the unit square, their grid samples, and the
// mode system behind the representation identity: per mode k solve the
// omega = 1 Helmholtz problem with dirichlet data g_k = phi_k|boundary, read
// the outward normal trace, and assemble C_kl = int u_k phi_k phi_l and
// B_k = lambda_k int u_k phi_k - bint g_k dnu(u_k). The boundary term carries
// a minus sign: that is what integration by parts against a Neumann
// eigenfunction produces, and reports state the convention explicitly.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nio/elliptic.hpp"
#include "nio/grid.hpp"
#include "nio/helmholtz.hpp"

namespace nio {

struct Mode {
  int kx = 0, ky = 0;
  double lambda = 0;
};

// first K zero-mean modes, lambda ascending, ties in (kx,ky) lexicographic
// order; lambda = pi^2 (kx^2 + ky^2) so ties compare exactly
inline std::vector<Mode> neumann_modes(int K) {
  if (K < 1) throw ConfigError(msg("mode count ", K, " < 1"));
  std::vector<Mode> all;
  for (int kx = 0; kx <= K; ++kx)
    for (int ky = 0; ky <= K; ++ky) {
      if (kx == 0 && ky == 0) continue;  // constant mode is not zero-mean
      all.push_back({kx, ky, M_PI * M_PI * static_cast<double>(kx * kx + ky * ky)});
    }
  std::sort(all.begin(), all.end(), [](const Mode& a, const Mode& b) {
    if (a.lambda != b.lambda) return a.lambda < b.lambda;
    if (a.kx != b.kx) return a.kx < b.kx;
    return a.ky < b.ky;
  });
  all.resize(static_cast<std::size_t>(K));
  return all;
}

// L2-orthonormal on the unit square: cos(0) keeps weight 1, higher cosines
// carry sqrt(2)
inline double mode_value(const Mode& m, double x, double y) {
  double cx = m.kx == 0 ? 1.0 : std::sqrt(2.0);
  double cy = m.ky == 0 ? 1.0 : std::sqrt(2.0);
  return cx * cy * std::cos(m.kx * M_PI * x) * std::cos(m.ky * M_PI * y);
}

inline Field mode_field(const Grid2d& g, const Mode& m) {
  return eval_on_grid(g, [&](double x, double y) { return mode_value(m, x, y); });
}

inline BoundaryTrace mode_boundary(const Grid2d& g, const Mode& m) {
  return eval_on_boundary(g, [&](double x, double y) { return mode_value(m, x, y); });
}

// ------------------------------------------------------------- quadrature

// trapezoid weights: h^2 per interior node, halved per boundary face
inline double integrate_grid(const Grid2d& g, const Field& f) {
  if (f.size() != g.num_points()) throw ShapeError("field/grid size mismatch");
  double s = 0;
  for (int j = 0; j < g.n; ++j) {
    double wj = (j == 0 || j == g.n - 1) ? 0.5 : 1.0;
    for (int i = 0; i < g.n; ++i) {
      double wi = (i == 0 || i == g.n - 1) ? 0.5 : 1.0;
      s += wi * wj * f[g.idx(i, j)];
    }
  }
  return s * g.h() * g.h();
}

inline double field_mean(const Grid2d& g, const Field& f) {
  return integrate_grid(g, f) / ((g.x1 - g.x0) * (g.y1 - g.y0));
}

// closed-curve trapezoid: every boundary node carries weight h (the half
// weights of adjacent edges meet at each corner)
inline double integrate_boundary(const Grid2d& g, const BoundaryTrace& t) {
  if (static_cast<int>(t.size()) != boundary_length(g.n))
    throw ShapeError("trace/grid size mismatch");
  double s = 0;
  for (double v : t) s += v;
  return s * g.h();
}

// ------------------------------------------------------------ mode system

struct ModeSystem {
  std::vector<Mode> modes;
  std::vector<Field> phi;           // sampled eigenfunctions
  std::vector<Field> u;             // helmholtz solutions, empty when failed
  std::vector<BoundaryTrace> psi;   // outward normal traces dnu(u_k)
  std::vector<std::string> errors;  // per mode, empty string when solved
  std::vector<double> C;            // K x K row-major
  std::vector<double> B;            // K

  int K() const { return static_cast<int>(modes.size()); }
  bool complete() const {
    for (const auto& e : errors)
      if (!e.empty()) return false;
    return true;
  }
};

// one factorization serves all modes (the operator depends on a alone); a
// resonant coefficient therefore fails every mode with the same note, while
// per-solve residual failures stay local to their mode
inline ModeSystem build_mode_system(const Grid2d& g, const Field& a, int K) {
  if (a.size() != g.num_points()) throw ShapeError("coefficient/grid size mismatch");
  ModeSystem ms;
  ms.modes = neumann_modes(K);
  ms.errors.assign(static_cast<std::size_t>(K), "");
  ms.u.resize(static_cast<std::size_t>(K));
  ms.psi.resize(static_cast<std::size_t>(K));
  Field ones(g.num_points(), 1.0);
  for (const Mode& m : ms.modes) {
    Field f = mode_field(g, m);
    if (std::abs(field_mean(g, f)) > 1e-10)
      throw NumericError(msg("mode (", m.kx, ",", m.ky, ") is not zero-mean on this grid"));
    ms.phi.push_back(std::move(f));
  }
  std::string factor_error;
  std::optional<HelmholtzSystem> sys;
  try {
    sys.emplace(g, a, 1.0);
  } catch (const NumericError& e) {
    factor_error = e.what();
  }
  for (int k = 0; k < K; ++k) {
    if (!sys) {
      ms.errors[static_cast<std::size_t>(k)] = factor_error;
      continue;
    }
    try {
      BoundaryTrace gk = mode_boundary(g, ms.modes[static_cast<std::size_t>(k)]);
      Field uk = sys->solve(gk);
      ms.psi[static_cast<std::size_t>(k)] = observe_dtn(g, ones, uk, false);
      ms.u[static_cast<std::size_t>(k)] = std::move(uk);
    } catch (const NumericError& e) {
      ms.errors[static_cast<std::size_t>(k)] = e.what();
    }
  }
  std::size_t Ks = static_cast<std::size_t>(K);
  ms.C.assign(Ks * Ks, std::numeric_limits<double>::quiet_NaN());
  ms.B.assign(Ks, std::numeric_limits<double>::quiet_NaN());
  Field prod(g.num_points());
  for (int k = 0; k < K; ++k) {
    if (!ms.errors[static_cast<std::size_t>(k)].empty()) continue;
    const Field& uk = ms.u[static_cast<std::size_t>(k)];
    const Field& pk = ms.phi[static_cast<std::size_t>(k)];
    for (std::size_t q = 0; q < g.num_points(); ++q) prod[q] = uk[q] * pk[q];
    for (int l = 0; l < K; ++l) {
      Field w(g.num_points());
      const Field& pl = ms.phi[static_cast<std::size_t>(l)];
      for (std::size_t q = 0; q < g.num_points(); ++q) w[q] = prod[q] * pl[q];
      ms.C[static_cast<std::size_t>(k) * Ks + l] = integrate_grid(g, w);
    }
    BoundaryTrace gk = mode_boundary(g, ms.modes[static_cast<std::size_t>(k)]);
    BoundaryTrace gpsi(gk.size());
    for (std::size_t p = 0; p < gk.size(); ++p)
      gpsi[p] = gk[p] * ms.psi[static_cast<std::size_t>(k)][p];
    ms.B[static_cast<std::size_t>(k)] =
        ms.modes[static_cast<std::size_t>(k)].lambda * integrate_grid(g, prod) -
        integrate_boundary(g, gpsi);
  }
  return ms;
}

}  // namespace nio
