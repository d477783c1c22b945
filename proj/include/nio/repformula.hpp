// numerical checks of the representation identity behind boundary-to-volume
// inversion: for -lap(u_k) - a u_k = 0 with u_k = phi_k on the boundary,
// integration by parts against the Neumann eigenfunction phi_k closes to
//   int a u_k phi_k = lambda_k int u_k phi_k - bint g_k dnu(u_k),
// with a minus sign on the boundary term. Also a ridge-regularized
// least-squares reconstruction through the mode matrix, and log-log
// convergence studies on manufactured solutions for each forward solver.
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "nio/elliptic.hpp"
#include "nio/grid.hpp"
#include "nio/helmholtz.hpp"
#include "nio/modes.hpp"
#include "nio/rte.hpp"

namespace nio {

// ------------------------------------------------- representation identity

struct RepRow {
  Mode mode;
  double lhs = std::numeric_limits<double>::quiet_NaN();
  double rhs = std::numeric_limits<double>::quiet_NaN();
  double defect = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
  std::string note;
};

struct RepReport {
  int n = 0;
  std::vector<RepRow> rows;
  double max_defect = std::numeric_limits<double>::quiet_NaN();  // over solved modes
  std::string convention;
};

// defect_k = |lhs - rhs| / max(|lhs|, |rhs|, tau); a failed solve (resonant
// coefficient) marks its row and leaves the others alone
inline RepReport check_representation_formula(const Grid2d& g, const Field& a, int K,
                                              double tau = 1e-12) {
  if (tau <= 0) throw ConfigError(msg("defect floor ", tau, " must be positive"));
  ModeSystem ms = build_mode_system(g, a, K);
  RepReport rep;
  rep.n = g.n;
  rep.convention =
      "boundary term convention: B_k = lambda_k*int(u_k phi_k) - bint(g_k dnu u_k); "
      "the minus sign is what integration by parts against a Neumann eigenfunction "
      "produces, and the identity does not close with the sign flipped";
  Field w(g.num_points());
  for (int k = 0; k < K; ++k) {
    RepRow row;
    row.mode = ms.modes[static_cast<std::size_t>(k)];
    if (!ms.errors[static_cast<std::size_t>(k)].empty()) {
      row.note = ms.errors[static_cast<std::size_t>(k)];
      rep.rows.push_back(std::move(row));
      continue;
    }
    const Field& uk = ms.u[static_cast<std::size_t>(k)];
    const Field& pk = ms.phi[static_cast<std::size_t>(k)];
    for (std::size_t q = 0; q < g.num_points(); ++q) w[q] = a[q] * uk[q] * pk[q];
    row.lhs = integrate_grid(g, w);
    row.rhs = ms.B[static_cast<std::size_t>(k)];
    row.defect = std::abs(row.lhs - row.rhs) /
                 std::max({std::abs(row.lhs), std::abs(row.rhs), tau});
    row.ok = true;
    if (!std::isnan(rep.max_defect))
      rep.max_defect = std::max(rep.max_defect, row.defect);
    else
      rep.max_defect = row.defect;
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

inline void write_rep_csv(const RepReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError(msg("cannot open '", path, "' for writing"));
  out << "kx,ky,lambda,lhs,rhs,defect\n";
  out.precision(12);
  for (const RepRow& r : rep.rows)
    out << r.mode.kx << ',' << r.mode.ky << ',' << r.mode.lambda << ',' << r.lhs << ',' << r.rhs
        << ',' << r.defect << '\n';
  out.flush();
  if (!out) throw FormatError(msg("short write to '", path, "'"));
}

// ---------------------------------------------------------- reconstruction

struct Reconstruction {
  std::vector<double> coeffs;  // mode amplitudes A
  Field field;                 // sum_l A_l phi_l on the grid
  double abs_l2 = 0;           // ||field - (a - mean a)||_L2
  double rel_l2 = std::numeric_limits<double>::quiet_NaN();
  double residual = 0;         // ||C A - B||_2 of the unridged system
  bool used_pseudo_inverse = false;
  std::string note;
};

namespace rep_detail {

// dense K x K solve through the banded machinery; pivot collapse signals rank
// deficiency
inline std::vector<double> dense_solve(const std::vector<double>& M,
                                       const std::vector<double>& rhs, int K) {
  BandedLU lu(K, K - 1, K - 1);
  for (int r = 0; r < K; ++r)
    for (int c = 0; c < K; ++c) lu.at(r, c) = M[static_cast<std::size_t>(r) * K + c];
  lu.factor();
  if (lu.min_pivot() < 1e-12 * lu.max_pivot())
    throw NumericError(msg("mode matrix nearly singular (pivot ratio ",
                           lu.min_pivot() / lu.max_pivot(), ")"));
  return lu.solved(rhs);
}

}  // namespace rep_detail

// solves (C + ridge I) A = B and reports how well sum_l A_l phi_l recovers
// the zero-mean part of a_true (the modes cannot see the mean). a resonant
// coefficient leaves no usable system and throws; a rank-deficient one falls
// back to least squares via normal equations and flags the result.
inline Reconstruction reconstruct_via_modes(const Grid2d& g, const Field& a_true, int K,
                                            double ridge) {
  if (ridge < 0) throw ConfigError(msg("ridge ", ridge, " must be >= 0"));
  ModeSystem ms = build_mode_system(g, a_true, K);
  for (int k = 0; k < K; ++k)
    if (!ms.errors[static_cast<std::size_t>(k)].empty())
      throw NumericError(msg("mode (", ms.modes[static_cast<std::size_t>(k)].kx, ",",
                             ms.modes[static_cast<std::size_t>(k)].ky,
                             ") failed: ", ms.errors[static_cast<std::size_t>(k)]));
  std::size_t Ks = static_cast<std::size_t>(K);
  std::vector<double> M = ms.C;
  for (int k = 0; k < K; ++k) M[static_cast<std::size_t>(k) * Ks + k] += ridge;
  Reconstruction rec;
  try {
    rec.coeffs = rep_detail::dense_solve(M, ms.B, K);
  } catch (const NumericError& e) {
    // least-squares fallback: (M^T M + eps I) A = M^T B
    std::vector<double> mtm(Ks * Ks, 0.0), mtb(Ks, 0.0);
    for (int r = 0; r < K; ++r)
      for (int c = 0; c < K; ++c) {
        double s = 0;
        for (int k = 0; k < K; ++k)
          s += M[static_cast<std::size_t>(k) * Ks + r] * M[static_cast<std::size_t>(k) * Ks + c];
        mtm[static_cast<std::size_t>(r) * Ks + c] = s;
      }
    for (int r = 0; r < K; ++r) {
      double s = 0;
      for (int k = 0; k < K; ++k)
        s += M[static_cast<std::size_t>(k) * Ks + r] * ms.B[static_cast<std::size_t>(k)];
      mtb[static_cast<std::size_t>(r)] = s;
    }
    double tr = 0;
    for (int k = 0; k < K; ++k) tr += mtm[static_cast<std::size_t>(k) * Ks + k];
    double eps = 1e-12 * tr / K;
    for (int k = 0; k < K; ++k) mtm[static_cast<std::size_t>(k) * Ks + k] += eps;
    rec.coeffs = rep_detail::dense_solve(mtm, mtb, K);
    rec.used_pseudo_inverse = true;
    rec.note = msg("rank-deficient mode matrix, least-squares fallback (", e.what(), ")");
  }
  rec.field.assign(g.num_points(), 0.0);
  for (int k = 0; k < K; ++k) {
    const Field& pk = ms.phi[static_cast<std::size_t>(k)];
    double ak = rec.coeffs[static_cast<std::size_t>(k)];
    for (std::size_t q = 0; q < g.num_points(); ++q) rec.field[q] += ak * pk[q];
  }
  for (int k = 0; k < K; ++k) {
    double r = -ms.B[static_cast<std::size_t>(k)];
    for (int l = 0; l < K; ++l)
      r += ms.C[static_cast<std::size_t>(k) * Ks + l] * rec.coeffs[static_cast<std::size_t>(l)];
    rec.residual += r * r;
  }
  rec.residual = std::sqrt(rec.residual);
  double mean = field_mean(g, a_true);
  Field diff(g.num_points()), target(g.num_points());
  for (std::size_t q = 0; q < g.num_points(); ++q) {
    target[q] = a_true[q] - mean;
    diff[q] = rec.field[q] - target[q];
  }
  Field sq(g.num_points());
  for (std::size_t q = 0; q < g.num_points(); ++q) sq[q] = diff[q] * diff[q];
  rec.abs_l2 = std::sqrt(integrate_grid(g, sq));
  for (std::size_t q = 0; q < g.num_points(); ++q) sq[q] = target[q] * target[q];
  double denom = std::sqrt(integrate_grid(g, sq));
  Field asq(g.num_points());
  for (std::size_t q = 0; q < g.num_points(); ++q) asq[q] = a_true[q] * a_true[q];
  double ascale = std::sqrt(integrate_grid(g, asq));
  // relative error is meaningless against a constant target; leave it NaN
  if (denom > 1e-14 * (1.0 + ascale)) rec.rel_l2 = rec.abs_l2 / denom;
  return rec;
}

// default ridge 1e-8 |trace C| / K: scales with the system, vanishes with it
inline Reconstruction reconstruct_via_modes(const Grid2d& g, const Field& a_true, int K) {
  ModeSystem ms = build_mode_system(g, a_true, K);
  double tr = 0;
  for (int k = 0; k < K; ++k) tr += ms.C[static_cast<std::size_t>(k) * K + k];
  return reconstruct_via_modes(g, a_true, K, 1e-8 * std::abs(tr) / K);
}

// ------------------------------------------------------ convergence studies

struct ConvergenceStudy {
  std::vector<int> grids;
  std::vector<double> errors;
  double slope = std::numeric_limits<double>::quiet_NaN();
};

// least-squares slope of log error against log h, h = 1/(n-1). errors below
// the round-off floor carry no truncation signal; the slope then stays NaN
// and the errors speak for themselves.
inline ConvergenceStudy convergence_study(const std::vector<int>& grids,
                                          const std::function<double(int)>& err_of_n,
                                          double roundoff_floor = 1e-10) {
  if (grids.size() < 3)
    throw ConfigError(msg("convergence study needs at least 3 grids, got ", grids.size()));
  for (std::size_t i = 1; i < grids.size(); ++i)
    if (grids[i] <= grids[i - 1]) throw ConfigError("grids must be strictly ascending");
  ConvergenceStudy st;
  st.grids = grids;
  bool roundoff = false;
  for (int n : grids) {
    double e = err_of_n(n);
    if (!std::isfinite(e) || e < 0) throw NumericError(msg("invalid study error ", e));
    if (e < roundoff_floor) roundoff = true;
    st.errors.push_back(e);
  }
  if (roundoff) return st;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  double m = static_cast<double>(grids.size());
  for (std::size_t i = 0; i < grids.size(); ++i) {
    double x = std::log(1.0 / (grids[i] - 1));
    double y = std::log(st.errors[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  st.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return st;
}

// ------------------------------------------- manufactured error evaluators

// -lap(u) = 2 pi^2 sin(pi x) sin(pi y), zero boundary; five-point stencil is
// second order
inline double poisson_manufactured_error(int n) {
  Grid2d g(n);
  Field a(g.num_points(), 1.0);
  Field ustar = eval_on_grid(g, [](double x, double y) {
    return std::sin(M_PI * x) * std::sin(M_PI * y);
  });
  Field f(ustar);
  for (double& v : f) v *= 2.0 * M_PI * M_PI;
  BoundaryTrace bd(static_cast<std::size_t>(boundary_length(n)), 0.0);
  Field u = solve_elliptic(g, a, bd, &f);
  double err = 0;
  for (std::size_t q = 0; q < g.num_points(); ++q) err = std::max(err, std::abs(u[q] - ustar[q]));
  return err;
}

// -lap(u) - u = (2 pi^2 - 1) sin(pi x) sin(pi y), omega = 1, a = 1
inline double helmholtz_manufactured_error(int n) {
  Grid2d g(n);
  Field a(g.num_points(), 1.0);
  Field ustar = eval_on_grid(g, [](double x, double y) {
    return std::sin(M_PI * x) * std::sin(M_PI * y);
  });
  Field f(ustar);
  for (double& v : f) v *= 2.0 * M_PI * M_PI - 1.0;
  BoundaryTrace bd(static_cast<std::size_t>(boundary_length(n)), 0.0);
  Field u = solve_helmholtz(g, a, 1.0, bd, &f);
  double err = 0;
  for (std::size_t q = 0; q < g.num_points(); ++q) err = std::max(err, std::abs(u[q] - ustar[q]));
  return err;
}

// harmonic u = e^x cos(y) with a = 1: both the interior solve and the
// one-sided normal trace are second order
inline double dtn_harmonic_error(int n) {
  Grid2d g(n);
  Field a(g.num_points(), 1.0);
  auto ustar = [](double x, double y) { return std::exp(x) * std::cos(y); };
  BoundaryTrace bd = eval_on_boundary(g, ustar);
  Field u = solve_elliptic(g, a, bd);
  BoundaryTrace dtn = observe_dtn(g, a, u, true);
  double err = 0;
  for (int p = 0; p < boundary_length(n); ++p) {
    auto [x, y] = boundary_xy(g, p);
    double exact = 0;
    switch (boundary_edge(n, p)) {
      case 0: exact = std::exp(x) * std::sin(y); break;   // nu = (0,-1)
      case 1: exact = std::exp(x) * std::cos(y); break;   // nu = (1,0)
      case 2: exact = -std::exp(x) * std::sin(y); break;  // nu = (0,1)
      case 3: exact = -std::exp(x) * std::cos(y); break;  // nu = (-1,0)
    }
    err = std::max(err, std::abs(dtn[static_cast<std::size_t>(p)] - exact));
  }
  return err;
}

// affine data is reproduced exactly by the stencil; only round-off remains
inline double poisson_affine_error(int n) {
  Grid2d g(n);
  Field a(g.num_points(), 1.0);
  auto ustar = [](double x, double y) { return 0.25 + 2.0 * x - y; };
  BoundaryTrace bd = eval_on_boundary(g, ustar);
  Field u = solve_elliptic(g, a, bd);
  Field ex = eval_on_grid(g, ustar);
  double err = 0;
  for (std::size_t q = 0; q < g.num_points(); ++q) err = std::max(err, std::abs(u[q] - ex[q]));
  return err;
}

// pure-absorption beam: with zero scattering source the upwind sweep solves
// v u_x + (2a-1) u = 0, whose solution along the beam is exp(-(2a-1) x / v);
// first-order upwind
inline double rte_attenuation_error(int nx) {
  const int nv = 16, beam = 12;
  std::vector<double> a(static_cast<std::size_t>(nx), 1.2);
  GaussLegendre q = gauss_legendre(nv);
  std::vector<double> src(static_cast<std::size_t>(nx), 0.0);
  std::vector<double> inflow(static_cast<std::size_t>(nv), 0.0);
  inflow[beam] = 1.0;
  std::vector<double> u(static_cast<std::size_t>(nx) * nv, 0.0);
  rte_detail::sweep(a, q, src, inflow.data(), u);
  double st = 2.0 * 1.2 - 1.0, v = q.x[beam], h = 1.0 / (nx - 1);
  double err = 0;
  for (int i = 0; i < nx; ++i) {
    double exact = std::exp(-st * i * h / v);
    err = std::max(err, std::abs(u[static_cast<std::size_t>(i) * nv + beam] - exact));
  }
  return err;
}

}  // namespace nio
