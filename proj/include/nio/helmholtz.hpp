// Helmholtz solver -lap(u) - omega^2 a u = f with Dirichlet data, central
// five-point differences. The factorization pivot range doubles as a discrete
// resonance detector: when omega^2 sits at an eigenvalue of the shifted
// operator the factorization collapses and we refuse the solve.
#pragma once

#include <cmath>
#include <vector>

#include "nio/banded.hpp"
#include "nio/elliptic.hpp"
#include "nio/grid.hpp"

namespace nio {

class HelmholtzSystem {
 public:
  // relative pivot threshold for the resonance check
  static constexpr double kPivotTol = 1e-12;

  HelmholtzSystem(const Grid2d& g, const Field& a, double omega)
      : g_(g), a_(a), omega_(omega), lu_(make_lu(g, a, omega)) {}

  const Grid2d& grid() const { return g_; }

  Field solve(const BoundaryTrace& bd, const Field* f = nullptr) const {
    int n = g_.n, m = n - 2;
    if (static_cast<int>(bd.size()) != boundary_length(n))
      throw ShapeError("boundary trace length mismatch");
    if (f && f->size() != g_.num_points()) throw ShapeError("source field size mismatch");
    Field u(g_.num_points(), 0.0);
    for (int p = 0; p < boundary_length(n); ++p) {
      auto [i, j] = boundary_node(n, p);
      u[g_.idx(i, j)] = bd[p];
    }
    double ih2 = 1.0 / (g_.h() * g_.h());
    std::vector<double> rhs(static_cast<std::size_t>(m) * m, 0.0);
    for (int j = 1; j < n - 1; ++j)
      for (int i = 1; i < n - 1; ++i) {
        std::size_t k = static_cast<std::size_t>(j - 1) * m + (i - 1);
        double r = f ? (*f)[g_.idx(i, j)] : 0.0;
        if (i == 1) r += ih2 * u[g_.idx(0, j)];
        if (i == n - 2) r += ih2 * u[g_.idx(n - 1, j)];
        if (j == 1) r += ih2 * u[g_.idx(i, 0)];
        if (j == n - 2) r += ih2 * u[g_.idx(i, n - 1)];
        rhs[k] = r;
      }
    std::vector<double> sol = lu_.solved(rhs);
    for (int j = 1; j < n - 1; ++j)
      for (int i = 1; i < n - 1; ++i)
        u[g_.idx(i, j)] = sol[static_cast<std::size_t>(j - 1) * m + (i - 1)];
    check_residual(u, f, bd);
    return u;
  }

 private:
  BandedLU make_lu(const Grid2d& g, const Field& a, double omega) {
    if (a.size() != g.num_points()) throw ShapeError("coefficient field size mismatch");
    int n = g.n, m = n - 2;
    double ih2 = 1.0 / (g.h() * g.h());
    BandedLU lu(m * m, m, m);
    for (int j = 1; j < n - 1; ++j)
      for (int i = 1; i < n - 1; ++i) {
        int k = (j - 1) * m + (i - 1);
        lu.at(k, k) = 4.0 * ih2 - omega * omega * a[g.idx(i, j)];
        if (i > 1) lu.at(k, k - 1) = -ih2;
        if (i < n - 2) lu.at(k, k + 1) = -ih2;
        if (j > 1) lu.at(k, k - m) = -ih2;
        if (j < n - 2) lu.at(k, k + m) = -ih2;
      }
    try {
      lu.factor();
    } catch (const NumericError&) {
      throw NumericError(msg("helmholtz discrete resonance near omega=", omega,
                             " (singular factorization)"));
    }
    if (lu.min_pivot() < kPivotTol * lu.max_pivot())
      throw NumericError(msg("helmholtz discrete resonance near omega=", omega,
                             " (pivot ratio ", lu.min_pivot() / lu.max_pivot(), ")"));
    return lu;
  }

  void check_residual(const Field& u, const Field* f, const BoundaryTrace& bd) const {
    int n = g_.n;
    double ih2 = 1.0 / (g_.h() * g_.h());
    double res = 0;
    for (int j = 1; j < n - 1; ++j)
      for (int i = 1; i < n - 1; ++i) {
        double r = (4.0 * u[g_.idx(i, j)] - u[g_.idx(i - 1, j)] - u[g_.idx(i + 1, j)] -
                    u[g_.idx(i, j - 1)] - u[g_.idx(i, j + 1)]) *
                       ih2 -
                   omega_ * omega_ * a_[g_.idx(i, j)] * u[g_.idx(i, j)] -
                   (f ? (*f)[g_.idx(i, j)] : 0.0);
        res = std::max(res, std::abs(r));
      }
    double scale = std::max({max_abs(bd) * ih2, max_abs(u) * ih2, f ? max_abs(*f) : 0.0, 1e-300});
    if (res > 1e-8 * scale)
      throw NumericError(msg("helmholtz solve residual ", res, " exceeds 1e-8*", scale));
  }

  Grid2d g_;
  Field a_;
  double omega_;
  BandedLU lu_;
};

inline Field solve_helmholtz(const Grid2d& g, const Field& a, double omega,
                             const BoundaryTrace& bd, const Field* f = nullptr) {
  return HelmholtzSystem(g, a, omega).solve(bd, f);
}

}  // namespace nio
