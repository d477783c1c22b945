// Variable-coefficient elliptic solver -div(a grad u) = f on the unit square
// (conservative five-point scheme, arithmetic face averages of a), Dirichlet
// data on the boundary, banded direct factorization reusable across many
// boundary conditions. Also the Dirichlet-to-Neumann observation shared with
// the Helmholtz solver.
#pragma once

#include <cmath>
#include <vector>

#include "nio/banded.hpp"
#include "nio/grid.hpp"

namespace nio {

// factor once per coefficient, solve per boundary datum
class EllipticSystem {
 public:
  EllipticSystem(const Grid2d& g, const Field& a) : g_(g), a_(a), lu_(make_lu(g, a)) {}

  const Grid2d& grid() const { return g_; }

  // returns the full n*n field with u = g on the boundary; f is an optional
  // interior source (grid layout, boundary entries ignored)
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
        if (i == 1) r += face(i, j, -1, 0) * ih2 * u[g_.idx(0, j)];
        if (i == n - 2) r += face(i, j, +1, 0) * ih2 * u[g_.idx(n - 1, j)];
        if (j == 1) r += face(i, j, 0, -1) * ih2 * u[g_.idx(i, 0)];
        if (j == n - 2) r += face(i, j, 0, +1) * ih2 * u[g_.idx(i, n - 1)];
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
  double face(int i, int j, int di, int dj) const {
    return 0.5 * (a_[g_.idx(i, j)] + a_[g_.idx(i + di, j + dj)]);
  }

  BandedLU make_lu(const Grid2d& g, const Field& a) {
    if (a.size() != g.num_points()) throw ShapeError("coefficient field size mismatch");
    for (double v : a)
      if (!(v > 0)) throw ConfigError("elliptic coefficient must be positive");
    int n = g.n, m = n - 2;
    double ih2 = 1.0 / (g.h() * g.h());
    BandedLU lu(m * m, m, m);
    for (int j = 1; j < n - 1; ++j)
      for (int i = 1; i < n - 1; ++i) {
        int k = (j - 1) * m + (i - 1);
        double aw = face(i, j, -1, 0), ae = face(i, j, +1, 0);
        double as = face(i, j, 0, -1), an = face(i, j, 0, +1);
        lu.at(k, k) = (aw + ae + as + an) * ih2;
        if (i > 1) lu.at(k, k - 1) = -aw * ih2;
        if (i < n - 2) lu.at(k, k + 1) = -ae * ih2;
        if (j > 1) lu.at(k, k - m) = -as * ih2;
        if (j < n - 2) lu.at(k, k + m) = -an * ih2;
      }
    lu.factor();
    return lu;
  }

  // defensive: direct solve should leave ~1e-12 relative residual
  void check_residual(const Field& u, const Field* f, const BoundaryTrace& bd) const {
    int n = g_.n;
    double ih2 = 1.0 / (g_.h() * g_.h());
    double res = 0;
    for (int j = 1; j < n - 1; ++j)
      for (int i = 1; i < n - 1; ++i) {
        double uc = u[g_.idx(i, j)];
        double r = (face(i, j, -1, 0) * (uc - u[g_.idx(i - 1, j)]) +
                    face(i, j, +1, 0) * (uc - u[g_.idx(i + 1, j)]) +
                    face(i, j, 0, -1) * (uc - u[g_.idx(i, j - 1)]) +
                    face(i, j, 0, +1) * (uc - u[g_.idx(i, j + 1)])) *
                    ih2 -
                (f ? (*f)[g_.idx(i, j)] : 0.0);
        res = std::max(res, std::abs(r));
      }
    double scale = std::max({max_abs(bd) * ih2, f ? max_abs(*f) : 0.0, 1e-300});
    if (res > 1e-8 * scale)
      throw NumericError(msg("elliptic solve residual ", res, " exceeds 1e-8*", scale));
  }

  Grid2d g_;
  Field a_;
  BandedLU lu_;
};

inline Field solve_elliptic(const Grid2d& g, const Field& a, const BoundaryTrace& bd,
                            const Field* f = nullptr) {
  return EllipticSystem(g, a).solve(bd, f);
}

// Outward normal derivative on the boundary by second-order one-sided 3-point
// differences, optionally weighted by the boundary value of a. Corners use the
// normal of the edge that owns them in the CCW convention.
inline BoundaryTrace observe_dtn(const Grid2d& g, const Field& a, const Field& u,
                                 bool weighted) {
  int n = g.n;
  if (u.size() != g.num_points() || a.size() != g.num_points())
    throw ShapeError("field/grid size mismatch");
  double i2h = 1.0 / (2.0 * g.h());
  BoundaryTrace t(boundary_length(n));
  for (int p = 0; p < boundary_length(n); ++p) {
    auto [i, j] = boundary_node(n, p);
    double d;
    switch (boundary_edge(n, p)) {
      case 0:  // bottom, nu = -y
        d = (3 * u[g.idx(i, 0)] - 4 * u[g.idx(i, 1)] + u[g.idx(i, 2)]) * i2h;
        break;
      case 1:  // right, nu = +x
        d = (3 * u[g.idx(n - 1, j)] - 4 * u[g.idx(n - 2, j)] + u[g.idx(n - 3, j)]) * i2h;
        break;
      case 2:  // top, nu = +y
        d = (3 * u[g.idx(i, n - 1)] - 4 * u[g.idx(i, n - 2)] + u[g.idx(i, n - 3)]) * i2h;
        break;
      default:  // left, nu = -x
        d = (3 * u[g.idx(0, j)] - 4 * u[g.idx(1, j)] + u[g.idx(2, j)]) * i2h;
        break;
    }
    t[p] = weighted ? a[g.idx(i, j)] * d : d;
  }
  return t;
}

}  // namespace nio
