// Grid/boundary conventions, banded LU against a dense oracle, and the
// elliptic/Helmholtz solvers against discrete-harmonic and manufactured
// solutions.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "nio/banded.hpp"
#include "nio/elliptic.hpp"
#include "nio/grid.hpp"
#include "nio/helmholtz.hpp"
#include "nio/rng.hpp"

namespace {

// dense partial-pivot Gaussian elimination, the oracle for BandedLU
std::vector<double> dense_solve(std::vector<std::vector<double>> A, std::vector<double> b) {
  int n = static_cast<int>(b.size());
  for (int j = 0; j < n; ++j) {
    int p = j;
    for (int i = j + 1; i < n; ++i)
      if (std::abs(A[i][j]) > std::abs(A[p][j])) p = i;
    std::swap(A[j], A[p]);
    std::swap(b[j], b[p]);
    for (int i = j + 1; i < n; ++i) {
      double m = A[i][j] / A[j][j];
      if (m == 0) continue;
      for (int c = j; c < n; ++c) A[i][c] -= m * A[j][c];
      b[i] -= m * b[j];
    }
  }
  for (int j = n - 1; j >= 0; --j) {
    double s = b[j];
    for (int c = j + 1; c < n; ++c) s -= A[j][c] * b[c];
    b[j] = s / A[j][j];
  }
  return b;
}

double conv_slope(double e_coarse, double e_fine) { return std::log2(e_coarse / e_fine); }

}  // namespace

TEST_CASE("boundary trace: length, bijection, CCW adjacency, corner ownership") {
  int n = 9;
  nio::Grid2d g(n);
  int P = nio::boundary_length(n);
  CHECK(P == 4 * (n - 1));

  std::set<std::pair<int, int>> seen;
  for (int p = 0; p < P; ++p) {
    auto [i, j] = nio::boundary_node(n, p);
    CHECK((i == 0 || i == n - 1 || j == 0 || j == n - 1));
    CHECK(seen.insert({i, j}).second);  // each boundary node exactly once
  }
  CHECK(static_cast<int>(seen.size()) == P);

  // consecutive points are grid neighbours, also across the wraparound
  for (int p = 0; p < P; ++p) {
    auto [i0, j0] = nio::boundary_node(n, p);
    auto [i1, j1] = nio::boundary_node(n, (p + 1) % P);
    CHECK(std::abs(i1 - i0) + std::abs(j1 - j0) == 1);
  }

  // starts at the origin corner and walks the bottom edge first (CCW)
  CHECK(nio::boundary_node(n, 0) == std::pair<int, int>{0, 0});
  CHECK(nio::boundary_node(n, 1) == std::pair<int, int>{1, 0});
  // corners owned by the edge that starts there
  CHECK(nio::boundary_edge(n, 0) == 0);
  CHECK(nio::boundary_edge(n, n - 1) == 1);      // (n-1,0)
  CHECK(nio::boundary_edge(n, 2 * (n - 1)) == 2);  // (n-1,n-1)
  CHECK(nio::boundary_edge(n, 3 * (n - 1)) == 3);  // (0,n-1)

  // trace extraction agrees with direct evaluation
  auto f = [](double x, double y) { return 3 * x - 2 * y + x * y; };
  auto field = nio::eval_on_grid(g, f);
  auto t1 = nio::trace_of(g, field);
  auto t2 = nio::eval_on_boundary(g, f);
  for (int p = 0; p < P; ++p) CHECK(t1[p] == doctest::Approx(t2[p]).epsilon(1e-14));

  CHECK_THROWS_AS(nio::boundary_node(n, P), nio::ShapeError);
  CHECK_THROWS_AS(nio::Grid2d(4), nio::ConfigError);
}

TEST_CASE("banded LU matches dense elimination on random band systems") {
  nio::Rng rng(907);
  for (auto [n, kl, ku] : {std::tuple{12, 2, 3}, {30, 5, 1}, {25, 24, 24}, {40, 1, 1}}) {
    nio::BandedLU lu(n, kl, ku);
    std::vector<std::vector<double>> A(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i - j <= kl && j - i <= ku) {
          double v = rng.uniform(-1, 1);
          if (i == j) v += 3.0;  // keep comfortably nonsingular
          A[i][j] = v;
          lu.at(i, j) = v;
        }
    std::vector<double> b(n);
    for (auto& x : b) x = rng.uniform(-1, 1);
    lu.factor();
    auto xb = lu.solved(b);
    auto xd = dense_solve(A, b);
    for (int i = 0; i < n; ++i) CHECK(xb[i] == doctest::Approx(xd[i]).epsilon(1e-9));
  }
}

TEST_CASE("banded LU pivots through a zero diagonal and flags exact singularity") {
  // [[0,1],[1,0]] needs a row swap
  nio::BandedLU lu(2, 1, 1);
  lu.at(0, 1) = 1;
  lu.at(1, 0) = 1;
  lu.factor();
  auto x = lu.solved({2.0, 5.0});
  CHECK(x[0] == doctest::Approx(5.0));
  CHECK(x[1] == doctest::Approx(2.0));

  nio::BandedLU sing(3, 1, 1);
  sing.at(0, 0) = 1;
  sing.at(1, 1) = 1;  // last column identically zero
  CHECK_THROWS_AS(sing.factor(), nio::NumericError);

  nio::BandedLU band(5, 1, 2);
  CHECK_THROWS_AS(band.at(3, 0), nio::ShapeError);  // outside the band
}

TEST_CASE("elliptic: affine and harmonic-quadratic data reproduced exactly") {
  nio::Grid2d g(17);
  auto a1 = nio::eval_on_grid(g, [](double, double) { return 1.0; });

  auto gx = nio::eval_on_boundary(g, [](double x, double) { return x; });
  auto ux = nio::solve_elliptic(g, a1, gx);
  for (int j = 0; j < g.n; ++j)
    for (int i = 0; i < g.n; ++i)
      CHECK(ux[g.idx(i, j)] == doctest::Approx(g.x(i)).epsilon(1e-11));

  auto gq = nio::eval_on_boundary(g, [](double x, double y) { return x * x - y * y; });
  auto uq = nio::solve_elliptic(g, a1, gq);
  for (int j = 0; j < g.n; ++j)
    for (int i = 0; i < g.n; ++i)
      CHECK(uq[g.idx(i, j)] ==
            doctest::Approx(g.x(i) * g.x(i) - g.y(j) * g.y(j)).epsilon(1e-10));
}

TEST_CASE("elliptic: manufactured variable-coefficient solution converges at O(h^2)") {
  // u = sin(pi x) sin(pi y), a = 1+x  =>  f = -d/dx(a u_x) - d/dy(a u_y)
  auto exact = [](double x, double y) { return std::sin(M_PI * x) * std::sin(M_PI * y); };
  auto source = [](double x, double y) {
    return -M_PI * std::cos(M_PI * x) * std::sin(M_PI * y) +
           2.0 * M_PI * M_PI * (1.0 + x) * std::sin(M_PI * x) * std::sin(M_PI * y);
  };
  std::vector<double> errs;
  for (int n : {17, 33, 65}) {
    nio::Grid2d g(n);
    auto a = nio::eval_on_grid(g, [](double x, double) { return 1.0 + x; });
    auto f = nio::eval_on_grid(g, source);
    auto bd = nio::eval_on_boundary(g, exact);
    auto u = nio::solve_elliptic(g, a, bd, &f);
    double e = 0;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        e = std::max(e, std::abs(u[g.idx(i, j)] - exact(g.x(i), g.y(j))));
    errs.push_back(e);
  }
  CHECK(errs[1] < errs[0]);
  CHECK(errs[2] < errs[1]);
  CHECK(conv_slope(errs[1], errs[2]) == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("elliptic: positivity and shape guards") {
  nio::Grid2d g(9);
  auto a = nio::eval_on_grid(g, [](double, double) { return 1.0; });
  a[g.idx(4, 4)] = 0.0;
  auto bd = nio::eval_on_boundary(g, [](double x, double) { return x; });
  CHECK_THROWS_AS(nio::solve_elliptic(g, a, bd), nio::ConfigError);
  auto ok = nio::eval_on_grid(g, [](double, double) { return 2.0; });
  nio::BoundaryTrace bad(nio::boundary_length(g.n) + 1, 0.0);
  CHECK_THROWS_AS(nio::solve_elliptic(g, ok, bad), nio::ShapeError);
}

TEST_CASE("dtn: analytic normal derivatives, weighting, linearity") {
  nio::Grid2d g(21);
  auto a1 = nio::eval_on_grid(g, [](double, double) { return 1.0; });
  auto a2 = nio::eval_on_grid(g, [](double, double) { return 2.0; });
  auto ux = nio::eval_on_grid(g, [](double x, double) { return x; });

  // u = x: -1 on the left edge, +1 on the right, 0 elsewhere
  auto t = nio::observe_dtn(g, a1, ux, true);
  for (int p = 0; p < nio::boundary_length(g.n); ++p) {
    int e = nio::boundary_edge(g.n, p);
    double want = (e == 1) ? 1.0 : (e == 3) ? -1.0 : 0.0;
    CHECK(t[p] == doctest::Approx(want).epsilon(1e-12));
  }
  // weighting scales by boundary a
  auto t2 = nio::observe_dtn(g, a2, ux, true);
  for (int p = 0; p < nio::boundary_length(g.n); ++p)
    CHECK(t2[p] == doctest::Approx(2.0 * t[p]).epsilon(1e-12));
  // unweighted ignores a
  auto t3 = nio::observe_dtn(g, a2, ux, false);
  for (int p = 0; p < nio::boundary_length(g.n); ++p)
    CHECK(t3[p] == doctest::Approx(t[p]).epsilon(1e-12));

  // u = x^2 - y^2: one-sided 3-point differences are exact on quadratics
  auto uq = nio::eval_on_grid(g, [](double x, double y) { return x * x - y * y; });
  auto tq = nio::observe_dtn(g, a1, uq, true);
  for (int p = 0; p < nio::boundary_length(g.n); ++p) {
    auto [x, y] = nio::boundary_xy(g, p);
    int e = nio::boundary_edge(g.n, p);
    double want = (e == 0) ? 2 * y : (e == 1) ? 2 * x : (e == 2) ? -2 * y : -2 * x;
    CHECK(tq[p] == doctest::Approx(want).epsilon(1e-10));
  }

  // DtN of the solve is linear in g for fixed a
  nio::Grid2d gs(17);
  auto av = nio::eval_on_grid(gs, [](double x, double y) { return 1.0 + 0.3 * x + 0.2 * y; });
  nio::EllipticSystem sys(gs, av);
  auto g1 = nio::eval_on_boundary(gs, [](double x, double y) { return std::cos(M_PI * (x + y)); });
  auto g2 = nio::eval_on_boundary(gs, [](double x, double y) { return x * y; });
  nio::BoundaryTrace gc(g1.size());
  for (std::size_t p = 0; p < gc.size(); ++p) gc[p] = 0.7 * g1[p] - 1.3 * g2[p];
  auto l1 = nio::observe_dtn(gs, av, sys.solve(g1), true);
  auto l2 = nio::observe_dtn(gs, av, sys.solve(g2), true);
  auto lc = nio::observe_dtn(gs, av, sys.solve(gc), true);
  for (std::size_t p = 0; p < gc.size(); ++p)
    CHECK(lc[p] == doctest::Approx(0.7 * l1[p] - 1.3 * l2[p]).epsilon(1e-10));
}

TEST_CASE("helmholtz: degenerate frequencies reduce to the Laplace case") {
  nio::Grid2d g(17);
  auto a1 = nio::eval_on_grid(g, [](double, double) { return 1.0; });
  auto a0 = nio::eval_on_grid(g, [](double, double) { return 0.0; });
  auto bd = nio::eval_on_boundary(g, [](double x, double) { return x; });

  // omega = 0: u = x exactly
  auto u0 = nio::solve_helmholtz(g, a1, 0.0, bd);
  for (int j = 0; j < g.n; ++j)
    for (int i = 0; i < g.n; ++i)
      CHECK(u0[g.idx(i, j)] == doctest::Approx(g.x(i)).epsilon(1e-11));

  // a = 0, any omega: same as the Laplace solve
  auto gl = nio::eval_on_boundary(g, [](double x, double y) { return std::sin(3 * x) + y; });
  auto ua = nio::solve_helmholtz(g, a0, 7.3, gl);
  auto ul = nio::solve_elliptic(g, a1, gl);
  for (std::size_t k = 0; k < ua.size(); ++k)
    CHECK(ua[k] == doctest::Approx(ul[k]).epsilon(1e-9));
}

TEST_CASE("helmholtz: interior residual of returned solution is tiny") {
  nio::Grid2d g(33);
  double omega = 2.0;
  auto a = nio::eval_on_grid(g, [](double x, double y) { return 1.0 + 0.5 * x * y; });
  auto bd = nio::eval_on_boundary(g, [](double x, double y) { return std::sin(x) * std::exp(y); });
  auto u = nio::solve_helmholtz(g, a, omega, bd);
  double ih2 = 1.0 / (g.h() * g.h());
  double res = 0, un = nio::max_abs(u);
  for (int j = 1; j < g.n - 1; ++j)
    for (int i = 1; i < g.n - 1; ++i) {
      double r = (4 * u[g.idx(i, j)] - u[g.idx(i - 1, j)] - u[g.idx(i + 1, j)] -
                  u[g.idx(i, j - 1)] - u[g.idx(i, j + 1)]) * ih2 -
                 omega * omega * a[g.idx(i, j)] * u[g.idx(i, j)];
      res = std::max(res, std::abs(r));
    }
  CHECK(res < 1e-8 * un * ih2);
}

TEST_CASE("helmholtz: manufactured solution converges at O(h^2)") {
  double omega = 2.0;
  auto exact = [](double x, double y) { return std::sin(M_PI * x) * std::cos(M_PI * y); };
  auto source = [&](double x, double y) {
    // -lap u - omega^2 a u with a = 1 + x
    return (2.0 * M_PI * M_PI - omega * omega * (1.0 + x)) * std::sin(M_PI * x) *
           std::cos(M_PI * y);
  };
  std::vector<double> errs;
  for (int n : {17, 33, 65}) {
    nio::Grid2d g(n);
    auto a = nio::eval_on_grid(g, [](double x, double) { return 1.0 + x; });
    auto f = nio::eval_on_grid(g, source);
    auto bd = nio::eval_on_boundary(g, exact);
    auto u = nio::solve_helmholtz(g, a, omega, bd, &f);
    double e = 0;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        e = std::max(e, std::abs(u[g.idx(i, j)] - exact(g.x(i), g.y(j))));
    errs.push_back(e);
  }
  CHECK(conv_slope(errs[1], errs[2]) == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("helmholtz: resonance at a discrete eigenvalue raises a numeric error") {
  int n = 12;
  nio::Grid2d g(n);
  double h = g.h();
  // smallest eigenvalue of the five-point Dirichlet Laplacian
  double lam = (4.0 / (h * h)) * (2.0 * nio::sq(std::sin(M_PI * h / 2.0)));
  auto a1 = nio::eval_on_grid(g, [](double, double) { return 1.0; });
  CHECK_THROWS_WITH_AS(
      [&] { nio::HelmholtzSystem sys(g, a1, std::sqrt(lam)); }(),
      doctest::Contains("omega"), nio::NumericError);
  // slightly off resonance factors fine
  nio::HelmholtzSystem ok(g, a1, std::sqrt(lam) * 1.05);
  CHECK(ok.grid().n == n);
}
