// Uniform square grid and the project-wide boundary trace convention.
//
// Fields are stored row-major with y as the slow axis: field[j*n + i] holds
// the value at (x0 + i*h, y0 + j*h). Boundary traces have length 4*(n-1),
// ordered counterclockwise from the origin corner (x0,y0) with each corner
// counted once; a corner belongs to the edge that starts there in CCW order
// (bottom, right, top, left).
#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "nio/common.hpp"

namespace nio {

struct Grid2d {
  int n = 0;
  double x0 = 0, y0 = 0, x1 = 1, y1 = 1;

  Grid2d() = default;
  Grid2d(int n_, double x0_ = 0, double y0_ = 0, double x1_ = 1, double y1_ = 1)
      : n(n_), x0(x0_), y0(y0_), x1(x1_), y1(y1_) {
    if (n < 8) throw ConfigError(msg("grid needs n >= 8, got ", n));
    if (!(x1 > x0) || !(y1 > y0)) throw ConfigError("grid bounds must be increasing");
    if (std::abs((x1 - x0) - (y1 - y0)) > 1e-12 * (x1 - x0))
      throw ConfigError("grid domain must be square");
  }

  double h() const { return (x1 - x0) / (n - 1); }
  double x(int i) const { return x0 + i * h(); }
  double y(int j) const { return y0 + j * h(); }
  std::size_t idx(int i, int j) const {
    return static_cast<std::size_t>(j) * n + i;
  }
  std::size_t num_points() const { return static_cast<std::size_t>(n) * n; }
  bool interior(int i, int j) const { return i > 0 && i < n - 1 && j > 0 && j < n - 1; }
};

using Field = std::vector<double>;          // n*n values, grid layout above
using BoundaryTrace = std::vector<double>;  // 4*(n-1) values, CCW from origin

inline int boundary_length(int n) { return 4 * (n - 1); }

// p-th boundary point -> (i,j). Edges in CCW order: bottom (j=0, i: 0..n-2),
// right (i=n-1, j: 0..n-2), top (j=n-1, i: n-1..1), left (i=0, j: n-1..1).
inline std::pair<int, int> boundary_node(int n, int p) {
  int m = n - 1;
  if (p < 0 || p >= 4 * m) throw ShapeError(msg("boundary index ", p, " out of range"));
  int e = p / m, r = p % m;
  switch (e) {
    case 0: return {r, 0};
    case 1: return {n - 1, r};
    case 2: return {n - 1 - r, n - 1};
    default: return {0, n - 1 - r};
  }
}

// which edge owns boundary point p: 0 bottom, 1 right, 2 top, 3 left
inline int boundary_edge(int n, int p) { return (p % (4 * (n - 1))) / (n - 1); }

inline std::pair<double, double> boundary_xy(const Grid2d& g, int p) {
  auto [i, j] = boundary_node(g.n, p);
  return {g.x(i), g.y(j)};
}

template <class F>
Field eval_on_grid(const Grid2d& g, F&& f) {
  Field v(g.num_points());
  for (int j = 0; j < g.n; ++j)
    for (int i = 0; i < g.n; ++i) v[g.idx(i, j)] = f(g.x(i), g.y(j));
  return v;
}

template <class F>
BoundaryTrace eval_on_boundary(const Grid2d& g, F&& f) {
  BoundaryTrace t(boundary_length(g.n));
  for (int p = 0; p < boundary_length(g.n); ++p) {
    auto [x, y] = boundary_xy(g, p);
    t[p] = f(x, y);
  }
  return t;
}

inline BoundaryTrace trace_of(const Grid2d& g, const Field& u) {
  if (u.size() != g.num_points()) throw ShapeError("field/grid size mismatch");
  BoundaryTrace t(boundary_length(g.n));
  for (int p = 0; p < boundary_length(g.n); ++p) {
    auto [i, j] = boundary_node(g.n, p);
    t[p] = u[g.idx(i, j)];
  }
  return t;
}

}  // namespace nio
