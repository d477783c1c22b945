// Banded LU with partial pivoting (LAPACK-style band storage). The five-point
// systems are banded with bandwidth n-2, so a dense solve would waste both
// memory and time; partial pivoting keeps the factorization honest when the
// Helmholtz shift pushes a system toward singularity, and the recorded pivot
// range is what the resonance check consumes.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "nio/common.hpp"

namespace nio {

class BandedLU {
 public:
  // band storage with room for pivot fill-in: column j of the matrix lives at
  // ab_[j*ldab + kl + ku + (i - j)] for i in [j-ku, j+kl]
  BandedLU(int n, int kl, int ku) : n_(n), kl_(kl), ku_(ku), ldab_(2 * kl + ku + 1) {
    if (n <= 0 || kl < 0 || ku < 0) throw ConfigError("bad band dimensions");
    ab_.assign(static_cast<std::size_t>(n_) * ldab_, 0.0);
    piv_.assign(n_, 0);
  }

  double& at(int i, int j) {
    if (i < 0 || i >= n_ || j < 0 || j >= n_ || i - j > kl_ || j - i > ku_)
      throw ShapeError(msg("entry (", i, ",", j, ") outside band kl=", kl_, " ku=", ku_));
    return ab_[static_cast<std::size_t>(j) * ldab_ + kl_ + ku_ + i - j];
  }

  int size() const { return n_; }
  bool factored() const { return factored_; }
  double min_pivot() const { return min_piv_; }
  double max_pivot() const { return max_piv_; }

  // gbtf2-style unblocked factorization; throws on an exactly zero pivot,
  // near-singularity is left to the caller via min_pivot()/max_pivot()
  void factor() {
    if (factored_) throw ConfigError("BandedLU already factored");
    int kv = kl_ + ku_;  // superdiagonals in U after fill-in
    min_piv_ = std::numeric_limits<double>::infinity();
    max_piv_ = 0.0;
    int ju = 0;  // last column touched by updates so far
    for (int j = 0; j < n_; ++j) {
      int km = std::min(kl_, n_ - 1 - j);  // subdiagonal entries in column j
      double* col = ab_.data() + static_cast<std::size_t>(j) * ldab_ + kv;  // diagonal slot
      int jp = 0;
      for (int k = 1; k <= km; ++k)
        if (std::abs(col[k]) > std::abs(col[jp])) jp = k;
      piv_[j] = j + jp;
      double p = col[jp];
      if (p == 0.0) throw NumericError(msg("banded LU: exact zero pivot at column ", j));
      min_piv_ = std::min(min_piv_, std::abs(p));
      max_piv_ = std::max(max_piv_, std::abs(p));
      ju = std::max(ju, std::min(j + ku_ + jp, n_ - 1));
      if (jp != 0)
        for (int c = j; c <= ju; ++c) std::swap(entry(j, c), entry(j + jp, c));
      for (int k = 1; k <= km; ++k) col[k] /= col[0];
      for (int c = j + 1; c <= ju; ++c) {
        double ujc = entry(j, c);
        if (ujc == 0.0) continue;
        for (int k = 1; k <= km; ++k) entry(j + k, c) -= col[k] * ujc;
      }
    }
    factored_ = true;
  }

  // in-place solve of A x = b for one right-hand side
  void solve(std::vector<double>& b) const {
    if (!factored_) throw ConfigError("BandedLU::solve before factor");
    if (static_cast<int>(b.size()) != n_) throw ShapeError("rhs size mismatch");
    int kv = kl_ + ku_;
    for (int j = 0; j < n_; ++j) {
      if (piv_[j] != j) std::swap(b[j], b[piv_[j]]);
      int km = std::min(kl_, n_ - 1 - j);
      const double* col = ab_.data() + static_cast<std::size_t>(j) * ldab_ + kv;
      for (int k = 1; k <= km; ++k) b[j + k] -= col[k] * b[j];
    }
    for (int j = n_ - 1; j >= 0; --j) {
      double s = b[j];
      int hi = std::min(n_ - 1, j + kv);
      for (int c = j + 1; c <= hi; ++c) s -= centry(j, c) * b[c];
      b[j] = s / centry(j, j);
    }
  }

  std::vector<double> solved(std::vector<double> b) const {
    solve(b);
    return b;
  }

 private:
  // unchecked accessors used during factorization (indices known to be in the
  // widened band)
  double& entry(int i, int j) {
    return ab_[static_cast<std::size_t>(j) * ldab_ + kl_ + ku_ + i - j];
  }
  double centry(int i, int j) const {
    return ab_[static_cast<std::size_t>(j) * ldab_ + kl_ + ku_ + i - j];
  }

  int n_, kl_, ku_, ldab_;
  std::vector<double> ab_;
  std::vector<int> piv_;
  bool factored_ = false;
  double min_piv_ = 0.0, max_piv_ = 0.0;
};

}  // namespace nio
