// Complex FFT for arbitrary lengths: iterative radix-2 for powers of two,
// Bluestein's chirp-z resampling otherwise. Forward is unnormalized
// (X_k = sum_j x_j e^{-2pi i jk/n}); inverse carries the 1/n.
#pragma once

#include <complex>
#include <unordered_map>
#include <vector>

#include "nio/common.hpp"

namespace nio {
namespace fft_detail {

constexpr double kPi = 3.14159265358979323846;

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

inline int next_pow2(int n) {
  int m = 1;
  while (m < n) m <<= 1;
  return m;
}

// twiddles for a given length, forward sign; computed in double, cast at use
inline const std::vector<std::complex<double>>& twiddles(int n) {
  thread_local std::unordered_map<int, std::vector<std::complex<double>>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<std::complex<double>> w(n / 2);
  for (int k = 0; k < n / 2; ++k) {
    double ang = -2.0 * kPi * k / n;
    w[k] = {std::cos(ang), std::sin(ang)};
  }
  return cache.emplace(n, std::move(w)).first->second;
}

template <class T>
void fft_pow2(std::complex<T>* a, int n, bool inverse) {
  // bit-reversal permutation
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const auto& w = twiddles(n);
  for (int len = 2; len <= n; len <<= 1) {
    int step = n / len;
    for (int i = 0; i < n; i += len) {
      for (int k = 0; k < len / 2; ++k) {
        std::complex<double> wd = w[static_cast<std::size_t>(k) * step];
        T wr = static_cast<T>(wd.real());
        T wi = static_cast<T>(inverse ? -wd.imag() : wd.imag());
        std::complex<T>& u = a[i + k];
        std::complex<T>& v = a[i + k + len / 2];
        T vr = v.real() * wr - v.imag() * wi;
        T vi = v.real() * wi + v.imag() * wr;
        v = {u.real() - vr, u.imag() - vi};
        u = {u.real() + vr, u.imag() + vi};
      }
    }
  }
  if (inverse) {
    T s = static_cast<T>(1.0 / n);
    for (int i = 0; i < n; ++i) a[i] *= s;
  }
}

// chirp b_m = exp(+i pi m^2 / n), m = 0..n-1
inline const std::vector<std::complex<double>>& chirp(int n) {
  thread_local std::unordered_map<int, std::vector<std::complex<double>>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<std::complex<double>> b(n);
  for (int m = 0; m < n; ++m) {
    // reduce m^2 mod 2n before multiplying to keep the angle accurate
    long long m2 = (static_cast<long long>(m) * m) % (2LL * n);
    double ang = kPi * static_cast<double>(m2) / n;
    b[m] = {std::cos(ang), std::sin(ang)};
  }
  return cache.emplace(n, std::move(b)).first->second;
}

template <class T>
void fft_bluestein(std::complex<T>* a, int n) {
  const auto& b = chirp(n);
  int m = next_pow2(2 * n - 1);
  std::vector<std::complex<T>> u(m, {0, 0}), v(m, {0, 0});
  for (int j = 0; j < n; ++j) {
    std::complex<T> bj(static_cast<T>(b[j].real()), static_cast<T>(b[j].imag()));
    u[j] = a[j] * std::conj(bj);
    v[j] = bj;
    if (j > 0) v[m - j] = bj;
  }
  fft_pow2(u.data(), m, false);
  fft_pow2(v.data(), m, false);
  for (int j = 0; j < m; ++j) u[j] *= v[j];
  fft_pow2(u.data(), m, true);
  for (int k = 0; k < n; ++k) {
    std::complex<T> bk(static_cast<T>(b[k].real()), static_cast<T>(b[k].imag()));
    a[k] = std::conj(bk) * u[k];
  }
}

}  // namespace fft_detail

template <class T>
void fft(std::complex<T>* a, int n, bool inverse) {
  if (n <= 0) throw ShapeError(msg("fft length ", n));
  if (n == 1) return;
  if (fft_detail::is_pow2(n)) {
    fft_detail::fft_pow2(a, n, inverse);
    return;
  }
  if (!inverse) {
    fft_detail::fft_bluestein(a, n);
    return;
  }
  // inverse for arbitrary n via the conjugation identity
  for (int i = 0; i < n; ++i) a[i] = std::conj(a[i]);
  fft_detail::fft_bluestein(a, n);
  T s = static_cast<T>(1.0 / n);
  for (int i = 0; i < n; ++i) a[i] = std::conj(a[i]) * s;
}

template <class T>
void fft(std::vector<std::complex<T>>& a, bool inverse) {
  fft(a.data(), static_cast<int>(a.size()), inverse);
}

// row-major h x w, rows then columns
template <class T>
void fft2(std::complex<T>* a, int h, int w, bool inverse) {
  for (int r = 0; r < h; ++r) fft(a + static_cast<std::size_t>(r) * w, w, inverse);
  std::vector<std::complex<T>> col(h);
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r) col[r] = a[static_cast<std::size_t>(r) * w + c];
    fft(col.data(), h, inverse);
    for (int r = 0; r < h; ++r) a[static_cast<std::size_t>(r) * w + c] = col[r];
  }
}

}  // namespace nio
