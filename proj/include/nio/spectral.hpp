// Differentiable 2D FFTs and the truncated spectral convolution used by the
// Fourier layers. Complex spectra are carried as a stacked tensor with a
// re/im axis: x (..., H, W) <-> spectrum (..., 2, H, W).
//
// Conventions: fft2 is unnormalized, ifft2 carries 1/(H*W) and returns the
// real part. Adjoints used by the backward passes (N = H*W):
//   d/dx  of X = fft2(x):   gx = N * Re(ifft2(gX))
//   d/dX  of y = ifft2(X):  gX = (1/N) * fft2(gy)
#pragma once

#include <complex>
#include <memory>

#include "nio/fft.hpp"
#include "nio/ops.hpp"
#include "nio/parallel.hpp"

namespace nio {

// retained modes for per-axis truncation |k1|,|k2| <= kmax, fixed ordering
inline std::vector<std::pair<int, int>> spectral_modes(int kmax) {
  std::vector<std::pair<int, int>> m;
  m.reserve(static_cast<std::size_t>(2 * kmax + 1) * (2 * kmax + 1));
  for (int k1 = -kmax; k1 <= kmax; ++k1)
    for (int k2 = -kmax; k2 <= kmax; ++k2) m.emplace_back(k1, k2);
  return m;
}

// 1D truncation |k| <= kmax, carried as (0, k) pairs on a height-1 grid
inline std::vector<std::pair<int, int>> spectral_modes_1d(int kmax) {
  std::vector<std::pair<int, int>> m;
  m.reserve(static_cast<std::size_t>(2 * kmax + 1));
  for (int k = -kmax; k <= kmax; ++k) m.emplace_back(0, k);
  return m;
}

inline int mode_index(int k, int n) { return ((k % n) + n) % n; }

inline void check_modes_fit(int kmax, int h, int w) {
  if (2 * kmax > h || 2 * kmax > w)
    throw ConfigError(msg("k_max=", kmax, " incompatible with grid ", h, "x", w,
                          " (needs 2*k_max <= n)"));
}

template <class T>
struct ComplexSpectrum {
  Tensor<T> stacked;  // (..., 2, H, W)
  int h = 0, w = 0;
};

// x (..., H, W) -> spectrum (..., 2, H, W)
template <class T>
ComplexSpectrum<T> fft2_op(Tensor<T> x) {
  if (x.ndim() < 2) throw ShapeError("fft2 needs at least 2D");
  int W = x.dim(x.ndim() - 1), H = x.dim(x.ndim() - 2);
  std::size_t hw = static_cast<std::size_t>(H) * W;
  std::size_t batch = x.size() / hw;
  Shape out_shape(x.shape().begin(), x.shape().end() - 2);
  out_shape.push_back(2);
  out_shape.push_back(H);
  out_shape.push_back(W);
  std::vector<T> v(batch * 2 * hw);
  std::vector<std::complex<T>> buf(hw);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* src = x.data().data() + b * hw;
    for (std::size_t i = 0; i < hw; ++i) buf[i] = {src[i], T(0)};
    fft2(buf.data(), H, W, false);
    T* re = v.data() + b * 2 * hw;
    T* im = re + hw;
    for (std::size_t i = 0; i < hw; ++i) {
      re[i] = buf[i].real();
      im[i] = buf[i].imag();
    }
  }
  Tensor<T> out = make_op<T>(out_shape, std::move(v), {x}, [x, H, W, hw, batch](Node<T>& nd) mutable {
    if (!x.requires_grad()) return;
    auto& gx = x.grad();
    std::vector<std::complex<T>> buf(hw);
    T n = static_cast<T>(hw);
    for (std::size_t b = 0; b < batch; ++b) {
      const T* re = nd.grad.data() + b * 2 * hw;
      const T* im = re + hw;
      for (std::size_t i = 0; i < hw; ++i) buf[i] = {re[i], im[i]};
      fft2(buf.data(), H, W, true);
      T* dst = gx.data() + b * hw;
      for (std::size_t i = 0; i < hw; ++i) dst[i] += n * buf[i].real();
    }
  });
  return {out, H, W};
}

// spectrum (..., 2, H, W) -> real field (..., H, W)
template <class T>
Tensor<T> ifft2_op(const ComplexSpectrum<T>& s) {
  Tensor<T> z = s.stacked;
  int H = s.h, W = s.w;
  std::size_t hw = static_cast<std::size_t>(H) * W;
  std::size_t batch = z.size() / (2 * hw);
  Shape out_shape(z.shape().begin(), z.shape().end() - 3);
  out_shape.push_back(H);
  out_shape.push_back(W);
  std::vector<T> v(batch * hw);
  std::vector<std::complex<T>> buf(hw);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* re = z.data().data() + b * 2 * hw;
    const T* im = re + hw;
    for (std::size_t i = 0; i < hw; ++i) buf[i] = {re[i], im[i]};
    fft2(buf.data(), H, W, true);
    T* dst = v.data() + b * hw;
    for (std::size_t i = 0; i < hw; ++i) dst[i] = buf[i].real();
  }
  return make_op<T>(out_shape, std::move(v), {z}, [z, H, W, hw, batch](Node<T>& nd) mutable {
    if (!z.requires_grad()) return;
    auto& gz = z.grad();
    std::vector<std::complex<T>> buf(hw);
    T inv_n = static_cast<T>(1.0 / static_cast<double>(hw));
    for (std::size_t b = 0; b < batch; ++b) {
      const T* g = nd.grad.data() + b * hw;
      for (std::size_t i = 0; i < hw; ++i) buf[i] = {g[i], T(0)};
      fft2(buf.data(), H, W, false);
      T* re = gz.data() + b * 2 * hw;
      T* im = re + hw;
      for (std::size_t i = 0; i < hw; ++i) {
        re[i] += inv_n * buf[i].real();
        im[i] += inv_n * buf[i].imag();
      }
    }
  });
}

// Shared kernel path for both truncations: out = Re(ifft2( P(k) . fft2(v) ))
// over an explicit mode list. v (B,C,H,W); p_re/p_im (M, C, C). Aliased
// +-Nyquist indices (when 2*kmax == n) accumulate additively, which is its
// own transpose.
template <class T>
Tensor<T> spectral_conv_modes(Tensor<T> v, Tensor<T> p_re, Tensor<T> p_im,
                              const std::vector<std::pair<int, int>>& modes) {
  if (v.ndim() != 4) throw ShapeError("spectral_conv input must be (B,C,H,W)");
  int B = v.dim(0), C = v.dim(1), H = v.dim(2), W = v.dim(3);
  int M = static_cast<int>(modes.size());
  if (p_re.ndim() != 3 || p_re.dim(0) != M || p_re.dim(1) != C || p_re.dim(2) != C ||
      p_im.shape() != p_re.shape())
    throw ShapeError(msg("spectral weights must be (", M, ",", C, ",", C, ")"));
  std::size_t hw = static_cast<std::size_t>(H) * W;
  // flat spectrum indices per mode for this grid
  std::vector<std::size_t> idx(M);
  for (int m = 0; m < M; ++m)
    idx[m] = static_cast<std::size_t>(mode_index(modes[m].first, H)) * W +
             mode_index(modes[m].second, W);

  using Cx = std::complex<T>;
  auto xm = std::make_shared<std::vector<Cx>>(static_cast<std::size_t>(B) * M * C);
  std::vector<T> out(static_cast<std::size_t>(B) * C * hw);
  {
    std::vector<Cx> X(static_cast<std::size_t>(C) * hw), Y(static_cast<std::size_t>(C) * hw);
    for (int b = 0; b < B; ++b) {
      for (int c = 0; c < C; ++c) {
        const T* src = v.data().data() + (static_cast<std::size_t>(b) * C + c) * hw;
        Cx* row = X.data() + static_cast<std::size_t>(c) * hw;
        for (std::size_t i = 0; i < hw; ++i) row[i] = {src[i], T(0)};
        fft2(row, H, W, false);
      }
      Cx* xmb = xm->data() + static_cast<std::size_t>(b) * M * C;
      for (int m = 0; m < M; ++m)
        for (int c = 0; c < C; ++c)
          xmb[static_cast<std::size_t>(m) * C + c] = X[static_cast<std::size_t>(c) * hw + idx[m]];
      std::fill(Y.begin(), Y.end(), Cx(0, 0));
      for (int m = 0; m < M; ++m) {
        const T* pr = p_re.data().data() + static_cast<std::size_t>(m) * C * C;
        const T* pi = p_im.data().data() + static_cast<std::size_t>(m) * C * C;
        const Cx* xrow = xmb + static_cast<std::size_t>(m) * C;
        for (int co = 0; co < C; ++co) {
          T yr(0), yi(0);
          const T* prr = pr + static_cast<std::size_t>(co) * C;
          const T* pir = pi + static_cast<std::size_t>(co) * C;
          for (int ci = 0; ci < C; ++ci) {
            T xr = xrow[ci].real(), xi = xrow[ci].imag();
            yr += prr[ci] * xr - pir[ci] * xi;
            yi += prr[ci] * xi + pir[ci] * xr;
          }
          Y[static_cast<std::size_t>(co) * hw + idx[m]] += Cx(yr, yi);
        }
      }
      for (int c = 0; c < C; ++c) {
        Cx* row = Y.data() + static_cast<std::size_t>(c) * hw;
        fft2(row, H, W, true);
        T* dst = out.data() + (static_cast<std::size_t>(b) * C + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) dst[i] = row[i].real();
      }
    }
  }
  auto idx_sp = std::make_shared<std::vector<std::size_t>>(std::move(idx));
  return make_op<T>(
      {B, C, H, W}, std::move(out), {v, p_re, p_im},
      [v, p_re, p_im, xm, idx_sp, B, C, H, W, M, hw](Node<T>& nd) mutable {
        using Cx = std::complex<T>;
        const auto& idx = *idx_sp;
        T n = static_cast<T>(hw);
        T inv_n = static_cast<T>(1.0 / static_cast<double>(hw));
        // pass 1: gY_m = (1/N) gather(fft2(g)) for every sample
        std::vector<Cx> gy(static_cast<std::size_t>(B) * M * C);
        {
          std::vector<Cx> G(hw);
          for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
              const T* src = nd.grad.data() + (static_cast<std::size_t>(b) * C + c) * hw;
              for (std::size_t i = 0; i < hw; ++i) G[i] = {src[i], T(0)};
              fft2(G.data(), H, W, false);
              Cx* dst = gy.data() + static_cast<std::size_t>(b) * M * C;
              for (int m = 0; m < M; ++m)
                dst[static_cast<std::size_t>(m) * C + c] = inv_n * G[idx[m]];
            }
        }
        // pass 2: weight gradients, gP_m += gY_m X_m^H
        if (p_re.requires_grad() || p_im.requires_grad()) {
          auto& gpr = p_re.grad();
          auto& gpi = p_im.grad();
          for (int m = 0; m < M; ++m)
            for (int co = 0; co < C; ++co)
              for (int ci = 0; ci < C; ++ci) {
                double sr = 0, si = 0;
                for (int b = 0; b < B; ++b) {
                  const Cx g = gy[(static_cast<std::size_t>(b) * M + m) * C + co];
                  const Cx x = (*xm)[(static_cast<std::size_t>(b) * M + m) * C + ci];
                  // g * conj(x)
                  sr += static_cast<double>(g.real()) * x.real() +
                        static_cast<double>(g.imag()) * x.imag();
                  si += static_cast<double>(g.imag()) * x.real() -
                        static_cast<double>(g.real()) * x.imag();
                }
                gpr[(static_cast<std::size_t>(m) * C + co) * C + ci] += static_cast<T>(sr);
                gpi[(static_cast<std::size_t>(m) * C + co) * C + ci] += static_cast<T>(si);
              }
        }
        // pass 3: input gradients, gv = N Re(ifft2(scatter(P^H gY)))
        if (v.requires_grad()) {
          auto& gv = v.grad();
          std::vector<Cx> Z(static_cast<std::size_t>(C) * hw);
          for (int b = 0; b < B; ++b) {
            std::fill(Z.begin(), Z.end(), Cx(0, 0));
            const Cx* gyb = gy.data() + static_cast<std::size_t>(b) * M * C;
            for (int m = 0; m < M; ++m) {
              const T* pr = p_re.data().data() + static_cast<std::size_t>(m) * C * C;
              const T* pi = p_im.data().data() + static_cast<std::size_t>(m) * C * C;
              for (int ci = 0; ci < C; ++ci) {
                T zr(0), zi(0);
                for (int co = 0; co < C; ++co) {
                  // conj(P[co][ci]) * gY[co]
                  T prv = pr[static_cast<std::size_t>(co) * C + ci];
                  T piv = pi[static_cast<std::size_t>(co) * C + ci];
                  const Cx g = gyb[static_cast<std::size_t>(m) * C + co];
                  zr += prv * g.real() + piv * g.imag();
                  zi += prv * g.imag() - piv * g.real();
                }
                Z[static_cast<std::size_t>(ci) * hw + idx[m]] += Cx(zr, zi);
              }
            }
            for (int c = 0; c < C; ++c) {
              Cx* row = Z.data() + static_cast<std::size_t>(c) * hw;
              fft2(row, H, W, true);
              T* dst = gv.data() + (static_cast<std::size_t>(b) * C + c) * hw;
              for (std::size_t i = 0; i < hw; ++i) dst[i] += n * row[i].real();
            }
          }
        }
      });
}

template <class T>
Tensor<T> spectral_conv(Tensor<T> v, Tensor<T> p_re, Tensor<T> p_im, int kmax) {
  if (v.ndim() != 4) throw ShapeError("spectral_conv input must be (B,C,H,W)");
  check_modes_fit(kmax, v.dim(2), v.dim(3));
  return spectral_conv_modes(v, p_re, p_im, spectral_modes(kmax));
}

// 1D variant for fields on a line: v (B,C,N), weights (2kmax+1, C, C)
template <class T>
Tensor<T> spectral_conv1d(Tensor<T> v, Tensor<T> p_re, Tensor<T> p_im, int kmax) {
  if (v.ndim() != 3) throw ShapeError("spectral_conv1d input must be (B,C,N)");
  int N = v.dim(2);
  if (2 * kmax > N)
    throw ConfigError(msg("k_max=", kmax, " incompatible with length ", N, " (needs 2*k_max <= n)"));
  auto v4 = reshape(v, {v.dim(0), v.dim(1), 1, N});
  auto y = spectral_conv_modes(v4, p_re, p_im, spectral_modes_1d(kmax));
  return reshape(y, {y.dim(0), y.dim(1), y.dim(3)});
}

}  // namespace nio
