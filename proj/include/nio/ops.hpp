// Differentiable operations on Tensor<T>. Each op computes the forward value
// eagerly and attaches a closure that scatters the output gradient into the
// inputs. 1D convs are routed through the 2D kernels with a unit height.
#pragma once

#include <algorithm>
#include <cmath>

#include "nio/tensor.hpp"

namespace nio {

namespace detail {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// C(m,n) += or = A(m,k) * B(k,n), all row-major contiguous
template <class T>
void raw_gemm(int m, int k, int n, const T* A, const T* B, T* C, bool accumulate) {
  if (!accumulate) std::fill(C, C + static_cast<std::size_t>(m) * n, T(0));
  for (int i = 0; i < m; ++i) {
    const T* arow = A + static_cast<std::size_t>(i) * k;
    T* crow = C + static_cast<std::size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      T a = arow[kk];
      if (a == T(0)) continue;
      const T* brow = B + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

template <class T>
std::vector<T> raw_transpose(const T* A, int rows, int cols) {
  std::vector<T> out(static_cast<std::size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      out[static_cast<std::size_t>(j) * rows + i] = A[static_cast<std::size_t>(i) * cols + j];
  return out;
}

// C (m,n) += A (m,k) * B^T with B stored (n,k) row-major; dot-product kernel
template <class T>
void raw_gemm_nt(int m, int k, int n, const T* A, const T* B, T* C) {
  for (int i = 0; i < m; ++i) {
    const T* arow = A + static_cast<std::size_t>(i) * k;
    T* crow = C + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* brow = B + static_cast<std::size_t>(j) * k;
      T s(0);
      for (int kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
      crow[j] += s;
    }
  }
}

// one (C,H,W) sample -> cols (C*Kh*Kw, Ho*Wo), zero where the window pads out
template <class T>
void im2col_2d(const T* x, int C, int H, int W, int Kh, int Kw, int stride, int pad_h, int pad_w,
               int Ho, int Wo, T* cols) {
  T* dst = cols;
  for (int c = 0; c < C; ++c)
    for (int kh = 0; kh < Kh; ++kh)
      for (int kw = 0; kw < Kw; ++kw)
        for (int oi = 0; oi < Ho; ++oi) {
          int ii = oi * stride + kh - pad_h;
          if (ii < 0 || ii >= H) {
            std::fill(dst, dst + Wo, T(0));
            dst += Wo;
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(c) * H + ii) * W;
          for (int oj = 0; oj < Wo; ++oj) {
            int jj = oj * stride + kw - pad_w;
            dst[oj] = (jj < 0 || jj >= W) ? T(0) : src[jj];
          }
          dst += Wo;
        }
}

// adjoint of im2col: scatter-add cols back onto the (C,H,W) gradient
template <class T>
void col2im_add_2d(const T* cols, int C, int H, int W, int Kh, int Kw, int stride, int pad_h,
                   int pad_w, int Ho, int Wo, T* gx) {
  const T* src = cols;
  for (int c = 0; c < C; ++c)
    for (int kh = 0; kh < Kh; ++kh)
      for (int kw = 0; kw < Kw; ++kw)
        for (int oi = 0; oi < Ho; ++oi) {
          int ii = oi * stride + kh - pad_h;
          if (ii < 0 || ii >= H) {
            src += Wo;
            continue;
          }
          T* dst = gx + (static_cast<std::size_t>(c) * H + ii) * W;
          for (int oj = 0; oj < Wo; ++oj) {
            int jj = oj * stride + kw - pad_w;
            if (jj >= 0 && jj < W) dst[jj] += src[oj];
          }
          src += Wo;
        }
}

inline void check_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(msg(op, ": ", shape_str(a), " vs ", shape_str(b)));
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <class T>
Tensor<T> add(Tensor<T> a, Tensor<T> b) {
  detail::check_same_shape(a.shape(), b.shape(), "add");
  std::vector<T> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] + b.data()[i];
  return make_op<T>(a.shape(), std::move(v), {a, b}, [a, b](Node<T>& nd) mutable {
    if (a.requires_grad()) {
      auto& ga = a.grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += nd.grad[i];
    }
    if (b.requires_grad()) {
      auto& gb = b.grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += nd.grad[i];
    }
  });
}

template <class T>
Tensor<T> sub(Tensor<T> a, Tensor<T> b) {
  detail::check_same_shape(a.shape(), b.shape(), "sub");
  std::vector<T> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] - b.data()[i];
  return make_op<T>(a.shape(), std::move(v), {a, b}, [a, b](Node<T>& nd) mutable {
    if (a.requires_grad()) {
      auto& ga = a.grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += nd.grad[i];
    }
    if (b.requires_grad()) {
      auto& gb = b.grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= nd.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(Tensor<T> a, Tensor<T> b) {
  detail::check_same_shape(a.shape(), b.shape(), "mul");
  std::vector<T> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] * b.data()[i];
  return make_op<T>(a.shape(), std::move(v), {a, b}, [a, b](Node<T>& nd) mutable {
    if (a.requires_grad()) {
      auto& ga = a.grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += nd.grad[i] * b.data()[i];
    }
    if (b.requires_grad()) {
      auto& gb = b.grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += nd.grad[i] * a.data()[i];
    }
  });
}

template <class T>
Tensor<T> scale(Tensor<T> a, double c) {
  std::vector<T> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(a.data()[i] * c);
  return make_op<T>(a.shape(), std::move(v), {a}, [a, c](Node<T>& nd) mutable {
    if (!a.requires_grad()) return;
    auto& ga = a.grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += static_cast<T>(nd.grad[i] * c);
  });
}

template <class T>
Tensor<T> abs_t(Tensor<T> a) {
  std::vector<T> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::abs(a.data()[i]);
  return make_op<T>(a.shape(), std::move(v), {a}, [a](Node<T>& nd) mutable {
    if (!a.requires_grad()) return;
    auto& ga = a.grad();
    for (std::size_t i = 0; i < ga.size(); ++i) {
      T x = a.data()[i];
      ga[i] += nd.grad[i] * (x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)));
    }
  });
}

template <class T>
Tensor<T> leaky_relu(Tensor<T> a, double slope = 0.01) {
  std::vector<T> v(a.size());
  T s = static_cast<T>(slope);
  for (std::size_t i = 0; i < v.size(); ++i) {
    T x = a.data()[i];
    v[i] = x > T(0) ? x : s * x;
  }
  return make_op<T>(a.shape(), std::move(v), {a}, [a, s](Node<T>& nd) mutable {
    if (!a.requires_grad()) return;
    auto& ga = a.grad();
    for (std::size_t i = 0; i < ga.size(); ++i)
      ga[i] += nd.grad[i] * (a.data()[i] > T(0) ? T(1) : s);
  });
}

// exact gelu: x * Phi(x)
template <class T>
Tensor<T> gelu(Tensor<T> a) {
  std::vector<T> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double x = static_cast<double>(a.data()[i]);
    v[i] = static_cast<T>(x * 0.5 * (1.0 + std::erf(x * detail::kInvSqrt2)));
  }
  return make_op<T>(a.shape(), std::move(v), {a}, [a](Node<T>& nd) mutable {
    if (!a.requires_grad()) return;
    auto& ga = a.grad();
    for (std::size_t i = 0; i < ga.size(); ++i) {
      double x = static_cast<double>(a.data()[i]);
      double phi = detail::kInvSqrt2Pi * std::exp(-0.5 * x * x);
      double Phi = 0.5 * (1.0 + std::erf(x * detail::kInvSqrt2));
      ga[i] += nd.grad[i] * static_cast<T>(Phi + x * phi);
    }
  });
}

// ----------------------------------------------------------------- reductions

template <class T>
Tensor<T> sum_all(Tensor<T> a) {
  T s(0);
  for (T x : a.data()) s += x;
  return make_op<T>({1}, {s}, {a}, [a](Node<T>& nd) mutable {
    if (!a.requires_grad()) return;
    auto& ga = a.grad();
    T g = nd.grad[0];
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

template <class T>
Tensor<T> mean_all(Tensor<T> a) {
  double s = 0;
  for (T x : a.data()) s += static_cast<double>(x);
  T inv = static_cast<T>(1.0 / static_cast<double>(a.size()));
  return make_op<T>({1}, {static_cast<T>(s / static_cast<double>(a.size()))}, {a},
                    [a, inv](Node<T>& nd) mutable {
                      if (!a.requires_grad()) return;
                      auto& ga = a.grad();
                      T g = nd.grad[0] * inv;
                      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
                    });
}

// (B, L, N) -> (B, N), mean over axis 1
template <class T>
Tensor<T> mean_over_axis1(Tensor<T> a) {
  if (a.ndim() != 3) throw ShapeError(msg("mean_over_axis1 needs 3D, got ", shape_str(a.shape())));
  int B = a.dim(0), L = a.dim(1), N = a.dim(2);
  std::vector<T> v(static_cast<std::size_t>(B) * N, T(0));
  T inv = static_cast<T>(1.0 / L);
  for (int b = 0; b < B; ++b)
    for (int l = 0; l < L; ++l) {
      const T* src = a.data().data() + (static_cast<std::size_t>(b) * L + l) * N;
      T* dst = v.data() + static_cast<std::size_t>(b) * N;
      for (int i = 0; i < N; ++i) dst[i] += src[i];
    }
  for (auto& x : v) x *= inv;
  return make_op<T>({B, N}, std::move(v), {a}, [a, B, L, N, inv](Node<T>& nd) mutable {
    if (!a.requires_grad()) return;
    auto& ga = a.grad();
    for (int b = 0; b < B; ++b)
      for (int l = 0; l < L; ++l) {
        T* dst = ga.data() + (static_cast<std::size_t>(b) * L + l) * N;
        const T* g = nd.grad.data() + static_cast<std::size_t>(b) * N;
        for (int i = 0; i < N; ++i) dst[i] += g[i] * inv;
      }
  });
}

// --------------------------------------------------------------------- shape

template <class T>
Tensor<T> reshape(Tensor<T> a, Shape shape) {
  if (shape_numel(shape) != a.size())
    throw ShapeError(msg("reshape ", shape_str(a.shape()), " -> ", shape_str(shape)));
  std::vector<T> v = a.data();
  return make_op<T>(std::move(shape), std::move(v), {a}, [a](Node<T>& nd) mutable {
    if (!a.requires_grad()) return;
    auto& ga = a.grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += nd.grad[i];
  });
}

// (B, C, H, W) -> (B, C, th, tw) window starting at (r0, c0)
template <class T>
Tensor<T> crop2d(Tensor<T> a, int r0, int c0, int th, int tw) {
  if (a.ndim() != 4) throw ShapeError("crop2d needs 4D");
  int B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  if (r0 < 0 || c0 < 0 || r0 + th > H || c0 + tw > W)
    throw ShapeError(msg("crop2d window ", r0, "+", th, "x", c0, "+", tw, " from ", H, "x", W));
  std::vector<T> v(static_cast<std::size_t>(B) * C * th * tw);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int r = 0; r < th; ++r) {
        const T* src =
            a.data().data() + ((static_cast<std::size_t>(b) * C + c) * H + (r0 + r)) * W + c0;
        T* dst = v.data() + ((static_cast<std::size_t>(b) * C + c) * th + r) * tw;
        std::copy(src, src + tw, dst);
      }
  return make_op<T>({B, C, th, tw}, std::move(v), {a},
                    [a, B, C, H, W, r0, c0, th, tw](Node<T>& nd) mutable {
                      if (!a.requires_grad()) return;
                      auto& ga = a.grad();
                      for (int b = 0; b < B; ++b)
                        for (int c = 0; c < C; ++c)
                          for (int r = 0; r < th; ++r) {
                            T* dst = ga.data() +
                                     ((static_cast<std::size_t>(b) * C + c) * H + (r0 + r)) * W +
                                     c0;
                            const T* g =
                                nd.grad.data() + ((static_cast<std::size_t>(b) * C + c) * th + r) * tw;
                            for (int w = 0; w < tw; ++w) dst[w] += g[w];
                          }
                    });
}

// --------------------------------------------------------------------- linear

// op(a) * op(b) with optional transposes; a is (m,k) after op, b is (k,n) after op
template <class T>
Tensor<T> matmul(Tensor<T> a, Tensor<T> b, bool ta = false, bool tb = false) {
  if (a.ndim() != 2 || b.ndim() != 2) throw ShapeError("matmul needs 2D operands");
  int m = ta ? a.dim(1) : a.dim(0);
  int k = ta ? a.dim(0) : a.dim(1);
  int kb = tb ? b.dim(1) : b.dim(0);
  int n = tb ? b.dim(0) : b.dim(1);
  if (k != kb)
    throw ShapeError(msg("matmul inner dims ", k, " vs ", kb, " for ", shape_str(a.shape()), "x",
                         shape_str(b.shape())));
  const T* A = a.data().data();
  const T* B = b.data().data();
  std::vector<T> at, bt;
  if (ta) {
    at = detail::raw_transpose(A, a.dim(0), a.dim(1));
    A = at.data();
  }
  if (tb) {
    bt = detail::raw_transpose(B, b.dim(0), b.dim(1));
    B = bt.data();
  }
  std::vector<T> v(static_cast<std::size_t>(m) * n);
  detail::raw_gemm(m, k, n, A, B, v.data(), false);
  return make_op<T>({m, n}, std::move(v), {a, b}, [a, b, ta, tb, m, k, n](Node<T>& nd) mutable {
    // dA = dC * B^T (then undo the a-transpose), dB = A^T * dC
    const T* G = nd.grad.data();
    if (a.requires_grad()) {
      // want grad wrt stored a; compute grad of op(a)=(m,k) then transpose if needed
      std::vector<T> bt2;
      const T* B = b.data().data();
      if (!tb) {
        bt2 = detail::raw_transpose(B, b.dim(0), b.dim(1));
        B = bt2.data();
      }
      // B now (n,k) row-major
      std::vector<T> gopa(static_cast<std::size_t>(m) * k);
      detail::raw_gemm(m, n, k, G, B, gopa.data(), false);
      auto& ga = a.grad();
      if (!ta) {
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gopa[i];
      } else {
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < k; ++j)
            ga[static_cast<std::size_t>(j) * m + i] += gopa[static_cast<std::size_t>(i) * k + j];
      }
    }
    if (b.requires_grad()) {
      std::vector<T> at2;
      const T* A = a.data().data();
      if (!ta) {
        at2 = detail::raw_transpose(A, a.dim(0), a.dim(1));
        A = at2.data();
      }
      // A now (k,m)
      std::vector<T> gopb(static_cast<std::size_t>(k) * n);
      detail::raw_gemm(k, m, n, A, G, gopb.data(), false);
      auto& gb = b.grad();
      if (!tb) {
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gopb[i];
      } else {
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < n; ++j)
            gb[static_cast<std::size_t>(j) * k + i] += gopb[static_cast<std::size_t>(i) * n + j];
      }
    }
  });
}

// x (B, C, ...) + b (C) broadcast over batch and trailing dims
template <class T>
Tensor<T> bias_add(Tensor<T> x, Tensor<T> b) {
  if (x.ndim() < 2 || b.ndim() != 1 || b.dim(0) != x.dim(1))
    throw ShapeError(msg("bias_add ", shape_str(x.shape()), " + ", shape_str(b.shape())));
  int B = x.dim(0), C = x.dim(1);
  std::size_t rest = x.size() / (static_cast<std::size_t>(B) * C);
  std::vector<T> v(x.size());
  for (int bb = 0; bb < B; ++bb)
    for (int c = 0; c < C; ++c) {
      const T* src = x.data().data() + (static_cast<std::size_t>(bb) * C + c) * rest;
      T* dst = v.data() + (static_cast<std::size_t>(bb) * C + c) * rest;
      T bv = b.data()[c];
      for (std::size_t i = 0; i < rest; ++i) dst[i] = src[i] + bv;
    }
  return make_op<T>(x.shape(), std::move(v), {x, b}, [x, b, B, C, rest](Node<T>& nd) mutable {
    if (x.requires_grad()) {
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += nd.grad[i];
    }
    if (b.requires_grad()) {
      auto& gb = b.grad();
      for (int c = 0; c < C; ++c) {
        T s(0);
        for (int bb = 0; bb < B; ++bb) {
          const T* g = nd.grad.data() + (static_cast<std::size_t>(bb) * C + c) * rest;
          for (std::size_t i = 0; i < rest; ++i) s += g[i];
        }
        gb[c] += s;
      }
    }
  });
}

// x (B, in) * W(out, in)^T + b(out)
template <class T>
Tensor<T> linear(Tensor<T> x, Tensor<T> w, Tensor<T> b) {
  return bias_add(matmul(x, w, false, true), b);
}

// ---------------------------------------------------------------------- convs

template <class T>
Tensor<T> conv2d_padhw(Tensor<T> x, Tensor<T> w, int stride, int pad_h, int pad_w) {
  if (x.ndim() != 4 || w.ndim() != 4) throw ShapeError("conv2d needs 4D input and kernel");
  int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  int Co = w.dim(0), Ck = w.dim(1), Kh = w.dim(2), Kw = w.dim(3);
  if (C != Ck) throw ShapeError(msg("conv2d channels ", C, " vs kernel ", Ck));
  if (stride < 1) throw ShapeError("conv2d stride < 1");
  int Ho = (H + 2 * pad_h - Kh) / stride + 1;
  int Wo = (W + 2 * pad_w - Kw) / stride + 1;
  if (Ho < 1 || Wo < 1) throw ShapeError(msg("conv2d output ", Ho, "x", Wo));
  // im2col + gemm; per-output accumulation order (c,kh,kw ascending) matches a
  // direct loop nest, so results are unchanged
  const int ckk = C * Kh * Kw;
  const int hw = Ho * Wo;
  const std::size_t xsz = static_cast<std::size_t>(C) * H * W;
  const std::size_t osz = static_cast<std::size_t>(Co) * hw;
  const bool pointwise = Kh == 1 && Kw == 1 && stride == 1 && pad_h == 0 && pad_w == 0;
  std::vector<T> v(static_cast<std::size_t>(B) * osz);
  std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(ckk) * hw);
  for (int b = 0; b < B; ++b) {
    const T* xb = x.data().data() + b * xsz;
    const T* cb = xb;  // 1x1 stride-1 convs read the (C, H*W) block directly
    if (!pointwise) {
      detail::im2col_2d(xb, C, H, W, Kh, Kw, stride, pad_h, pad_w, Ho, Wo, cols.data());
      cb = cols.data();
    }
    detail::raw_gemm(Co, ckk, hw, w.data().data(), cb, v.data() + b * osz, false);
  }
  return make_op<T>(
      {B, Co, Ho, Wo}, std::move(v), {x, w},
      [x, w, B, C, H, W, Co, Kh, Kw, Ho, Wo, stride, pad_h, pad_w, ckk, hw, xsz, osz,
       pointwise](Node<T>& nd) mutable {
        const T* G = nd.grad.data();
        if (x.requires_grad()) {
          auto& gx = x.grad();
          auto wt = detail::raw_transpose(w.data().data(), Co, ckk);
          std::vector<T> dcols(pointwise ? 0 : static_cast<std::size_t>(ckk) * hw);
          for (int b = 0; b < B; ++b) {
            const T* gb = G + b * osz;
            if (pointwise) {
              detail::raw_gemm(ckk, Co, hw, wt.data(), gb, gx.data() + b * xsz, true);
            } else {
              detail::raw_gemm(ckk, Co, hw, wt.data(), gb, dcols.data(), false);
              detail::col2im_add_2d(dcols.data(), C, H, W, Kh, Kw, stride, pad_h, pad_w, Ho, Wo,
                                    gx.data() + b * xsz);
            }
          }
        }
        if (w.requires_grad()) {
          auto& gw = w.grad();
          std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(ckk) * hw);
          for (int b = 0; b < B; ++b) {
            const T* xb = x.data().data() + b * xsz;
            const T* cb = xb;
            if (!pointwise) {
              detail::im2col_2d(xb, C, H, W, Kh, Kw, stride, pad_h, pad_w, Ho, Wo, cols.data());
              cb = cols.data();
            }
            detail::raw_gemm_nt(Co, hw, ckk, G + b * osz, cb, gw.data());
          }
        }
      });
}

template <class T>
Tensor<T> conv2d(Tensor<T> x, Tensor<T> w, int stride = 1, int pad = 0) {
  return conv2d_padhw(x, w, stride, pad, pad);
}

// kernel layout (Cin, Cout, Kh, Kw); out size (H-1)*stride - 2*pad + K
template <class T>
Tensor<T> transposed_conv2d_padhw(Tensor<T> x, Tensor<T> w, int stride, int pad_h, int pad_w) {
  if (x.ndim() != 4 || w.ndim() != 4) throw ShapeError("transposed_conv2d needs 4D");
  int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  int Cw = w.dim(0), Co = w.dim(1), Kh = w.dim(2), Kw = w.dim(3);
  if (C != Cw) throw ShapeError(msg("transposed_conv2d channels ", C, " vs kernel ", Cw));
  int Ho = (H - 1) * stride - 2 * pad_h + Kh;
  int Wo = (W - 1) * stride - 2 * pad_w + Kw;
  if (Ho < 1 || Wo < 1) throw ShapeError(msg("transposed_conv2d output ", Ho, "x", Wo));
  std::vector<T> v(static_cast<std::size_t>(B) * Co * Ho * Wo, T(0));
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int co = 0; co < Co; ++co)
        for (int i = 0; i < H; ++i)
          for (int j = 0; j < W; ++j) {
            T xv = x.data()[((static_cast<std::size_t>(b) * C + c) * H + i) * W + j];
            if (xv == T(0)) continue;
            for (int kh = 0; kh < Kh; ++kh) {
              int oi = i * stride + kh - pad_h;
              if (oi < 0 || oi >= Ho) continue;
              for (int kw = 0; kw < Kw; ++kw) {
                int oj = j * stride + kw - pad_w;
                if (oj < 0 || oj >= Wo) continue;
                v[((static_cast<std::size_t>(b) * Co + co) * Ho + oi) * Wo + oj] +=
                    xv * w.data()[((static_cast<std::size_t>(c) * Co + co) * Kh + kh) * Kw + kw];
              }
            }
          }
  return make_op<T>(
      {B, Co, Ho, Wo}, std::move(v), {x, w},
      [x, w, B, C, H, W, Co, Kh, Kw, Ho, Wo, stride, pad_h, pad_w](Node<T>& nd) mutable {
        const T* G = nd.grad.data();
        if (x.requires_grad()) {
          auto& gx = x.grad();
          for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
              for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                  T s(0);
                  for (int co = 0; co < Co; ++co)
                    for (int kh = 0; kh < Kh; ++kh) {
                      int oi = i * stride + kh - pad_h;
                      if (oi < 0 || oi >= Ho) continue;
                      for (int kw = 0; kw < Kw; ++kw) {
                        int oj = j * stride + kw - pad_w;
                        if (oj < 0 || oj >= Wo) continue;
                        s += G[((static_cast<std::size_t>(b) * Co + co) * Ho + oi) * Wo + oj] *
                             w.data()[((static_cast<std::size_t>(c) * Co + co) * Kh + kh) * Kw + kw];
                      }
                    }
                  gx[((static_cast<std::size_t>(b) * C + c) * H + i) * W + j] += s;
                }
        }
        if (w.requires_grad()) {
          auto& gw = w.grad();
          for (int c = 0; c < C; ++c)
            for (int co = 0; co < Co; ++co)
              for (int kh = 0; kh < Kh; ++kh)
                for (int kw = 0; kw < Kw; ++kw) {
                  T s(0);
                  for (int b = 0; b < B; ++b)
                    for (int i = 0; i < H; ++i) {
                      int oi = i * stride + kh - pad_h;
                      if (oi < 0 || oi >= Ho) continue;
                      for (int j = 0; j < W; ++j) {
                        int oj = j * stride + kw - pad_w;
                        if (oj < 0 || oj >= Wo) continue;
                        s += x.data()[((static_cast<std::size_t>(b) * C + c) * H + i) * W + j] *
                             G[((static_cast<std::size_t>(b) * Co + co) * Ho + oi) * Wo + oj];
                      }
                    }
                  gw[((static_cast<std::size_t>(c) * Co + co) * Kh + kh) * Kw + kw] += s;
                }
        }
      });
}

template <class T>
Tensor<T> transposed_conv2d(Tensor<T> x, Tensor<T> w, int stride = 1, int pad = 0) {
  return transposed_conv2d_padhw(x, w, stride, pad, pad);
}

// 1D convs ride on the 2D kernels with unit height (and no height padding)
template <class T>
Tensor<T> conv1d(Tensor<T> x, Tensor<T> w, int stride = 1, int pad = 0) {
  if (x.ndim() != 3 || w.ndim() != 3) throw ShapeError("conv1d needs 3D input and kernel");
  auto x4 = reshape(x, {x.dim(0), x.dim(1), 1, x.dim(2)});
  auto w4 = reshape(w, {w.dim(0), w.dim(1), 1, w.dim(2)});
  auto y = conv2d_padhw(x4, w4, stride, 0, pad);
  return reshape(y, {y.dim(0), y.dim(1), y.dim(3)});
}

template <class T>
Tensor<T> transposed_conv1d(Tensor<T> x, Tensor<T> w, int stride = 1, int pad = 0) {
  if (x.ndim() != 3 || w.ndim() != 3) throw ShapeError("transposed_conv1d needs 3D");
  auto x4 = reshape(x, {x.dim(0), x.dim(1), 1, x.dim(2)});
  auto w4 = reshape(w, {w.dim(0), w.dim(1), 1, w.dim(2)});
  auto y = transposed_conv2d_padhw(x4, w4, stride, 0, pad);
  return reshape(y, {y.dim(0), y.dim(1), y.dim(3)});
}

// ----------------------------------------------------------------- batch norm

template <class T>
struct BatchNormState {
  std::vector<T> running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  void init(int channels) {
    running_mean.assign(channels, T(0));
    running_var.assign(channels, T(1));
  }
};

template <class T>
Tensor<T> batch_norm(Tensor<T> x, Tensor<T> gamma, Tensor<T> beta, BatchNormState<T>& state,
                     bool training) {
  if (x.ndim() < 2) throw ShapeError("batch_norm needs at least 2D (B, C, ...)");
  int B = x.dim(0), C = x.dim(1);
  if (gamma.dim(0) != C || beta.dim(0) != C) throw ShapeError("batch_norm affine size mismatch");
  if (state.running_mean.size() != static_cast<std::size_t>(C)) state.init(C);
  std::size_t rest = x.size() / (static_cast<std::size_t>(B) * C);
  std::size_t n = static_cast<std::size_t>(B) * rest;
  std::vector<double> mean(C, 0.0), var(C, 0.0);
  if (training) {
    for (int c = 0; c < C; ++c) {
      double s = 0;
      for (int b = 0; b < B; ++b) {
        const T* row = x.data().data() + (static_cast<std::size_t>(b) * C + c) * rest;
        for (std::size_t i = 0; i < rest; ++i) s += static_cast<double>(row[i]);
      }
      mean[c] = s / static_cast<double>(n);
      double v2 = 0;
      for (int b = 0; b < B; ++b) {
        const T* row = x.data().data() + (static_cast<std::size_t>(b) * C + c) * rest;
        for (std::size_t i = 0; i < rest; ++i) v2 += sq(static_cast<double>(row[i]) - mean[c]);
      }
      var[c] = v2 / static_cast<double>(n);  // biased, used for normalization
      double unbiased = n > 1 ? v2 / static_cast<double>(n - 1) : var[c];
      state.running_mean[c] = static_cast<T>((1.0 - state.momentum) * state.running_mean[c] +
                                             state.momentum * mean[c]);
      state.running_var[c] =
          static_cast<T>((1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased);
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = static_cast<double>(state.running_mean[c]);
      var[c] = static_cast<double>(state.running_var[c]);
    }
  }
  std::vector<T> istd(C), xhat(x.size()), v(x.size());
  for (int c = 0; c < C; ++c) istd[c] = static_cast<T>(1.0 / std::sqrt(var[c] + state.eps));
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const T* row = x.data().data() + (static_cast<std::size_t>(b) * C + c) * rest;
      T* xh = xhat.data() + (static_cast<std::size_t>(b) * C + c) * rest;
      T* out = v.data() + (static_cast<std::size_t>(b) * C + c) * rest;
      T mu = static_cast<T>(mean[c]), is = istd[c];
      T g = gamma.data()[c], be = beta.data()[c];
      for (std::size_t i = 0; i < rest; ++i) {
        xh[i] = (row[i] - mu) * is;
        out[i] = g * xh[i] + be;
      }
    }
  auto xhat_sp = std::make_shared<std::vector<T>>(std::move(xhat));
  auto istd_sp = std::make_shared<std::vector<T>>(std::move(istd));
  return make_op<T>(
      x.shape(), std::move(v), {x, gamma, beta},
      [x, gamma, beta, xhat_sp, istd_sp, B, C, rest, n, training](Node<T>& nd) mutable {
        const T* G = nd.grad.data();
        const auto& xh = *xhat_sp;
        const auto& istd = *istd_sp;
        if (gamma.requires_grad()) {
          auto& gg = gamma.grad();
          for (int c = 0; c < C; ++c) {
            double s = 0;
            for (int b = 0; b < B; ++b) {
              std::size_t off = (static_cast<std::size_t>(b) * C + c) * rest;
              for (std::size_t i = 0; i < rest; ++i)
                s += static_cast<double>(G[off + i]) * xh[off + i];
            }
            gg[c] += static_cast<T>(s);
          }
        }
        if (beta.requires_grad()) {
          auto& gb = beta.grad();
          for (int c = 0; c < C; ++c) {
            double s = 0;
            for (int b = 0; b < B; ++b) {
              std::size_t off = (static_cast<std::size_t>(b) * C + c) * rest;
              for (std::size_t i = 0; i < rest; ++i) s += static_cast<double>(G[off + i]);
            }
            gb[c] += static_cast<T>(s);
          }
        }
        if (x.requires_grad()) {
          auto& gx = x.grad();
          for (int c = 0; c < C; ++c) {
            T gam = gamma.data()[c], is = istd[c];
            if (training) {
              double sg = 0, sgx = 0;
              for (int b = 0; b < B; ++b) {
                std::size_t off = (static_cast<std::size_t>(b) * C + c) * rest;
                for (std::size_t i = 0; i < rest; ++i) {
                  sg += static_cast<double>(G[off + i]);
                  sgx += static_cast<double>(G[off + i]) * xh[off + i];
                }
              }
              T mg = static_cast<T>(sg / static_cast<double>(n));
              T mgx = static_cast<T>(sgx / static_cast<double>(n));
              for (int b = 0; b < B; ++b) {
                std::size_t off = (static_cast<std::size_t>(b) * C + c) * rest;
                for (std::size_t i = 0; i < rest; ++i)
                  gx[off + i] += gam * is * (G[off + i] - mg - xh[off + i] * mgx);
              }
            } else {
              for (int b = 0; b < B; ++b) {
                std::size_t off = (static_cast<std::size_t>(b) * C + c) * rest;
                for (std::size_t i = 0; i < rest; ++i) gx[off + i] += gam * is * G[off + i];
              }
            }
          }
        }
      });
}

// ------------------------------------------------------- model-specific fused

// s (B,N), d (C) -> out[b,c,i] = d[c] * s[b,i]
template <class T>
Tensor<T> channel_outer(Tensor<T> s, Tensor<T> d) {
  if (s.ndim() != 2 || d.ndim() != 1) throw ShapeError("channel_outer needs (B,N) and (C)");
  int B = s.dim(0), N = s.dim(1), C = d.dim(0);
  std::vector<T> v(static_cast<std::size_t>(B) * C * N);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const T* src = s.data().data() + static_cast<std::size_t>(b) * N;
      T* dst = v.data() + (static_cast<std::size_t>(b) * C + c) * N;
      T dv = d.data()[c];
      for (int i = 0; i < N; ++i) dst[i] = dv * src[i];
    }
  return make_op<T>({B, C, N}, std::move(v), {s, d}, [s, d, B, C, N](Node<T>& nd) mutable {
    if (s.requires_grad()) {
      auto& gs = s.grad();
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
          const T* g = nd.grad.data() + (static_cast<std::size_t>(b) * C + c) * N;
          T* dst = gs.data() + static_cast<std::size_t>(b) * N;
          T dv = d.data()[c];
          for (int i = 0; i < N; ++i) dst[i] += dv * g[i];
        }
    }
    if (d.requires_grad()) {
      auto& gd = d.grad();
      for (int c = 0; c < C; ++c) {
        double acc = 0;
        for (int b = 0; b < B; ++b) {
          const T* g = nd.grad.data() + (static_cast<std::size_t>(b) * C + c) * N;
          const T* src = s.data().data() + static_cast<std::size_t>(b) * N;
          for (int i = 0; i < N; ++i) acc += static_cast<double>(g[i]) * src[i];
        }
        gd[c] += static_cast<T>(acc);
      }
    }
  });
}

// x (B,C,N) + y (C,N) broadcast over batch
template <class T>
Tensor<T> add_broadcast0(Tensor<T> x, Tensor<T> y) {
  if (x.ndim() != 3 || y.ndim() != 2 || x.dim(1) != y.dim(0) || x.dim(2) != y.dim(1))
    throw ShapeError(msg("add_broadcast0 ", shape_str(x.shape()), " + ", shape_str(y.shape())));
  int B = x.dim(0);
  std::size_t cn = y.size();
  std::vector<T> v(x.size());
  for (int b = 0; b < B; ++b) {
    const T* src = x.data().data() + static_cast<std::size_t>(b) * cn;
    T* dst = v.data() + static_cast<std::size_t>(b) * cn;
    for (std::size_t i = 0; i < cn; ++i) dst[i] = src[i] + y.data()[i];
  }
  return make_op<T>(x.shape(), std::move(v), {x, y}, [x, y, B, cn](Node<T>& nd) mutable {
    if (x.requires_grad()) {
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += nd.grad[i];
    }
    if (y.requires_grad()) {
      auto& gy = y.grad();
      for (int b = 0; b < B; ++b) {
        const T* g = nd.grad.data() + static_cast<std::size_t>(b) * cn;
        for (std::size_t i = 0; i < cn; ++i) gy[i] += g[i];
      }
    }
  });
}

// f (B,L,N), d (L,C) -> out[b,c,i] = (1/L) sum_l d[l,c] f[b,l,i]
template <class T>
Tensor<T> mix_channels(Tensor<T> f, Tensor<T> d) {
  if (f.ndim() != 3 || d.ndim() != 2 || f.dim(1) != d.dim(0))
    throw ShapeError(msg("mix_channels ", shape_str(f.shape()), " with ", shape_str(d.shape())));
  int B = f.dim(0), L = f.dim(1), N = f.dim(2), C = d.dim(1);
  T inv = static_cast<T>(1.0 / L);
  std::vector<T> v(static_cast<std::size_t>(B) * C * N, T(0));
  for (int b = 0; b < B; ++b)
    for (int l = 0; l < L; ++l) {
      const T* frow = f.data().data() + (static_cast<std::size_t>(b) * L + l) * N;
      for (int c = 0; c < C; ++c) {
        T dv = d.data()[static_cast<std::size_t>(l) * C + c] * inv;
        T* dst = v.data() + (static_cast<std::size_t>(b) * C + c) * N;
        for (int i = 0; i < N; ++i) dst[i] += dv * frow[i];
      }
    }
  return make_op<T>({B, C, N}, std::move(v), {f, d}, [f, d, B, L, N, C, inv](Node<T>& nd) mutable {
    if (f.requires_grad()) {
      auto& gf = f.grad();
      for (int b = 0; b < B; ++b)
        for (int l = 0; l < L; ++l) {
          T* dst = gf.data() + (static_cast<std::size_t>(b) * L + l) * N;
          for (int c = 0; c < C; ++c) {
            T dv = d.data()[static_cast<std::size_t>(l) * C + c] * inv;
            const T* g = nd.grad.data() + (static_cast<std::size_t>(b) * C + c) * N;
            for (int i = 0; i < N; ++i) dst[i] += dv * g[i];
          }
        }
    }
    if (d.requires_grad()) {
      auto& gd = d.grad();
      for (int l = 0; l < L; ++l)
        for (int c = 0; c < C; ++c) {
          double acc = 0;
          for (int b = 0; b < B; ++b) {
            const T* frow = f.data().data() + (static_cast<std::size_t>(b) * L + l) * N;
            const T* g = nd.grad.data() + (static_cast<std::size_t>(b) * C + c) * N;
            for (int i = 0; i < N; ++i) acc += static_cast<double>(frow[i]) * g[i];
          }
          gd[static_cast<std::size_t>(l) * C + c] += static_cast<T>(acc * inv);
        }
    }
  });
}

}  // namespace nio
