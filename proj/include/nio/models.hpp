// Neural-operator models for coefficient recovery: a branch/trunk DeepONet
// pair composed with a Fourier neural operator through a permutation-invariant
// lift, plus a channel-mixing DeepONet baseline, a convolutional
// encoder-decoder baseline, and a no-mixing ablation.
//
// Tensor layouts. A measurement set is (B, L, C, len) for boundary traces and
// outflow vectors (C=1, or 2 for real/imag pairs) and (B, L, C, H, W) for
// source-to-receiver images. Coordinate queries are (Nz, coord_dim) with
// entries normalized to [0,1], listed row-major against the output grid
// (y slow, x fast, matching Field). Predictions come back as (B, Nz).
//
// The branch runs each measurement through the same conv encoder (weight
// sharing across the L slots is structural); the channel-mixing baseline
// instead stacks all L measurements as input channels of one encoder and is
// deliberately not size-flexible. The lift averages the per-measurement
// fields, so any permutation or duplication of the set leaves the prediction
// unchanged up to reduction order.
#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "nio/ops.hpp"
#include "nio/rng.hpp"
#include "nio/spectral.hpp"

namespace nio {

// ------------------------------------------------------------- configuration

enum class BranchKind { trace, image };
enum class LiftKind { invariant, per_index };

struct NioConfig {
  int p = 100;           // branch/trunk output count
  int trunk_layers = 4;  // hidden layers
  int trunk_width = 100;
  int d_v = 32;       // lifted channel count
  int fno_layers = 4;
  int k_max = 12;     // retained modes per axis
  int coord_dim = 2;  // 1 for line problems
  BranchKind branch = BranchKind::trace;
  int channels = 1;             // channels per measurement (2 for complex traces)
  std::vector<int> meas_shape;  // {len} for traces, {h, w} for images
  int grid_n = 32;              // native output grid points per axis
  LiftKind lift = LiftKind::invariant;
  int lift_slots = 0;  // fixed L, only for the per-index lift
  bool mixing = true;  // false: scalar lift straight to the field, no fourier stack

  void validate() const {
    if (p < 1 || d_v < 1 || k_max < 1)
      throw ConfigError(msg("p=", p, ", d_v=", d_v, ", k_max=", k_max, " must all be >= 1"));
    if (fno_layers < 0) throw ConfigError("fno_layers must be >= 0");
    if (trunk_layers < 1 || trunk_width < 1)
      throw ConfigError(msg("trunk ", trunk_layers, "x", trunk_width, " is degenerate"));
    if (coord_dim != 1 && coord_dim != 2)
      throw ConfigError(msg("coord_dim must be 1 or 2, got ", coord_dim));
    if (channels < 1) throw ConfigError("channels must be >= 1");
    std::size_t want = branch == BranchKind::trace ? 1 : 2;
    if (meas_shape.size() != want)
      throw ConfigError(msg("meas_shape rank ", meas_shape.size(), " does not fit branch kind"));
    for (int d : meas_shape)
      if (d < 1) throw ConfigError("meas_shape entries must be positive");
    if (grid_n < 2) throw ConfigError(msg("grid_n=", grid_n, " too small"));
    if (mixing && 2 * k_max > grid_n)
      throw ConfigError(msg("k_max=", k_max, " exceeds the Nyquist range of an n=", grid_n,
                            " grid (needs 2*k_max <= n)"));
    if (lift == LiftKind::per_index && lift_slots < 2)
      throw ConfigError("per-index lift needs lift_slots >= 2");
    if (!mixing && d_v != 1) throw ConfigError("the no-mixing variant requires d_v == 1");
  }
};

// ------------------------------------------------------ coordinates and init

// (nh*nw, 2) unit-square coordinates, row r = j*nw + i -> (i/(nw-1), j/(nh-1))
template <class T>
Tensor<T> grid_coords(int nh, int nw) {
  if (nh < 2 || nw < 2) throw ConfigError(msg("grid_coords ", nh, "x", nw));
  std::vector<T> v(static_cast<std::size_t>(nh) * nw * 2);
  for (int j = 0; j < nh; ++j)
    for (int i = 0; i < nw; ++i) {
      std::size_t r = static_cast<std::size_t>(j) * nw + i;
      v[2 * r] = static_cast<T>(i / static_cast<double>(nw - 1));
      v[2 * r + 1] = static_cast<T>(j / static_cast<double>(nh - 1));
    }
  return Tensor<T>::from({nh * nw, 2}, std::move(v));
}

template <class T>
Tensor<T> line_coords(int n) {
  if (n < 2) throw ConfigError(msg("line_coords n=", n));
  std::vector<T> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = static_cast<T>(i / (n - 1.0));
  return Tensor<T>::from({n, 1}, std::move(v));
}

namespace model_detail {

// fan-in-scaled uniform weights, torch-style bounds
template <class T>
Tensor<T> weight_init(Shape shape, int fan_in, Rng& rng) {
  double bound = std::sqrt(6.0 / fan_in);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::from(std::move(shape), std::move(v), true);
}

template <class T>
Tensor<T> bias_init(int count, int fan_in, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<T> v(static_cast<std::size_t>(count));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::from({count}, std::move(v), true);
}

inline int conv_out(int len, int kernel, int stride, int pad) {
  return (len + 2 * pad - kernel) / stride + 1;
}

}  // namespace model_detail

// --------------------------------------------------------------- components

// trunk: MLP on coordinates, leaky-ReLU hidden layers, linear output to p
template <class T>
struct TrunkNet {
  std::vector<Tensor<T>> w, b;

  void build(int coord_dim, int width, int layers, int p, Rng& rng) {
    int in = coord_dim;
    for (int l = 0; l < layers; ++l) {
      w.push_back(model_detail::weight_init<T>({width, in}, in, rng));
      b.push_back(model_detail::bias_init<T>(width, in, rng));
      in = width;
    }
    w.push_back(model_detail::weight_init<T>({p, in}, in, rng));
    b.push_back(model_detail::bias_init<T>(p, in, rng));
  }

  Tensor<T> forward(Tensor<T> z) const {
    if (z.ndim() != 2 || z.dim(1) != w.front().dim(1))
      throw ShapeError(msg("trunk wants (Nz,", w.front().dim(1), "), got ", shape_str(z.shape())));
    Tensor<T> x = z;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) x = leaky_relu(linear(x, w[l], b[l]));
    return linear(x, w.back(), b.back());
  }

  template <class Sink>
  void collect(const std::string& prefix, Sink&& sink) {
    for (std::size_t l = 0; l < w.size(); ++l) {
      sink(prefix + ".w" + std::to_string(l), w[l]);
      sink(prefix + ".b" + std::to_string(l), b[l]);
    }
  }
};

// shared conv feature extractor: strided conv + leaky-ReLU stages, flattened
template <class T>
struct ConvEncoder {
  BranchKind kind = BranchKind::trace;
  std::vector<Tensor<T>> w, b;
  int in_channels = 0;
  int out_features = 0;

  void build(BranchKind kind_, int in_ch, const std::vector<int>& meas_shape, Rng& rng) {
    kind = kind_;
    in_channels = in_ch;
    const int stages[3] = {16, 32, 64};
    int c = in_ch;
    std::vector<int> dims = meas_shape;
    for (int s = 0; s < 3; ++s) {
      if (kind == BranchKind::trace) {
        w.push_back(model_detail::weight_init<T>({stages[s], c, 5}, c * 5, rng));
        b.push_back(model_detail::bias_init<T>(stages[s], c * 5, rng));
        dims[0] = model_detail::conv_out(dims[0], 5, 2, 2);
      } else {
        w.push_back(model_detail::weight_init<T>({stages[s], c, 3, 3}, c * 9, rng));
        b.push_back(model_detail::bias_init<T>(stages[s], c * 9, rng));
        dims[0] = model_detail::conv_out(dims[0], 3, 2, 1);
        dims[1] = model_detail::conv_out(dims[1], 3, 2, 1);
      }
      for (int d : dims)
        if (d < 1) throw ConfigError("measurement too small for the conv encoder");
      c = stages[s];
    }
    out_features = c;
    for (int d : dims) out_features *= d;
  }

  // x (B, C, len) or (B, C, H, W) -> (B, out_features)
  Tensor<T> forward(Tensor<T> x) const {
    int want = kind == BranchKind::trace ? 3 : 4;
    if (x.ndim() != want || x.dim(1) != in_channels)
      throw ShapeError(msg("encoder wants ", want, "D with ", in_channels, " channels, got ",
                           shape_str(x.shape())));
    for (std::size_t s = 0; s < w.size(); ++s) {
      x = kind == BranchKind::trace ? conv1d(x, w[s], 2, 2) : conv2d(x, w[s], 2, 1);
      x = leaky_relu(bias_add(x, b[s]));
    }
    if (x.size() != static_cast<std::size_t>(x.dim(0)) * out_features)
      throw ShapeError(msg("encoder features ", x.size() / x.dim(0), ", expected ", out_features));
    return reshape(x, {x.dim(0), out_features});
  }

  template <class Sink>
  void collect(const std::string& prefix, Sink&& sink) {
    for (std::size_t s = 0; s < w.size(); ++s) {
      sink(prefix + ".conv" + std::to_string(s) + ".w", w[s]);
      sink(prefix + ".conv" + std::to_string(s) + ".b", b[s]);
    }
  }
};

// ------------------------------------------------------------------ the model

template <class T>
class NioModel {
 public:
  NioModel(NioConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
    cfg_.validate();
    trunk_.build(cfg_.coord_dim, cfg_.trunk_width, cfg_.trunk_layers, cfg_.p, rng);
    enc_.build(cfg_.branch, cfg_.channels, cfg_.meas_shape, rng);
    bfw_ = model_detail::weight_init<T>({cfg_.p, enc_.out_features}, enc_.out_features, rng);
    bfb_ = model_detail::bias_init<T>(cfg_.p, enc_.out_features, rng);
    if (cfg_.lift == LiftKind::invariant)
      d_ = model_detail::weight_init<T>({cfg_.d_v}, 1, rng);
    else
      d_ = model_detail::weight_init<T>({cfg_.lift_slots, cfg_.d_v}, 1, rng);
    e_ = model_detail::weight_init<T>({cfg_.d_v, cfg_.coord_dim}, cfg_.coord_dim, rng);
    if (cfg_.mixing) {
      int modes = cfg_.coord_dim == 2 ? (2 * cfg_.k_max + 1) * (2 * cfg_.k_max + 1)
                                      : 2 * cfg_.k_max + 1;
      double scale = 1.0 / (static_cast<double>(cfg_.d_v) * modes);
      for (int t = 0; t < cfg_.fno_layers; ++t) {
        pre_.push_back(spectral_init({modes, cfg_.d_v, cfg_.d_v}, scale, rng));
        pim_.push_back(spectral_init({modes, cfg_.d_v, cfg_.d_v}, scale, rng));
        fw_.push_back(model_detail::weight_init<T>(point_shape(cfg_.d_v, cfg_.d_v), cfg_.d_v, rng));
      }
      qw0_ = model_detail::weight_init<T>(point_shape(128, cfg_.d_v), cfg_.d_v, rng);
      qb0_ = model_detail::bias_init<T>(128, cfg_.d_v, rng);
      qw1_ = model_detail::weight_init<T>(point_shape(1, 128), 128, rng);
      qb1_ = model_detail::bias_init<T>(1, 128, rng);
    }
  }

  const NioConfig& config() const { return cfg_; }

  // (Nz, coord_dim) normalized coordinates -> (Nz, p)
  Tensor<T> trunk_forward(Tensor<T> z) const { return trunk_.forward(z); }

  // (B, C, len[, w]) single measurements -> (B, p)
  Tensor<T> branch_forward(Tensor<T> psi) const {
    return linear(enc_.forward(psi), bfw_, bfb_);
  }

  // (B, L, C, ...) set + (Nz, coord_dim) -> per-measurement fields (B, L, Nz)
  Tensor<T> deeponet_forward(Tensor<T> psi, Tensor<T> z) const {
    int rank = cfg_.branch == BranchKind::trace ? 4 : 5;
    if (psi.ndim() != rank)
      throw ShapeError(msg("measurement set must be ", rank, "D, got ", shape_str(psi.shape())));
    int B = psi.dim(0), L = psi.dim(1);
    Shape flat{B * L};
    for (int d = 2; d < psi.ndim(); ++d) flat.push_back(psi.dim(d));
    Tensor<T> beta = branch_forward(reshape(psi, flat));
    Tensor<T> tau = trunk_forward(z);
    Tensor<T> f = matmul(beta, tau, false, true);  // (B*L, Nz)
    return reshape(f, {B, L, f.dim(1)});
  }

  // (B, L, Nz) fields -> lifted (B, d_v, Nz); set-mean keeps this invariant
  Tensor<T> lift_r(Tensor<T> f, Tensor<T> z) const {
    if (f.ndim() != 3) throw ShapeError(msg("lift wants (B,L,Nz), got ", shape_str(f.shape())));
    Tensor<T> h;
    if (cfg_.lift == LiftKind::invariant) {
      h = channel_outer(mean_over_axis1(f), d_);
    } else {
      if (f.dim(1) != cfg_.lift_slots)
        throw ShapeError(msg("per-index lift is fixed to L=", cfg_.lift_slots, ", got set of ",
                             f.dim(1)));
      h = mix_channels(f, d_);
    }
    Tensor<T> ez = matmul(e_, z, false, true);  // (d_v, Nz)
    return add_broadcast0(h, ez);
  }

  // one spectral + pointwise block on a structured field (B, d_v, H, W) / (B, d_v, N)
  Tensor<T> fourier_layer(Tensor<T> v, int t) const {
    require_mixing("fourier_layer");
    if (t < 0 || t >= cfg_.fno_layers) throw ConfigError(msg("fourier layer ", t, " out of range"));
    Tensor<T> kv, wv;
    if (cfg_.coord_dim == 2) {
      kv = spectral_conv(v, pre_[static_cast<std::size_t>(t)], pim_[static_cast<std::size_t>(t)],
                         cfg_.k_max);
      wv = conv2d(v, fw_[static_cast<std::size_t>(t)]);
    } else {
      kv = spectral_conv1d(v, pre_[static_cast<std::size_t>(t)], pim_[static_cast<std::size_t>(t)],
                           cfg_.k_max);
      wv = conv1d(v, fw_[static_cast<std::size_t>(t)]);
    }
    return gelu(add(wv, kv));
  }

  // lifted field (B, d_v, Nz) on a gshape grid -> projected scalar field (B, Nz)
  Tensor<T> fno_forward(Tensor<T> h, const Shape& gshape) const {
    require_mixing("fno_forward");
    check_grid(gshape, h.dim(2));
    Shape structured{h.dim(0), h.dim(1)};
    for (int d : gshape) structured.push_back(d);
    Tensor<T> v = reshape(h, structured);
    for (int t = 0; t < cfg_.fno_layers; ++t) v = fourier_layer(v, t);
    Tensor<T> q = cfg_.coord_dim == 2 ? conv2d(v, qw0_) : conv1d(v, qw0_);
    q = gelu(bias_add(q, qb0_));
    q = cfg_.coord_dim == 2 ? conv2d(q, qw1_) : conv1d(q, qw1_);
    q = bias_add(q, qb1_);
    return reshape(q, {h.dim(0), h.dim(2)});
  }

  // measurement set (B, L, C, ...) -> predicted coefficient field (B, Nz).
  // Any L >= 2 is accepted; the set size never touches parameter shapes.
  Tensor<T> forward(Tensor<T> psi, Tensor<T> z, const Shape& gshape) const {
    if (psi.ndim() < 2 || psi.dim(1) < 2)
      throw ShapeError(msg("need at least 2 measurements, got ",
                           psi.ndim() < 2 ? 0 : psi.dim(1)));
    check_grid(gshape, z.dim(0));
    Tensor<T> f = deeponet_forward(psi, z);
    Tensor<T> h = lift_r(f, z);
    if (!cfg_.mixing) return reshape(h, {h.dim(0), h.dim(2)});
    return fno_forward(h, gshape);
  }

  template <class Sink>
  void collect(Sink&& sink) {
    trunk_.collect("trunk", sink);
    enc_.collect("branch", sink);
    sink("branch.fc.w", bfw_);
    sink("branch.fc.b", bfb_);
    sink("lift.d", d_);
    sink("lift.e", e_);
    for (int t = 0; t < static_cast<int>(fw_.size()); ++t) {
      std::string p = "fno." + std::to_string(t);
      sink(p + ".p_re", pre_[static_cast<std::size_t>(t)]);
      sink(p + ".p_im", pim_[static_cast<std::size_t>(t)]);
      sink(p + ".w", fw_[static_cast<std::size_t>(t)]);
    }
    if (cfg_.mixing) {
      sink("proj.w0", qw0_);
      sink("proj.b0", qb0_);
      sink("proj.w1", qw1_);
      sink("proj.b1", qb1_);
    }
  }

  std::vector<std::pair<std::string, Tensor<T>>> params() {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    collect([&](const std::string& name, Tensor<T>& t) { out.emplace_back(name, t); });
    return out;
  }

 private:
  Shape point_shape(int co, int ci) const {
    return cfg_.coord_dim == 2 ? Shape{co, ci, 1, 1} : Shape{co, ci, 1};
  }

  Tensor<T> spectral_init(Shape shape, double scale, Rng& rng) {
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(scale * rng.uniform(-1.0, 1.0));
    return Tensor<T>::from(std::move(shape), std::move(v), true);
  }

  void require_mixing(const char* op) const {
    if (!cfg_.mixing) throw ConfigError(msg(op, " on a model built without channel mixing"));
  }

  void check_grid(const Shape& gshape, int nz) const {
    if (static_cast<int>(gshape.size()) != cfg_.coord_dim)
      throw ShapeError(msg("grid rank ", gshape.size(), " vs coord_dim ", cfg_.coord_dim));
    std::size_t prod = 1;
    for (int d : gshape) prod *= static_cast<std::size_t>(d);
    if (prod != static_cast<std::size_t>(nz))
      throw ShapeError(msg("grid ", shape_str(gshape), " does not cover ", nz, " query points"));
  }

  NioConfig cfg_;
  TrunkNet<T> trunk_;
  ConvEncoder<T> enc_;
  Tensor<T> bfw_, bfb_;            // branch features -> p
  Tensor<T> d_, e_;                // lift
  std::vector<Tensor<T>> pre_, pim_, fw_;
  Tensor<T> qw0_, qb0_, qw1_, qb1_;  // projection
};

// ---------------------------------------------------------- subsampled batches

// L_hat ~ Uniform{2..L}, then that many distinct slots, order random. One call
// per training iteration; the whole minibatch shares the returned slots.
inline std::vector<int> subsample_indices(int L, Rng& rng) {
  if (L < 2) throw ShapeError(msg("cannot subsample a set of ", L, " measurements"));
  int lhat = static_cast<int>(rng.uniform_int(2, L));
  return rng.sample_without_replacement(L, lhat);
}

// (B, L, ...) -> (B, idx.size(), ...) detached copy of the chosen slots
template <class T>
Tensor<T> select_measurements(const Tensor<T>& psi, const std::vector<int>& idx) {
  if (psi.ndim() < 2) throw ShapeError("measurement set must be at least 2D");
  int B = psi.dim(0), L = psi.dim(1);
  std::size_t rest = psi.size() / (static_cast<std::size_t>(B) * L);
  Shape out_shape = psi.shape();
  out_shape[1] = static_cast<int>(idx.size());
  std::vector<T> v(static_cast<std::size_t>(B) * idx.size() * rest);
  for (int b = 0; b < B; ++b)
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] < 0 || idx[k] >= L) throw ShapeError(msg("measurement slot ", idx[k]));
      const T* src = psi.data().data() + (static_cast<std::size_t>(b) * L + idx[k]) * rest;
      std::copy(src, src + rest, v.data() + (static_cast<std::size_t>(b) * idx.size() + k) * rest);
    }
  return Tensor<T>::from(std::move(out_shape), std::move(v));
}

template <class T>
Tensor<T> randomized_subsample(const Tensor<T>& psi, Rng& rng) {
  if (psi.ndim() < 2) throw ShapeError("measurement set must be at least 2D");
  return select_measurements(psi, subsample_indices(psi.dim(1), rng));
}

// ------------------------------------------------------------------ baselines

// channel-mixing DeepONet: the whole set enters one encoder as L*C channels,
// so the trained L is baked into the first conv and permutations are not
// symmetries. Rejects any other set size by construction.
template <class T>
class DonetModel {
 public:
  DonetModel(NioConfig cfg, int L, Rng& rng) : cfg_(std::move(cfg)), L_(L) {
    cfg_.validate();
    if (L_ < 2) throw ConfigError(msg("channel-mixing baseline needs L >= 2, got ", L_));
    trunk_.build(cfg_.coord_dim, cfg_.trunk_width, cfg_.trunk_layers, cfg_.p, rng);
    enc_.build(cfg_.branch, L_ * cfg_.channels, cfg_.meas_shape, rng);
    bfw_ = model_detail::weight_init<T>({cfg_.p, enc_.out_features}, enc_.out_features, rng);
    bfb_ = model_detail::bias_init<T>(cfg_.p, enc_.out_features, rng);
  }

  const NioConfig& config() const { return cfg_; }
  int slots() const { return L_; }

  // (B, L, C, ...) with L == slots() -> (B, Nz)
  Tensor<T> forward(Tensor<T> psi, Tensor<T> z) const {
    int rank = cfg_.branch == BranchKind::trace ? 4 : 5;
    if (psi.ndim() != rank)
      throw ShapeError(msg("measurement set must be ", rank, "D, got ", shape_str(psi.shape())));
    if (psi.dim(1) != L_)
      throw ShapeError(msg("channel-mixing baseline is fixed to L=", L_, ", got set of ",
                           psi.dim(1)));
    Shape merged{psi.dim(0), L_ * cfg_.channels};
    for (int d = 3; d < psi.ndim(); ++d) merged.push_back(psi.dim(d));
    Tensor<T> beta = linear(enc_.forward(reshape(psi, merged)), bfw_, bfb_);
    return matmul(beta, trunk_.forward(z), false, true);
  }

  template <class Sink>
  void collect(Sink&& sink) {
    trunk_.collect("trunk", sink);
    enc_.collect("branch", sink);
    sink("branch.fc.w", bfw_);
    sink("branch.fc.b", bfb_);
  }

  std::vector<std::pair<std::string, Tensor<T>>> params() {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    collect([&](const std::string& name, Tensor<T>& t) { out.emplace_back(name, t); });
    return out;
  }

 private:
  NioConfig cfg_;
  int L_;
  TrunkNet<T> trunk_;
  ConvEncoder<T> enc_;
  Tensor<T> bfw_, bfb_;
};

// convolutional encoder-decoder: measurements stacked as image channels, conv
// + batchnorm + leaky-ReLU blocks down, transposed-conv blocks up, cropped to
// the coefficient grid. Batchnorm makes training-mode forward batch-coupled;
// evaluation uses running statistics.
template <class T>
class FcnnModel {
 public:
  FcnnModel(NioConfig cfg, int L, Rng& rng) : cfg_(std::move(cfg)), L_(L) {
    cfg_.validate();
    if (L_ < 1) throw ConfigError("encoder-decoder baseline needs L >= 1");
    const int stages[3] = {16, 32, 64};
    int c = L_ * cfg_.channels;
    std::vector<int> dims = cfg_.meas_shape;
    for (int s = 0; s < 3; ++s) {
      int fan = c * (cfg_.branch == BranchKind::trace ? 5 : 9);
      ew_.push_back(model_detail::weight_init<T>(enc_kernel(stages[s], c), fan, rng));
      eb_.push_back(model_detail::bias_init<T>(stages[s], fan, rng));
      eg_.push_back(Tensor<T>::from({stages[s]}, std::vector<T>(stages[s], T(1)), true));
      ebeta_.push_back(Tensor<T>::zeros({stages[s]}, true));
      if (cfg_.branch == BranchKind::trace) {
        dims[0] = model_detail::conv_out(dims[0], 5, 2, 2);
      } else {
        dims[0] = model_detail::conv_out(dims[0], 3, 2, 1);
        dims[1] = model_detail::conv_out(dims[1], 3, 2, 1);
      }
      for (int d : dims)
        if (d < 1) throw ConfigError("measurement too small for the conv encoder");
      c = stages[s];
    }
    int feat = c;
    for (int d : dims) feat *= d;
    ebn_.resize(3);
    for (int s = 0; s < 3; ++s) ebn_[static_cast<std::size_t>(s)].init(stages[s]);

    // decoder grows a 4-wide seed by doubling until it covers the grid
    int side = 4;
    while (side < cfg_.grid_n) {
      side *= 2;
      ++blocks_;
    }
    seed_ = cfg_.coord_dim == 2 ? Shape{64, 4, 4} : Shape{64, 4};
    int seed_feat = static_cast<int>(shape_numel(seed_));
    fw_ = model_detail::weight_init<T>({seed_feat, feat}, feat, rng);
    fb_ = model_detail::bias_init<T>(seed_feat, feat, rng);
    c = 64;
    for (int s = 0; s < blocks_; ++s) {
      int co = c > 8 ? c / 2 : 8;
      int fan = c * (cfg_.coord_dim == 2 ? 16 : 4);
      dw_.push_back(model_detail::weight_init<T>(dec_kernel(c, co), fan, rng));
      db_.push_back(model_detail::bias_init<T>(co, fan, rng));
      dg_.push_back(Tensor<T>::from({co}, std::vector<T>(co, T(1)), true));
      dbeta_.push_back(Tensor<T>::zeros({co}, true));
      c = co;
    }
    dbn_.resize(static_cast<std::size_t>(blocks_));
    for (int s = 0; s < blocks_; ++s)
      dbn_[static_cast<std::size_t>(s)].init(dg_[static_cast<std::size_t>(s)].dim(0));
    ow_ = model_detail::weight_init<T>(cfg_.coord_dim == 2 ? Shape{1, c, 1, 1} : Shape{1, c, 1},
                                       c, rng);
    ob_ = model_detail::bias_init<T>(1, c, rng);
  }

  const NioConfig& config() const { return cfg_; }
  int slots() const { return L_; }

  // (B, L, C, ...) -> (B, Nz) on the native grid; training toggles batchnorm
  Tensor<T> forward(Tensor<T> psi, bool training) {
    int rank = cfg_.branch == BranchKind::trace ? 4 : 5;
    if (psi.ndim() != rank)
      throw ShapeError(msg("measurement set must be ", rank, "D, got ", shape_str(psi.shape())));
    if (psi.dim(1) != L_)
      throw ShapeError(msg("encoder-decoder baseline is fixed to L=", L_, ", got set of ",
                           psi.dim(1)));
    int B = psi.dim(0);
    Shape merged{B, L_ * cfg_.channels};
    for (int d = 3; d < psi.ndim(); ++d) merged.push_back(psi.dim(d));
    Tensor<T> x = reshape(psi, merged);
    for (std::size_t s = 0; s < ew_.size(); ++s) {
      x = cfg_.branch == BranchKind::trace ? conv1d(x, ew_[s], 2, 2) : conv2d(x, ew_[s], 2, 1);
      x = leaky_relu(batch_norm(bias_add(x, eb_[s]), eg_[s], ebeta_[s], ebn_[s], training));
    }
    x = linear(reshape(x, {B, static_cast<int>(x.size()) / B}), fw_, fb_);
    Shape seeded{B};
    for (int d : seed_) seeded.push_back(d);
    x = reshape(x, seeded);
    for (int s = 0; s < blocks_; ++s) {
      std::size_t si = static_cast<std::size_t>(s);
      x = cfg_.coord_dim == 2 ? transposed_conv2d(x, dw_[si], 2, 1)
                              : transposed_conv1d(x, dw_[si], 2, 1);
      x = leaky_relu(batch_norm(bias_add(x, db_[si]), dg_[si], dbeta_[si], dbn_[si], training));
    }
    x = cfg_.coord_dim == 2 ? conv2d(x, ow_) : conv1d(x, ow_);
    x = bias_add(x, ob_);
    int n = cfg_.grid_n;
    if (cfg_.coord_dim == 2) {
      x = crop2d(x, 0, 0, n, n);
      return reshape(x, {B, n * n});
    }
    x = crop2d(reshape(x, {B, 1, 1, x.dim(2)}), 0, 0, 1, n);
    return reshape(x, {B, n});
  }

  template <class Sink>
  void collect(Sink&& sink) {
    for (std::size_t s = 0; s < ew_.size(); ++s) {
      std::string p = "enc" + std::to_string(s);
      sink(p + ".w", ew_[s]);
      sink(p + ".b", eb_[s]);
      sink(p + ".gamma", eg_[s]);
      sink(p + ".beta", ebeta_[s]);
    }
    sink("fc.w", fw_);
    sink("fc.b", fb_);
    for (std::size_t s = 0; s < dw_.size(); ++s) {
      std::string p = "dec" + std::to_string(s);
      sink(p + ".w", dw_[s]);
      sink(p + ".b", db_[s]);
      sink(p + ".gamma", dg_[s]);
      sink(p + ".beta", dbeta_[s]);
    }
    sink("out.w", ow_);
    sink("out.b", ob_);
  }

  std::vector<std::pair<std::string, Tensor<T>>> params() {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    collect([&](const std::string& name, Tensor<T>& t) { out.emplace_back(name, t); });
    return out;
  }

  // batchnorm running statistics; not parameters, but part of the model state
  template <class Sink>
  void collect_stats(Sink&& sink) {
    for (std::size_t s = 0; s < ebn_.size(); ++s) sink("enc" + std::to_string(s), ebn_[s]);
    for (std::size_t s = 0; s < dbn_.size(); ++s) sink("dec" + std::to_string(s), dbn_[s]);
  }

 private:
  Shape enc_kernel(int co, int ci) const {
    return cfg_.branch == BranchKind::trace ? Shape{co, ci, 5} : Shape{co, ci, 3, 3};
  }
  Shape dec_kernel(int ci, int co) const {
    return cfg_.coord_dim == 2 ? Shape{ci, co, 4, 4} : Shape{ci, co, 4};
  }

  NioConfig cfg_;
  int L_;
  int blocks_ = 0;
  Shape seed_;
  std::vector<Tensor<T>> ew_, eb_, eg_, ebeta_;
  std::vector<BatchNormState<T>> ebn_;
  Tensor<T> fw_, fb_;
  std::vector<Tensor<T>> dw_, db_, dg_, dbeta_;
  std::vector<BatchNormState<T>> dbn_;
  Tensor<T> ow_, ob_;
};

}  // namespace nio
