// Robustness probes and ablation curves. Every sweep routes through one
// batched evaluator that perturbs raw measurements before scaling, so a
// disabled perturbation reproduces the plain evaluation byte for byte, and
// subsets drawn with the same seed coincide across models for fair
// head-to-head curves.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "nio/train.hpp"

namespace nio {

struct SweepPoint {
  double setting = 0;  // noise level, measurement count, grid size, ...
  ErrorSummary summary;
};
using SweepCurve = std::vector<SweepPoint>;

enum class NoiseKind { additive, multiplicative };

namespace sweep_detail {

// linear interpolation of a length-m trace at fractional node u; integer u
// returns the sample exactly
inline double interp_trace(const double* src, int m, double u, bool circular) {
  if (circular) {
    u = std::fmod(u, static_cast<double>(m));
    if (u < 0) u += m;
    int i0 = static_cast<int>(u);
    double f = u - i0;
    int i1 = (i0 + 1) % m;
    return src[i0] * (1.0 - f) + src[i1] * f;
  }
  if (u <= 0) return src[0];
  if (u >= m - 1) return src[m - 1];
  int i0 = static_cast<int>(u);
  double f = u - i0;
  return src[i0] * (1.0 - f) + src[i0 + 1] * f;
}

// index of the position closest to node (ties -> lower index)
inline std::size_t nearest_position(const std::vector<double>& pos, double node, int len,
                                    bool circular) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < pos.size(); ++j) {
    double d = std::abs(pos[j] - node);
    if (circular) d = std::min(d, len - d);
    if (d < bd) {
      bd = d;
      best = j;
    }
  }
  return best;
}

// ascending multiset of lhat measurement indices out of {0..L-1}; all L appear
// once before any index repeats
inline std::vector<int> draw_subset(Rng& rng, int L, int lhat) {
  if (lhat < 1) throw ConfigError(msg("measurement subset size ", lhat, " < 1"));
  std::vector<int> out;
  if (lhat <= L) {
    out = rng.sample_without_replacement(L, lhat);
  } else {
    out.resize(static_cast<std::size_t>(lhat));
    for (int i = 0; i < L; ++i) out[static_cast<std::size_t>(i)] = i;
    for (int i = L; i < lhat; ++i)
      out[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_int(0, L - 1));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// trace geometry of a model input: channels x positions per measurement
struct TraceLayout {
  int channels = 1;
  int len = 0;
  bool circular = true;
};

inline TraceLayout trace_layout(const NioConfig& cfg, ProblemKind problem) {
  if (cfg.meas_shape.size() != 1)
    throw ConfigError("sweep needs trace measurements, not images");
  if (cfg.meas_shape[0] < 2) throw ConfigError("sweep needs traces with at least two nodes");
  return {cfg.channels, cfg.meas_shape[0], problem != ProblemKind::rte};
}

}  // namespace sweep_detail

// --------------------------------------------------------------- evaluator

// xf(sample, src, dst) maps one raw measurement set (eval-dataset layout) to
// slots x model-input values; predictions are scored against the eval
// dataset's coefficients in physical units
template <class T, class Fwd, class Xform>
std::vector<double> evaluate_transformed(const InverseDataset& ds,
                                         const std::vector<std::size_t>& idx, const NioConfig& cfg,
                                         const Scaler& in_sc, const Scaler& out_sc, int slots,
                                         int batch, Norm norm, Fwd&& fwd, Xform&& xf) {
  if (idx.empty()) throw ConfigError("no samples to evaluate");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (slots < 1) throw ConfigError("need at least one measurement slot");
  NoGrad ng;
  std::size_t per_slot = static_cast<std::size_t>(cfg.channels);
  for (int d : cfg.meas_shape) per_slot *= static_cast<std::size_t>(d);
  std::size_t per = static_cast<std::size_t>(slots) * per_slot;
  std::size_t nz = ds.coeff_size();
  std::vector<double> errs;
  errs.reserve(idx.size());
  std::vector<double> raw(per), pred(nz);
  for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(batch)) {
    std::size_t stop = std::min(idx.size(), start + static_cast<std::size_t>(batch));
    std::vector<std::size_t> bidx(idx.begin() + start, idx.begin() + stop);
    Shape shape{static_cast<int>(bidx.size()), slots, cfg.channels};
    for (int d : cfg.meas_shape) shape.push_back(d);
    std::vector<T> v(bidx.size() * per);
    for (std::size_t b = 0; b < bidx.size(); ++b) {
      xf(bidx[b], ds.psi_of(bidx[b]), raw.data());
      T* dst = v.data() + b * per;
      for (std::size_t i = 0; i < per; ++i) dst[i] = static_cast<T>(in_sc.apply(raw[i]));
    }
    Tensor<T> out = fwd(Tensor<T>::from(std::move(shape), std::move(v)), false);
    if (out.ndim() != 2 || out.dim(0) != static_cast<int>(bidx.size()) ||
        out.dim(1) != static_cast<int>(nz))
      throw ShapeError(msg("prediction shape ", shape_str(out.shape()), ", expected (",
                           bidx.size(), ",", nz, ")"));
    for (std::size_t b = 0; b < bidx.size(); ++b) {
      const T* row = out.data().data() + b * nz;
      for (std::size_t i = 0; i < nz; ++i) pred[i] = out_sc.invert(static_cast<double>(row[i]));
      errs.push_back(relative_error(pred.data(), ds.coeff_of(bidx[b]), nz, norm));
    }
  }
  return errs;
}

// ------------------------------------------------------------------- noise

// gaussian measurement noise in physical units; additive noise is scaled by
// the per-sample rms so levels read as relative magnitudes. level 0 skips the
// rng entirely and matches the plain evaluation bit for bit.
template <class T, class Fwd>
SweepCurve noise_sweep(const InverseDataset& ds, const std::vector<std::size_t>& idx,
                       const NioConfig& cfg, const Scaler& in_sc, const Scaler& out_sc, int batch,
                       Norm norm, const std::vector<double>& levels, NoiseKind kind,
                       std::uint64_t seed, Fwd&& fwd) {
  std::size_t per = ds.header.L * ds.meas_size();
  int slots = static_cast<int>(ds.header.L);
  SweepCurve curve;
  for (std::size_t li = 0; li < levels.size(); ++li) {
    double eps = levels[li];
    if (!(eps >= 0)) throw ConfigError(msg("noise level ", eps, " < 0"));
    std::vector<double> errs;
    if (eps == 0) {
      auto ident = [&](std::size_t, const float* src, double* dst) {
        for (std::size_t i = 0; i < per; ++i) dst[i] = static_cast<double>(src[i]);
      };
      errs = evaluate_transformed<T>(ds, idx, cfg, in_sc, out_sc, slots, batch, norm, fwd, ident);
    } else {
      Rng rng(derive_seed(seed, li));
      auto noisy = [&](std::size_t, const float* src, double* dst) {
        if (kind == NoiseKind::additive) {
          double ss = 0;
          for (std::size_t i = 0; i < per; ++i) ss += static_cast<double>(src[i]) * src[i];
          double amp = eps * std::sqrt(ss / static_cast<double>(per));
          for (std::size_t i = 0; i < per; ++i) dst[i] = src[i] + amp * rng.normal();
        } else {
          for (std::size_t i = 0; i < per; ++i) dst[i] = src[i] * (1.0 + eps * rng.normal());
        }
      };
      errs = evaluate_transformed<T>(ds, idx, cfg, in_sc, out_sc, slots, batch, norm, fwd, noisy);
    }
    curve.push_back({eps, summarize(errs)});
  }
  return curve;
}

// ------------------------------------------------------------- measurement count

// one random size-lhat subset per sample per setting, fed to a set-to-function
// model directly; lhat = L keeps the full set, so that point equals the plain
// evaluation bit for bit
template <class T, class Fwd>
SweepCurve num_inputs_sweep(const InverseDataset& ds, const std::vector<std::size_t>& idx,
                            const NioConfig& cfg, const Scaler& in_sc, const Scaler& out_sc,
                            int batch, Norm norm, const std::vector<int>& lhats,
                            std::uint64_t seed, Fwd&& fwd) {
  std::size_t ms = ds.meas_size();
  int L = static_cast<int>(ds.header.L);
  SweepCurve curve;
  for (int lhat : lhats) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(lhat)));
    auto subset = [&](std::size_t, const float* src, double* dst) {
      std::vector<int> pick = sweep_detail::draw_subset(rng, L, lhat);
      for (std::size_t s = 0; s < pick.size(); ++s) {
        const float* from = src + static_cast<std::size_t>(pick[s]) * ms;
        double* to = dst + s * ms;
        for (std::size_t i = 0; i < ms; ++i) to[i] = static_cast<double>(from[i]);
      }
    };
    auto errs = evaluate_transformed<T>(ds, idx, cfg, in_sc, out_sc, lhat, batch, norm, fwd,
                                        subset);
    curve.push_back({static_cast<double>(lhat), summarize(errs)});
  }
  return curve;
}

// same subsets as num_inputs_sweep under the same seed, expanded back to all L
// slots for fixed-size models: each slot takes its nearest kept measurement
// (index distance, ties toward the lower index)
template <class T, class Fwd>
SweepCurve num_inputs_sweep_fixed(const InverseDataset& ds, const std::vector<std::size_t>& idx,
                                  const NioConfig& cfg, const Scaler& in_sc, const Scaler& out_sc,
                                  int batch, Norm norm, const std::vector<int>& lhats,
                                  std::uint64_t seed, Fwd&& fwd) {
  std::size_t ms = ds.meas_size();
  int L = static_cast<int>(ds.header.L);
  SweepCurve curve;
  for (int lhat : lhats) {
    if (lhat > L)
      throw ConfigError(msg("fixed-size model cannot take ", lhat, " of ", L, " measurements"));
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(lhat)));
    auto replicate = [&](std::size_t, const float* src, double* dst) {
      std::vector<int> pick = sweep_detail::draw_subset(rng, L, lhat);
      for (int s = 0; s < L; ++s) {
        int best = pick[0];
        for (int j : pick)
          if (std::abs(j - s) < std::abs(best - s)) best = j;
        const float* from = src + static_cast<std::size_t>(best) * ms;
        double* to = dst + static_cast<std::size_t>(s) * ms;
        for (std::size_t i = 0; i < ms; ++i) to[i] = static_cast<double>(from[i]);
      }
    };
    auto errs = evaluate_transformed<T>(ds, idx, cfg, in_sc, out_sc, L, batch, norm, fwd,
                                        replicate);
    curve.push_back({static_cast<double>(lhat), summarize(errs)});
  }
  return curve;
}

// -------------------------------------------------------------- resolution

// score a model on a dataset regenerated at another grid size: traces are
// linearly resampled onto the trained measurement layout and predictions are
// requested at the new grid through fwd. the same grid size reproduces the
// plain evaluation bit for bit.
template <class T, class Fwd>
SweepPoint resolution_eval(const InverseDataset& alt, const std::vector<std::size_t>& idx,
                           const NioConfig& cfg, const Scaler& in_sc, const Scaler& out_sc,
                           int batch, Norm norm, Fwd&& fwd) {
  sweep_detail::TraceLayout lay = sweep_detail::trace_layout(cfg, alt.header.problem);
  const auto& md = alt.header.meas_dims;
  int src_ch = md.size() == 2 ? md[0] : 1;
  int src_len = md.empty() ? 0 : md.back();
  if (md.size() > 2 || src_ch != lay.channels)
    throw ConfigError(msg("dataset measurements have ", src_ch, " channels, model expects ",
                          lay.channels));
  int slots = static_cast<int>(alt.header.L);
  std::size_t per_slot = static_cast<std::size_t>(src_ch) * src_len;
  double step = static_cast<double>(src_len) / lay.len;
  std::vector<double> trace(static_cast<std::size_t>(src_len));
  auto resample = [&](std::size_t, const float* src, double* dst) {
    for (int l = 0; l < slots; ++l)
      for (int c = 0; c < lay.channels; ++c) {
        const float* from = src + static_cast<std::size_t>(l) * per_slot +
                            static_cast<std::size_t>(c) * src_len;
        for (int i = 0; i < src_len; ++i) trace[static_cast<std::size_t>(i)] = from[i];
        double* to = dst + (static_cast<std::size_t>(l) * lay.channels + c) * lay.len;
        double scale = lay.circular ? step : static_cast<double>(src_len - 1) / (lay.len - 1);
        for (int i = 0; i < lay.len; ++i)
          to[i] = sweep_detail::interp_trace(trace.data(), src_len, i * scale, lay.circular);
      }
  };
  auto errs =
      evaluate_transformed<T>(alt, idx, cfg, in_sc, out_sc, slots, batch, norm, fwd, resample);
  return {static_cast<double>(alt.header.n), summarize(errs)};
}

// ----------------------------------------------------------------- sensors

// evaluate with measurements read off an arbitrary sensor layout: sensor
// values are interpolated from the stored trace, then snapped back onto the
// trained layout by nearest sensor. positions are in node units [0, len).
template <class T, class Fwd>
std::vector<double> sensor_eval_at(const InverseDataset& ds, const std::vector<std::size_t>& idx,
                                   const NioConfig& cfg, const Scaler& in_sc,
                                   const Scaler& out_sc, int batch, Norm norm,
                                   const std::vector<double>& positions, Fwd&& fwd) {
  sweep_detail::TraceLayout lay = sweep_detail::trace_layout(cfg, ds.header.problem);
  if (positions.empty()) throw ConfigError("sensor layout is empty");
  for (double u : positions)
    if (!(u >= 0 && u < lay.len)) throw ConfigError(msg("sensor position ", u, " outside [0,",
                                                        lay.len, ")"));
  if (ds.meas_size() != static_cast<std::size_t>(lay.channels) * lay.len)
    throw ConfigError("sensor sweep needs the dataset and model on one trace layout");
  int slots = static_cast<int>(ds.header.L);
  std::vector<std::size_t> snap(static_cast<std::size_t>(lay.len));
  for (int i = 0; i < lay.len; ++i)
    snap[static_cast<std::size_t>(i)] =
        sweep_detail::nearest_position(positions, static_cast<double>(i), lay.len, lay.circular);
  std::vector<double> trace(static_cast<std::size_t>(lay.len));
  std::vector<double> at_sensors(positions.size());
  auto remap = [&](std::size_t, const float* src, double* dst) {
    for (int l = 0; l < slots; ++l)
      for (int c = 0; c < lay.channels; ++c) {
        const float* from =
            src + (static_cast<std::size_t>(l) * lay.channels + c) * lay.len;
        for (int i = 0; i < lay.len; ++i) trace[static_cast<std::size_t>(i)] = from[i];
        for (std::size_t j = 0; j < positions.size(); ++j)
          at_sensors[j] =
              sweep_detail::interp_trace(trace.data(), lay.len, positions[j], lay.circular);
        double* to = dst + (static_cast<std::size_t>(l) * lay.channels + c) * lay.len;
        for (int i = 0; i < lay.len; ++i) to[i] = at_sensors[snap[static_cast<std::size_t>(i)]];
      }
  };
  return evaluate_transformed<T>(ds, idx, cfg, in_sc, out_sc, slots, batch, norm, fwd, remap);
}

// one uniform random layout per sensor count, shared by all samples
template <class T, class Fwd>
SweepCurve sensor_sweep(const InverseDataset& ds, const std::vector<std::size_t>& idx,
                        const NioConfig& cfg, const Scaler& in_sc, const Scaler& out_sc,
                        int batch, Norm norm, const std::vector<int>& counts, std::uint64_t seed,
                        Fwd&& fwd) {
  sweep_detail::TraceLayout lay = sweep_detail::trace_layout(cfg, ds.header.problem);
  SweepCurve curve;
  for (std::size_t ci = 0; ci < counts.size(); ++ci) {
    if (counts[ci] < 1) throw ConfigError(msg("sensor count ", counts[ci], " < 1"));
    Rng rng(derive_seed(seed, ci));
    std::vector<double> pos(static_cast<std::size_t>(counts[ci]));
    for (double& u : pos) u = rng.uniform() * lay.len;
    std::sort(pos.begin(), pos.end());
    auto errs = sensor_eval_at<T>(ds, idx, cfg, in_sc, out_sc, batch, norm, pos, fwd);
    curve.push_back({static_cast<double>(counts[ci]), summarize(errs)});
  }
  return curve;
}

// ---------------------------------------------------------------- ablations

// a trained model packaged for head-to-head curves
template <class T>
struct SweepModel {
  std::string label;
  NioConfig cfg;
  Scaler in_scaler, out_scaler;
  std::function<Tensor<T>(const Tensor<T>&, bool)> fwd;
};

// error-vs-measurement-count curves over a shared subset draw, so every model
// sees exactly the same degraded inputs
template <class T>
std::vector<std::pair<std::string, SweepCurve>> ablation_curves(
    const InverseDataset& ds, const std::vector<std::size_t>& idx,
    const std::vector<SweepModel<T>>& models, const std::vector<int>& lhats, int batch, Norm norm,
    std::uint64_t seed) {
  if (models.empty()) throw ConfigError("no models to compare");
  std::vector<std::pair<std::string, SweepCurve>> out;
  for (const auto& m : models)
    out.emplace_back(m.label, num_inputs_sweep<T>(ds, idx, m.cfg, m.in_scaler, m.out_scaler,
                                                  batch, norm, lhats, seed, m.fwd));
  return out;
}

// ------------------------------------------------------------------- report

inline void write_sweep_csv(const SweepCurve& curve, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError(msg("cannot open '", path, "' for writing"));
  f << "setting,median,q25,q75,n\n" << std::setprecision(12);
  for (const auto& p : curve)
    f << p.setting << ',' << p.summary.median << ',' << p.summary.q25 << ',' << p.summary.q75
      << ',' << p.summary.n << '\n';
  if (!f) throw FormatError(msg("short write to '", path, "'"));
}

inline void write_ablation_csv(const std::vector<std::pair<std::string, SweepCurve>>& curves,
                               const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError(msg("cannot open '", path, "' for writing"));
  f << "model,setting,median,q25,q75,n\n" << std::setprecision(12);
  for (const auto& [label, curve] : curves)
    for (const auto& p : curve)
      f << label << ',' << p.setting << ',' << p.summary.median << ',' << p.summary.q25 << ','
        << p.summary.q75 << ',' << p.summary.n << '\n';
  if (!f) throw FormatError(msg("short write to '", path, "'"));
}

}  // namespace nio
