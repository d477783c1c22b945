// Training loop shared by all models: ADAM on a mean-absolute-error objective
// in scaled units, exponential learning-rate decay, early stopping on the
// validation median relative L1 error (computed in physical units), and
// optional randomized measurement subsampling per iteration. Two independent
// rng streams (shuffle, subsample) keep runs with subsampling disabled
// byte-identical to runs of a build without the feature.
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

#include "nio/adam.hpp"
#include "nio/checkpoint.hpp"
#include "nio/dataset.hpp"
#include "nio/metrics.hpp"
#include "nio/models.hpp"
#include "nio/rng.hpp"
#include "nio/scalers.hpp"

namespace nio {

struct TrainConfig {
  double lr = 1e-3;
  double gamma = 1.0;  // per-epoch multiplicative lr decay
  double weight_decay = 0.0;
  int batch = 32;
  int max_epochs = 200;
  int patience = 50;  // epochs without validation improvement before stopping
  std::uint64_t seed = 0;
  ScalerKind in_scaler = ScalerKind::minmax;
  ScalerKind out_scaler = ScalerKind::minmax;
  bool randomized_batching = false;

  void validate() const {
    if (!(lr > 0)) throw ConfigError(msg("lr=", lr, " must be positive"));
    if (!(gamma > 0) || gamma > 1.0) throw ConfigError(msg("gamma=", gamma, " outside (0,1]"));
    if (weight_decay < 0) throw ConfigError(msg("weight_decay=", weight_decay, " negative"));
    if (batch < 1) throw ConfigError(msg("batch=", batch, " must be >= 1"));
    if (max_epochs < 1) throw ConfigError(msg("max_epochs=", max_epochs, " must be >= 1"));
    if (patience < 1) throw ConfigError(msg("patience=", patience, " must be >= 1"));
  }
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0;
  double val_rel_l1 = 0;
  double lr = 0;
};

// invoked after every completed epoch, e.g. for progress logging
using EpochCallback = std::function<void(const EpochRecord&)>;

struct TrainResult {
  std::vector<EpochRecord> history;
  std::vector<int> lhat_draws;  // subsampled set sizes in draw order
  int best_epoch = 0;
  double best_val = 0;
  Scaler in_scaler, out_scaler;
  Checkpoint best;  // state at the best-validation epoch, scalers included
};

// ----------------------------------------------------- dataset-model plumbing

// model hyperparameters matched to a dataset header; everything else stays at
// the desk defaults
inline NioConfig default_nio_config(const DatasetHeader& h) {
  NioConfig c;
  c.coord_dim = h.problem == ProblemKind::rte ? 1 : 2;
  c.grid_n = static_cast<int>(h.n);
  c.k_max = std::min(12, c.grid_n / 2);
  if (h.meas_dims.size() == 1) {
    c.branch = BranchKind::trace;
    c.channels = 1;
    c.meas_shape = {static_cast<int>(h.meas_dims[0])};
  } else if (h.problem == ProblemKind::seismic) {
    c.branch = BranchKind::image;
    c.channels = 1;
    c.meas_shape = {static_cast<int>(h.meas_dims[0]), static_cast<int>(h.meas_dims[1])};
  } else {
    c.branch = BranchKind::trace;
    c.channels = static_cast<int>(h.meas_dims[0]);
    c.meas_shape = {static_cast<int>(h.meas_dims[1])};
  }
  return c;
}

inline void check_model_fits(const NioConfig& cfg, const DatasetHeader& h) {
  std::size_t ms = static_cast<std::size_t>(cfg.channels);
  for (int d : cfg.meas_shape) ms *= static_cast<std::size_t>(d);
  if (ms != h.meas_size())
    throw ConfigError(msg("model expects ", ms, " values per measurement, dataset has ",
                          h.meas_size()));
  int want_dim = h.problem == ProblemKind::rte ? 1 : 2;
  if (cfg.coord_dim != want_dim)
    throw ConfigError(msg("coord_dim=", cfg.coord_dim, " but the ",
                          problem_kind_name(h.problem), " coefficient lives in ", want_dim, "D"));
  if (cfg.grid_n != static_cast<int>(h.n))
    throw ConfigError(msg("model grid_n=", cfg.grid_n, " vs dataset n=", h.n));
}

// coordinate tensor and structured grid shape for a model's native grid
template <class T>
struct EvalGeometry {
  Tensor<T> z;
  Shape gshape;
};

template <class T>
EvalGeometry<T> native_geometry(const NioConfig& cfg) {
  if (cfg.coord_dim == 2)
    return {grid_coords<T>(cfg.grid_n, cfg.grid_n), {cfg.grid_n, cfg.grid_n}};
  return {line_coords<T>(cfg.grid_n), {cfg.grid_n}};
}

// (B, L, C, ...) scaled measurement sets for the given samples
template <class T>
Tensor<T> make_psi_batch(const InverseDataset& ds, const std::vector<std::size_t>& idx,
                         const NioConfig& cfg, const Scaler& sc) {
  int B = static_cast<int>(idx.size());
  Shape shape{B, static_cast<int>(ds.header.L), cfg.channels};
  for (int d : cfg.meas_shape) shape.push_back(d);
  std::size_t per = ds.header.L * ds.meas_size();
  if (shape_numel(shape) != idx.size() * per)
    throw ShapeError(msg("measurement layout ", shape_str(shape), " does not cover ", per,
                         " values per sample"));
  std::vector<T> v(idx.size() * per);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const float* src = ds.psi_of(idx[b]);
    T* dst = v.data() + b * per;
    for (std::size_t i = 0; i < per; ++i) dst[i] = static_cast<T>(sc.apply(src[i]));
  }
  return Tensor<T>::from(std::move(shape), std::move(v));
}

// (B, Nz) scaled coefficient targets
template <class T>
Tensor<T> make_target_batch(const InverseDataset& ds, const std::vector<std::size_t>& idx,
                            const Scaler& sc) {
  std::size_t nz = ds.coeff_size();
  std::vector<T> v(idx.size() * nz);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const float* src = ds.coeff_of(idx[b]);
    T* dst = v.data() + b * nz;
    for (std::size_t i = 0; i < nz; ++i) dst[i] = static_cast<T>(sc.apply(src[i]));
  }
  return Tensor<T>::from({static_cast<int>(idx.size()), static_cast<int>(nz)}, std::move(v));
}

// train-split extrema only; monotone pre-transforms let min/max stand in for
// the full value stream
inline Scaler fit_scaler(ScalerKind kind, const InverseDataset& ds,
                         const std::vector<std::size_t>& train_idx, bool inputs) {
  Scaler sc;
  sc.kind = kind;
  if (kind == ScalerKind::identity) {
    sc.fitted = true;
    return sc;
  }
  if (train_idx.empty()) throw ConfigError("scaler fit on an empty training split");
  float mn = std::numeric_limits<float>::infinity(), mx = -mn;
  for (std::size_t s : train_idx) {
    const float* p = inputs ? ds.psi_of(s) : ds.coeff_of(s);
    std::size_t len = inputs ? ds.header.L * ds.meas_size() : ds.coeff_size();
    for (std::size_t i = 0; i < len; ++i) {
      mn = std::min(mn, p[i]);
      mx = std::max(mx, p[i]);
    }
  }
  float mm[2] = {mn, mx};
  sc.fit(mm, mm + 2);
  return sc;
}

// ----------------------------------------------------------------- objective

// mean absolute error over all entries
template <class T>
Tensor<T> l1_loss(Tensor<T> pred, Tensor<T> target) {
  return mean_all(abs_t(sub(std::move(pred), std::move(target))));
}

// ---------------------------------------------------------------- evaluation

// per-sample relative errors in physical units. fwd(psi, training) maps a
// scaled measurement batch to scaled (B, Nz) predictions.
template <class T, class Fwd>
std::vector<double> evaluate_samples(const InverseDataset& ds, const std::vector<std::size_t>& idx,
                                     const NioConfig& cfg, const Scaler& in_sc,
                                     const Scaler& out_sc, int batch, Norm norm, Fwd&& fwd) {
  if (idx.empty()) throw ConfigError("no samples to evaluate");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  NoGrad ng;
  std::size_t nz = ds.coeff_size();
  std::vector<double> errs;
  errs.reserve(idx.size());
  std::vector<double> pred(nz);
  for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(batch)) {
    std::size_t stop = std::min(idx.size(), start + static_cast<std::size_t>(batch));
    std::vector<std::size_t> bidx(idx.begin() + start, idx.begin() + stop);
    Tensor<T> out = fwd(make_psi_batch<T>(ds, bidx, cfg, in_sc), false);
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

// --------------------------------------------------------------------- loop

// fwd(psi, training) -> scaled (B, Nz); capture(in, out) -> Checkpoint of the
// live model state. The caller restores the returned best checkpoint.
template <class T, class Fwd, class Capture>
TrainResult train_loop(std::vector<std::pair<std::string, Tensor<T>>> params,
                       const InverseDataset& ds, const NioConfig& model_cfg,
                       const TrainConfig& cfg, bool allow_subsample, Fwd&& fwd, Capture&& capture,
                       const EpochCallback& on_epoch = {}) {
  cfg.validate();
  check_model_fits(model_cfg, ds.header);
  if (cfg.randomized_batching && !allow_subsample)
    throw ConfigError("randomized measurement batching needs a size-flexible model");
  std::vector<std::size_t> train_idx = ds.indices_of(kSplitTrain);
  std::vector<std::size_t> val_idx = ds.indices_of(kSplitVal);
  if (train_idx.empty()) throw ConfigError("training split is empty");
  if (val_idx.empty()) throw ConfigError("validation split is empty");

  TrainResult res;
  res.in_scaler = fit_scaler(cfg.in_scaler, ds, train_idx, true);
  res.out_scaler = fit_scaler(cfg.out_scaler, ds, train_idx, false);

  AdamConfig ocfg;
  ocfg.lr = cfg.lr;
  ocfg.weight_decay = cfg.weight_decay;
  Adam<T> opt(std::move(params), ocfg);
  Rng shuffle_rng(derive_seed(cfg.seed, 1));
  Rng sub_rng(derive_seed(cfg.seed, 2));

  res.best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<std::size_t> order = train_idx;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double lr_e = cfg.lr * std::pow(cfg.gamma, epoch - 1);
    opt.set_lr(lr_e);
    shuffle_rng.shuffle(order);
    double loss_sum = 0;
    int nbatches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      std::vector<std::size_t> bidx(order.begin() + start, order.begin() + stop);
      Tensor<T> psi = make_psi_batch<T>(ds, bidx, model_cfg, res.in_scaler);
      Tensor<T> target = make_target_batch<T>(ds, bidx, res.out_scaler);
      if (allow_subsample && cfg.randomized_batching) {
        psi = randomized_subsample(psi, sub_rng);
        res.lhat_draws.push_back(psi.dim(1));
      }
      opt.zero_grad();
      Tensor<T> loss = l1_loss(fwd(psi, true), target);
      double lv = static_cast<double>(loss.item());
      if (!std::isfinite(lv))
        throw NumericError(msg("non-finite training loss at epoch ", epoch, ", batch ", nbatches));
      loss.backward();
      try {
        opt.step();
      } catch (const NumericError& e) {
        throw NumericError(msg("epoch ", epoch, ", batch ", nbatches, ": ", e.what()));
      }
      loss_sum += lv;
      ++nbatches;
    }
    double val_med =
        summarize(evaluate_samples<T>(ds, val_idx, model_cfg, res.in_scaler, res.out_scaler,
                                      cfg.batch, Norm::l1, fwd))
            .median;
    res.history.push_back({epoch, loss_sum / nbatches, val_med, lr_e});
    if (on_epoch) on_epoch(res.history.back());
    if (val_med < res.best_val) {
      res.best_val = val_med;
      res.best_epoch = epoch;
      res.best = capture(res.in_scaler, res.out_scaler);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return res;
}

// ----------------------------------------------------------------- wrappers

// set-to-function model; the only one that accepts randomized batching
template <class T>
TrainResult train_nio(NioModel<T>& model, const InverseDataset& ds, const TrainConfig& cfg,
                      const EpochCallback& on_epoch = {}) {
  if (ds.header.L < 2) throw ConfigError(msg("dataset has L=", ds.header.L, ", need >= 2"));
  EvalGeometry<T> geo = native_geometry<T>(model.config());
  auto fwd = [&](const Tensor<T>& psi, bool) { return model.forward(psi, geo.z, geo.gshape); };
  TrainResult r = train_loop<T>(
      model.params(), ds, model.config(), cfg, true, fwd,
      [&](const Scaler& si, const Scaler& so) {
        return make_checkpoint(model, static_cast<int>(ds.header.L), ds.header.problem, si, so);
      },
      on_epoch);
  restore_params(r.best, model);
  return r;
}

template <class T>
TrainResult train_donet(DonetModel<T>& model, const InverseDataset& ds, const TrainConfig& cfg,
                        const EpochCallback& on_epoch = {}) {
  if (model.slots() != static_cast<int>(ds.header.L))
    throw ConfigError(msg("model fixed to L=", model.slots(), ", dataset has L=", ds.header.L));
  if (cfg.randomized_batching)
    throw ConfigError("randomized measurement batching needs a size-flexible model");
  EvalGeometry<T> geo = native_geometry<T>(model.config());
  auto fwd = [&](const Tensor<T>& psi, bool) { return model.forward(psi, geo.z); };
  TrainResult r = train_loop<T>(
      model.params(), ds, model.config(), cfg, false, fwd,
      [&](const Scaler& si, const Scaler& so) {
        return make_checkpoint(model, ds.header.problem, si, so);
      },
      on_epoch);
  restore_params(r.best, model);
  return r;
}

template <class T>
TrainResult train_fcnn(FcnnModel<T>& model, const InverseDataset& ds, const TrainConfig& cfg,
                       const EpochCallback& on_epoch = {}) {
  if (model.slots() != static_cast<int>(ds.header.L))
    throw ConfigError(msg("model fixed to L=", model.slots(), ", dataset has L=", ds.header.L));
  if (cfg.randomized_batching)
    throw ConfigError("randomized measurement batching needs a size-flexible model");
  auto fwd = [&](const Tensor<T>& psi, bool training) { return model.forward(psi, training); };
  TrainResult r = train_loop<T>(
      model.params(), ds, model.config(), cfg, false, fwd,
      [&](const Scaler& si, const Scaler& so) {
        return make_checkpoint(model, ds.header.problem, si, so);
      },
      on_epoch);
  restore_params(r.best, model);
  return r;
}

// ------------------------------------------------------------------- report

inline void write_history_csv(const TrainResult& r, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError(msg("cannot open '", path, "' for writing"));
  f << "epoch,train_loss,val_rel_l1,lr\n";
  f << std::setprecision(12);
  for (const EpochRecord& e : r.history)
    f << e.epoch << ',' << e.train_loss << ',' << e.val_rel_l1 << ',' << e.lr << '\n';
  if (!f) throw FormatError(msg("short write to '", path, "'"));
}

}  // namespace nio
