// checkpoints and the training loop
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "nio/checkpoint.hpp"
#include "nio/train.hpp"

using namespace nio;

namespace {

NioConfig tiny_cfg() {
  NioConfig c;
  c.p = 8;
  c.trunk_layers = 2;
  c.trunk_width = 10;
  c.d_v = 3;
  c.fno_layers = 1;
  c.k_max = 2;
  c.coord_dim = 2;
  c.branch = BranchKind::trace;
  c.channels = 1;
  c.meas_shape = {10};
  c.grid_n = 8;
  return c;
}

// 24 samples on an 8x8 grid, 4 traces of 10 points each; 16/4/4 split
InverseDataset tiny_ds(std::uint64_t seed = 123) {
  InverseDataset ds;
  ds.header.problem = ProblemKind::calderon;
  ds.header.n = 8;
  ds.header.L = 4;
  ds.header.meas_dims = {10};
  ds.header.count = 24;
  ds.header.seed = seed;
  Rng rng(seed);
  ds.psi.resize(24 * 4 * 10);
  for (auto& x : ds.psi) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  ds.coeff.resize(24 * 64);
  for (auto& x : ds.coeff) x = static_cast<float>(1.0 + 0.5 * rng.uniform(-1.0, 1.0));
  ds.split.assign(24, kSplitTrain);
  for (int i = 16; i < 20; ++i) ds.split[static_cast<std::size_t>(i)] = kSplitVal;
  for (int i = 20; i < 24; ++i) ds.split[static_cast<std::size_t>(i)] = kSplitTest;
  ds.validate();
  return ds;
}

TrainConfig quick_train(int epochs) {
  TrainConfig c;
  c.lr = 1e-3;
  c.gamma = 0.9;
  c.batch = 8;
  c.max_epochs = epochs;
  c.patience = 50;
  c.seed = 5;
  c.in_scaler = ScalerKind::minmax;
  c.out_scaler = ScalerKind::minmax;
  return c;
}

Scaler fitted(ScalerKind kind, std::initializer_list<double> vals) {
  Scaler sc;
  sc.kind = kind;
  std::vector<double> v(vals);
  sc.fit(v.begin(), v.end());
  return sc;
}

bool same_values(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

template <class T>
bool same_tensor(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

std::vector<char> file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(static_cast<bool>(f));
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

// ------------------------------------------------------------ model plumbing

TEST_CASE("default model configuration follows the dataset header") {
  DatasetHeader h;
  h.problem = ProblemKind::calderon;
  h.n = 32;
  h.L = 20;
  h.meas_dims = {33};
  NioConfig c = default_nio_config(h);
  CHECK(c.coord_dim == 2);
  CHECK(c.grid_n == 32);
  CHECK(c.k_max == 12);
  CHECK(c.branch == BranchKind::trace);
  CHECK(c.channels == 1);
  CHECK(c.meas_shape == std::vector<int>{33});
  c.validate();

  h.problem = ProblemKind::heart_lungs;
  h.meas_dims = {2, 32};
  c = default_nio_config(h);
  CHECK(c.channels == 2);
  CHECK(c.meas_shape == std::vector<int>{32});
  CHECK(c.branch == BranchKind::trace);

  h.problem = ProblemKind::rte;
  h.n = 40;
  h.meas_dims = {40};
  c = default_nio_config(h);
  CHECK(c.coord_dim == 1);
  CHECK(c.k_max == 12);

  h.problem = ProblemKind::seismic;
  h.n = 32;
  h.meas_dims = {16, 32};
  c = default_nio_config(h);
  CHECK(c.branch == BranchKind::image);
  CHECK(c.channels == 1);
  CHECK(c.meas_shape == std::vector<int>{16, 32});

  h.problem = ProblemKind::calderon;
  h.n = 16;
  h.meas_dims = {17};
  CHECK(default_nio_config(h).k_max == 8);  // capped at the Nyquist range
}

TEST_CASE("model-dataset compatibility checks") {
  InverseDataset ds = tiny_ds();
  NioConfig c = tiny_cfg();
  check_model_fits(c, ds.header);

  NioConfig wrong = c;
  wrong.meas_shape = {11};
  CHECK_THROWS_AS(check_model_fits(wrong, ds.header), ConfigError);
  wrong = c;
  wrong.grid_n = 16;
  wrong.meas_shape = {10};
  CHECK_THROWS_AS(check_model_fits(wrong, ds.header), ConfigError);
  wrong = c;
  wrong.coord_dim = 1;
  CHECK_THROWS_AS(check_model_fits(wrong, ds.header), ConfigError);
}

TEST_CASE("mean absolute error value and gradient") {
  Tensor<float> pred = Tensor<float>::from({2}, {1.0f, -2.0f}, true);
  Tensor<float> target = Tensor<float>::from({2}, {0.0f, 0.0f});
  Tensor<float> loss = l1_loss(pred, target);
  CHECK(loss.item() == doctest::Approx(1.5).epsilon(1e-7));
  loss.backward();
  CHECK(pred.grad()[0] == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(pred.grad()[1] == doctest::Approx(-0.5).epsilon(1e-7));
}

TEST_CASE("measurement and target batches are scaled copies in layout order") {
  InverseDataset ds = tiny_ds();
  NioConfig c = tiny_cfg();
  Scaler ident = fitted(ScalerKind::identity, {0.0});
  std::vector<std::size_t> idx{2, 5};

  Tensor<float> psi = make_psi_batch<float>(ds, idx, c, ident);
  CHECK(psi.shape() == Shape{2, 4, 1, 10});
  for (std::size_t b = 0; b < 2; ++b)
    for (int l = 0; l < 4; ++l)
      for (int p = 0; p < 10; ++p)
        CHECK(psi.data()[(b * 4 + static_cast<std::size_t>(l)) * 10 + static_cast<std::size_t>(p)] ==
              ds.psi_of(idx[b])[l * 10 + p]);

  Tensor<float> a = make_target_batch<float>(ds, idx, ident);
  CHECK(a.shape() == Shape{2, 64});
  for (int i = 0; i < 64; ++i) CHECK(a.data()[64 + static_cast<std::size_t>(i)] == ds.coeff_of(5)[i]);

  Scaler mm = fitted(ScalerKind::minmax, {0.0, 2.0});
  Tensor<float> scaled = make_target_batch<float>(ds, idx, mm);
  CHECK(scaled.data()[0] ==
        doctest::Approx(ds.coeff_of(2)[0] - 1.0).epsilon(1e-6));  // 2(x-0)/2 - 1
}

TEST_CASE("scaler fitting sees only the given samples") {
  InverseDataset ds = tiny_ds();
  ds.coeff_of(16)[0] = 50.0f;  // validation sample far outside the train range
  Scaler sc = fit_scaler(ScalerKind::minmax, ds, ds.indices_of(kSplitTrain), false);
  CHECK(sc.hi <= 1.5);
  CHECK(sc.lo >= 0.5);
  Scaler leaky = fit_scaler(ScalerKind::minmax, ds, ds.indices_of(kSplitVal), false);
  CHECK(leaky.hi == 50.0);
  Scaler ins = fit_scaler(ScalerKind::minmax, ds, ds.indices_of(kSplitTrain), true);
  CHECK(ins.lo >= -1.0);
  CHECK(ins.hi <= 1.0);
  CHECK_THROWS_AS(fit_scaler(ScalerKind::minmax, ds, {}, false), ConfigError);
}

TEST_CASE("per-sample evaluation inverts the output scaling") {
  InverseDataset ds = tiny_ds();
  NioConfig c = tiny_cfg();
  Scaler ident = fitted(ScalerKind::identity, {0.0});
  std::vector<std::size_t> idx = ds.indices_of(kSplitTest);

  std::size_t cursor = 0;
  auto doubled = [&](const Tensor<float>& psi, bool) {
    int B = psi.dim(0);
    std::vector<float> v(static_cast<std::size_t>(B) * 64);
    for (int b = 0; b < B; ++b) {
      const float* a = ds.coeff_of(idx[cursor + static_cast<std::size_t>(b)]);
      for (int i = 0; i < 64; ++i) v[static_cast<std::size_t>(b) * 64 + static_cast<std::size_t>(i)] = 2.0f * a[i];
    }
    cursor += static_cast<std::size_t>(B);
    return Tensor<float>::from({B, 64}, std::move(v));
  };
  std::vector<double> errs =
      evaluate_samples<float>(ds, idx, c, ident, ident, 3, Norm::l1, doubled);
  REQUIRE(errs.size() == 4);
  for (double e : errs) CHECK(e == doctest::Approx(1.0).epsilon(1e-12));

  cursor = 0;
  auto exact = [&](const Tensor<float>& psi, bool) {
    int B = psi.dim(0);
    std::vector<float> v(static_cast<std::size_t>(B) * 64);
    for (int b = 0; b < B; ++b) {
      const float* a = ds.coeff_of(idx[cursor + static_cast<std::size_t>(b)]);
      for (int i = 0; i < 64; ++i) v[static_cast<std::size_t>(b) * 64 + static_cast<std::size_t>(i)] = a[i];
    }
    cursor += static_cast<std::size_t>(B);
    return Tensor<float>::from({B, 64}, std::move(v));
  };
  errs = evaluate_samples<float>(ds, idx, c, ident, ident, 3, Norm::l2, exact);
  for (double e : errs) CHECK(e == 0.0);
}

// ---------------------------------------------------------------- checkpoints

TEST_CASE("checkpoint round trip preserves every tensor bit for bit") {
  Rng rng(31);
  NioModel<float> model(tiny_cfg(), rng);
  Scaler in = fitted(ScalerKind::minmax, {-1.0, 1.0});
  Scaler out = fitted(ScalerKind::log_minmax, {0.5, 1.5});
  Checkpoint ck = make_checkpoint(model, 4, ProblemKind::calderon, in, out);
  save_checkpoint(ck, "tmp_ck_nio.nioc");
  Checkpoint lk = load_checkpoint("tmp_ck_nio.nioc");

  CHECK(lk.kind == ModelKind::nio);
  CHECK(lk.problem == ProblemKind::calderon);
  CHECK(lk.slots == 4);
  CHECK(lk.config.p == 8);
  CHECK(lk.config.d_v == 3);
  CHECK(lk.config.meas_shape == std::vector<int>{10});
  CHECK(lk.config.mixing);
  CHECK(lk.in_scaler.kind == ScalerKind::minmax);
  CHECK(lk.in_scaler.lo == in.lo);
  CHECK(lk.in_scaler.hi == in.hi);
  CHECK(lk.in_scaler.fitted);
  CHECK(lk.out_scaler.kind == ScalerKind::log_minmax);
  CHECK(lk.out_scaler.lo == out.lo);
  CHECK(lk.out_scaler.hi == out.hi);

  REQUIRE(lk.tensors.size() == ck.tensors.size());
  for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
    CHECK(lk.tensors[i].name == ck.tensors[i].name);
    CHECK(lk.tensors[i].shape == ck.tensors[i].shape);
    CHECK(lk.tensors[i].precision == 0);
    CHECK(same_values(lk.tensors[i].values, ck.tensors[i].values));
  }
  CHECK(lk.find("trunk.w0") != nullptr);
  CHECK(lk.find("no-such") == nullptr);
}

TEST_CASE("checkpoint rebuilds a model with identical outputs") {
  Rng rng(37);
  NioModel<float> model(tiny_cfg(), rng);
  Checkpoint ck = make_checkpoint(model, 4, ProblemKind::calderon,
                                  fitted(ScalerKind::identity, {0.0}),
                                  fitted(ScalerKind::identity, {0.0}));
  save_checkpoint(ck, "tmp_ck_rebuild.nioc");
  NioModel<float> twin = build_nio<float>(load_checkpoint("tmp_ck_rebuild.nioc"));

  Rng drng(99);
  std::vector<float> pv(2 * 3 * 1 * 10);
  for (auto& x : pv) x = static_cast<float>(drng.uniform(-1.0, 1.0));
  Tensor<float> psi = Tensor<float>::from({2, 3, 1, 10}, std::move(pv));
  EvalGeometry<float> geo = native_geometry<float>(model.config());
  NoGrad ng;
  CHECK(same_tensor(model.forward(psi, geo.z, geo.gshape), twin.forward(psi, geo.z, geo.gshape)));
}

TEST_CASE("fcnn checkpoint carries batchnorm running statistics") {
  Rng rng(41);
  FcnnModel<float> model(tiny_cfg(), 4, rng);
  Rng drng(17);
  std::vector<float> pv(6 * 4 * 1 * 10);
  for (auto& x : pv) x = static_cast<float>(drng.uniform(-1.0, 1.0));
  Tensor<float> psi = Tensor<float>::from({6, 4, 1, 10}, std::move(pv));
  {
    NoGrad ng;
    model.forward(psi, true);  // move the running statistics off their defaults
  }
  Checkpoint ck = make_checkpoint(model, ProblemKind::calderon,
                                  fitted(ScalerKind::identity, {0.0}),
                                  fitted(ScalerKind::identity, {0.0}));
  CHECK(ck.find("stats.enc0.mean") != nullptr);
  CHECK(ck.find("stats.dec0.var") != nullptr);
  save_checkpoint(ck, "tmp_ck_fcnn.nioc");
  FcnnModel<float> twin = build_fcnn<float>(load_checkpoint("tmp_ck_fcnn.nioc"));
  NoGrad ng;
  CHECK(same_tensor(model.forward(psi, false), twin.forward(psi, false)));
}

TEST_CASE("donet checkpoint round trips") {
  Rng rng(43);
  DonetModel<float> model(tiny_cfg(), 4, rng);
  Checkpoint ck = make_checkpoint(model, ProblemKind::calderon,
                                  fitted(ScalerKind::identity, {0.0}),
                                  fitted(ScalerKind::identity, {0.0}));
  save_checkpoint(ck, "tmp_ck_donet.nioc");
  Checkpoint lk = load_checkpoint("tmp_ck_donet.nioc");
  CHECK(lk.kind == ModelKind::donet);
  CHECK(lk.slots == 4);
  DonetModel<float> twin = build_donet<float>(lk);

  Rng drng(3);
  std::vector<float> pv(2 * 4 * 1 * 10);
  for (auto& x : pv) x = static_cast<float>(drng.uniform(-1.0, 1.0));
  Tensor<float> psi = Tensor<float>::from({2, 4, 1, 10}, std::move(pv));
  EvalGeometry<float> geo = native_geometry<float>(model.config());
  NoGrad ng;
  CHECK(same_tensor(model.forward(psi, geo.z), twin.forward(psi, geo.z)));
}

TEST_CASE("checkpoint loader rejects corrupted files") {
  std::vector<char> good = file_bytes("tmp_ck_nio.nioc");

  std::vector<char> truncated(good.begin(), good.begin() + static_cast<long>(good.size() / 2));
  write_bytes("tmp_ck_bad.nioc", truncated);
  CHECK_THROWS_AS(load_checkpoint("tmp_ck_bad.nioc"), FormatError);

  std::vector<char> magic = good;
  magic[0] = 'X';
  write_bytes("tmp_ck_bad.nioc", magic);
  CHECK_THROWS_AS(load_checkpoint("tmp_ck_bad.nioc"), FormatError);

  std::vector<char> version = good;
  std::uint32_t v99 = 99;
  std::memcpy(version.data() + 4, &v99, 4);
  write_bytes("tmp_ck_bad.nioc", version);
  CHECK_THROWS_AS(load_checkpoint("tmp_ck_bad.nioc"), FormatError);

  std::vector<char> trailing = good;
  trailing.push_back('\0');
  write_bytes("tmp_ck_bad.nioc", trailing);
  CHECK_THROWS_AS(load_checkpoint("tmp_ck_bad.nioc"), FormatError);

  std::vector<char> degenerate = good;
  std::uint32_t zero = 0;
  std::memcpy(degenerate.data() + 16, &zero, 4);  // p = 0 fails config validation
  write_bytes("tmp_ck_bad.nioc", degenerate);
  CHECK_THROWS_AS(load_checkpoint("tmp_ck_bad.nioc"), FormatError);

  CHECK_THROWS_AS(load_checkpoint("tmp_ck_missing.nioc"), FormatError);
}

TEST_CASE("restore requires exact name and shape agreement") {
  Rng rng(47);
  NioModel<float> model(tiny_cfg(), rng);
  Checkpoint ck = make_checkpoint(model, 4, ProblemKind::calderon,
                                  fitted(ScalerKind::identity, {0.0}),
                                  fitted(ScalerKind::identity, {0.0}));

  Checkpoint renamed = ck;
  renamed.tensors[0].name = "nope";
  CHECK_THROWS_AS(restore_params(renamed, model), FormatError);

  Checkpoint extra = ck;
  TensorBlob stray;
  stray.name = "stray";
  stray.shape = {1};
  stray.values = {1.0};
  extra.tensors.push_back(stray);
  CHECK_THROWS_AS(restore_params(extra, model), FormatError);

  Checkpoint reshaped = ck;
  for (TensorBlob& b : reshaped.tensors)
    if (b.name == "lift.d") {
      b.shape = {4};
      b.values = {1, 2, 3, 4};
    }
  CHECK_THROWS_AS(restore_params(reshaped, model), FormatError);

  CHECK_THROWS_AS(build_donet<float>(ck), FormatError);
  CHECK_THROWS_AS(build_fcnn<float>(ck), FormatError);
}

TEST_CASE("model kind names parse") {
  CHECK(model_kind_from("nio") == ModelKind::nio);
  CHECK(model_kind_from("nio-nomix") == ModelKind::nio);
  CHECK(model_kind_from("donet") == ModelKind::donet);
  CHECK(model_kind_from("fcnn") == ModelKind::fcnn);
  CHECK_THROWS_AS(model_kind_from("mlp"), ConfigError);
  CHECK(std::string(model_kind_name(ModelKind::fcnn)) == "fcnn");
}

TEST_CASE("double-precision payload round trips") {
  Checkpoint ck;
  ck.config = tiny_cfg();
  TensorBlob b;
  b.name = "probe";
  b.shape = {3};
  b.precision = 1;
  b.values = {1.5, -2.25, 1.0e-17};
  ck.tensors.push_back(b);
  save_checkpoint(ck, "tmp_ck_f64.nioc");
  Checkpoint lk = load_checkpoint("tmp_ck_f64.nioc");
  REQUIRE(lk.tensors.size() == 1);
  CHECK(lk.tensors[0].precision == 1);
  CHECK(same_values(lk.tensors[0].values, b.values));
}

// ------------------------------------------------------------------ training

TEST_CASE("training runs the configured number of epochs and schedules the lr") {
  InverseDataset ds = tiny_ds();
  Rng rng(71);
  NioModel<float> model(tiny_cfg(), rng);
  TrainConfig tc = quick_train(3);
  TrainResult r = train_nio(model, ds, tc);

  REQUIRE(r.history.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) {
    const EpochRecord& rec = r.history[e];
    CHECK(rec.epoch == static_cast<int>(e) + 1);
    CHECK(rec.lr == tc.lr * std::pow(tc.gamma, static_cast<int>(e)));
    CHECK(std::isfinite(rec.train_loss));
    CHECK(std::isfinite(rec.val_rel_l1));
    CHECK(rec.val_rel_l1 >= 0.0);
  }
  CHECK(r.lhat_draws.empty());
  double best = r.history[0].val_rel_l1;
  int best_epoch = 1;
  for (std::size_t e = 1; e < 3; ++e)
    if (r.history[e].val_rel_l1 < best) {
      best = r.history[e].val_rel_l1;
      best_epoch = static_cast<int>(e) + 1;
    }
  CHECK(r.best_val == best);
  CHECK(r.best_epoch == best_epoch);
  CHECK(r.best.kind == ModelKind::nio);
  CHECK(r.best.slots == 4);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  InverseDataset ds = tiny_ds();
  TrainConfig tc = quick_train(3);

  Rng ra(71);
  NioModel<float> ma(tiny_cfg(), ra);
  TrainResult a = train_nio(ma, ds, tc);
  Rng rb(71);
  NioModel<float> mb(tiny_cfg(), rb);
  TrainResult b = train_nio(mb, ds, tc);

  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].train_loss == b.history[e].train_loss);
    CHECK(a.history[e].val_rel_l1 == b.history[e].val_rel_l1);
  }
  auto pa = ma.params(), pb = mb.params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(same_tensor(pa[i].second, pb[i].second));
}

TEST_CASE("the best validation snapshot is restored into the live model") {
  InverseDataset ds = tiny_ds();
  Rng rng(73);
  NioModel<float> model(tiny_cfg(), rng);
  TrainConfig tc = quick_train(4);
  TrainResult r = train_nio(model, ds, tc);

  EvalGeometry<float> geo = native_geometry<float>(model.config());
  auto fwd = [&](const Tensor<float>& psi, bool) { return model.forward(psi, geo.z, geo.gshape); };
  double med = summarize(evaluate_samples<float>(ds, ds.indices_of(kSplitVal), model.config(),
                                                 r.in_scaler, r.out_scaler, tc.batch, Norm::l1,
                                                 fwd))
                   .median;
  CHECK(med == r.best_val);
}

TEST_CASE("early stopping triggers after patience stalled epochs") {
  InverseDataset ds = tiny_ds();
  Rng rng(79);
  NioModel<float> model(tiny_cfg(), rng);
  TrainConfig tc = quick_train(30);
  tc.lr = 1e-12;  // updates round away in float32, so validation never moves
  tc.patience = 1;
  TrainResult r = train_nio(model, ds, tc);
  CHECK(r.history.size() == 2);
  CHECK(r.best_epoch == 1);
  CHECK(r.history[1].val_rel_l1 == r.history[0].val_rel_l1);
}

TEST_CASE("randomized batching draws set sizes between 2 and L") {
  InverseDataset ds = tiny_ds();
  TrainConfig tc = quick_train(3);

  Rng ra(83);
  NioModel<float> plain(tiny_cfg(), ra);
  TrainResult base = train_nio(plain, ds, tc);

  tc.randomized_batching = true;
  Rng rb(83);
  NioModel<float> model(tiny_cfg(), rb);
  TrainResult r = train_nio(model, ds, tc);

  REQUIRE(r.lhat_draws.size() == 6);  // 2 batches x 3 epochs
  for (int l : r.lhat_draws) {
    CHECK(l >= 2);
    CHECK(l <= 4);
  }
  CHECK(r.history[0].train_loss != base.history[0].train_loss);
  CHECK(base.lhat_draws.empty());
}

TEST_CASE("fixed-set baselines reject randomized batching") {
  InverseDataset ds = tiny_ds();
  TrainConfig tc = quick_train(2);
  tc.randomized_batching = true;
  Rng ra(89);
  DonetModel<float> donet(tiny_cfg(), 4, ra);
  CHECK_THROWS_AS(train_donet(donet, ds, tc), ConfigError);
  Rng rb(89);
  FcnnModel<float> fcnn(tiny_cfg(), 4, rb);
  CHECK_THROWS_AS(train_fcnn(fcnn, ds, tc), ConfigError);
}

TEST_CASE("baseline training loops run end to end") {
  InverseDataset ds = tiny_ds();
  TrainConfig tc = quick_train(2);

  Rng ra(97);
  DonetModel<float> donet(tiny_cfg(), 4, ra);
  TrainResult rd = train_donet(donet, ds, tc);
  REQUIRE(rd.history.size() == 2);
  EvalGeometry<float> geo = native_geometry<float>(donet.config());
  auto dfwd = [&](const Tensor<float>& psi, bool) { return donet.forward(psi, geo.z); };
  CHECK(summarize(evaluate_samples<float>(ds, ds.indices_of(kSplitVal), donet.config(),
                                          rd.in_scaler, rd.out_scaler, tc.batch, Norm::l1, dfwd))
            .median == rd.best_val);

  Rng rb(97);
  FcnnModel<float> fcnn(tiny_cfg(), 4, rb);
  TrainResult rf = train_fcnn(fcnn, ds, tc);
  REQUIRE(rf.history.size() == 2);
  auto ffwd = [&](const Tensor<float>& psi, bool training) { return fcnn.forward(psi, training); };
  CHECK(summarize(evaluate_samples<float>(ds, ds.indices_of(kSplitVal), fcnn.config(),
                                          rf.in_scaler, rf.out_scaler, tc.batch, Norm::l1, ffwd))
            .median == rf.best_val);

  Rng rc(97);
  DonetModel<float> wrong(tiny_cfg(), 3, rc);
  CHECK_THROWS_AS(train_donet(wrong, ds, quick_train(1)), ConfigError);
}

TEST_CASE("a trained checkpoint reproduces validation errors bit for bit") {
  InverseDataset ds = tiny_ds();
  Rng rng(101);
  NioModel<float> model(tiny_cfg(), rng);
  TrainConfig tc = quick_train(2);
  TrainResult r = train_nio(model, ds, tc);
  save_checkpoint(r.best, "tmp_ck_trained.nioc");

  Checkpoint lk = load_checkpoint("tmp_ck_trained.nioc");
  NioModel<float> twin = build_nio<float>(lk);
  EvalGeometry<float> geo = native_geometry<float>(model.config());
  auto live = [&](const Tensor<float>& psi, bool) { return model.forward(psi, geo.z, geo.gshape); };
  auto rebuilt = [&](const Tensor<float>& psi, bool) {
    return twin.forward(psi, geo.z, geo.gshape);
  };
  std::vector<std::size_t> test_idx = ds.indices_of(kSplitTest);
  std::vector<double> ea = evaluate_samples<float>(ds, test_idx, model.config(), r.in_scaler,
                                                   r.out_scaler, tc.batch, Norm::l1, live);
  std::vector<double> eb = evaluate_samples<float>(ds, test_idx, twin.config(), lk.in_scaler,
                                                   lk.out_scaler, tc.batch, Norm::l1, rebuilt);
  CHECK(same_values(ea, eb));
}

TEST_CASE("non-finite loss aborts with epoch and batch context") {
  InverseDataset ds = tiny_ds();
  Rng rng(103);
  NioModel<float> model(tiny_cfg(), rng);
  model.params()[0].second.data()[0] = std::nanf("");
  try {
    train_nio(model, ds, quick_train(2));
    FAIL("expected a NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}

TEST_CASE("history csv has the pinned four columns") {
  TrainResult r;
  r.history.push_back({1, 0.5, 0.25, 1e-3});
  r.history.push_back({2, 0.375, 0.2, 9.8e-4});
  write_history_csv(r, "tmp_history.csv");

  std::ifstream f("tmp_history.csv");
  REQUIRE(static_cast<bool>(f));
  std::string line;
  REQUIRE(std::getline(f, line));
  CHECK(line == "epoch,train_loss,val_rel_l1,lr");
  int rows = 0;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string field;
    int fields = 0;
    while (std::getline(ss, field, ',')) ++fields;
    CHECK(fields == 4);
    ++rows;
  }
  CHECK(rows == 2);
}

TEST_CASE("training rejects degenerate configurations") {
  TrainConfig tc;
  tc.lr = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.gamma = 1.5;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.batch = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.patience = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.max_epochs = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);

  InverseDataset ds = tiny_ds();
  ds.split.assign(24, kSplitTrain);  // no validation samples
  Rng rng(107);
  NioModel<float> model(tiny_cfg(), rng);
  CHECK_THROWS_AS(train_nio(model, ds, quick_train(1)), ConfigError);
}
