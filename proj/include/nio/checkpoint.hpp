// Model checkpoint container. Layout, little-endian:
//   "NIOC" | u32 version=1 | u32 model kind (0 nio, 1 donet, 2 fcnn) |
//   u32 problem kind | config echo (u32 p, trunk_layers, trunk_width, d_v,
//   fno_layers, k_max, coord_dim, branch, channels, meas rank, meas dims[],
//   grid_n, lift, lift_slots, mixing) | u32 slots | 2 x scaler (u32 kind,
//   u32 fitted, f64 lo, f64 hi) | u32 tensor count | per tensor: u32 name
//   length, name bytes, u32 ndims, u32 dims[], u32 precision (0 = float32,
//   1 = float64), payload.
// Parameter tensors are stored under their collect() names; batchnorm running
// statistics ride along under "stats." names. Values are staged in double in
// memory, so a float32 model round-trips bit for bit.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "nio/common.hpp"
#include "nio/dataset.hpp"
#include "nio/models.hpp"
#include "nio/scalers.hpp"

namespace nio {

enum class ModelKind : std::uint32_t { nio = 0, donet = 1, fcnn = 2 };

inline const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::nio: return "nio";
    case ModelKind::donet: return "donet";
    case ModelKind::fcnn: return "fcnn";
  }
  return "?";
}

inline ModelKind model_kind_from(const std::string& s) {
  if (s == "nio" || s == "nio-nomix") return ModelKind::nio;
  if (s == "donet") return ModelKind::donet;
  if (s == "fcnn") return ModelKind::fcnn;
  throw ConfigError(msg("unknown model kind '", s, "'"));
}

struct TensorBlob {
  std::string name;
  Shape shape;
  std::uint32_t precision = 0;  // 0 float32, 1 float64
  std::vector<double> values;
};

struct Checkpoint {
  ModelKind kind = ModelKind::nio;
  ProblemKind problem = ProblemKind::calderon;
  NioConfig config;
  int slots = 0;  // training-set L; forward contract only for the baselines
  Scaler in_scaler, out_scaler;
  std::vector<TensorBlob> tensors;

  const TensorBlob* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

namespace nioc_detail {

constexpr char kMagic[4] = {'N', 'I', 'O', 'C'};
constexpr std::uint32_t kVersion = 1;

template <class T>
constexpr std::uint32_t precision_code() {
  return sizeof(T) == 4 ? 0u : 1u;
}

template <class T>
TensorBlob blob_of(const std::string& name, const Tensor<T>& t) {
  TensorBlob b;
  b.name = name;
  b.shape = t.shape();
  b.precision = precision_code<T>();
  b.values.assign(t.data().begin(), t.data().end());
  return b;
}

template <class T>
TensorBlob blob_of(const std::string& name, const std::vector<T>& v) {
  TensorBlob b;
  b.name = name;
  b.shape = {static_cast<int>(v.size())};
  b.precision = precision_code<T>();
  b.values.assign(v.begin(), v.end());
  return b;
}

inline bool is_stats(const std::string& name) { return name.rfind("stats.", 0) == 0; }

}  // namespace nioc_detail

// ------------------------------------------------------------------- capture

template <class T>
Checkpoint make_checkpoint(NioModel<T>& m, int train_L, ProblemKind prob, const Scaler& in,
                           const Scaler& out) {
  Checkpoint ck;
  ck.kind = ModelKind::nio;
  ck.problem = prob;
  ck.config = m.config();
  ck.slots = train_L;
  ck.in_scaler = in;
  ck.out_scaler = out;
  m.collect([&](const std::string& name, Tensor<T>& t) {
    ck.tensors.push_back(nioc_detail::blob_of(name, t));
  });
  return ck;
}

template <class T>
Checkpoint make_checkpoint(DonetModel<T>& m, ProblemKind prob, const Scaler& in,
                           const Scaler& out) {
  Checkpoint ck;
  ck.kind = ModelKind::donet;
  ck.problem = prob;
  ck.config = m.config();
  ck.slots = m.slots();
  ck.in_scaler = in;
  ck.out_scaler = out;
  m.collect([&](const std::string& name, Tensor<T>& t) {
    ck.tensors.push_back(nioc_detail::blob_of(name, t));
  });
  return ck;
}

template <class T>
Checkpoint make_checkpoint(FcnnModel<T>& m, ProblemKind prob, const Scaler& in,
                           const Scaler& out) {
  Checkpoint ck;
  ck.kind = ModelKind::fcnn;
  ck.problem = prob;
  ck.config = m.config();
  ck.slots = m.slots();
  ck.in_scaler = in;
  ck.out_scaler = out;
  m.collect([&](const std::string& name, Tensor<T>& t) {
    ck.tensors.push_back(nioc_detail::blob_of(name, t));
  });
  m.collect_stats([&](const std::string& name, BatchNormState<T>& st) {
    ck.tensors.push_back(nioc_detail::blob_of("stats." + name + ".mean", st.running_mean));
    ck.tensors.push_back(nioc_detail::blob_of("stats." + name + ".var", st.running_var));
  });
  return ck;
}

// ------------------------------------------------------------------- restore

namespace nioc_detail {

template <class T>
void fill_tensor(const TensorBlob& b, Tensor<T>& t) {
  if (b.shape != t.shape())
    throw FormatError(msg("checkpoint tensor '", b.name, "' has shape ", shape_str(b.shape),
                          ", model expects ", shape_str(t.shape())));
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<T>(b.values[i]);
}

}  // namespace nioc_detail

// overwrite model parameters (and batchnorm stats, when present) by name.
// every model tensor must be found and every checkpoint tensor consumed.
template <class Model>
void restore_params(const Checkpoint& ck, Model& m) {
  std::vector<char> used(ck.tensors.size(), 0);
  auto take = [&](const std::string& name) -> const TensorBlob& {
    for (std::size_t i = 0; i < ck.tensors.size(); ++i)
      if (ck.tensors[i].name == name) {
        used[i] = 1;
        return ck.tensors[i];
      }
    throw FormatError(msg("checkpoint has no tensor named '", name, "'"));
  };
  m.collect([&](const std::string& name, auto& t) { nioc_detail::fill_tensor(take(name), t); });
  if constexpr (requires { m.collect_stats([](const std::string&, auto&) {}); }) {
    m.collect_stats([&](const std::string& name, auto& st) {
      const TensorBlob& mean = take("stats." + name + ".mean");
      const TensorBlob& var = take("stats." + name + ".var");
      if (mean.values.size() != st.running_mean.size() ||
          var.values.size() != st.running_var.size())
        throw FormatError(msg("checkpoint stats '", name, "' channel count mismatch"));
      using S = std::decay_t<decltype(st.running_mean[0])>;
      for (std::size_t i = 0; i < mean.values.size(); ++i) {
        st.running_mean[i] = static_cast<S>(mean.values[i]);
        st.running_var[i] = static_cast<S>(var.values[i]);
      }
    });
  }
  for (std::size_t i = 0; i < ck.tensors.size(); ++i)
    if (!used[i])
      throw FormatError(msg("checkpoint tensor '", ck.tensors[i].name,
                            "' has no destination in the model"));
}

template <class T>
NioModel<T> build_nio(const Checkpoint& ck) {
  if (ck.kind != ModelKind::nio)
    throw FormatError(msg("checkpoint holds a ", model_kind_name(ck.kind), " model, not nio"));
  Rng rng(0);
  NioModel<T> m(ck.config, rng);
  restore_params(ck, m);
  return m;
}

template <class T>
DonetModel<T> build_donet(const Checkpoint& ck) {
  if (ck.kind != ModelKind::donet)
    throw FormatError(msg("checkpoint holds a ", model_kind_name(ck.kind), " model, not donet"));
  Rng rng(0);
  DonetModel<T> m(ck.config, ck.slots, rng);
  restore_params(ck, m);
  return m;
}

template <class T>
FcnnModel<T> build_fcnn(const Checkpoint& ck) {
  if (ck.kind != ModelKind::fcnn)
    throw FormatError(msg("checkpoint holds a ", model_kind_name(ck.kind), " model, not fcnn"));
  Rng rng(0);
  FcnnModel<T> m(ck.config, ck.slots, rng);
  restore_params(ck, m);
  return m;
}

// ---------------------------------------------------------------------- disk

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  ck.config.validate();
  niod_detail::Writer w;
  w.raw(nioc_detail::kMagic, 4);
  w.u32(nioc_detail::kVersion);
  w.u32(static_cast<std::uint32_t>(ck.kind));
  w.u32(static_cast<std::uint32_t>(ck.problem));
  const NioConfig& c = ck.config;
  w.u32(static_cast<std::uint32_t>(c.p));
  w.u32(static_cast<std::uint32_t>(c.trunk_layers));
  w.u32(static_cast<std::uint32_t>(c.trunk_width));
  w.u32(static_cast<std::uint32_t>(c.d_v));
  w.u32(static_cast<std::uint32_t>(c.fno_layers));
  w.u32(static_cast<std::uint32_t>(c.k_max));
  w.u32(static_cast<std::uint32_t>(c.coord_dim));
  w.u32(static_cast<std::uint32_t>(c.branch));
  w.u32(static_cast<std::uint32_t>(c.channels));
  w.u32(static_cast<std::uint32_t>(c.meas_shape.size()));
  for (int d : c.meas_shape) w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(c.grid_n));
  w.u32(static_cast<std::uint32_t>(c.lift));
  w.u32(static_cast<std::uint32_t>(c.lift_slots));
  w.u32(c.mixing ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(ck.slots));
  for (const Scaler* s : {&ck.in_scaler, &ck.out_scaler}) {
    w.u32(static_cast<std::uint32_t>(s->kind));
    w.u32(s->fitted ? 1 : 0);
    w.f64(s->lo);
    w.f64(s->hi);
  }
  w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const TensorBlob& b : ck.tensors) {
    w.u32(static_cast<std::uint32_t>(b.name.size()));
    w.raw(b.name.data(), b.name.size());
    w.u32(static_cast<std::uint32_t>(b.shape.size()));
    for (int d : b.shape) w.u32(static_cast<std::uint32_t>(d));
    w.u32(b.precision);
    if (b.precision == 0) {
      std::vector<float> f(b.values.begin(), b.values.end());
      w.raw(f.data(), f.size() * sizeof(float));
    } else {
      w.raw(b.values.data(), b.values.size() * sizeof(double));
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(msg("cannot open '", path, "' for writing"));
  f.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
  if (!f) throw FormatError(msg("short write to '", path, "'"));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(msg("cannot open '", path, "' for reading"));
  std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  niod_detail::Reader r{buf};

  char magic[4];
  r.raw(magic, 4, "magic");
  if (std::memcmp(magic, nioc_detail::kMagic, 4) != 0)
    throw FormatError(msg("bad magic at offset 0: expected \"NIOC\", got \"",
                          std::string(magic, magic + 4), "\""));
  std::uint32_t version = r.u32("version");
  if (version != nioc_detail::kVersion)
    throw FormatError(msg("unsupported version ", version, " at offset 4 (supported: ",
                          nioc_detail::kVersion, ")"));

  Checkpoint ck;
  std::uint32_t kind = r.u32("model kind");
  if (kind > static_cast<std::uint32_t>(ModelKind::fcnn))
    throw FormatError(msg("unknown model kind code ", kind));
  ck.kind = static_cast<ModelKind>(kind);
  std::uint32_t prob = r.u32("problem kind");
  if (prob > static_cast<std::uint32_t>(ProblemKind::seismic))
    throw FormatError(msg("unknown problem kind code ", prob));
  ck.problem = static_cast<ProblemKind>(prob);

  NioConfig& c = ck.config;
  c.p = static_cast<int>(r.u32("p"));
  c.trunk_layers = static_cast<int>(r.u32("trunk_layers"));
  c.trunk_width = static_cast<int>(r.u32("trunk_width"));
  c.d_v = static_cast<int>(r.u32("d_v"));
  c.fno_layers = static_cast<int>(r.u32("fno_layers"));
  c.k_max = static_cast<int>(r.u32("k_max"));
  c.coord_dim = static_cast<int>(r.u32("coord_dim"));
  std::uint32_t branch = r.u32("branch kind");
  if (branch > 1) throw FormatError(msg("unknown branch kind code ", branch));
  c.branch = static_cast<BranchKind>(branch);
  c.channels = static_cast<int>(r.u32("channels"));
  std::uint32_t rank = r.u32("meas rank");
  if (rank == 0 || rank > 2) throw FormatError(msg("implausible measurement rank ", rank));
  c.meas_shape.resize(rank);
  for (int& d : c.meas_shape) d = static_cast<int>(r.u32("meas dim"));
  c.grid_n = static_cast<int>(r.u32("grid_n"));
  std::uint32_t lift = r.u32("lift kind");
  if (lift > 1) throw FormatError(msg("unknown lift kind code ", lift));
  c.lift = static_cast<LiftKind>(lift);
  c.lift_slots = static_cast<int>(r.u32("lift_slots"));
  c.mixing = r.u32("mixing") != 0;
  try {
    c.validate();
  } catch (const Error& e) {
    throw FormatError(msg("checkpoint config rejected: ", e.what()));
  }
  ck.slots = static_cast<int>(r.u32("slots"));

  for (Scaler* s : {&ck.in_scaler, &ck.out_scaler}) {
    std::uint32_t sk = r.u32("scaler kind");
    if (sk > static_cast<std::uint32_t>(ScalerKind::log_minmax))
      throw FormatError(msg("unknown scaler kind code ", sk));
    s->kind = static_cast<ScalerKind>(sk);
    s->fitted = r.u32("scaler fitted") != 0;
    s->lo = r.f64("scaler lo");
    s->hi = r.f64("scaler hi");
  }

  std::uint32_t count = r.u32("tensor count");
  if (count > 1u << 16) throw FormatError(msg("implausible tensor count ", count));
  ck.tensors.resize(count);
  for (TensorBlob& b : ck.tensors) {
    std::uint32_t nlen = r.u32("name length");
    if (nlen == 0 || nlen > 256) throw FormatError(msg("implausible tensor name length ", nlen));
    b.name.resize(nlen);
    r.raw(b.name.data(), nlen, "tensor name");
    std::uint32_t ndims = r.u32("tensor rank");
    if (ndims == 0 || ndims > 6)
      throw FormatError(msg("implausible rank ", ndims, " for tensor '", b.name, "'"));
    b.shape.resize(ndims);
    std::size_t numel = 1;
    for (int& d : b.shape) {
      d = static_cast<int>(r.u32("tensor dim"));
      if (d < 1) throw FormatError(msg("non-positive dim in tensor '", b.name, "'"));
      numel *= static_cast<std::size_t>(d);
    }
    b.precision = r.u32("precision code");
    if (b.precision > 1)
      throw FormatError(msg("unsupported precision code ", b.precision, " for tensor '", b.name,
                            "'"));
    b.values.resize(numel);
    if (b.precision == 0) {
      std::vector<float> tmp(numel);
      r.raw(tmp.data(), numel * sizeof(float), "tensor payload");
      for (std::size_t i = 0; i < numel; ++i) b.values[i] = tmp[i];
    } else {
      r.raw(b.values.data(), numel * sizeof(double), "tensor payload");
    }
  }
  if (r.off != buf.size())
    throw FormatError(msg("trailing garbage: file has ", buf.size() - r.off,
                          " extra bytes after offset ", r.off));
  return ck;
}

}  // namespace nio
