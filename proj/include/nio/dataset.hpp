// In-memory dataset of (measurement, coefficient) pairs and its on-disk
// container. Layout, little-endian throughout:
//   "NIOD" | u32 version=1 | u32 problem | u32 n | u32 L | u32 ndims |
//   u32 dims[ndims] | u32 count | u32 precision (0 = float32) | u64 seed |
//   f64 omega_family | f64 omega_pde |
//   count x (L*meas_size + coeff_size) float32 payload (psi block, a block) |
//   count x u32 split tags (0 train, 1 val, 2 test)
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "nio/common.hpp"

namespace nio {

static_assert(std::endian::native == std::endian::little,
              "dataset container assumes a little-endian host");
static_assert(std::numeric_limits<float>::is_iec559, "payload format is ieee-754 binary32");

enum class ProblemKind : std::uint32_t {
  calderon = 0,
  heart_lungs = 1,
  scattering = 2,
  rte = 3,
  seismic = 4,
};

inline const char* problem_kind_name(ProblemKind k) {
  switch (k) {
    case ProblemKind::calderon: return "calderon";
    case ProblemKind::heart_lungs: return "heart-lungs";
    case ProblemKind::scattering: return "scattering";
    case ProblemKind::rte: return "rte";
    case ProblemKind::seismic: return "seismic";
  }
  return "?";
}

inline ProblemKind problem_kind_from(const std::string& s) {
  for (ProblemKind k : {ProblemKind::calderon, ProblemKind::heart_lungs, ProblemKind::scattering,
                        ProblemKind::rte, ProblemKind::seismic})
    if (s == problem_kind_name(k)) return k;
  throw ConfigError(msg("unknown problem kind '", s, "'"));
}

enum : std::uint32_t { kSplitTrain = 0, kSplitVal = 1, kSplitTest = 2 };

struct DatasetHeader {
  ProblemKind problem = ProblemKind::calderon;
  std::uint32_t n = 0;                  // grid nodes per side (2D) or slab nodes (rte)
  std::uint32_t L = 0;                  // experiments per sample
  std::vector<std::uint32_t> meas_dims; // shape of one measurement array
  std::uint32_t count = 0;              // samples
  std::uint32_t precision = 0;          // 0 = float32
  std::uint64_t seed = 0;
  double omega_family = 0;              // boundary-family frequency
  double omega_pde = 0;                 // helmholtz wavenumber (0 when unused)

  std::size_t meas_size() const {
    std::size_t s = 1;
    for (auto d : meas_dims) s *= d;
    return s;
  }
  std::size_t coeff_size() const {
    return problem == ProblemKind::rte ? n : static_cast<std::size_t>(n) * n;
  }
  std::size_t sample_floats() const { return L * meas_size() + coeff_size(); }
};

struct InverseDataset {
  DatasetHeader header;
  std::vector<float> psi;             // [s][l][meas...]
  std::vector<float> coeff;           // [s][coeff...]
  std::vector<std::uint32_t> split;   // per sample

  std::size_t count() const { return header.count; }
  std::size_t meas_size() const { return header.meas_size(); }
  std::size_t coeff_size() const { return header.coeff_size(); }

  const float* psi_of(std::size_t s) const { return psi.data() + s * header.L * meas_size(); }
  float* psi_of(std::size_t s) { return psi.data() + s * header.L * meas_size(); }
  const float* coeff_of(std::size_t s) const { return coeff.data() + s * coeff_size(); }
  float* coeff_of(std::size_t s) { return coeff.data() + s * coeff_size(); }

  std::vector<std::size_t> indices_of(std::uint32_t tag) const {
    std::vector<std::size_t> idx;
    for (std::size_t s = 0; s < split.size(); ++s)
      if (split[s] == tag) idx.push_back(s);
    return idx;
  }

  void validate() const {
    if (header.n == 0 || header.L == 0) throw ShapeError("dataset header has zero n or L");
    if (psi.size() != header.count * header.L * meas_size())
      throw ShapeError(msg("psi payload has ", psi.size(), " floats, header implies ",
                           header.count * header.L * meas_size()));
    if (coeff.size() != header.count * coeff_size())
      throw ShapeError(msg("coeff payload has ", coeff.size(), " floats, header implies ",
                           header.count * coeff_size()));
    if (split.size() != header.count)
      throw ShapeError(msg("split tags: ", split.size(), " for ", header.count, " samples"));
    for (auto t : split)
      if (t > kSplitTest) throw ShapeError(msg("unknown split tag ", t));
    for (float v : psi)
      if (!finite(v)) throw NumericError("non-finite measurement value in dataset");
    for (float v : coeff)
      if (!finite(v)) throw NumericError("non-finite coefficient value in dataset");
  }
};

namespace niod_detail {

constexpr char kMagic[4] = {'N', 'I', 'O', 'D'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
  std::vector<char> buf;
  void raw(const void* p, std::size_t nbytes) {
    const char* c = static_cast<const char*>(p);
    buf.insert(buf.end(), c, c + nbytes);
  }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
};

struct Reader {
  const std::vector<char>& buf;
  std::size_t off = 0;
  void need(std::size_t nbytes, const char* what) {
    if (off + nbytes > buf.size())
      throw FormatError(msg("truncated file: need ", nbytes, " bytes for ", what, " at offset ",
                            off, ", have ", buf.size() - off));
  }
  void raw(void* p, std::size_t nbytes, const char* what) {
    need(nbytes, what);
    std::memcpy(p, buf.data() + off, nbytes);
    off += nbytes;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    raw(&v, 4, what);
    return v;
  }
  std::uint64_t u64(const char* what) {
    std::uint64_t v;
    raw(&v, 8, what);
    return v;
  }
  double f64(const char* what) {
    double v;
    raw(&v, 8, what);
    return v;
  }
};

}  // namespace niod_detail

inline void write_dataset(const InverseDataset& ds, const std::string& path) {
  ds.validate();
  niod_detail::Writer w;
  w.raw(niod_detail::kMagic, 4);
  w.u32(niod_detail::kVersion);
  w.u32(static_cast<std::uint32_t>(ds.header.problem));
  w.u32(ds.header.n);
  w.u32(ds.header.L);
  w.u32(static_cast<std::uint32_t>(ds.header.meas_dims.size()));
  for (auto d : ds.header.meas_dims) w.u32(d);
  w.u32(ds.header.count);
  w.u32(ds.header.precision);
  w.u64(ds.header.seed);
  w.f64(ds.header.omega_family);
  w.f64(ds.header.omega_pde);
  w.raw(ds.psi.data(), ds.psi.size() * sizeof(float));
  w.raw(ds.coeff.data(), ds.coeff.size() * sizeof(float));
  w.raw(ds.split.data(), ds.split.size() * sizeof(std::uint32_t));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(msg("cannot open '", path, "' for writing"));
  f.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
  if (!f) throw FormatError(msg("short write to '", path, "'"));
}

inline InverseDataset read_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(msg("cannot open '", path, "' for reading"));
  std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  niod_detail::Reader r{buf};

  char magic[4];
  r.raw(magic, 4, "magic");
  if (std::memcmp(magic, niod_detail::kMagic, 4) != 0)
    throw FormatError(msg("bad magic at offset 0: expected \"NIOD\", got \"",
                          std::string(magic, magic + 4), "\""));
  std::uint32_t version = r.u32("version");
  if (version != niod_detail::kVersion)
    throw FormatError(msg("unsupported version ", version, " at offset 4 (supported: ",
                          niod_detail::kVersion, ")"));

  InverseDataset ds;
  std::uint32_t kind_code = r.u32("problem kind");
  if (kind_code > static_cast<std::uint32_t>(ProblemKind::seismic))
    throw FormatError(msg("unknown problem kind code ", kind_code, " at offset 8"));
  ds.header.problem = static_cast<ProblemKind>(kind_code);
  ds.header.n = r.u32("grid n");
  ds.header.L = r.u32("experiment count L");
  std::uint32_t ndims = r.u32("measurement rank");
  if (ndims == 0 || ndims > 4)
    throw FormatError(msg("implausible measurement rank ", ndims, " at offset ", r.off - 4));
  ds.header.meas_dims.resize(ndims);
  for (auto& d : ds.header.meas_dims) d = r.u32("measurement dim");
  ds.header.count = r.u32("sample count");
  ds.header.precision = r.u32("precision code");
  if (ds.header.precision != 0)
    throw FormatError(msg("unsupported precision code ", ds.header.precision, " at offset ",
                          r.off - 4, " (only float32)"));
  ds.header.seed = r.u64("seed");
  ds.header.omega_family = r.f64("omega_family");
  ds.header.omega_pde = r.f64("omega_pde");

  ds.psi.resize(ds.header.count * ds.header.L * ds.header.meas_size());
  ds.coeff.resize(ds.header.count * ds.header.coeff_size());
  r.raw(ds.psi.data(), ds.psi.size() * sizeof(float), "psi payload");
  r.raw(ds.coeff.data(), ds.coeff.size() * sizeof(float), "coeff payload");
  ds.split.resize(ds.header.count);
  r.raw(ds.split.data(), ds.split.size() * sizeof(std::uint32_t), "split tags");
  if (r.off != buf.size())
    throw FormatError(msg("trailing garbage: file has ", buf.size() - r.off,
                          " extra bytes after offset ", r.off));
  ds.validate();
  return ds;
}

}  // namespace nio
