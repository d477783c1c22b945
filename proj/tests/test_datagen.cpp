// Coefficient samplers against closed-form values, boundary families against
// their defining formulas, measurement assembly shapes, linearity of the DtN
// measurements, dataset determinism, and the on-disk round trip with its
// corruption errors.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "nio/datagen.hpp"

namespace {

const char* tmp_path(const char* name) {
  static std::string p;
  p = std::string("/tmp/") + name;
  return p.c_str();
}

std::vector<char> slurp(const char* path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(static_cast<bool>(f));
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void spit(const char* path, const std::vector<char>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("samplers: trig evaluator matches exp(sum c sin sin), unit on the boundary") {
  nio::Grid2d g{17, 0, 0, 1, 1};
  // all-zero coefficients give a == 1 everywhere
  auto a1 = nio::trig_coefficient(g, {0.0, 0.0, 0.0});
  for (double v : a1) CHECK(v == 1.0);
  // single mode: a = exp(c sin(pi x) sin(pi y))
  auto a2 = nio::trig_coefficient(g, {0.7});
  for (int j = 0; j < g.n; ++j)
    for (int i = 0; i < g.n; ++i) {
      double want = std::exp(0.7 * std::sin(M_PI * g.x(i)) * std::sin(M_PI * g.y(j)));
      CHECK(a2[g.idx(i, j)] == doctest::Approx(want).epsilon(1e-14));
    }
  // any draw: strictly positive, exactly 1 on the boundary (sin k pi = 0)
  nio::Rng rng(501);
  nio::CoefficientSpec spec;
  for (int rep = 0; rep < 5; ++rep) {
    auto a = nio::sample_coefficient(spec, g, rng);
    for (double v : a) CHECK(v > 0);
    for (int p = 0; p < nio::boundary_length(g.n); ++p) {
      auto [i, j] = nio::boundary_node(g.n, p);
      CHECK(a[g.idx(i, j)] == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("samplers: single inclusion takes value 1 at its center, ~0 far away") {
  nio::Grid2d g{17, 0, 0, 1, 1};
  auto a = nio::inclusions_coefficient(g, {{0.5, 0.5}}, {nio::kInclusionWidth});
  CHECK(a[g.idx(8, 8)] == 1.0);  // exp(0) at the center node
  // at the origin: exp(-2 c 0.5^4), astronomically small
  CHECK(a[g.idx(0, 0)] == doctest::Approx(std::exp(-2 * nio::kInclusionWidth * 0.0625)).epsilon(1e-12));
  CHECK(a[g.idx(0, 0)] < 1e-30);
  // sampler: bounded by the inclusion count, non-negative
  nio::Rng rng(502);
  nio::CoefficientSpec spec;
  spec.kind = nio::CoeffKind::inclusions_ood_a;  // fixed m = 5
  auto a5 = nio::sample_coefficient(spec, g, rng);
  for (double v : a5) {
    CHECK(v >= 0);
    CHECK(v <= 5.0 + 1e-12);
  }
}

TEST_CASE("samplers: unperturbed phantom takes the textbook conductivities") {
  nio::HeartLungsPhantom ph;
  // heart center and a point inside the heart ellipse
  CHECK(ph.value(-0.1, 0.4) == 2.0);
  CHECK(ph.value(-0.05, 0.35) == 2.0);
  // lung centers: map the rotated-frame centers back through the rotation
  double ca = std::cos(M_PI / 7), sa = std::sin(M_PI / 7);
  double x1 = ca * 0.5 - sa * 0.2, y1 = sa * 0.5 + ca * 0.2;
  CHECK(ph.value(x1, y1) == 0.7);
  double x2 = ca * -0.6 - sa * 0.1, y2 = sa * -0.6 + ca * 0.1;
  CHECK(ph.value(x2, y2) == 0.7);
  // far corner is background
  CHECK(ph.value(0.95, -0.95) == 1.0);
  // the sampled field takes only the four region values when unperturbed
  nio::Grid2d g{33, -1, -1, 1, 1};
  auto a = nio::phantom_coefficient(g, ph);
  for (double v : a) CHECK((v == 2.0 || v == 0.7 || v == 1.0));
  // perturbed draw stays near the base values at moderate amplitude
  nio::Rng rng(503);
  nio::CoefficientSpec spec;
  spec.kind = nio::CoeffKind::heart_lungs;
  auto ap = nio::sample_coefficient(spec, g, rng);
  for (double v : ap) {
    CHECK(v > 0.3);
    CHECK(v < 3.5);
  }
}

TEST_CASE("samplers: transport step is 1 outside, 1+c inside the window") {
  auto a = nio::step_coefficient_1d(11, 0.8, 0.9, 0.8);
  // r x - x0 in [-1/2,1/2]  <=>  x >= 0.5 here
  for (int i = 0; i < 11; ++i) {
    double x = i / 10.0;
    CHECK(a[i] == (x >= 0.5 ? doctest::Approx(1.8) : doctest::Approx(1.0)));
  }
  // full coverage: r small enough that the window spans [0,1]
  auto af = nio::step_coefficient_1d(11, 0.6, 0.5, 0.3);
  for (double v : af) CHECK(v == doctest::Approx(1.6));
  // sampled: values in [1,2] and at most two distinct levels
  nio::Rng rng(504);
  nio::CoefficientSpec spec;
  spec.kind = nio::CoeffKind::rte_step;
  for (int rep = 0; rep < 10; ++rep) {
    auto s = nio::sample_coefficient_1d(spec, 129, rng);
    double lo = 1e300, hi = -1e300;
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      CHECK((std::abs(v - lo) < 1e-12 || std::abs(v - hi) < 1e-12));
    }
    CHECK(lo >= 1.0);
    CHECK(hi <= 2.0);
  }
  // 2D sampler refuses the 1D kind and vice versa
  nio::Grid2d g{17, 0, 0, 1, 1};
  CHECK_THROWS_AS(nio::sample_coefficient(spec, g, rng), nio::ConfigError);
  spec.kind = nio::CoeffKind::trig;
  CHECK_THROWS_AS(nio::sample_coefficient_1d(spec, 129, rng), nio::ConfigError);
}

TEST_CASE("samplers: layered medium is piecewise constant in y") {
  nio::Grid2d g{21, 0, 0, 1, 1};
  nio::LayeredMedium m;
  m.cuts = {0.5};
  m.speeds = {1.5, 3.0};
  auto a = nio::layered_coefficient(g, m);
  for (int j = 0; j < g.n; ++j)
    for (int i = 0; i < g.n; ++i)
      CHECK(a[g.idx(i, j)] == (g.y(j) > 0.5 ? 3.0 : 1.5));
  // sampled draws stay inside the configured speed range
  nio::Rng rng(505);
  nio::CoefficientSpec spec;
  spec.kind = nio::CoeffKind::layered_velocity;
  for (int rep = 0; rep < 5; ++rep) {
    auto s = nio::sample_coefficient(spec, g, rng);
    for (double v : s) {
      CHECK(v >= spec.layer_amin);
      CHECK(v <= spec.layer_amax);
    }
  }
  CHECK_THROWS_AS(nio::layered_coefficient(g, nio::LayeredMedium{{0.5}, {1.0}, {}, {}, {}}),
                  nio::ShapeError);
}

TEST_CASE("samplers: fixed seed reproduces, different seeds differ") {
  nio::Grid2d g{17, 0, 0, 1, 1};
  for (auto kind : {nio::CoeffKind::trig, nio::CoeffKind::trig_ood_a, nio::CoeffKind::trig_ood_b,
                    nio::CoeffKind::inclusions, nio::CoeffKind::inclusions_ood_b,
                    nio::CoeffKind::heart_lungs, nio::CoeffKind::layered_velocity}) {
    nio::CoefficientSpec spec;
    spec.kind = kind;
    nio::Rng r1(77), r2(77), r3(78);
    auto a1 = nio::sample_coefficient(spec, g, r1);
    auto a2 = nio::sample_coefficient(spec, g, r2);
    auto a3 = nio::sample_coefficient(spec, g, r3);
    CHECK(a1 == a2);
    double diff = 0;
    for (std::size_t k = 0; k < a1.size(); ++k) diff = std::max(diff, std::abs(a1[k] - a3[k]));
    CHECK(diff > 1e-8);
  }
}

TEST_CASE("families: directional cosines, wraparound, index guards") {
  nio::Grid2d g{16, 0, 0, 1, 1};
  double w = M_PI;
  // l = L: theta = 2 pi, g = cos(w x)
  auto gL = nio::trig_family(g, 20, 20, w);
  for (int p = 0; p < nio::boundary_length(g.n); ++p) {
    auto [x, y] = nio::boundary_xy(g, p);
    CHECK(gL[p] == doctest::Approx(std::cos(w * x)).epsilon(1e-12));
  }
  // l = 5: theta = pi/2, g = cos(w y)
  auto g5 = nio::trig_family(g, 5, 20, w);
  for (int p = 0; p < nio::boundary_length(g.n); ++p) {
    auto [x, y] = nio::boundary_xy(g, p);
    CHECK(g5[p] == doctest::Approx(std::cos(w * y)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(nio::trig_family(g, 0, 20, w), nio::ConfigError);
  CHECK_THROWS_AS(nio::trig_family(g, 21, 20, w), nio::ConfigError);
}

TEST_CASE("families: heart-lungs complex exponentials over the boundary parameter") {
  auto freqs = nio::heart_lungs_freqs();
  REQUIRE(freqs.size() == 32);
  CHECK(freqs.front() == -16);
  CHECK(freqs[15] == -1);
  CHECK(freqs[16] == 1);
  CHECK(freqs.back() == 16);
  nio::Grid2d g{16, -1, -1, 1, 1};
  int P = nio::boundary_length(g.n);
  auto [re, im] = nio::heart_lungs_family(g, 1);  // f = -16
  for (int p = 0; p < P; ++p) {
    double th = static_cast<double>(p) / P;
    CHECK(re[p] == doctest::Approx(std::cos(2 * M_PI * th * -16) / (2 * M_PI)).epsilon(1e-12));
    CHECK(im[p] == doctest::Approx(std::sin(2 * M_PI * th * -16) / (2 * M_PI)).epsilon(1e-12));
    // constant modulus 1/2pi
    CHECK(std::hypot(re[p], im[p]) == doctest::Approx(1 / (2 * M_PI)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(nio::heart_lungs_family(g, 33), nio::ConfigError);
}

TEST_CASE("families: rte inflow concentrates at the matching end, seismic sources line up") {
  auto q = nio::gauss_legendre(32);
  auto inflow = nio::rte_inflow_family(q, 20);  // some positive ordinate
  REQUIRE(q.x[19] > 0);
  CHECK(inflow[19] == 1.0);  // exp(0) at its own ordinate
  for (int m = 0; m < 32; ++m) {
    if (q.x[m] < 0) CHECK(inflow[m] == 0.0);  // nothing enters at x=1
    else CHECK(inflow[m] == doctest::Approx(std::exp(-200 * nio::sq(q.x[m] - q.x[19]))));
  }
  auto neg = nio::rte_inflow_family(q, 5);  // negative ordinate
  REQUIRE(q.x[4] < 0);
  for (int m = 0; m < 32; ++m)
    if (q.x[m] > 0) CHECK(neg[m] == 0.0);
  CHECK_THROWS_AS(nio::rte_inflow_family(q, 0), nio::ConfigError);

  CHECK(nio::seismic_source_x(1) == doctest::Approx(0.1));
  CHECK(nio::seismic_source_x(3) == doctest::Approx(0.5));
  CHECK(nio::seismic_source_x(5) == doctest::Approx(0.9));
  CHECK_THROWS_AS(nio::seismic_source_x(6), nio::ConfigError);
}

TEST_CASE("measurer: calderon psi is the weighted dtn trace and is linear in g") {
  nio::ProblemConfig cfg;
  cfg.problem = nio::ProblemKind::calderon;
  cfg.n = 16;
  nio::Rng rng(601);
  nio::CoefficientSpec spec;
  auto a = nio::sample_coefficient(spec, cfg.grid(), rng);
  nio::Measurer measure(cfg);
  auto ms = measure(a);
  REQUIRE(ms.psi.size() == 20);
  REQUIRE(ms.psi[0].size() == static_cast<std::size_t>(nio::boundary_length(cfg.n)));
  // cross-check one experiment against a direct solve
  nio::EllipticSystem sys(cfg.grid(), a);
  auto bd = nio::trig_family(cfg.grid(), 7, 20, cfg.omega_family);
  auto psi7 = nio::observe_dtn(cfg.grid(), a, sys.solve(bd), true);
  for (int p = 0; p < nio::boundary_length(cfg.n); ++p)
    CHECK(ms.psi[6][p] == doctest::Approx(psi7[p]).epsilon(1e-12));
  // linearity: psi(g1+g2) = psi(g1) + psi(g2)
  auto g1 = nio::trig_family(cfg.grid(), 3, 20, cfg.omega_family);
  auto g2 = nio::trig_family(cfg.grid(), 11, 20, cfg.omega_family);
  nio::BoundaryTrace gsum(g1.size());
  for (std::size_t p = 0; p < g1.size(); ++p) gsum[p] = g1[p] + g2[p];
  auto p1 = nio::observe_dtn(cfg.grid(), a, sys.solve(g1), true);
  auto p2 = nio::observe_dtn(cfg.grid(), a, sys.solve(g2), true);
  auto ps = nio::observe_dtn(cfg.grid(), a, sys.solve(gsum), true);
  double scale = 0;
  for (std::size_t p = 0; p < ps.size(); ++p) scale = std::max(scale, std::abs(ps[p]));
  for (std::size_t p = 0; p < ps.size(); ++p)
    CHECK(std::abs(ps[p] - p1[p] - p2[p]) <= 1e-8 * scale);
}

TEST_CASE("measurer: heart-lungs differenced transform vanishes for the unit coefficient") {
  nio::ProblemConfig cfg;
  cfg.problem = nio::ProblemKind::heart_lungs;
  cfg.n = 16;
  nio::Measurer measure(cfg);
  nio::Field ones(cfg.grid().num_points(), 1.0);
  auto ms = measure(ones);
  REQUIRE(ms.psi.size() == 32);
  for (auto& psi : ms.psi) {
    REQUIRE(psi.size() == 64);
    for (double v : psi) CHECK(v == 0.0);  // exact self-subtraction
  }
  // a genuine phantom produces a nonzero signature
  nio::Rng rng(602);
  nio::CoefficientSpec spec;
  spec.kind = nio::CoeffKind::heart_lungs;
  auto a = nio::sample_coefficient(spec, cfg.grid(), rng);
  auto msp = measure(a);
  double mx = 0;
  for (auto& psi : msp.psi)
    for (double v : psi) mx = std::max(mx, std::abs(v));
  CHECK(mx > 1e-6);
}

TEST_CASE("generate: trig dataset at n=32 has psi shape 20 x 124 per sample") {
  nio::ProblemConfig cfg;
  cfg.problem = nio::ProblemKind::calderon;
  cfg.n = 32;
  nio::CoefficientSpec spec;
  auto r = nio::generate_dataset(cfg, spec, {1, 0, 0}, 4242);
  CHECK(r.regenerated == 0);
  auto& ds = r.ds;
  CHECK(ds.header.L == 20);
  REQUIRE(ds.header.meas_dims.size() == 1);
  CHECK(ds.header.meas_dims[0] == 124);
  CHECK(ds.psi.size() == 20u * 124u);
  CHECK(ds.coeff.size() == 1024u);
  CHECK(ds.header.omega_family == doctest::Approx(M_PI));
  ds.validate();
}

TEST_CASE("generate: fixed seed is byte-reproducible, seeds differ, splits ordered") {
  nio::ProblemConfig cfg;
  cfg.problem = nio::ProblemKind::calderon;
  cfg.n = 16;
  nio::CoefficientSpec spec;
  nio::GenCounts counts{2, 1, 2};
  auto r1 = nio::generate_dataset(cfg, spec, counts, 99);
  auto r2 = nio::generate_dataset(cfg, spec, counts, 99);
  auto r3 = nio::generate_dataset(cfg, spec, counts, 100);
  CHECK(r1.ds.psi == r2.ds.psi);
  CHECK(r1.ds.coeff == r2.ds.coeff);
  CHECK(r1.ds.split == r2.ds.split);
  CHECK(r1.ds.coeff != r3.ds.coeff);
  std::vector<std::uint32_t> want{nio::kSplitTrain, nio::kSplitTrain, nio::kSplitVal,
                                  nio::kSplitTest, nio::kSplitTest};
  CHECK(r1.ds.split == want);
  CHECK(r1.ds.indices_of(nio::kSplitVal) == std::vector<std::size_t>{2});
  // write both generations: identical bytes on disk
  nio::write_dataset(r1.ds, tmp_path("det_a.niod"));
  nio::write_dataset(r2.ds, tmp_path("det_b.niod"));
  CHECK(slurp(tmp_path("det_a.niod")) == slurp(tmp_path("det_b.niod")));
  std::remove(tmp_path("det_a.niod"));
  std::remove(tmp_path("det_b.niod"));
}

TEST_CASE("generate: every problem kind produces a finite well-shaped dataset") {
  // scattering with inclusions
  {
    nio::ProblemConfig cfg;
    cfg.problem = nio::ProblemKind::scattering;
    cfg.n = 16;
    nio::CoefficientSpec spec;
    spec.kind = nio::CoeffKind::inclusions;
    auto r = nio::generate_dataset(cfg, spec, {2, 0, 0}, 7);
    CHECK(r.ds.header.meas_dims[0] == 60u);
    CHECK(r.ds.header.omega_pde == doctest::Approx(2.0));
    r.ds.validate();
  }
  // rte albedo
  {
    nio::ProblemConfig cfg;
    cfg.problem = nio::ProblemKind::rte;
    cfg.n = 65;
    cfg.nquad = 16;
    nio::CoefficientSpec spec;
    spec.kind = nio::CoeffKind::rte_step;
    auto r = nio::generate_dataset(cfg, spec, {2, 0, 0}, 8);
    CHECK(r.ds.header.L == 16);
    CHECK(r.ds.header.meas_dims == std::vector<std::uint32_t>{16});
    CHECK(r.ds.coeff.size() == 2u * 65u);
    for (float v : r.ds.coeff) {
      CHECK(v >= 1.0f);
      CHECK(v <= 2.0f);
    }
    r.ds.validate();
  }
  // seismic str images
  {
    nio::ProblemConfig cfg;
    cfg.problem = nio::ProblemKind::seismic;
    cfg.n = 24;
    cfg.t_end = 0.3;
    cfg.n_receivers = 10;
    nio::CoefficientSpec spec;
    spec.kind = nio::CoeffKind::layered_velocity;
    auto r = nio::generate_dataset(cfg, spec, {1, 0, 0}, 9);
    REQUIRE(r.ds.header.meas_dims.size() == 2);
    CHECK(r.ds.header.meas_dims[0] == static_cast<std::uint32_t>((cfg.wave_nt() - 1) / 4 + 1));
    CHECK(r.ds.header.meas_dims[1] == 10u);
    double mx = 0;
    for (float v : r.ds.psi) mx = std::max(mx, std::abs(static_cast<double>(v)));
    CHECK(mx > 1e-12);  // the wave actually reached the receivers
    r.ds.validate();
  }
  // heart-lungs
  {
    nio::ProblemConfig cfg;
    cfg.problem = nio::ProblemKind::heart_lungs;
    cfg.n = 16;
    nio::CoefficientSpec spec;
    spec.kind = nio::CoeffKind::heart_lungs;
    auto r = nio::generate_dataset(cfg, spec, {1, 0, 0}, 10);
    CHECK(r.ds.header.meas_dims == (std::vector<std::uint32_t>{2, 32}));
    r.ds.validate();
  }
}

TEST_CASE("generate: config guards") {
  nio::ProblemConfig cfg;
  cfg.problem = nio::ProblemKind::rte;
  cfg.n = 65;
  nio::CoefficientSpec spec;  // trig: 2D kind on a 1D problem
  CHECK_THROWS_AS(nio::generate_dataset(cfg, spec, {1, 0, 0}, 1), nio::ConfigError);
  cfg.problem = nio::ProblemKind::seismic;
  spec.kind = nio::CoeffKind::inclusions;
  CHECK_THROWS_AS(nio::generate_dataset(cfg, spec, {1, 0, 0}, 1), nio::ConfigError);
  spec.kind = nio::CoeffKind::layered_velocity;
  spec.layer_amax = 5.0;  // above the CFL bound
  CHECK_THROWS_AS(nio::generate_dataset(cfg, spec, {1, 0, 0}, 1), nio::ConfigError);
  spec.layer_amax = 3.0;
  CHECK_THROWS_AS(nio::generate_dataset(cfg, spec, {0, 0, 0}, 1), nio::ConfigError);
}

TEST_CASE("niod: write-read round trip is lossless") {
  nio::ProblemConfig cfg;
  cfg.problem = nio::ProblemKind::calderon;
  cfg.n = 16;
  nio::CoefficientSpec spec;
  auto r = nio::generate_dataset(cfg, spec, {2, 1, 1}, 321);
  const char* path = tmp_path("roundtrip.niod");
  nio::write_dataset(r.ds, path);
  auto back = nio::read_dataset(path);
  CHECK(back.header.problem == r.ds.header.problem);
  CHECK(back.header.n == r.ds.header.n);
  CHECK(back.header.L == r.ds.header.L);
  CHECK(back.header.meas_dims == r.ds.header.meas_dims);
  CHECK(back.header.count == r.ds.header.count);
  CHECK(back.header.seed == r.ds.header.seed);
  CHECK(back.header.omega_family == r.ds.header.omega_family);
  CHECK(back.header.omega_pde == r.ds.header.omega_pde);
  CHECK(back.psi == r.ds.psi);      // bit-equal payload
  CHECK(back.coeff == r.ds.coeff);
  CHECK(back.split == r.ds.split);
  std::remove(path);
}

TEST_CASE("niod: corruption is reported with offsets") {
  nio::ProblemConfig cfg;
  cfg.problem = nio::ProblemKind::calderon;
  cfg.n = 16;
  nio::CoefficientSpec spec;
  auto r = nio::generate_dataset(cfg, spec, {1, 0, 0}, 5);
  const char* path = tmp_path("corrupt.niod");
  nio::write_dataset(r.ds, path);
  auto bytes = slurp(path);

  auto expect_format_error = [&](const std::vector<char>& data, const char* needle) {
    spit(path, data);
    bool threw = false;
    try {
      nio::read_dataset(path);
    } catch (const nio::FormatError& e) {
      threw = true;
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
    CHECK(threw);
  };

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  expect_format_error(bad_magic, "magic");

  auto bad_version = bytes;
  bad_version[4] = 9;
  expect_format_error(bad_version, "version");

  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  expect_format_error(truncated, "truncated");

  auto trailing = bytes;
  trailing.push_back('\0');
  expect_format_error(trailing, "trailing");

  auto bad_kind = bytes;
  bad_kind[8] = 42;
  expect_format_error(bad_kind, "problem kind");

  std::remove(path);
  CHECK_THROWS_AS(nio::read_dataset("/tmp/definitely_missing.niod"), nio::FormatError);
}
