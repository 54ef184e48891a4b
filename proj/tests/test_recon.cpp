#include "spark/phantom.hpp"
#include "spark/recon.hpp"

#include "catch_amalgamated.hpp"

#include <Eigen/Dense>

#include <random>

using namespace spark;
using namespace spark::recon;

namespace {

Cx2 RandomImage(std::mt19937_64 &rng, Index n)
{
  std::normal_distribution<double> g;
  Cx2 x(n, n);
  for (auto &v : x.flat()) {
    v = {g(rng), g(rng)};
  }
  return x;
}

double NormOf(Cx2 const &x)
{
  double s = 0.0;
  for (Cx v : x.flat()) {
    s += std::norm(v);
  }
  return std::sqrt(s);
}

double RelDiff(Cx2 const &a, Cx2 const &b)
{
  Cx2 d = a;
  for (Index i = 0; i < d.size(); ++i) {
    d[i] -= b[i];
  }
  return NormOf(d) / NormOf(b);
}

Cx2 ToComplex(Re2 const &x)
{
  Cx2 c(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) {
    c[i] = x[i];
  }
  return c;
}

std::vector<Vec2> RandomLocations(std::mt19937_64 &rng, Index P, double radius = 1.0)
{
  std::uniform_real_distribution<double> u(-radius, radius);
  std::vector<Vec2> k(static_cast<std::size_t>(P));
  for (auto &p : k) {
    p = {u(rng), u(rng)};
  }
  return k;
}

} // namespace

TEST_CASE("Wavelet transform", "[wavelet]")
{
  std::mt19937_64 rng(4);
  WaveletConfig const cfg;

  SECTION("Perfect reconstruction and norm preservation")
  {
    for (std::string fam : {"sym8", "haar"}) {
      WaveletConfig c;
      c.family = fam;
      for (int trial = 0; trial < 10; ++trial) {
        auto const x = RandomImage(rng, 64);
        auto const z = wavelet::Analysis(x, c);
        CHECK(std::abs(NormOf(z) - NormOf(x)) <= 1e-10 * NormOf(x));
        CHECK(RelDiff(wavelet::Synthesis(z, c), x) <= 1e-10);
      }
    }
  }

  SECTION("Filter is orthonormal")
  {
    auto const h = wavelet::LowPass("sym8");
    double s = 0.0, s2 = 0.0;
    for (double v : h) {
      s += v;
      s2 += v * v;
    }
    CHECK(s == Catch::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(s2 == Catch::Approx(1.0).epsilon(1e-12));
  }

  SECTION("Zero image")
  {
    auto const z = wavelet::Analysis(Cx2(32, 32), cfg);
    for (Cx v : z.flat()) {
      CHECK(v == Cx{});
    }
  }

  SECTION("Constant image has no detail coefficients")
  {
    auto const z = wavelet::Analysis(Cx2(64, 64, Cx{3.0, -1.0}), cfg);
    Index const a = 64 >> cfg.n_scales;
    for (Index r = 0; r < 64; ++r) {
      for (Index c = 0; c < 64; ++c) {
        if (r < a && c < a) { continue; }
        CHECK(std::abs(z(r, c)) <= 1e-10);
      }
    }
  }

  SECTION("Size and family validation")
  {
    WaveletConfig bad;
    bad.n_scales = 7;
    CHECK_THROWS_AS(bad.validate(64), ConfigError);
    bad.n_scales = 0;
    CHECK_THROWS_AS(bad.validate(64), ConfigError);
    bad = {};
    bad.family = "db99";
    CHECK_THROWS_AS(bad.validate(64), ConfigError);
    CHECK_THROWS_AS(wavelet::Analysis(Cx2(40, 40), cfg), ConfigError);
  }
}

TEST_CASE("Soft threshold", "[recon]")
{
  for (double v : {-2.0, -0.3, 0.0, 0.1, 0.5, 4.0}) {
    double const want = (v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0)) * std::max(std::abs(v) - 0.4, 0.0);
    CHECK(SoftThreshold(Cx{v, 0.0}, 0.4).real() == Catch::Approx(want).margin(1e-15));
  }
  Cx const z = std::polar(2.0, 0.7);
  Cx const s = SoftThreshold(z, 0.5);
  CHECK(std::abs(s) == Catch::Approx(1.5));
  CHECK(std::arg(s) == Catch::Approx(0.7));
  CHECK(SoftThreshold(z, 2.5) == Cx{});
}

TEST_CASE("Encoding operator", "[recon]")
{
  std::mt19937_64 rng(8);
  Index const n = 16;
  nufft::Plan const plan(RandomLocations(rng, 150), n);
  auto const maps = phantom::GaussianCoils(n, 3);
  WaveletConfig wc;
  wc.n_scales = 2;
  std::vector<double> w(150);
  for (auto &v : w) {
    v = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
  }

  SECTION("Composite of synthesis, coil weighting and NUFFT")
  {
    Encoding const op(plan, maps, wc);
    auto const z = RandomImage(rng, n);
    auto const got = op.forward(z);
    auto const x = wavelet::Synthesis(z, wc);
    for (std::size_t l = 0; l < maps.size(); ++l) {
      Cx2 c(n, n);
      for (Index i = 0; i < c.size(); ++i) {
        c[i] = maps[l][i] * x[i];
      }
      auto const want = plan.forward(c);
      for (std::size_t q = 0; q < want.size(); ++q) {
        CHECK(std::abs(got[l][q] - want[q]) <= 1e-12 * (1.0 + std::abs(want[q])));
      }
    }
  }

  SECTION("Normal operator is Hermitian positive semidefinite")
  {
    Encoding const op(plan, maps, wc, w);
    for (int trial = 0; trial < 5; ++trial) {
      auto const z = RandomImage(rng, n);
      auto const Nz = op.adjoint(op.forward(z));
      Cx s{};
      for (Index i = 0; i < z.size(); ++i) {
        s += std::conj(z[i]) * Nz[i];
      }
      CHECK(s.real() >= 0.0);
      CHECK(std::abs(s.imag()) <= 1e-10 * s.real());
    }
  }

  SECTION("Power iteration against the dense eigenvalue")
  {
    Encoding const op(plan, maps, wc, w);
    Index const d = n * n;
    Eigen::MatrixXcd M(d, d);
    for (Index j = 0; j < d; ++j) {
      Cx2 e(n, n);
      e[j] = 1.0;
      auto const col = op.adjoint(op.forward(e));
      for (Index i = 0; i < d; ++i) {
        M(i, j) = col[i];
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(M, Eigen::EigenvaluesOnly);
    double const top = es.eigenvalues().maxCoeff();
    double const est = PowerIteration(op, 20);
    CHECK(est <= top * (1.0 + 1e-9));
    CHECK(est >= 0.95 * top);
  }
}

TEST_CASE("Sensitivity estimation", "[recon]")
{
  Index const n = 32;
  auto const img = phantom::SheppLogan(n);
  nufft::Plan const plan(nufft::CartesianGrid(n), n);
  auto const mask = metrics::AutoMask(img);

  SECTION("Single coil has unit magnitude")
  {
    auto const ks = nufft::Forward(plan, phantom::ApplyCoils(img, phantom::GaussianCoils(n, 1)));
    auto const s = EstimateSensitivities(ks, plan, 0.2);
    REQUIRE(s.maps.size() == 1);
    for (Index i = 0; i < s.maps[0].size(); ++i) {
      if (mask[i]) { CHECK(std::abs(s.maps[0][i]) == Catch::Approx(1.0).epsilon(1e-12)); }
    }
  }

  SECTION("Two identical coils split evenly")
  {
    auto const one = nufft::Forward(plan, phantom::ApplyCoils(img, phantom::GaussianCoils(n, 1)));
    KSpace const ks{one[0], one[0]};
    auto const s = EstimateSensitivities(ks, plan, 0.2);
    for (Index i = 0; i < s.maps[0].size(); ++i) {
      if (!mask[i]) { continue; }
      CHECK(s.maps[0][i] == s.maps[1][i]);
      CHECK(std::abs(s.maps[0][i]) == Catch::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    }
  }

  SECTION("Recovers smooth Gaussian coil profiles")
  {
    // n = 32 leaves too few samples inside radius 0.2 for a good low-resolution estimate.
    Index const n = 64;
    auto const img = phantom::SheppLogan(n);
    nufft::Plan const plan(nufft::CartesianGrid(n), n);
    auto const mask = metrics::AutoMask(img);
    auto const truth = phantom::GaussianCoils(n, 4);
    auto const ks = nufft::Forward(plan, phantom::ApplyCoils(img, truth));
    auto const s = EstimateSensitivities(ks, plan, 0.2);
    for (std::size_t l = 0; l < truth.size(); ++l) {
      std::vector<double> a, b;
      for (Index i = 0; i < img.size(); ++i) {
        if (!mask[i]) { continue; }
        double rss = 0.0;
        for (auto const &t : truth) {
          rss += std::norm(t[i]);
        }
        a.push_back(std::abs(truth[l][i]) / std::sqrt(rss));
        b.push_back(std::abs(s.maps[l][i]));
      }
      double ma = 0, mb = 0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
      }
      ma /= static_cast<double>(a.size());
      mb /= static_cast<double>(b.size());
      double sab = 0, saa = 0, sbb = 0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
      }
      CHECK(sab / std::sqrt(saa * sbb) > 0.95);
    }
  }

  SECTION("No central samples")
  {
    nufft::Plan const edge({{0.9, 0.9}, {-0.8, 0.95}}, n);
    KSpace const ks{{Cx{1.0}, Cx{2.0}}};
    CHECK_THROWS_AS(EstimateSensitivities(ks, edge, 0.2), DegenerateGeometryError);
  }
}

TEST_CASE("Compressed-sensing reconstruction", "[recon]")
{
  Index const n = 32;
  auto const img = phantom::SheppLogan(n);
  SensitivityMaps const ones{phantom::GaussianCoils(n, 1)};

  SECTION("Unregularized full-grid recovery")
  {
    nufft::Plan const plan(nufft::CartesianGrid(n), n);
    auto const ks = nufft::Forward(plan, {ToComplex(img)});
    ReconConfig cfg;
    cfg.lambda = 0.0;
    auto const r = CsReconstruct(ks, plan, ones, cfg);
    CHECK(RelDiff(r.image, ToComplex(img)) <= 1e-6);
  }

  SECTION("Large lambda gives zero")
  {
    std::mt19937_64 rng(9);
    nufft::Plan const plan(RandomLocations(rng, 400), n);
    auto const ks = nufft::Forward(plan, {ToComplex(img)});
    ReconConfig cfg;
    // λ ≥ 2‖∇f(0)‖∞ in the scaled problem, where the first gradient image has unit peak.
    cfg.lambda = 1e3;
    auto const r = CsReconstruct(ks, plan, ones, cfg);
    CHECK(NormOf(r.image) == 0.0);
  }

  SECTION("Objective decreases monotonically")
  {
    std::mt19937_64 rng(10);
    nufft::Plan const plan(RandomLocations(rng, 500, 0.6), n);
    auto const ks = nufft::Forward(plan, {ToComplex(img)});
    ReconConfig cfg;
    cfg.lambda = 1e-2;
    cfg.max_iter = 100;
    auto const r = CsReconstruct(ks, plan, ones, cfg);
    REQUIRE(r.log.size() >= 2);
    CHECK(r.log.back().objective < r.log.front().objective);
    for (std::size_t i = 1; i < r.log.size(); ++i) {
      CHECK(r.log[i].objective <= r.log[i - 1].objective + 1e-12);
    }
  }

  SECTION("Non-finite data is a divergence")
  {
    nufft::Plan const plan(nufft::CartesianGrid(n), n);
    auto ks = nufft::Forward(plan, {ToComplex(img)});
    ks[0][5] = Cx{std::nan(""), 0.0};
    ReconConfig cfg;
    CHECK_THROWS_AS(CsReconstruct(ks, plan, ones, cfg), DivergenceError);
  }

  SECTION("Configuration checks")
  {
    nufft::Plan const plan(nufft::CartesianGrid(n), n);
    auto const ks = nufft::Forward(plan, {ToComplex(img)});
    ReconConfig cfg;
    cfg.lambda = -1.0;
    CHECK_THROWS_AS(CsReconstruct(ks, plan, ones, cfg), ConfigError);
    cfg = {};
    CHECK_THROWS_AS(CsReconstruct({ks[0], ks[0]}, plan, ones, cfg), DataError);
  }
}

TEST_CASE("Lambda search", "[recon]")
{
  Index const n = 32;
  auto const img = phantom::SheppLogan(n);
  SensitivityMaps const ones{phantom::GaussianCoils(n, 1)};
  nufft::Plan const plan(nufft::CartesianGrid(n), n);
  auto const ks = nufft::Forward(plan, {ToComplex(img)});
  auto const mask = metrics::AutoMask(img);

  SECTION("Log grid")
  {
    auto const g = LogGrid(5);
    REQUIRE(g.size() == 5);
    CHECK(g.front() == Catch::Approx(1e-4));
    CHECK(g[2] == Catch::Approx(1e-2));
    CHECK(g.back() == Catch::Approx(1.0));
    CHECK(LogGrid(1) == std::vector<double>{1e-4});
  }

  SECTION("Single value")
  {
    auto const s = SearchLambda(ks, plan, ones, img, {0.03}, {}, mask);
    CHECK(s.best == 0.03);
    REQUIRE(s.table.size() == 1);
  }

  SECTION("Fully sampled noiseless data prefers the smallest lambda")
  {
    auto const grid = LogGrid(4);
    auto const s = SearchLambda(ks, plan, ones, img, grid, {}, mask);
    CHECK(s.best == grid.front());
    for (auto const &row : s.table) {
      CHECK(row.error.empty());
    }
  }
}

TEST_CASE("Phantoms", "[phantom]")
{
  auto const sl = phantom::SheppLogan(64);
  CHECK(sl(32, 32) == Catch::Approx(0.2));
  CHECK(sl(0, 0) == 0.0);
  auto const a = phantom::Random(64, 7, 3), b = phantom::Random(64, 7, 3), c = phantom::Random(64, 7, 4);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  for (double v : a.flat()) {
    CHECK(v >= 0.0);
  }
  auto const coils = phantom::GaussianCoils(16, 1);
  for (Cx v : coils[0].flat()) {
    CHECK(v == Cx{1.0});
  }
}
