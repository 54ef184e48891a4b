#include "spark/sparkling.hpp"

#include "spark/density.hpp"

#include "catch_amalgamated.hpp"

#include "oracles.hpp"

#include <random>

using namespace spark;
using namespace spark::sparkling;

namespace {

DensityGrid RandomDensity(Index n, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Re2 w(n, n);
  for (double &v : w.flat()) {
    v = u(rng);
  }
  return DensityGrid::Normalized(w);
}

DensityGrid Delta(Index n)
{
  Re2 w(n, n, 0.0);
  w(n / 2, n / 2) = 1.0;
  return DensityGrid(w);
}

std::vector<Vec2> RandomPoints(Index p, std::uint64_t seed, double scale = 0.95)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<Vec2> pts(static_cast<std::size_t>(p));
  for (auto &q : pts) {
    q = {u(rng), u(rng)};
  }
  return pts;
}

TrajectorySpec SmallSpec(Index nc, Index ns, Index n = 64)
{
  TrajectorySpec s;
  s.n_shots = nc;
  s.n_samples = ns;
  s.hardware.n = n;
  return s;
}

} // namespace

TEST_CASE("Attraction field", "[sparkling]")
{
  SECTION("Delta density gives the unit radial field")
  {
    // Centre the delta on a cell centre and query away from it.
    AttractionField const f(Delta(16));
    Vec2 const c{DensityGrid::CellCenter(8, 16), DensityGrid::CellCenter(8, 16)};
    for (Vec2 y : RandomPoints(10, 1)) {
      auto const s = f(y);
      Vec2 const d = y - c;
      CHECK(Norm(s.grad - (1.0 / Norm(d)) * d) < 1e-3);
      CHECK(std::abs(s.value - Norm(d)) < 1e-3);
    }
  }

  SECTION("Uniform density is balanced at the centre")
  {
    Re2 w(16, 16, 1.0);
    AttractionField const f(DensityGrid::Normalized(w));
    CHECK(Norm(f({0.0, 0.0}).grad) < 1e-12);
  }

  SECTION("Matches direct summation")
  {
    auto const rho = RandomDensity(16, 2);
    AttractionField const f(rho);
    for (Vec2 y : RandomPoints(10, 3, 1.0)) {
      auto const got = f(y);
      auto const want = oracle::DirectPotential(rho.values(), y);
      CHECK(std::abs(got.value - want.value) < 1e-3);
      CHECK(Norm(got.grad - want.grad) < 1e-3);
    }
  }

  SECTION("Matches direct summation at paper grid size")
  {
    auto const rho = density::Vds(320, {0.25, 2.0});
    AttractionField const f(rho);
    for (Vec2 y : RandomPoints(20, 4, 1.0)) {
      auto const got = f(y);
      auto const want = oracle::DirectPotential(rho.values(), y);
      CHECK(std::abs(got.value - want.value) < 1e-6);
      CHECK(Norm(got.grad - want.grad) < 1e-5);
    }
  }
}

TEST_CASE("Objective and gradient", "[sparkling]")
{
  auto const rho = RandomDensity(16, 5);
  AttractionField const field(rho);

  SECTION("Single point has no repulsion")
  {
    std::vector<Vec2> const one{{0.3, -0.4}};
    auto const obj = ObjectiveAndGradient(one, field);
    CHECK(obj.repulsion == 0.0);
    CHECK(obj.value == field(one[0]).value);
  }

  SECTION("Coincident pair has zero repulsion gradient")
  {
    std::vector<Vec2> const two{{0.1, 0.1}, {0.1, 0.1}};
    auto const r = RepulsionExact(two);
    CHECK(r.grad[0] == Vec2{});
    CHECK(r.grad[1] == Vec2{});
    CHECK(r.coincident_pairs == 1);
  }

  SECTION("Repulsion value against the pair sum")
  {
    auto const pts = RandomPoints(7, 6);
    double want = 0.0;
    for (auto const &a : pts) {
      for (auto const &b : pts) {
        want += Norm(a - b);
      }
    }
    want /= 2.0 * 49.0;
    CHECK(RepulsionExact(pts).value == Catch::Approx(want).epsilon(1e-14));
  }

  SECTION("Gradient matches central differences")
  {
    auto const pts = RandomPoints(8, 7);
    auto const obj = ObjectiveAndGradient(pts, field);
    double const h = 1e-6;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (int c = 0; c < 2; ++c) {
        auto plus = pts, minus = pts;
        (c == 0 ? plus[i].x : plus[i].y) += h;
        (c == 0 ? minus[i].x : minus[i].y) -= h;
        double const fd = (ObjectiveAndGradient(plus, field).value - ObjectiveAndGradient(minus, field).value) / (2 * h);
        double const an = c == 0 ? obj.grad[i].x : obj.grad[i].y;
        num += (fd - an) * (fd - an);
        den += an * an;
      }
    }
    CHECK(std::sqrt(num / den) <= 1e-4);
  }

  SECTION("Barnes-Hut approximates the exact repulsion")
  {
    auto const pts = RandomPoints(2000, 8);
    auto const ex = RepulsionExact(pts);
    auto const bh = RepulsionBarnesHut(pts, 0.5);
    CHECK(bh.value == Catch::Approx(ex.value).epsilon(1e-2));
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      Vec2 const d = bh.grad[i] - ex.grad[i];
      num += Dot(d, d);
      den += Dot(ex.grad[i], ex.grad[i]);
    }
    CHECK(std::sqrt(num / den) < 1e-2);
  }
}

TEST_CASE("Radial initialization", "[sparkling]")
{
  auto const spec = SmallSpec(5, 32);
  auto const t = RadialInit(spec, true);
  for (Index i = 0; i < 5; ++i) {
    CHECK(Norm(t(i, 16)) == 0.0);
    CHECK(Norm(t(i, 0)) == Catch::Approx(1.0));
  }
  auto const r = RadialInit(spec, false);
  CHECK(r(1, 0).x == Catch::Approx(-std::cos(std::numbers::pi / 5)));
}

TEST_CASE("Generate", "[sparkling]")
{
  SparklingConfig cfg;
  cfg.n_levels = 3;
  cfg.iters_per_level = 15;

  SECTION("Uniform density: feasible output, objective decreases, deterministic")
  {
    auto const spec = SmallSpec(4, 64);
    auto const q = constraints::FromHardware(spec, true);
    Re2 w(32, 32, 1.0);
    auto const rho = DensityGrid::Normalized(w);
    auto const res = Generate(rho, spec, q, cfg);
    CHECK(constraints::CheckFeasible(res.trajectory, q, 1e-6).feasible);
    CHECK(res.final_objective < res.initial_objective - 1e-9);
    auto const again = Generate(rho, spec, q, cfg);
    for (std::size_t i = 0; i < res.trajectory.points().size(); ++i) {
      CHECK(res.trajectory.points()[i] == again.trajectory.points()[i]);
    }
  }

  SECTION("Delta density pulls every sample inside radius 0.5")
  {
    auto const spec = SmallSpec(4, 64);
    auto const q = constraints::FromHardware(spec, true);
    SparklingConfig c = cfg;
    c.n_levels = 4;
    c.iters_per_level = 60;
    auto const res = Generate(Delta(32), spec, q, c);
    double rmax = 0.0;
    for (Vec2 p : res.trajectory.points()) {
      rmax = std::max(rmax, Norm(p));
    }
    CHECK(rmax <= 0.5);
    CHECK(constraints::CheckFeasible(res.trajectory, q, 1e-6).feasible);
  }

  SECTION("Equivariant under 90 degree rotation")
  {
    auto const spec = SmallSpec(4, 64);
    auto const q = constraints::FromHardware(spec, true);
    auto const rho = RandomDensity(32, 9);
    Re2 rot(32, 32);
    for (Index r = 0; r < 32; ++r) {
      for (Index c = 0; c < 32; ++c) {
        rot(c, 31 - r) = rho(r, c);
      }
    }
    auto const k0 = RadialInit(spec, true);
    std::vector<Vec2> k0r;
    for (Vec2 p : k0.points()) {
      k0r.push_back({-p.y, p.x});
    }
    SparklingConfig c = cfg;
    c.init = Init::File;
    auto const base = Generate(rho, spec, q, c, k0);
    auto const turned = Generate(DensityGrid(rot), spec, q, c, Trajectory(spec, k0r));
    double err = 0.0;
    for (std::size_t i = 0; i < k0r.size(); ++i) {
      Vec2 const p = base.trajectory.points()[i];
      err = std::max(err, Norm(turned.trajectory.points()[i] - Vec2{-p.y, p.x}));
    }
    CHECK(err <= 1e-6);
  }

  SECTION("Configuration checks")
  {
    auto const spec = SmallSpec(2, 60);
    auto const q = constraints::FromHardware(spec, true);
    SparklingConfig bad = cfg;
    bad.n_levels = 4;
    CHECK_THROWS_AS(Generate(DensityGrid::Normalized(Re2(16, 16, 1.0)), spec, q, bad), ConfigError);
  }
}

TEST_CASE("Dwell-time sampling", "[sparkling]")
{
  auto const spec = SmallSpec(3, 16);
  auto const t = RadialInit(spec, false);
  auto const same = SampleDwellPoints(t, 1);
  REQUIRE(same.size() == t.points().size());
  for (std::size_t i = 0; i < same.size(); ++i) {
    CHECK(same[i] == t.points()[i]);
  }

  auto const five = SampleDwellPoints(t, 5);
  REQUIRE(five.size() == 3u * 16u * 5u);
  // A straight spoke stays equally spaced after interpolation.
  double const step = Norm(five[1] - five[0]);
  for (std::size_t s = 1; s + 1 < 16 * 5; ++s) {
    CHECK(Norm(five[s + 1] - five[s]) == Catch::Approx(step).epsilon(1e-9));
  }

  TrajectorySpec paper;
  auto const full = SampleDwellPoints(RadialInit(paper, true), paper.hardware.oversampling());
  CHECK(full.size() == 40960u);
  CHECK(static_cast<double>(paper.hardware.n * paper.hardware.n) / static_cast<double>(full.size()) == 2.5);
}
