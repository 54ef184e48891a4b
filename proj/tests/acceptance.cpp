// Acceptance run: one PASS/FAIL line per criterion. Usage: acceptance <sparkling2d> [workdir]

#include "spark/config.hpp"
#include "spark/constraints.hpp"
#include "spark/density.hpp"
#include "spark/io.hpp"
#include "spark/metrics.hpp"
#include "spark/nufft.hpp"
#include "spark/phantom.hpp"
#include "spark/recon.hpp"
#include "spark/sparkling.hpp"
#include "spark/study.hpp"
#include "spark/wavelet.hpp"

#include "oracles.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sys/wait.h>

using namespace spark;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome
{
  bool pass;
  std::string detail;
};

int failures = 0;

void Criterion(int id, char const *name, double budget_s, std::function<Outcome()> const &body)
{
  auto const t0 = Clock::now();
  Outcome r{false, ""};
  try {
    r = body();
  } catch (std::exception const &e) {
    r = {false, fmt::format("exception: {}", e.what())};
  }
  double const s = Seconds(t0);
  if (s > budget_s) {
    r.pass = false;
    r.detail += fmt::format("; over the {:.0f} s budget", budget_s);
  }
  if (!r.pass) { ++failures; }
  fmt::print("{} {:>2} {}: {} [{:.1f} s]\n", r.pass ? "PASS" : "FAIL", id, name, r.detail, s);
  std::fflush(stdout);
}

struct Run
{
  int code;
  std::string out;
};

Run Shell(std::string const &cmd)
{
  Run r{-1, ""};
  std::FILE *p = popen((cmd + " 2>&1").c_str(), "r");
  if (!p) { return r; }
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p)) {
    r.out += buf;
  }
  int const st = pclose(p);
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string Slurp(fs::path const &p)
{
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::string Quote(fs::path const &p) { return fmt::format("'{}'", p.string()); }

Cx2 RandomCx(std::mt19937_64 &rng, Index n)
{
  std::normal_distribution<double> g;
  Cx2 x(n, n);
  for (auto &v : x.flat()) {
    v = {g(rng), g(rng)};
  }
  return x;
}

Re2 RandomRe(std::mt19937_64 &rng, Index n)
{
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Re2 x(n, n);
  for (auto &v : x.flat()) {
    v = u(rng);
  }
  return x;
}

std::vector<Vec2> RandomLocations(std::mt19937_64 &rng, Index P)
{
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec2> k(static_cast<std::size_t>(P));
  for (auto &p : k) {
    p = {u(rng), u(rng)};
  }
  return k;
}

Cx Inner(std::span<Cx const> a, std::span<Cx const> b)
{
  Cx s{};
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i] * std::conj(b[i]);
  }
  return s;
}

double Distance(std::span<Vec2 const> a, std::span<Vec2 const> b)
{
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += Dot(a[i] - b[i], a[i] - b[i]);
  }
  return std::sqrt(s);
}

bool ValidDensity(DensityGrid const &rho)
{
  double s = 0.0;
  for (double v : rho.values().flat()) {
    if (!(v >= 0.0)) { return false; }
    s += v;
  }
  return std::abs(s - 1.0) <= 1e-9;
}

} // namespace

int main(int argc, char **argv)
{
  if (argc < 2) {
    fmt::print(stderr, "usage: {} <sparkling2d> [workdir]\n", argv[0]);
    return 1;
  }
  fs::path const cli = fs::absolute(argv[1]);
  fs::path const work = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "sparkling2d_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  std::string const exe = Quote(cli);

  Criterion(1, "acceleration factor", 1, [] {
    auto const c = config::ParseRunConfig("");
    double const R = AccelerationFactor(c.spec);
    return Outcome{R == 2.5 && c.spec.hardware.oversampling() == 5,
                   fmt::format("N={} Nc={} Ns={} os={} R={}", c.spec.hardware.n, c.spec.n_shots, c.spec.n_samples, c.spec.hardware.oversampling(), R)};
  });

  // Paper-default generation through the command line, shared by criteria 2 and 4.
  fs::path const rho_file = work / "vds.t", traj_file = work / "traj.t", cfg_file = work / "paper.cfg";
  std::ofstream(cfg_file) << "# paper defaults\n";
  double gen_seconds = 0.0;
  Run gen{-1, ""};

  Criterion(2, "hardware feasibility", 120, [&] {
    auto const d = Shell(fmt::format("{} density vds --config {} -o {}", exe, Quote(cfg_file), Quote(rho_file)));
    if (d.code != 0) { return Outcome{false, "density vds failed: " + d.out}; }
    auto const t0 = Clock::now();
    gen = Shell(fmt::format("{} sparkling generate --density {} --config {} -o {}", exe, Quote(rho_file), Quote(cfg_file), Quote(traj_file)));
    gen_seconds = Seconds(t0);
    if (gen.code != 0) { return Outcome{false, "generate failed: " + gen.out}; }
    auto const chk = Shell(fmt::format("{} traj check --traj {} --config {} --tol 1e-6", exe, Quote(traj_file), Quote(cfg_file)));
    auto const j = nlohmann::json::parse(chk.out);
    double const sr = j["max_speed_ratio"], ar = j["max_accel_ratio"];
    bool const ok = chk.code == 0 && j["feasible"] && sr <= 1 + 1e-6 && ar <= 1 + 1e-6 && gen_seconds < 120;
    return Outcome{ok, fmt::format("16x512 generated in {:.1f} s, speed ratio {:.8f}, accel ratio {:.8f}", gen_seconds, sr, ar)};
  });

  Criterion(3, "projection properties", 60, [] {
    TrajectorySpec spec;
    spec.n_shots = 4;
    spec.n_samples = 64;
    auto const q = constraints::FromHardware(spec, true);
    constraints::ProjectionOptions const opt;
    auto const base = constraints::Project(sparkling::RadialInit(spec, true), q, opt);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, q.step_bound);
    auto perturbed = [&] {
      std::vector<Vec2> pts(base.points().begin(), base.points().end());
      for (auto &p : pts) {
        p += Vec2{g(rng), g(rng)};
      }
      return pts;
    };
    auto project = [&](std::vector<Vec2> const &z) { return constraints::Projector(q, spec.n_shots, spec.n_samples, opt)(z); };

    double idem = 0.0;
    for (int t = 0; t < 10; ++t) {
      auto const once = project(perturbed());
      idem = std::max(idem, Distance(once, project(once)));
    }
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      auto const x = perturbed(), y = perturbed();
      worst = std::max(worst, Distance(project(x), project(y)) / Distance(x, y));
    }
    double oracle_err = 0.0;
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (int t = 0; t < 10; ++t) {
      std::vector<Vec2> z(5);
      for (auto &p : z) {
        p = {u(rng), u(rng)};
      }
      std::vector<constraints::Anchor> anchors;
      if (t % 2 == 0) { anchors.push_back({0, 2, {0.0, 0.0}}); }
      auto const got = constraints::ProjectShot(z, 0.05, 0.02, anchors, true, {});
      auto const want = oracle::DykstraProjection(z, 0.05, 0.02, anchors, true);
      for (std::size_t i = 0; i < z.size(); ++i) {
        oracle_err = std::max(oracle_err, Norm(got.points[i] - want[i]));
      }
    }
    bool const ok = idem <= 1e-8 && worst <= 1.0 + 1e-9 && oracle_err <= 1e-5;
    return Outcome{ok, fmt::format("idempotence {:.2e}, max Lipschitz ratio over 100 pairs {:.6f}, QP oracle error {:.2e}", idem, worst, oracle_err)};
  });

  Criterion(4, "density matching", 180, [&] {
    if (gen.code != 0) { return Outcome{false, "no trajectory from criterion 2"}; }
    auto const run = config::ParseRunConfig("");
    auto const rho = io::ReadDensity(rho_file);
    auto const t = io::ReadTrajectory(traj_file, run.spec.hardware);
    auto const k0 = sparkling::RadialInit(run.spec, run.sparkling.init == sparkling::Init::GoldenAngle);
    double const tv0 = metrics::DensityTvDistance(k0.points(), rho, 32);
    double const tv = metrics::DensityTvDistance(t.points(), rho, 32);
    double const cut = 1.0 - tv / tv0;
    return Outcome{cut >= 0.5 && gen_seconds < 180, fmt::format("binned TV {:.4f} -> {:.4f}, reduction {:.1f}%", tv0, tv, 100 * cut)};
  });

  Criterion(5, "gradient correctness", 60, [] {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0), pos(-0.9, 0.9);
    Re2 w(16, 16);
    for (auto &v : w.flat()) {
      v = u(rng);
    }
    sparkling::AttractionField const field(DensityGrid::Normalized(w));
    std::vector<Vec2> pts(8);
    for (auto &p : pts) {
      p = {pos(rng), pos(rng)};
    }
    auto const obj = sparkling::ObjectiveAndGradient(pts, field);
    double num = 0.0, den = 0.0;
    double const h = 1e-6;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (int c = 0; c < 2; ++c) {
        auto plus = pts, minus = pts;
        (c == 0 ? plus[i].x : plus[i].y) += h;
        (c == 0 ? minus[i].x : minus[i].y) -= h;
        double const fd = (sparkling::ObjectiveAndGradient(plus, field).value - sparkling::ObjectiveAndGradient(minus, field).value) / (2 * h);
        double const an = c == 0 ? obj.grad[i].x : obj.grad[i].y;
        num += (fd - an) * (fd - an);
        den += an * an;
      }
    }
    double const spark_err = std::sqrt(num / den);

    std::vector<Re2> const ims{RandomRe(rng, 16), RandomRe(rng, 16), RandomRe(rng, 16)};
    auto const E = density::SpectralEnergy(ims);
    density::LoupeLiteParams p;
    p.slope = 20.0;
    p.target_sparsity = 0.4;
    auto st = density::InitialLoupeState(16, p);
    for (auto &v : st.logits.flat()) {
      v *= 0.1;
    }
    auto const g = st.gradient(E);
    num = den = 0.0;
    std::uniform_int_distribution<Index> pick(0, 255);
    for (int k = 0; k < 20; ++k) {
      Index const i = pick(rng);
      double const w0 = st.logits[i];
      st.logits[i] = w0 + h;
      double const lp = st.loss(E);
      st.logits[i] = w0 - h;
      double const lm = st.loss(E);
      st.logits[i] = w0;
      double const fd = (lp - lm) / (2 * h);
      num += (fd - g[i]) * (fd - g[i]);
      den += g[i] * g[i];
    }
    double const loupe_err = std::sqrt(num / den);
    return Outcome{spark_err <= 1e-4 && loupe_err <= 1e-5, fmt::format("SPARKLING {:.2e}, LOUPE-lite {:.2e}", spark_err, loupe_err)};
  });

  Criterion(6, "Fourier operator", 60, [] {
    std::mt19937_64 rng(6);
    auto adjoint_err = [&](Index n, nufft::Mode mode) {
      double worst = 0.0;
      for (int t = 0; t < 20; ++t) {
        nufft::Plan const plan(RandomLocations(rng, 64), n, mode);
        auto const x = RandomCx(rng, n);
        std::normal_distribution<double> g;
        std::vector<Cx> y(64);
        for (auto &v : y) {
          v = {g(rng), g(rng)};
        }
        Cx const lhs = Inner(plan.forward(x), y);
        Cx const rhs = Inner(x.flat(), plan.adjoint(y).flat());
        worst = std::max(worst, std::abs(lhs - rhs) / std::abs(lhs));
      }
      return worst;
    };
    double const exact = adjoint_err(32, nufft::Mode::Exact);
    double const grid = adjoint_err(64, nufft::Mode::Gridded);
    auto const x = RandomCx(rng, 16);
    auto const X = oracle::BruteCenteredDft(x);
    auto const y = nufft::Plan(nufft::CartesianGrid(16), 16, nufft::Mode::Exact).forward(x);
    double d = 0.0, nx = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      d += std::norm(y[i] - X.flat()[i]);
      nx += std::norm(X.flat()[i]);
    }
    double const dft = std::sqrt(d / nx);
    return Outcome{exact <= 1e-10 && grid <= 1e-5 && dft <= 1e-10,
                   fmt::format("adjoint exact n=32 {:.1e}, gridded n=64 {:.1e}, grid-coincident vs DFT {:.1e}", exact, grid, dft)};
  });

  Criterion(7, "density compensation", 60, [] {
    std::vector<Vec2> k;
    std::vector<double> radius;
    for (Index s = 0; s < 64; ++s) {
      double const th = std::numbers::pi * static_cast<double>(s) / 64.0;
      for (Index i = 0; i < 64; ++i) {
        double const r = 0.95 * (-1.0 + 2.0 * static_cast<double>(i) / 63.0);
        k.push_back({r * std::cos(th), r * std::sin(th)});
        radius.push_back(std::abs(r));
      }
    }
    auto const dc = nufft::PipeWeights(nufft::Plan(k, 64), 10);
    double const ratio = dc.residuals.front() / dc.residuals.back();
    double const rho = oracle::Spearman(dc.w, radius);
    return Outcome{ratio >= 2.0 && rho > 0.99, fmt::format("residual {:.3f} -> {:.3f} ({:.1f}x), Spearman with radius {:.4f}", dc.residuals.front(),
                                                           dc.residuals.back(), ratio, rho)};
  });

  Criterion(8, "CS reconstruction", 600, [] {
    // (a) λ = 0 on the full Cartesian grid.
    std::mt19937_64 rng(8);
    Index const n = 32;
    Re2 const img = RandomRe(rng, n);
    nufft::Plan const full(nufft::CartesianGrid(n), n);
    auto const ks = study::Acquire(img, full, 1);
    recon::ReconConfig exact_cfg;
    exact_cfg.lambda = 0.0;
    exact_cfg.max_iter = 500;
    exact_cfg.tol = 0.0;
    auto const r0 = recon::CsReconstruct(ks, full, recon::SensitivityMaps{phantom::GaussianCoils(n, 1)}, exact_cfg);
    double err = 0.0, nrm = 0.0;
    for (Index i = 0; i < img.size(); ++i) {
      err += std::norm(r0.image[i] - img[i]);
      nrm += img[i] * img[i];
    }
    double const rel = std::sqrt(err / nrm);

    // (b) Shepp-Logan on an optimized trajectory.
    auto run = config::ParseRunConfig("n = 64\nn_shots = 32\nn_samples = 52\ndwell_dt = 10\nn_levels = 3\n");
    auto const rho = density::Vds(64, run.vds);
    auto const traj = study::DesignTrajectory(rho, run);
    auto const plan = study::AcquisitionPlan(traj, run);
    auto const ref = phantom::SheppLogan(64);
    auto const y = study::Acquire(ref, plan, 1);
    auto const maps = recon::EstimateSensitivities(y, plan, run.center_fraction);
    auto const mask = metrics::AutoMask(ref);
    auto adj = metrics::Magnitude(recon::DcAdjoint(y, plan, maps, nufft::PipeWeights(plan, 10).w));
    double const a = recon::FitScale(ref, adj, mask);
    for (auto &v : adj.flat()) {
      v *= a;
    }
    double const base = metrics::Ssim(ref, adj, mask);

    // (c) the λ grid search over [1e-4, 1].
    auto const grid = recon::LogGrid(9);
    auto const search = recon::SearchLambda(y, plan, maps, ref, grid, run.recon, mask);
    double best = 0.0;
    bool all_ran = search.table.size() == 9;
    for (auto const &row : search.table) {
      all_ran = all_ran && row.error.empty();
      best = std::max(best, row.ssim);
    }
    bool const protocol = all_ran && grid.front() == 1e-4 && grid.back() == 1.0;
    bool const ok = rel <= 1e-6 && best >= 0.85 && best >= base + 0.03 && protocol;
    return Outcome{ok, fmt::format("(a) λ=0 error {:.1e}; (b) R={:.2f} SSIM {:.4f} at λ={:.0e} vs adjoint {:.4f}; (c) {} λ values in [{:.0e}, {:.0e}]{}",
                                   rel, AccelerationFactor(run.spec), best, search.best, base, search.table.size(), grid.front(), grid.back(),
                                   all_ran ? "" : " with failures")};
  });

  Criterion(9, "wavelet transform", 60, [] {
    std::mt19937_64 rng(9);
    wavelet::WaveletConfig const cfg;
    double pr = 0.0, norm = 0.0;
    for (int t = 0; t < 100; ++t) {
      auto const x = RandomCx(rng, 64);
      auto const c = wavelet::Analysis(x, cfg);
      auto const back = wavelet::Synthesis(c, cfg);
      double nx = 0.0, nc = 0.0, d = 0.0;
      for (Index i = 0; i < x.size(); ++i) {
        nx += std::norm(x[i]);
        nc += std::norm(c[i]);
        d += std::norm(back[i] - x[i]);
      }
      pr = std::max(pr, std::sqrt(d / nx));
      norm = std::max(norm, std::abs(std::sqrt(nc) - std::sqrt(nx)) / std::sqrt(nx));
    }
    return Outcome{pr <= 1e-10 && norm <= 1e-10, fmt::format("{} on 100 images: reconstruction {:.1e}, norm {:.1e}", cfg.family, pr, norm)};
  });

  Criterion(10, "density constructors", 120, [] {
    std::vector<Re2> ims;
    for (Index j = 0; j < 20; ++j) {
      ims.push_back(phantom::Random(64, 10, j));
    }
    auto const run = config::ParseRunConfig("n = 64");
    bool valid = true;
    for (auto const *m : study::kMethods) {
      valid = valid && ValidDensity(study::BuildDensity(m, run, ims));
    }
    double const hs = density::Entropy(density::Spectrum(ims)), hl = density::Entropy(density::LogSpectrum(ims));
    auto const lr = density::LoupeLite(ims, run.loupe);
    double budget = 0.0;
    for (double m : lr.mean_trace) {
      budget = std::max(budget, std::abs(m - run.loupe.target_sparsity));
    }
    return Outcome{valid && hl > hs && budget <= 1e-12, fmt::format("all valid: {}; entropy log-spectrum {:.4f} > spectrum {:.4f}; max |mean(P) - γ| {:.1e} over {} steps",
                                                                   valid, hl, hs, budget, lr.mean_trace.size())};
  });

  Criterion(11, "metrics", 30, [] {
    std::mt19937_64 rng(11);
    auto const sl = phantom::SheppLogan(64);
    bool const ident = metrics::Ssim(sl, sl, metrics::AutoMask(sl)) == 1.0;
    double sym = 0.0, psnr = 0.0;
    for (int t = 0; t < 50; ++t) {
      auto const x = RandomRe(rng, 32), y = RandomRe(rng, 32);
      auto const m = metrics::FullMask(32);
      sym = std::max(sym, std::abs(metrics::Ssim(x, y, m) - metrics::Ssim(y, x, m)));
      double peak = 0.0, se = 0.0;
      for (Index i = 0; i < x.size(); ++i) {
        peak = std::max(peak, x[i]);
        se += (x[i] - y[i]) * (x[i] - y[i]);
      }
      double const want = 10.0 * std::log10(peak * peak / (se / static_cast<double>(x.size())));
      psnr = std::max(psnr, std::abs(metrics::Psnr(x, y, m) - want) / want);
    }
    return Outcome{ident && sym <= 1e-12 && psnr <= 1e-12, fmt::format("ssim(x,x)=1: {}; symmetry {:.1e}; PSNR oracle {:.1e}", ident, sym, psnr)};
  });

  Criterion(12, "end-to-end reproducibility", 1800, [&] {
    fs::path const manifest = work / "study.json";
    std::ofstream(manifest) << R"({"phantoms": {"count": 20, "contrasts": ["T1", "T2"]},
 "methods": ["vds", "spectrum", "log-spectrum", "loupe-lite"],
 "config": {"n": 64, "n_shots": 32, "n_samples": 52, "dwell_dt": 10, "n_levels": 3},
 "lambda": 0.001, "seed": 12, "training_images": 20})";
    double worst = 0.0;
    std::string csv[2];
    for (int k = 0; k < 2; ++k) {
      fs::path const out = work / fmt::format("study{}", k);
      auto const t0 = Clock::now();
      auto const r = Shell(fmt::format("{} study retro --manifest {} -o {}", exe, Quote(manifest), Quote(out)));
      worst = std::max(worst, Seconds(t0));
      if (r.code != 0) { return Outcome{false, fmt::format("study run {} exited with {}: {}", k, r.code, r.out)}; }
      csv[k] = Slurp(out / "results.csv");
    }
    auto const rows = std::count(csv[0].begin(), csv[0].end(), '\n') - 1;
    bool const ok = !csv[0].empty() && csv[0] == csv[1] && rows == 80 && worst < 900;
    return Outcome{ok, fmt::format("{} rows, identical bytes: {}, slowest run {:.0f} s", rows, csv[0] == csv[1], worst)};
  });

  fmt::print("{} of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
