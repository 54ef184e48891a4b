#include "spark/config.hpp"
#include "spark/constraints.hpp"
#include "spark/density.hpp"
#include "spark/io.hpp"
#include "spark/metrics.hpp"
#include "spark/phantom.hpp"
#include "spark/plot.hpp"
#include "spark/sparkling.hpp"
#include "spark/study.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

using namespace spark;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit
{
  Ok = 0,
  Usage = 1,
  Data = 2,
  Numerical = 3
};

config::RunConfig Config(std::string const &path) { return path.empty() ? config::ParseRunConfig("") : config::LoadRunConfig(path); }

// Finite numbers as JSON numbers, the rest as strings.
json Number(double v) { return std::isfinite(v) ? json(v) : json(fmt::format("{}", v)); }

std::vector<Re2> Images(std::vector<std::string> const &files, Index phantoms, Index n, std::uint64_t seed)
{
  std::vector<Re2> out;
  for (auto const &f : files) {
    out.push_back(io::ReadMagnitude(f));
  }
  for (Index j = 0; j < phantoms; ++j) {
    out.push_back(phantom::Random(n, seed, j));
  }
  if (out.empty()) { throw ConfigError("no training images: give --images or --phantoms"); }
  return out;
}

void WriteCsv(fs::path const &path, std::string const &text)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) { throw DataError(fmt::format("cannot open '{}' for writing", path.string())); }
  out << text;
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"2D SPARKLING trajectory design, simulated acquisition and reconstruction"};
  app.require_subcommand(1);
  int status = Ok;

  // density
  auto *dens = app.add_subcommand("density", "Build a target sampling density");
  std::string dens_method, dens_out, dens_cfg;
  std::vector<std::string> dens_images;
  Index dens_phantoms = 0;
  std::uint64_t dens_seed = 0;
  dens->add_option("method", dens_method, "vds | spectrum | log-spectrum | loupe-lite")
    ->required()
    ->check(CLI::IsMember({"vds", "spectrum", "log-spectrum", "loupe-lite"}));
  dens->add_option("--config", dens_cfg, "Run configuration file");
  dens->add_option("--images", dens_images, "Training image files (data-driven methods)");
  dens->add_option("--phantoms", dens_phantoms, "Add this many random phantoms to the training set")->check(CLI::NonNegativeNumber);
  dens->add_option("--seed", dens_seed, "Phantom seed");
  dens->add_option("-o,--output", dens_out, "Density file")->required();
  dens->callback([&] {
    auto const run = Config(dens_cfg);
    std::vector<Re2> training;
    if (dens_method != "vds") { training = Images(dens_images, dens_phantoms, run.spec.hardware.n, dens_seed); }
    auto const rho = study::BuildDensity(dens_method, run, training);
    io::WriteDensity(dens_out, rho);
    fmt::print("{} density {}x{}, entropy {:.4f}\n", dens_method, rho.n(), rho.n(), density::Entropy(rho));
  });

  // sparkling generate
  auto *spark_cmd = app.add_subcommand("sparkling", "Trajectory optimization");
  spark_cmd->require_subcommand(1);
  auto *gen = spark_cmd->add_subcommand("generate", "Optimize a trajectory for a target density");
  std::string gen_density, gen_cfg, gen_out, gen_init;
  gen->add_option("--density", gen_density, "Density file")->required();
  gen->add_option("--config", gen_cfg, "Run configuration file");
  gen->add_option("--init", gen_init, "Initial trajectory file (with init = file)");
  gen->add_option("-o,--output", gen_out, "Trajectory file")->required();
  gen->callback([&] {
    auto const run = Config(gen_cfg);
    auto const rho = io::ReadDensity(gen_density);
    if (rho.n() != run.spec.hardware.n) {
      throw ConfigError(fmt::format("density is {}x{} but the configuration says n = {}", rho.n(), rho.n(), run.spec.hardware.n));
    }
    std::optional<Trajectory> init;
    if (run.sparkling.init == sparkling::Init::File) {
      if (gen_init.empty()) { throw ConfigError("init = file needs --init"); }
      init = io::ReadTrajectory(gen_init, run.spec.hardware);
    }
    auto const q = constraints::FromHardware(run.spec, run.anchor_center);
    auto const r = sparkling::Generate(rho, run.spec, q, run.sparkling, init);
    io::WriteTrajectory(gen_out, r.trajectory);
    auto const pts = sparkling::SampleDwellPoints(r.trajectory, run.spec.hardware.oversampling());
    fmt::print("{} shots x {} samples, R = {:.4g}, objective {:.6g} -> {:.6g}, {} iterations, density TV {:.4f}\n", r.trajectory.shots(),
               r.trajectory.samples(), AccelerationFactor(run.spec), r.initial_objective, r.final_objective, r.iterations,
               metrics::DensityTvDistance(pts, rho, std::gcd(rho.n(), Index{32})));
  });

  // traj check
  auto *traj = app.add_subcommand("traj", "Trajectory utilities");
  traj->require_subcommand(1);
  auto *check = traj->add_subcommand("check", "Check gradient and slew limits");
  std::string chk_traj, chk_cfg;
  double chk_tol = 1e-6;
  check->add_option("--traj", chk_traj, "Trajectory file")->required();
  check->add_option("--config", chk_cfg, "Run configuration file (hardware)");
  check->add_option("--tol", chk_tol, "Relative tolerance")->check(CLI::NonNegativeNumber);
  check->callback([&] {
    auto const run = Config(chk_cfg);
    auto const t = io::ReadTrajectory(chk_traj, run.spec.hardware);
    auto const q = constraints::FromHardware(t.spec(), run.anchor_center);
    auto const r = constraints::CheckFeasible(t, q, chk_tol);
    json j{{"feasible", r.feasible},
           {"max_speed_ratio", Number(r.max_speed_ratio)},
           {"max_accel_ratio", Number(r.max_accel_ratio)},
           {"max_anchor_error", Number(r.max_anchor_error)},
           {"max_box_excess", Number(r.max_box_excess)},
           {"worst_speed", {r.worst_speed_shot, r.worst_speed_sample}},
           {"worst_accel", {r.worst_accel_shot, r.worst_accel_sample}}};
    fmt::print("{}\n", j.dump());
    if (!r.feasible) { status = Numerical; }
  });

  // acquire
  auto *acq = app.add_subcommand("acquire", "Simulate multi-coil k-space on a trajectory");
  std::string acq_traj, acq_img, acq_cfg, acq_out;
  Index acq_coils = 1;
  acq->add_option("--traj", acq_traj, "Trajectory file")->required();
  acq->add_option("--image", acq_img, "Image file")->required();
  acq->add_option("--config", acq_cfg, "Run configuration file");
  acq->add_option("--coils", acq_coils, "Number of simulated coils")->check(CLI::PositiveNumber);
  acq->add_option("-o,--output", acq_out, "k-space file")->required();
  acq->callback([&] {
    auto const run = Config(acq_cfg);
    auto const t = io::ReadTrajectory(acq_traj, run.spec.hardware);
    auto const plan = study::AcquisitionPlan(t, run);
    auto const ks = study::Acquire(io::ReadMagnitude(acq_img), plan, acq_coils);
    io::WriteKSpace(acq_out, ks);
    fmt::print("{} coils x {} samples\n", ks.size(), plan.size());
  });

  // recon cs
  auto *rec = app.add_subcommand("recon", "Image reconstruction");
  rec->require_subcommand(1);
  auto *cs = rec->add_subcommand("cs", "Self-calibrated compressed-sensing reconstruction");
  std::string cs_ks, cs_traj, cs_cfg, cs_out, cs_lambda, cs_ref, cs_log;
  Index cs_grid = 9;
  cs->add_option("--kspace", cs_ks, "k-space file")->required();
  cs->add_option("--traj", cs_traj, "Trajectory file")->required();
  cs->add_option("--config", cs_cfg, "Run configuration file");
  cs->add_option("--lambda", cs_lambda, "Regularization weight, or 'search' (needs --ref)");
  cs->add_option("--ref", cs_ref, "Reference image for the lambda search");
  cs->add_option("--grid", cs_grid, "Number of lambda values searched over [1e-4, 1]")->check(CLI::PositiveNumber);
  cs->add_option("--log", cs_log, "CSV file for the objective trace (or the search table)");
  cs->add_option("-o,--output", cs_out, "Reconstructed image file")->required();
  cs->callback([&] {
    auto run = Config(cs_cfg);
    auto const t = io::ReadTrajectory(cs_traj, run.spec.hardware);
    auto const plan = study::AcquisitionPlan(t, run);
    auto const ks = io::ReadKSpace(cs_ks);
    auto const maps = recon::EstimateSensitivities(ks, plan, run.center_fraction);
    if (cs_lambda == "search") {
      if (cs_ref.empty()) { throw ConfigError("--lambda search needs --ref"); }
      auto const ref = io::ReadMagnitude(cs_ref);
      auto const s = recon::SearchLambda(ks, plan, maps, ref, recon::LogGrid(cs_grid), run.recon, metrics::AutoMask(ref));
      std::string table = "lambda,ssim,psnr,iterations,error\n";
      for (auto const &r : s.table) {
        table += fmt::format("{:.6g},{:.6f},{:.4f},{},{}\n", r.lambda, r.ssim, r.psnr, r.iterations, r.error);
      }
      if (!cs_log.empty()) { WriteCsv(cs_log, table); }
      run.recon.lambda = s.best;
      fmt::print("best lambda {:.6g}\n", s.best);
    } else if (!cs_lambda.empty()) {
      try {
        std::size_t used = 0;
        run.recon.lambda = std::stod(cs_lambda, &used);
        if (used != cs_lambda.size()) { throw std::invalid_argument(cs_lambda); }
      } catch (std::logic_error const &) {
        throw ConfigError(fmt::format("--lambda: '{}' is neither a number nor 'search'", cs_lambda));
      }
    }
    try {
      auto const r = recon::CsReconstruct(ks, plan, maps, run.recon);
      io::WriteImages(cs_out, {r.image});
      if (!cs_log.empty() && cs_lambda != "search") {
        std::string log = "iter,objective,time_ms\n";
        for (auto const &e : r.log) {
          log += fmt::format("{},{:.10g},{:.3f}\n", e.iter, e.objective, e.time_ms);
        }
        WriteCsv(cs_log, log);
      }
      fmt::print("lambda {:.6g}, {} iterations, objective {:.6g}\n", run.recon.lambda, r.iterations, r.log.back().objective);
    } catch (recon::ReconDivergence const &e) {
      if (!cs_log.empty()) {
        std::string log = "iter,objective,time_ms\n";
        for (auto const &rec_e : e.log()) {
          log += fmt::format("{},{:.10g},{:.3f}\n", rec_e.iter, rec_e.objective, rec_e.time_ms);
        }
        WriteCsv(cs_log, log);
      }
      throw;
    }
  });

  // score
  auto *score = app.add_subcommand("score", "SSIM and PSNR against a reference");
  std::string sc_ref, sc_test, sc_mask = "auto";
  score->add_option("--ref", sc_ref, "Reference image")->required();
  score->add_option("--test", sc_test, "Test image")->required();
  score->add_option("--mask", sc_mask, "auto, full, or a mask image file (nonzero = inside)");
  score->callback([&] {
    auto const ref = io::ReadMagnitude(sc_ref);
    auto const test = io::ReadMagnitude(sc_test);
    metrics::Mask mask;
    if (sc_mask == "auto") {
      mask = metrics::AutoMask(ref);
    } else if (sc_mask == "full") {
      mask = metrics::FullMask(ref.rows());
    } else {
      auto const m = io::ReadMagnitude(sc_mask);
      mask = metrics::Mask(m.rows(), m.cols());
      for (Index i = 0; i < m.size(); ++i) {
        mask[i] = m[i] != 0.0 ? 1 : 0;
      }
    }
    auto const q = metrics::Score(ref, test, mask);
    json j{{"ssim", Number(q.ssim)}, {"psnr", Number(q.psnr)}, {"psnr_infinite", q.psnr_infinite}, {"mask_coverage", Number(q.mask_coverage)}};
    fmt::print("{}\n", j.dump());
  });

  // study retro
  auto *stud = app.add_subcommand("study", "Retrospective studies");
  stud->require_subcommand(1);
  auto *retro = stud->add_subcommand("retro", "Run a retrospective study from a JSON manifest");
  std::string st_manifest, st_out;
  retro->add_option("--manifest", st_manifest, "Manifest file")->required();
  retro->add_option("-o,--output", st_out, "Output directory (overrides the manifest)");
  retro->callback([&] {
    auto m = study::LoadManifest(st_manifest);
    if (!st_out.empty()) { m.output = st_out; }
    if (m.output.empty()) { throw ConfigError("no output directory: set 'output' in the manifest or pass -o"); }
    auto const r = study::RunRetrospective(m);
    study::WriteResult(r, m.output);
    for (auto const &s : r.summary) {
      fmt::print("{:<13} n={:<3} failed={:<3} SSIM median {:.4f} [{:.4f}, {:.4f}]  PSNR median {:.2f} [{:.2f}, {:.2f}]\n", s.method, s.slices,
                 s.failures, s.ssim_median, s.ssim_q1, s.ssim_q3, s.psnr_median, s.psnr_q1, s.psnr_q3);
    }
    if (r.failures() > 0) {
      fmt::print(stderr, "{} slice reconstructions failed, see failures.csv\n", r.failures());
      status = Numerical;
    }
  });

  // plot
  auto *plot = app.add_subcommand("plot", "Render a file to PNG");
  plot->require_subcommand(1);
  std::string pl_in, pl_out, pl_cfg;
  auto add_plot = [&](char const *name, char const *help) {
    auto *c = plot->add_subcommand(name, help);
    c->add_option("input", pl_in, "Input file")->required();
    c->add_option("-o,--output", pl_out, "PNG file")->required();
    return c;
  };
  add_plot("density", "Density heatmap")->callback([&] { plot::WritePng(pl_out, plot::DensityHeatmap(io::ReadDensity(pl_in))); });
  add_plot("traj", "Trajectory with shot 0 in red")->callback([&] {
    plot::WritePng(pl_out, plot::TrajectoryLines(io::ReadTrajectory(pl_in, HardwareConfig{})));
  });
  add_plot("image", "Grayscale magnitude image")->callback([&] { plot::WritePng(pl_out, plot::ImageGray(io::ReadMagnitude(pl_in))); });

  // phantom
  auto *ph = app.add_subcommand("phantom", "Write a test image");
  Index ph_n = 320, ph_index = 0;
  std::uint64_t ph_seed = 0;
  bool ph_shepp = false;
  std::string ph_out;
  ph->add_option("--n", ph_n, "Matrix size")->check(CLI::Range(Index{8}, Index{4096}));
  ph->add_option("--seed", ph_seed, "Random phantom seed");
  ph->add_option("--index", ph_index, "Random phantom index")->check(CLI::NonNegativeNumber);
  ph->add_flag("--shepp-logan", ph_shepp, "Plain Shepp-Logan instead of a random variant");
  ph->add_option("-o,--output", ph_out, "Image file")->required();
  ph->callback([&] { io::WriteImage(ph_out, ph_shepp ? phantom::SheppLogan(ph_n) : phantom::Random(ph_n, ph_seed, ph_index)); });

  // config keys
  auto *cfg = app.add_subcommand("config", "Configuration help");
  cfg->require_subcommand(1);
  cfg->add_subcommand("keys", "List every configuration key")->callback([] {
    for (auto const &k : config::Keys()) {
      fmt::print("{:<22} {}\n", k.key, k.help);
    }
  });

  try {
    app.parse(argc, argv);
  } catch (CLI::ParseError const &e) {
    int const code = app.exit(e);
    return code == 0 ? Ok : Usage;
  } catch (NumericalError const &e) {
    fmt::print(stderr, "numerical failure: {}\n", e.what());
    return Numerical;
  } catch (DataError const &e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return Data;
  } catch (fs::filesystem_error const &e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return Data;
  } catch (std::exception const &e) {
    fmt::print(stderr, "numerical failure: {}\n", e.what());
    return Numerical;
  }
  return status;
}
