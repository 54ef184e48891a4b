#pragma once

#include "spark/config.hpp"
#include "spark/core.hpp"
#include "spark/nufft.hpp"
#include "spark/recon.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spark::study {

inline constexpr char const *kMethods[] = {"vds", "spectrum", "log-spectrum", "loupe-lite"};

// Builds the target density for one of kMethods. The data-driven methods learn from `training`.
DensityGrid BuildDensity(std::string const &method, config::RunConfig const &run, std::vector<Re2> const &training);

// Phantoms used to learn data-driven densities, disjoint from the evaluation slices for a given seed.
std::vector<Re2> TrainingSet(Index n, Index count, std::uint64_t seed);

Trajectory DesignTrajectory(DensityGrid const &rho, config::RunConfig const &run);

// Plan over the dwell-time samples of a trajectory.
nufft::Plan AcquisitionPlan(Trajectory const &t, config::RunConfig const &run);

// Noise-free multi-coil acquisition of a real image with simulated Gaussian coils.
recon::KSpace Acquire(Re2 const &image, nufft::Plan const &plan, Index n_coils);

struct Slice
{
  std::string id;
  std::string contrast;
  std::filesystem::path file;         // empty for generated phantoms
  std::optional<Index> phantom_index; // set for generated phantoms
};

struct Manifest
{
  std::vector<Slice> slices;
  std::vector<std::string> methods;
  config::RunConfig run;
  std::optional<double> lambda; // unset: grid search per slice
  Index lambda_grid = 9;
  Index coils = 1;
  Index training_images = 20;
  std::uint64_t seed = 0;
  Index workers = 0; // 0: OpenMP default
  std::filesystem::path output;
};

// JSON manifest. Relative paths resolve against the manifest's directory. Every referenced file
// must exist; violations throw ConfigError before anything is computed.
Manifest LoadManifest(std::filesystem::path const &path);
Manifest ParseManifest(std::string const &json_text, std::filesystem::path const &base);

struct Row
{
  std::string slice_id;
  std::string method;
  double R = 0.0;
  double lambda = 0.0;
  double ssim = 0.0;
  double psnr = 0.0;
  Index recon_iters = 0;
  double wall_ms = 0.0;
  std::string error; // non-empty for a failed slice
};

struct Summary
{
  std::string method;
  Index slices = 0;
  Index failures = 0;
  double ssim_q1 = 0.0, ssim_median = 0.0, ssim_q3 = 0.0;
  double psnr_q1 = 0.0, psnr_median = 0.0, psnr_q3 = 0.0;
};

struct Result
{
  std::vector<Row> rows; // sorted by slice id, then method in manifest order
  std::vector<Summary> summary;
  Index failures() const;
};

// Linear-interpolated quantile, q ∈ [0, 1].
double Quantile(std::vector<double> v, double q);

Result RunRetrospective(Manifest const &m);

// results.csv (slice_id, density_method, R, lambda, ssim, psnr, recon_iters), timings.csv,
// summary.csv and failures.csv in `dir`. Timings live apart so results.csv is reproducible.
void WriteResult(Result const &r, std::filesystem::path const &dir);

} // namespace spark::study
