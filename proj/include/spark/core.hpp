#pragma once

#include "spark/array.hpp"
#include "spark/errors.hpp"

#include <span>
#include <vector>

namespace spark {

// Scanner and imaging parameters, in the units conventional on the console.
struct HardwareConfig
{
  double g_max = 40.0;     // mT/m
  double s_max = 180.0;    // T/m/s
  double raster_dt = 10.0; // µs
  double dwell_dt = 2.0;   // µs
  double gamma = 42.57;    // MHz/T, already divided by 2π
  Index n = 320;           // matrix size per side
  double fov = 0.23;       // m

  // Throws ConfigError when any invariant is broken.
  void validate() const;

  // Dwell-time oversampling factor raster_dt / dwell_dt.
  Index oversampling() const;

  // n / (2 fov), in 1/m.
  double k_max() const;
};

struct TrajectorySpec
{
  Index n_shots = 16;
  Index n_samples = 512;
  HardwareConfig hardware;

  void validate() const;
};

// Largest Euclidean displacement between consecutive raster samples in normalized units.
double NormalizedSpeedBound(HardwareConfig const &hw);
// Largest second difference between consecutive raster samples in normalized units.
double NormalizedAccelBound(HardwareConfig const &hw);
double AccelerationFactor(TrajectorySpec const &spec);

// Multi-shot k-space trajectory in normalized coordinates, Ω = [-1, 1]².
// Sample s of shot i is stored at i * n_samples + s.
class Trajectory
{
public:
  Trajectory() = default;
  Trajectory(TrajectorySpec spec, std::vector<Vec2> points);

  TrajectorySpec const &spec() const { return spec_; }
  Index shots() const { return spec_.n_shots; }
  Index samples() const { return spec_.n_samples; }

  std::span<Vec2 const> points() const { return points_; }
  std::span<Vec2 const> shot(Index i) const;
  Vec2 operator()(Index shot, Index sample) const { return points_[static_cast<std::size_t>(shot * spec_.n_samples + sample)]; }

private:
  TrajectorySpec spec_;
  std::vector<Vec2> points_;
};

struct GradientWaveform
{
  Index shots = 0;
  Index samples = 0;         // raster samples of the source trajectory
  std::vector<Vec2> start;   // first k-space sample per shot (normalized)
  std::vector<Vec2> g;       // [shots][samples - 1], mT/m
  std::vector<Vec2> slew;    // [shots][samples - 2], T/m/s
};

GradientWaveform TrajectoryToWaveform(Trajectory const &t);
// Integrates gradients back to normalized k-space positions.
std::vector<Vec2> IntegrateWaveform(GradientWaveform const &w, HardwareConfig const &hw);

// Discretized sampling density: nonnegative, unit total mass, on cells of Ω.
// Row index runs along ky, column index along kx.
class DensityGrid
{
public:
  DensityGrid() = default;
  // Validates nonnegativity and unit mass (1e-9 relative).
  explicit DensityGrid(Re2 values);
  // Scales nonnegative weights to unit mass.
  static DensityGrid Normalized(Re2 weights);

  Index n() const { return values_.rows(); }
  Re2 const &values() const { return values_; }
  double operator()(Index r, Index c) const { return values_(r, c); }

  // Center of cell index i along one axis.
  static double CellCenter(Index i, Index n) { return -1.0 + (static_cast<double>(i) + 0.5) * 2.0 / static_cast<double>(n); }

private:
  Re2 values_;
};

} // namespace spark
