#include "spark/core.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spark {

namespace {
constexpr double kMega = 1e6;
constexpr double kMilli = 1e-3;
constexpr double kMicro = 1e-6;
} // namespace

void HardwareConfig::validate() const
{
  if (!(g_max > 0.0)) { throw ConfigError(fmt::format("g_max must be > 0, got {}", g_max)); }
  if (!(s_max > 0.0)) { throw ConfigError(fmt::format("s_max must be > 0, got {}", s_max)); }
  if (!(raster_dt > 0.0)) { throw ConfigError(fmt::format("raster_dt must be > 0, got {}", raster_dt)); }
  if (!(dwell_dt > 0.0)) { throw ConfigError(fmt::format("dwell_dt must be > 0, got {}", dwell_dt)); }
  if (!(gamma > 0.0)) { throw ConfigError(fmt::format("gamma must be > 0, got {}", gamma)); }
  if (n < 8) { throw ConfigError(fmt::format("n must be >= 8, got {}", n)); }
  if (!(fov > 0.0)) { throw ConfigError(fmt::format("fov must be > 0, got {}", fov)); }
  double const ratio = raster_dt / dwell_dt;
  if (ratio < 1.0 - 1e-9 || std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
    throw ConfigError(fmt::format("raster_dt ({}) must be an integer multiple of dwell_dt ({})", raster_dt, dwell_dt));
  }
}

Index HardwareConfig::oversampling() const { return static_cast<Index>(std::llround(raster_dt / dwell_dt)); }

double HardwareConfig::k_max() const { return static_cast<double>(n) / (2.0 * fov); }

void TrajectorySpec::validate() const
{
  hardware.validate();
  if (n_shots < 1) { throw ConfigError(fmt::format("n_shots must be >= 1, got {}", n_shots)); }
  if (n_samples < 3) { throw ConfigError(fmt::format("n_samples must be >= 3, got {}", n_samples)); }
}

double NormalizedSpeedBound(HardwareConfig const &hw)
{
  hw.validate();
  return hw.gamma * kMega * hw.g_max * kMilli / hw.k_max() * hw.raster_dt * kMicro;
}

double NormalizedAccelBound(HardwareConfig const &hw)
{
  hw.validate();
  double const dt = hw.raster_dt * kMicro;
  return hw.gamma * kMega * hw.s_max / hw.k_max() * dt * dt;
}

double AccelerationFactor(TrajectorySpec const &spec)
{
  spec.validate();
  double const n = static_cast<double>(spec.hardware.n);
  return n * n / (static_cast<double>(spec.n_shots) * static_cast<double>(spec.n_samples) *
                  static_cast<double>(spec.hardware.oversampling()));
}

Trajectory::Trajectory(TrajectorySpec spec, std::vector<Vec2> points)
  : spec_(spec)
  , points_(std::move(points))
{
  spec_.validate();
  if (static_cast<Index>(points_.size()) != spec_.n_shots * spec_.n_samples) {
    throw DataError(fmt::format("trajectory has {} points, expected {} x {}", points_.size(), spec_.n_shots,
                                spec_.n_samples));
  }
  // Tolerate round-off at the boundary of Ω, reject anything else.
  constexpr double slack = 1e-9;
  for (auto &p : points_) {
    for (double *c : {&p.x, &p.y}) {
      if (!std::isfinite(*c) || std::abs(*c) > 1.0 + slack) {
        throw DataError(fmt::format("trajectory coordinate {} outside [-1, 1]", *c));
      }
      *c = std::clamp(*c, -1.0, 1.0);
    }
  }
}

std::span<Vec2 const> Trajectory::shot(Index i) const
{
  return std::span<Vec2 const>(points_).subspan(static_cast<std::size_t>(i * spec_.n_samples),
                                                static_cast<std::size_t>(spec_.n_samples));
}

GradientWaveform TrajectoryToWaveform(Trajectory const &t)
{
  auto const &hw = t.spec().hardware;
  double const dt = hw.raster_dt * kMicro;
  double const gamma = hw.gamma * kMega;
  // Normalized Δk -> T/m, then to mT/m.
  double const g_scale = hw.k_max() / (gamma * dt) / kMilli;
  double const s_scale = hw.k_max() / (gamma * dt * dt);

  GradientWaveform w;
  w.shots = t.shots();
  w.samples = t.samples();
  Index const ns = t.samples();
  w.start.reserve(static_cast<std::size_t>(w.shots));
  w.g.reserve(static_cast<std::size_t>(w.shots * (ns - 1)));
  w.slew.reserve(static_cast<std::size_t>(w.shots * (ns - 2)));
  for (Index i = 0; i < t.shots(); ++i) {
    auto const k = t.shot(i);
    w.start.push_back(k[0]);
    for (Index s = 0; s + 1 < ns; ++s) {
      w.g.push_back(g_scale * (k[s + 1] - k[s]));
    }
    for (Index s = 1; s + 1 < ns; ++s) {
      w.slew.push_back(s_scale * (k[s + 1] - 2.0 * k[s] + k[s - 1]));
    }
  }
  return w;
}

std::vector<Vec2> IntegrateWaveform(GradientWaveform const &w, HardwareConfig const &hw)
{
  double const dt = hw.raster_dt * kMicro;
  double const gamma = hw.gamma * kMega;
  double const k_scale = gamma * dt * kMilli / hw.k_max();
  std::vector<Vec2> k;
  k.reserve(static_cast<std::size_t>(w.shots * w.samples));
  for (Index i = 0; i < w.shots; ++i) {
    Vec2 pos = w.start[static_cast<std::size_t>(i)];
    k.push_back(pos);
    for (Index s = 0; s + 1 < w.samples; ++s) {
      pos += k_scale * w.g[static_cast<std::size_t>(i * (w.samples - 1) + s)];
      k.push_back(pos);
    }
  }
  return k;
}

DensityGrid::DensityGrid(Re2 values)
  : values_(std::move(values))
{
  if (values_.rows() != values_.cols() || values_.rows() < 1) {
    throw DataError(fmt::format("density grid must be square, got {}x{}", values_.rows(), values_.cols()));
  }
  double sum = 0.0;
  for (double v : values_.flat()) {
    if (!(v >= 0.0) || !std::isfinite(v)) { throw DataError(fmt::format("density entry {} is not a nonnegative number", v)); }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) { throw DataError(fmt::format("density sums to {}, expected 1", sum)); }
}

DensityGrid DensityGrid::Normalized(Re2 weights)
{
  double sum = 0.0;
  for (double v : weights.flat()) {
    if (!(v >= 0.0) || !std::isfinite(v)) { throw DataError(fmt::format("density weight {} is not a nonnegative number", v)); }
    sum += v;
  }
  if (!(sum > 0.0)) { throw DataError("density weights sum to zero"); }
  for (double &v : weights.flat()) {
    v /= sum;
  }
  return DensityGrid(std::move(weights));
}

} // namespace spark
