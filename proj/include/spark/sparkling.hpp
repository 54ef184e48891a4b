#pragma once

#include "spark/constraints.hpp"
#include "spark/core.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace spark::sparkling {

// Attraction potential Φ(y) = Σ_g ρ_g ‖y − x_g‖ over cell centers x_g, and its gradient.
//
// Far-field contributions are tabulated at cell corners (value, both first derivatives and the
// cross derivative) by FFT convolution and interpolated with a bicubic Hermite patch per cell.
// Cells within `kNear` of the query cell are summed exactly. The value and gradient returned by
// operator() are those of one C¹ interpolant, so they are mutually consistent.
class AttractionField
{
public:
  static constexpr Index kNear = 2;

  explicit AttractionField(DensityGrid const &rho);

  struct Sample
  {
    double value;
    Vec2 grad;
  };
  Sample operator()(Vec2 y) const;

  Index n() const { return n_; }

private:
  Index n_;
  double h_;
  Re2 rho_;
  // Per cell: 4 corners (x-major: (0,0), (1,0), (0,1), (1,1)) × (Φ, Φx, Φy, Φxy) of the far field.
  std::vector<std::array<double, 16>> far_;
};

struct RepulsionOptions
{
  Index exact_max = 32768; // above this many points use the quadtree approximation
  double theta = 0.5;      // Barnes–Hut opening angle
};

struct Objective
{
  double value = 0.0;      // attraction − repulsion
  double attraction = 0.0; // (1/p) Σ Φ(k_i)
  double repulsion = 0.0;  // (1/2p²) Σ_{i≠j} ‖k_i − k_j‖
  std::vector<Vec2> grad;
  Index coincident_pairs = 0; // exact pairs only
};

Objective ObjectiveAndGradient(std::span<Vec2 const> points, AttractionField const &field,
                               RepulsionOptions const &rep = {});

// Repulsion term alone. `exact` selects the O(p²) sum regardless of size.
struct Repulsion
{
  double value = 0.0;
  std::vector<Vec2> grad;
  Index coincident_pairs = 0;
};
Repulsion RepulsionExact(std::span<Vec2 const> points);
Repulsion RepulsionBarnesHut(std::span<Vec2 const> points, double theta);

enum class Init
{
  RadialInOut,
  GoldenAngle,
  File
};

struct SparklingConfig
{
  Index n_levels = 4;
  Index iters_per_level = 60;
  double step_scale = 0.1; // η₀ = step_scale · step_bound / ‖∇F(K₀)‖∞ on every level
  Index max_halvings = 20;
  double step_growth = 2.0; // η multiplier after every accepted step; 1 gives pure backtracking
  Init init = Init::GoldenAngle;
  std::uint64_t seed = 0;
  constraints::ProjectionOptions projection{5000, 1e-6}; // inside the descent loop
  constraints::ProjectionOptions final_projection;       // applied once to the returned trajectory
  RepulsionOptions repulsion;

  void validate(Index n_samples) const;
};

// In-out spokes through the origin, sample ⌊Ns/2⌋ at k = 0, spanning [-1, 1).
Trajectory RadialInit(TrajectorySpec const &spec, bool golden_angle);

struct GenerateResult
{
  Trajectory trajectory;
  double initial_objective = 0.0; // F(K₀) at full resolution
  double final_objective = 0.0;
  std::vector<double> trace; // accepted objective values, all levels
  Index iterations = 0;
  Index jitter_restarts = 0;
};

// Carries the iterate at which the objective became non-finite.
class IterateError : public NumericalError
{
public:
  IterateError(std::string const &what, std::vector<Vec2> iterate)
    : NumericalError(what)
    , iterate_(std::move(iterate))
  {
  }
  std::vector<Vec2> const &iterate() const { return iterate_; }

private:
  std::vector<Vec2> iterate_;
};

// Projected gradient descent K ← Π_Q(K − η ∇F(K)) over a coarse-to-fine pyramid of raster
// resolutions. On a level decimated by d the step and acceleration bounds scale by d and d².
GenerateResult Generate(DensityGrid const &rho, TrajectorySpec const &spec, constraints::ConstraintSet const &q,
                        SparklingConfig const &cfg, std::optional<Trajectory> const &init = std::nullopt);

// Linear interpolation at dwell resolution: os points per raster interval, the last interval
// extrapolated along the final raster step. Returns [shots][samples · os].
std::vector<Vec2> SampleDwellPoints(Trajectory const &t, Index os);

// Coefficient of variation of nearest-neighbour distances over all samples.
double NearestNeighbourCV(std::span<Vec2 const> points);

} // namespace spark::sparkling
