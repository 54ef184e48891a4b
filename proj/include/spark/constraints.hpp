#pragma once

#include "spark/core.hpp"

#include <span>
#include <vector>

namespace spark::constraints {

// Pins sample `sample` of shot `shot` to `point`.
struct Anchor
{
  Index shot = 0;
  Index sample = 0;
  Vec2 point;
};

// Hardware constraint set on raster samples, in normalized k-space units.
struct ConstraintSet
{
  double step_bound = 0.0;  // max ‖k[s+1] − k[s]‖
  double accel_bound = 0.0; // max ‖k[s+1] − 2k[s] + k[s−1]‖
  std::vector<Anchor> anchors;
  bool box = true; // keep every sample inside Ω = [-1, 1]²

  void validate(Index n_shots, Index n_samples) const;
};

// Bounds from the hardware, and the ⌊Ns/2⌋ sample of every shot pinned to the origin when `anchor_center`.
ConstraintSet FromHardware(TrajectorySpec const &spec, bool anchor_center = true);
std::vector<Anchor> CenterAnchors(Index n_shots, Index n_samples);

struct FeasibilityReport
{
  bool feasible = true;
  double max_speed_ratio = 0.0; // max step / step_bound
  double max_accel_ratio = 0.0; // max second difference / accel_bound
  double max_anchor_error = 0.0;
  double max_box_excess = 0.0;
  Index worst_speed_shot = -1;
  Index worst_speed_sample = -1;
  Index worst_accel_shot = -1;
  Index worst_accel_sample = -1;
};

FeasibilityReport CheckFeasible(std::span<Vec2 const> points, Index n_shots, Index n_samples, ConstraintSet const &q,
                                double tol);
FeasibilityReport CheckFeasible(Trajectory const &t, ConstraintSet const &q, double tol);

enum class ProjectionMethod
{
  InteriorPoint, // log-barrier Newton with a banded factorization per step
  DualAscent     // accelerated proximal ascent on the dual of the ball constraints
};

struct ProjectionOptions
{
  Index max_iter = 5000; // Newton steps for the interior point, ascent steps otherwise
  double tol = 1e-8;
  ProjectionMethod method = ProjectionMethod::InteriorPoint;
};

// Dual variables for one shot, kept between calls to warm start the solver.
struct ShotDual
{
  std::vector<Vec2> speed; // [Ns − 1]
  std::vector<Vec2> accel; // [Ns − 2]
  std::vector<Vec2> box;   // [Ns] when the box constraint is active
  std::vector<Vec2> last;  // previous projected shot, seeds the interior-point start
};

struct ShotProjection
{
  std::vector<Vec2> points;
  Index iterations = 0;
  double residual = 0.0;
  double objective = 0.0; // ½‖k − z‖²
  double dual_objective = 0.0;
  bool converged = false;
};

class ProjectionError : public NumericalError
{
public:
  ProjectionError(std::string const &what, std::vector<Vec2> best, double residual)
    : NumericalError(what)
    , best_(std::move(best))
    , residual_(residual)
  {
  }
  std::vector<Vec2> const &best() const { return best_; }
  double residual() const { return residual_; }

private:
  std::vector<Vec2> best_;
  double residual_;
};

// Euclidean projection of a single shot. `anchors` refer to sample indices of this shot only
// (their `shot` field is ignored). Both methods stop on the same certificate: the primal point
// k(y) = z − Aᵀy of the current dual y is feasible and the duality gap is closed, each to `tol`.
// Never throws on non-convergence; inspect `converged`.
ShotProjection ProjectShot(std::span<Vec2 const> z, double step_bound, double accel_bound,
                           std::span<Anchor const> anchors, bool box, ProjectionOptions const &opt,
                           ShotDual *warm = nullptr);

// Projects every shot independently and keeps the dual state between calls.
class Projector
{
public:
  Projector(ConstraintSet q, Index n_shots, Index n_samples, ProjectionOptions opt = {});

  // Throws ProjectionError carrying the best iterate if any shot fails to converge.
  std::vector<Vec2> operator()(std::span<Vec2 const> z);

  Index last_iterations() const { return last_iterations_; }
  void set_options(ProjectionOptions const &opt) { opt_ = opt; }

private:
  ConstraintSet q_;
  Index n_shots_;
  Index n_samples_;
  ProjectionOptions opt_;
  std::vector<std::vector<Anchor>> shot_anchors_;
  std::vector<ShotDual> duals_;
  Index last_iterations_ = 0;
};

Trajectory Project(Trajectory const &z, ConstraintSet const &q, ProjectionOptions const &opt = {});

} // namespace spark::constraints
