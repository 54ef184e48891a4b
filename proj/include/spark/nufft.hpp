#pragma once

#include "spark/array.hpp"
#include "spark/core.hpp"
#include "spark/fft.hpp"

#include <memory>
#include <span>
#include <vector>

namespace spark::nufft {

enum class Mode
{
  Exact,  // direct sum, O(P·n²)
  Gridded // Kaiser–Bessel interpolation on an oversampled grid
};

struct GridOptions
{
  Index half_width = 4;      // kernel support is 2·half_width grid points per axis
  double oversampling = 2.0; // oversampled grid side / n
};

// Non-uniform Fourier operator on an n×n image:
//   y_q = Σ_r x[r] exp(−iπ (k_q.x · r_x + k_q.y · r_y)),  r = pixel index − n/2
// with the row index along y. Locations must lie in [-1, 1]².
class Plan
{
public:
  Plan(std::vector<Vec2> locations, Index n, Mode mode = Mode::Gridded, GridOptions const &grid = {});
  ~Plan();
  Plan(Plan &&) noexcept;
  Plan &operator=(Plan &&) noexcept;

  Index n() const { return n_; }
  Index size() const { return static_cast<Index>(k_.size()); }
  Mode mode() const { return mode_; }
  std::span<Vec2 const> locations() const { return k_; }

  std::vector<Cx> forward(Cx2 const &image) const;
  // Conjugate transpose of forward. Non-empty `weights` multiply the samples first.
  Cx2 adjoint(std::span<Cx const> samples, std::span<double const> weights = {}) const;

  // (G w)_q = Σ_p w_p C(k_q − k_p), C the autocorrelation of the interpolation kernel on the
  // oversampled grid. Uses the gridding kernel in both modes.
  std::vector<double> smooth(std::span<double const> w) const;

private:
  struct Grid;
  std::vector<Vec2> k_;
  Index n_;
  Mode mode_;
  std::unique_ptr<Grid> grid_;
};

// Maps forward/adjoint over coils. kspace is [L][P].
std::vector<std::vector<Cx>> Forward(Plan const &plan, std::vector<Cx2> const &coils);
std::vector<Cx2> Adjoint(Plan const &plan, std::vector<std::vector<Cx>> const &kspace, std::span<double const> weights = {});

struct DcWeights
{
  std::vector<double> w;
  std::vector<double> residuals; // ‖G w − 1‖∞ after each update
};

// Pipe–Menon iteration w ← w / |G w| from w = 1, n_iter updates. Division is guarded by
// 1e-12·max|G w|. Throws DegenerateGeometryError if G w vanishes.
DcWeights PipeWeights(Plan const &plan, Index n_iter = 10);

// Points of an n×n Cartesian grid, k = 2f/n for f ∈ [-n/2, n/2). Row-major, y outer.
std::vector<Vec2> CartesianGrid(Index n);

} // namespace spark::nufft
