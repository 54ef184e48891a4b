#pragma once

#include "spark/metrics.hpp"
#include "spark/nufft.hpp"
#include "spark/wavelet.hpp"

#include <span>
#include <string>
#include <vector>

namespace spark::recon {

using wavelet::WaveletConfig;
using KSpace = std::vector<std::vector<Cx>>; // [L][P]

struct SensitivityMaps
{
  std::vector<Cx2> maps; // [L][n][n], root-sum-of-squares 1 wherever the coil images are nonzero
};

// Density-compensated adjoint of the samples with ‖k‖ ≤ center_fraction, per coil, divided by the
// voxelwise root-sum-of-squares (guarded at 1e-6 of its maximum).
SensitivityMaps EstimateSensitivities(KSpace const &kspace, nufft::Plan const &plan, double center_fraction = 0.2);

// z ↦ { F_Ω (S_ℓ Ψ* z) }_ℓ and its adjoint; `weights` (may be empty) enter the adjoint only.
class Encoding
{
public:
  Encoding(nufft::Plan const &plan, std::vector<Cx2> const &maps, WaveletConfig const &wavelet, std::span<double const> weights = {});

  KSpace forward(Cx2 const &z) const;
  Cx2 adjoint(KSpace const &r) const;
  Cx2 image(Cx2 const &z) const; // Ψ* z

  Index n() const { return plan_.n(); }
  Index coils() const { return static_cast<Index>(maps_.size()); }

private:
  nufft::Plan const &plan_; // must outlive the operator
  std::vector<Cx2> maps_;
  WaveletConfig wavelet_;
  std::vector<double> weights_;
};

// Largest eigenvalue of A^H W A by power iteration from a fixed pseudo-random start.
double PowerIteration(Encoding const &op, Index iters = 20);

struct ReconConfig
{
  // Relative weight: the data are scaled so that the first gradient step gives a unit-peak image,
  // and the data term is divided by its Lipschitz constant, so λ is the soft threshold per step.
  double lambda = 1e-2;
  Index max_iter = 200;
  double tol = 1e-6; // relative objective change
  WaveletConfig wavelet;
  bool dc_precondition = true;
  Index dc_iters = 10;
  Index power_iters = 20;
  double lipschitz_margin = 1.1;
  bool monotone_restart = true;

  void validate(Index n) const;
};

struct IterationRecord
{
  Index iter;
  double objective;
  double time_ms;
};

struct ReconResult
{
  Cx2 image;
  std::vector<IterationRecord> log; // entry 0 is the starting point z = 0
  Index iterations = 0;
  double lipschitz = 0.0;
  double data_scale = 0.0;
};

class ReconDivergence : public DivergenceError
{
public:
  ReconDivergence(std::string const &what, std::vector<IterationRecord> log)
    : DivergenceError(what)
    , log_(std::move(log))
  {
  }
  std::vector<IterationRecord> const &log() const { return log_; }

private:
  std::vector<IterationRecord> log_;
};

// FISTA on ½ Σ_ℓ ‖W^½ (F_Ω S_ℓ Ψ* z − y_ℓ)‖² + λ ‖z‖₁, W the Pipe weights when dc_precondition.
ReconResult CsReconstruct(KSpace const &kspace, nufft::Plan const &plan, SensitivityMaps const &maps, ReconConfig const &cfg);

// Coil-combined density-compensated adjoint Σ_ℓ S_ℓ^* F^H (w y_ℓ).
Cx2 DcAdjoint(KSpace const &kspace, nufft::Plan const &plan, SensitivityMaps const &maps, std::span<double const> weights);

// Complex soft threshold: magnitude shrinkage that keeps the phase.
Cx SoftThreshold(Cx v, double tau);

struct LambdaRow
{
  double lambda = 0.0;
  double ssim = 0.0;
  double psnr = 0.0;
  Index iterations = 0;
  std::string error; // non-empty when this λ failed
};

struct LambdaSearch
{
  double best = 0.0;
  std::vector<LambdaRow> table;
};

// count values log-spaced over [lo, hi]; a count of 1 gives lo.
std::vector<double> LogGrid(Index count, double lo = 1e-4, double hi = 1.0);

LambdaSearch SearchLambda(KSpace const &kspace, nufft::Plan const &plan, SensitivityMaps const &maps, Re2 const &reference,
                          std::vector<double> const &grid, ReconConfig cfg, metrics::Mask const &mask);

// Real a ≥ 0 minimizing ‖a·x − ref‖ over the mask.
double FitScale(Re2 const &ref, Re2 const &x, metrics::Mask const &mask);

} // namespace spark::recon
