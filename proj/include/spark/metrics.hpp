#pragma once

#include "spark/array.hpp"
#include "spark/core.hpp"

#include <cstdint>
#include <span>

namespace spark::metrics {

using Mask = Array2<std::uint8_t>;

struct QualityReport
{
  double ssim = 0.0;
  double psnr = 0.0;          // dB; +inf when the images agree on the mask
  bool psnr_infinite = false;
  double mask_coverage = 0.0; // fraction of pixels in the mask
};

Mask FullMask(Index n);
// Threshold at 10% of the 99th percentile of the reference, then a morphological closing with a
// disk of radius 2.
Mask AutoMask(Re2 const &reference);

// Mean local SSIM (Gaussian 11×11 window, σ = 1.5, K1 = 0.01, K2 = 0.03) over windows that lie
// inside the image and whose centre is in the mask. The dynamic range L is the largest value of
// either image over the mask, which keeps the index symmetric and scale invariant.
double Ssim(Re2 const &x, Re2 const &y, Mask const &mask);
// 10 log10(L² / MSE) over the mask, L = max of the reference x over the mask.
double Psnr(Re2 const &x, Re2 const &y, Mask const &mask);
QualityReport Score(Re2 const &reference, Re2 const &test, Mask const &mask);

// ½ Σ |hist(points) − ρ binned| over bins×bins cells of Ω, both normalized to unit mass.
double DensityTvDistance(std::span<Vec2 const> points, DensityGrid const &rho, Index bins);

Re2 Magnitude(Cx2 const &x);

} // namespace spark::metrics
