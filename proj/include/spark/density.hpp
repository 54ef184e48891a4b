#pragma once

#include "spark/core.hpp"

#include <cstdint>
#include <vector>

namespace spark::density {

struct VdsParams
{
  double cutoff = 0.25;
  double decay = 2.0;

  void validate() const;
};

// Radially decaying density: 1 inside the cutoff radius, (cutoff / r)^decay outside,
// evaluated at cell centers of Ω and normalized to unit mass.
DensityGrid Vds(Index n, VdsParams const &p);

// Normalized (mean |centered DFT| − min) over a set of equally sized magnitude images.
DensityGrid Spectrum(std::vector<Re2> const &images);
// Same as Spectrum with the mean of log(max(|DFT|, 1e-12 · max|DFT|)).
DensityGrid LogSpectrum(std::vector<Re2> const &images);

struct LoupeLiteParams
{
  double target_sparsity = 0.4; // fraction of k-space kept, 1 / R
  double slope = 20.0;
  Index epochs = 100;
  double step_size = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Spectral energy per k-space cell, averaged over images: (1/J) Σ_j |DFT x_j|² / n².
// With a unitary DFT the reconstruction loss reduces to Σ_f (1 − P_f)² E_f / n².
Re2 SpectralEnergy(std::vector<Re2> const &images);

// Probability map parameterised by latent logits and the LOUPE budget renormalization.
struct LoupeState
{
  double slope;
  double sparsity;
  Re2 logits;

  // sigmoid(slope · logits) rescaled to mean == sparsity.
  Re2 probabilities() const;
  // Mean squared reconstruction error of the probability-weighted zero-filled inverse DFT.
  double loss(Re2 const &energy) const;
  // d loss / d logits, closed form through rescale and sigmoid.
  Re2 gradient(Re2 const &energy) const;
};

LoupeState InitialLoupeState(Index n, LoupeLiteParams const &p);

struct LoupeResult
{
  DensityGrid density;
  Re2 probabilities;
  std::vector<double> loss_trace; // loss before epoch 0 and after every epoch
  std::vector<double> mean_trace; // mean(P) after every update
};

// Gradient descent on the logits. Throws DivergenceError if the loss becomes non-finite.
LoupeResult LoupeLite(std::vector<Re2> const &images, LoupeLiteParams const &p);

// Shannon entropy −Σ ρ log ρ (natural log, 0 log 0 = 0).
double Entropy(DensityGrid const &rho);

} // namespace spark::density
