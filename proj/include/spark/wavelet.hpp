#pragma once

#include "spark/array.hpp"
#include "spark/core.hpp"

#include <span>
#include <string>

namespace spark::wavelet {

struct WaveletConfig
{
  std::string family = "sym8"; // "sym8" or "haar"
  Index n_scales = 4;

  // Throws ConfigError for an unknown family, n_scales < 1, or a side not divisible by 2^n_scales.
  void validate(Index n) const;
};

// Orthonormal decomposition low-pass filter of a named family.
std::span<double const> LowPass(std::string const &family);

// Separable periodic orthogonal DWT. Coefficients use the Mallat layout: after the last level the
// top-left (n / 2^n_scales)² block holds the approximation, each level's details surround it.
Cx2 Analysis(Cx2 const &image, WaveletConfig const &cfg);
Cx2 Synthesis(Cx2 const &coeffs, WaveletConfig const &cfg);

} // namespace spark::wavelet
