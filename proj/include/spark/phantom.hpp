#pragma once

#include "spark/array.hpp"
#include "spark/core.hpp"

#include <cstdint>
#include <vector>

namespace spark::phantom {

struct Ellipse
{
  double intensity;
  double a, b;   // semi-axes
  double x0, y0; // centre, y up
  double phi;    // rotation, degrees
};

// Modified (Toft) Shepp–Logan ellipses on [-1, 1]².
std::vector<Ellipse> SheppLoganEllipses();

// Rasterizes ellipses at n×n, averaging 4×4 subsamples per pixel. Row 0 is the top (y = 1).
Re2 Render(std::vector<Ellipse> const &ellipses, Index n);
Re2 SheppLogan(Index n);

// Shepp–Logan with jittered ellipse geometry and contrast plus a few extra small ellipses.
// Deterministic for a given seed; seed and index select independent streams.
Re2 Random(Index n, std::uint64_t seed, Index index = 0);

// Smooth complex coil sensitivities: Gaussian magnitude centred on a ring of radius 1.2 around
// the image, with a per-coil phase ramp, scaled to unit root-sum-of-squares at every pixel.
// A single coil gets the constant map 1.
std::vector<Cx2> GaussianCoils(Index n, Index n_coils, double width = 0.8);

// S_ℓ · x for every coil.
std::vector<Cx2> ApplyCoils(Re2 const &image, std::vector<Cx2> const &maps);

} // namespace spark::phantom
