#pragma once

#include "spark/core.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace spark::plot {

// 8-bit RGB raster, row 0 at the top.
struct Raster
{
  Index width = 0;
  Index height = 0;
  std::vector<std::uint8_t> rgb;

  Raster(Index w, Index h, std::uint8_t fill = 255);
  void set(Index x, Index y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

// Density heatmap (viridis-like ramp), ky increasing upwards. Upscaled to at least min_side.
Raster DensityHeatmap(DensityGrid const &rho, Index min_side = 512);
// Grayscale image scaled to [min, max], row 0 at the top.
Raster ImageGray(Re2 const &img, Index min_side = 512);
// All shots as dark polylines on white with shot 0 drawn last in red.
Raster TrajectoryLines(Trajectory const &t, Index side = 800);

// Writes through a temporary file renamed into place, so a failed write leaves nothing behind.
void WritePng(std::filesystem::path const &path, Raster const &img);

} // namespace spark::plot
