#pragma once

#include "spark/array.hpp"
#include "spark/core.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spark::io {

enum class DType
{
  F32,
  F64,
  C64,
  C128
};

std::string_view Name(DType t);
DType ParseDType(std::string_view s);
std::size_t ByteSize(DType t);
bool IsComplex(DType t);

// In-memory tensor. Real dtypes populate `real`, complex dtypes populate `complex`.
struct Tensor
{
  std::vector<Index> shape;
  DType dtype = DType::F64;
  std::vector<double> real;
  std::vector<Cx> complex;

  Index elements() const;
};

// File layout: one line of JSON header terminated by '\n', then the raw little-endian payload.
// Header keys: shape, dtype, order ("row-major"), endianness ("little").
void WriteTensor(std::filesystem::path const &path, std::span<double const> data, std::vector<Index> const &shape,
                 DType dtype = DType::F64);
void WriteTensor(std::filesystem::path const &path, std::span<Cx const> data, std::vector<Index> const &shape,
                 DType dtype = DType::C128);
Tensor ReadTensor(std::filesystem::path const &path);

void WriteDensity(std::filesystem::path const &path, DensityGrid const &rho);
DensityGrid ReadDensity(std::filesystem::path const &path);

// [n_shots][n_samples][2] f64.
void WriteTrajectory(std::filesystem::path const &path, Trajectory const &t);
Trajectory ReadTrajectory(std::filesystem::path const &path, HardwareConfig const &hw);

// Multi-coil samples as c128 [L][P].
void WriteKSpace(std::filesystem::path const &path, std::vector<std::vector<Cx>> const &kspace);
std::vector<std::vector<Cx>> ReadKSpace(std::filesystem::path const &path);

// Real images as [n][n] or [L][n][n]; complex images as c128 with the same shapes.
void WriteImage(std::filesystem::path const &path, Re2 const &img);
void WriteImages(std::filesystem::path const &path, std::vector<Cx2> const &imgs);
// Reads any supported image file and returns one or more complex images.
std::vector<Cx2> ReadImages(std::filesystem::path const &path);
// Magnitude of the first image (or root-sum-of-squares for multi-image files).
Re2 ReadMagnitude(std::filesystem::path const &path);

} // namespace spark::io
