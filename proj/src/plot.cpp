#include "spark/plot.hpp"

#include <fmt/format.h>
#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>

namespace spark::plot {

namespace fs = std::filesystem;

Raster::Raster(Index w, Index h, std::uint8_t fill)
  : width(w)
  , height(h)
  , rgb(static_cast<std::size_t>(3 * w * h), fill)
{
  if (w < 1 || h < 1) { throw ConfigError(fmt::format("raster size {}x{} is empty", w, h)); }
}

void Raster::set(Index x, Index y, std::uint8_t r, std::uint8_t g, std::uint8_t b)
{
  if (x < 0 || y < 0 || x >= width || y >= height) { return; }
  auto *p = &rgb[static_cast<std::size_t>(3 * (y * width + x))];
  p[0] = r;
  p[1] = g;
  p[2] = b;
}

namespace {

// A few anchor colours of the viridis map, linearly interpolated.
std::array<std::uint8_t, 3> Ramp(double t)
{
  static constexpr std::array<std::array<double, 3>, 5> stops{{
    {68, 1, 84},
    {59, 82, 139},
    {33, 145, 140},
    {94, 201, 98},
    {253, 231, 37},
  }};
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  auto const i = std::min<std::size_t>(static_cast<std::size_t>(t), 3);
  double const f = t - static_cast<double>(i);
  std::array<std::uint8_t, 3> out{};
  for (std::size_t c = 0; c < 3; ++c) {
    out[c] = static_cast<std::uint8_t>(std::lround(stops[i][c] + f * (stops[i + 1][c] - stops[i][c])));
  }
  return out;
}

Index Scale(Index n, Index min_side) { return std::max<Index>(1, (min_side + n - 1) / n); }

template <typename F>
Raster Blocks(Index rows, Index cols, Index s, F &&color)
{
  Raster img(cols * s, rows * s);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      auto const px = color(r, c);
      for (Index a = 0; a < s; ++a) {
        for (Index b = 0; b < s; ++b) {
          img.set(c * s + b, r * s + a, px[0], px[1], px[2]);
        }
      }
    }
  }
  return img;
}

std::pair<double, double> Range(std::vector<double> const &v)
{
  auto const [lo, hi] = std::minmax_element(v.begin(), v.end());
  return {*lo, *hi};
}

void Line(Raster &img, double x0, double y0, double x1, double y1, std::array<std::uint8_t, 3> col)
{
  Index const steps = std::max<Index>(1, static_cast<Index>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))));
  for (Index i = 0; i <= steps; ++i) {
    double const t = static_cast<double>(i) / static_cast<double>(steps);
    img.set(std::lround(x0 + t * (x1 - x0)), std::lround(y0 + t * (y1 - y0)), col[0], col[1], col[2]);
  }
}

} // namespace

Raster DensityHeatmap(DensityGrid const &rho, Index min_side)
{
  Index const n = rho.n();
  if (n < 1) { throw DataError("empty density"); }
  auto const [lo, hi] = Range(rho.values().vec());
  double const span = hi > lo ? hi - lo : 1.0;
  return Blocks(n, n, Scale(n, min_side), [&](Index r, Index c) { return Ramp((rho(n - 1 - r, c) - lo) / span); });
}

Raster ImageGray(Re2 const &img, Index min_side)
{
  if (img.size() < 1) { throw DataError("empty image"); }
  for (double v : img.flat()) {
    if (!std::isfinite(v)) { throw DataError("image holds non-finite values"); }
  }
  auto const [lo, hi] = Range(img.vec());
  double const span = hi > lo ? hi - lo : 1.0;
  return Blocks(img.rows(), img.cols(), Scale(std::max(img.rows(), img.cols()), min_side), [&](Index r, Index c) {
    auto const g = static_cast<std::uint8_t>(std::lround(255.0 * (img(r, c) - lo) / span));
    return std::array<std::uint8_t, 3>{g, g, g};
  });
}

Raster TrajectoryLines(Trajectory const &t, Index side)
{
  Raster img(side, side);
  double const half = 0.5 * static_cast<double>(side - 1);
  auto px = [&](Vec2 k) { return std::pair{half * (1.0 + k.x), half * (1.0 - k.y)}; };
  auto draw = [&](Index shot, std::array<std::uint8_t, 3> col) {
    for (Index s = 1; s < t.samples(); ++s) {
      auto const [x0, y0] = px(t(shot, s - 1));
      auto const [x1, y1] = px(t(shot, s));
      Line(img, x0, y0, x1, y1, col);
    }
  };
  for (Index shot = 1; shot < t.shots(); ++shot) {
    draw(shot, {60, 60, 60});
  }
  if (t.shots() > 0) { draw(0, {220, 20, 20}); }
  return img;
}

namespace {

struct PngFail
{
  std::jmp_buf env;
  std::string message;
};

void OnError(png_structp png, png_const_charp msg)
{
  auto *f = static_cast<PngFail *>(png_get_error_ptr(png));
  f->message = msg;
  std::longjmp(f->env, 1);
}

void OnWarning(png_structp, png_const_charp) {}

// Plain C so longjmp never crosses a C++ destructor.
bool Encode(std::FILE *fp, Raster const &img, PngFail &fail)
{
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &fail, OnError, OnWarning);
  if (!png) { return false; }
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(fail.env)) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    return false;
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (Index r = 0; r < img.height; ++r) {
    png_write_row(png, img.rgb.data() + 3 * r * img.width);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

} // namespace

void WritePng(fs::path const &path, Raster const &img)
{
  fs::path tmp = path;
  tmp += ".partial";
  std::FILE *fp = std::fopen(tmp.c_str(), "wb");
  if (!fp) { throw DataError(fmt::format("cannot open '{}' for writing", path.string())); }
  PngFail fail;
  bool const ok = Encode(fp, img, fail);
  bool const closed = std::fclose(fp) == 0;
  if (!ok || !closed) {
    fs::remove(tmp);
    throw DataError(fmt::format("writing '{}' failed: {}", path.string(), fail.message.empty() ? "i/o error" : fail.message));
  }
  fs::rename(tmp, path);
}

} // namespace spark::plot
