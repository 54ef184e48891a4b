#include "spark/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace spark::phantom {

std::vector<Ellipse> SheppLoganEllipses()
{
  return {
    {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
    {-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0},
    {-0.2, 0.11, 0.31, 0.22, 0.0, -18.0},
    {-0.2, 0.16, 0.41, -0.22, 0.0, 18.0},
    {0.1, 0.21, 0.25, 0.0, 0.35, 0.0},
    {0.1, 0.046, 0.046, 0.0, 0.1, 0.0},
    {0.1, 0.046, 0.046, 0.0, -0.1, 0.0},
    {0.1, 0.046, 0.023, -0.08, -0.605, 0.0},
    {0.1, 0.023, 0.023, 0.0, -0.606, 0.0},
    {0.1, 0.023, 0.046, 0.06, -0.605, 0.0},
  };
}

Re2 Render(std::vector<Ellipse> const &ellipses, Index n)
{
  constexpr int kSub = 4;
  Re2 img(n, n);
  double const h = 2.0 / static_cast<double>(n);
  for (auto const &e : ellipses) {
    double const t = e.phi * std::numbers::pi / 180.0;
    double const ct = std::cos(t), st = std::sin(t);
    for (Index r = 0; r < n; ++r) {
      for (Index c = 0; c < n; ++c) {
        int inside = 0;
        for (int sy = 0; sy < kSub; ++sy) {
          double const y = 1.0 - h * (static_cast<double>(r) + (sy + 0.5) / kSub);
          for (int sx = 0; sx < kSub; ++sx) {
            double const x = -1.0 + h * (static_cast<double>(c) + (sx + 0.5) / kSub);
            double const u = (x - e.x0) * ct + (y - e.y0) * st;
            double const v = -(x - e.x0) * st + (y - e.y0) * ct;
            if (u * u / (e.a * e.a) + v * v / (e.b * e.b) <= 1.0) { ++inside; }
          }
        }
        img(r, c) += e.intensity * inside / double(kSub * kSub);
      }
    }
  }
  return img;
}

Re2 SheppLogan(Index n) { return Render(SheppLoganEllipses(), n); }

Re2 Random(Index n, std::uint64_t seed, Index index)
{
  std::seed_seq seq{seed, static_cast<std::uint64_t>(index), std::uint64_t{0x5eed}};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto ell = SheppLoganEllipses();
  double const scale = 1.0 + 0.05 * u(rng);
  for (std::size_t i = 0; i < ell.size(); ++i) {
    auto &e = ell[i];
    e.a *= scale * (1.0 + 0.08 * u(rng));
    e.b *= scale * (1.0 + 0.08 * u(rng));
    e.x0 = scale * e.x0 + 0.02 * u(rng);
    e.y0 = scale * e.y0 + 0.02 * u(rng);
    e.phi += 6.0 * u(rng);
    // Keep the skull and brain contrast fixed so the phantom stays positive.
    if (i >= 2) { e.intensity *= 1.0 + 0.4 * u(rng); }
  }
  int const extra = 2 + static_cast<int>(std::floor(2.0 * (u(rng) + 1.0)));
  for (int k = 0; k < extra; ++k) {
    double const r = 0.45 * std::sqrt(0.5 * (u(rng) + 1.0));
    double const th = std::numbers::pi * u(rng);
    ell.push_back({0.15 * u(rng), 0.03 + 0.05 * (u(rng) + 1.0), 0.03 + 0.05 * (u(rng) + 1.0), r * std::cos(th),
                   r * std::sin(th), 90.0 * u(rng)});
  }
  Re2 img = Render(ell, n);
  for (double &v : img.flat()) {
    v = std::max(v, 0.0);
  }
  return img;
}

std::vector<Cx2> GaussianCoils(Index n, Index n_coils, double width)
{
  std::vector<Cx2> maps;
  if (n_coils == 1) {
    maps.emplace_back(n, n, Cx{1.0, 0.0});
    return maps;
  }
  for (Index l = 0; l < n_coils; ++l) {
    double const ang = 2.0 * std::numbers::pi * static_cast<double>(l) / static_cast<double>(n_coils);
    double const cx = 1.2 * std::cos(ang), cy = 1.2 * std::sin(ang);
    Cx2 m(n, n);
    for (Index r = 0; r < n; ++r) {
      double const y = -DensityGrid::CellCenter(r, n);
      for (Index c = 0; c < n; ++c) {
        double const x = DensityGrid::CellCenter(c, n);
        double const d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        double const phase = ang + 0.5 * (x * std::cos(ang) - y * std::sin(ang));
        m(r, c) = std::polar(std::exp(-d2 / (2.0 * width * width)), phase);
      }
    }
    maps.push_back(std::move(m));
  }
  // Unit root-sum-of-squares, so the coil-combined image is the object itself.
  for (Index i = 0; i < n * n; ++i) {
    double rss = 0.0;
    for (auto const &m : maps) {
      rss += std::norm(m[i]);
    }
    rss = std::sqrt(rss);
    for (auto &m : maps) {
      m[i] /= rss;
    }
  }
  return maps;
}

std::vector<Cx2> ApplyCoils(Re2 const &image, std::vector<Cx2> const &maps)
{
  std::vector<Cx2> out;
  for (auto const &m : maps) {
    Cx2 c(image.rows(), image.cols());
    for (Index i = 0; i < c.size(); ++i) {
      c[i] = m[i] * image[i];
    }
    out.push_back(std::move(c));
  }
  return out;
}

} // namespace spark::phantom
