#include "spark/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace spark::metrics {

namespace {

void CheckShapes(Re2 const &x, Re2 const &y, Mask const &mask)
{
  if (x.rows() != y.rows() || x.cols() != y.cols() || mask.rows() != x.rows() || mask.cols() != x.cols()) {
    throw DataError(fmt::format("shape mismatch: {}x{}, {}x{}, mask {}x{}", x.rows(), x.cols(), y.rows(), y.cols(), mask.rows(), mask.cols()));
  }
}

Mask Morph(Mask const &m, Index radius, bool dilate)
{
  Mask out(m.rows(), m.cols());
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      bool hit = !dilate;
      for (Index dr = -radius; dr <= radius; ++dr) {
        for (Index dc = -radius; dc <= radius; ++dc) {
          if (dr * dr + dc * dc > radius * radius) { continue; }
          Index const rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= m.rows() || cc < 0 || cc >= m.cols()) { continue; }
          if (dilate && m(rr, cc)) { hit = true; }
          if (!dilate && !m(rr, cc)) { hit = false; }
        }
      }
      out(r, c) = hit ? 1 : 0;
    }
  }
  return out;
}

} // namespace

Mask FullMask(Index n) { return Mask(n, n, 1); }

Mask AutoMask(Re2 const &reference)
{
  std::vector<double> v(reference.vec());
  if (v.empty()) { throw DataError("empty reference image"); }
  auto const k = static_cast<std::size_t>(std::floor(0.99 * static_cast<double>(v.size() - 1)));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  double const thr = 0.1 * v[k];
  Mask m(reference.rows(), reference.cols());
  for (Index i = 0; i < m.size(); ++i) {
    m[i] = reference[i] > thr ? 1 : 0;
  }
  return Morph(Morph(m, 2, true), 2, false);
}

double Ssim(Re2 const &x, Re2 const &y, Mask const &mask)
{
  CheckShapes(x, y, mask);
  constexpr Index kHalf = 5;
  constexpr double kSigma = 1.5;
  double w[2 * kHalf + 1];
  double ws = 0.0;
  for (Index i = -kHalf; i <= kHalf; ++i) {
    w[i + kHalf] = std::exp(-0.5 * static_cast<double>(i * i) / (kSigma * kSigma));
    ws += w[i + kHalf];
  }
  for (double &v : w) {
    v /= ws;
  }

  double L = 0.0;
  bool any = false;
  for (Index i = 0; i < x.size(); ++i) {
    if (mask[i]) {
      L = any ? std::max({L, x[i], y[i]}) : std::max(x[i], y[i]);
      any = true;
    }
  }
  if (!any) { throw DataError("SSIM mask is empty"); }
  if (!(L > 0.0)) { L = 1.0; }
  double const C1 = (0.01 * L) * (0.01 * L), C2 = (0.03 * L) * (0.03 * L);

  Index const n = x.rows(), m = x.cols();
  double sum = 0.0;
  Index count = 0;
  for (Index r = kHalf; r + kHalf < n; ++r) {
    for (Index c = kHalf; c + kHalf < m; ++c) {
      if (!mask(r, c)) { continue; }
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (Index dr = -kHalf; dr <= kHalf; ++dr) {
        for (Index dc = -kHalf; dc <= kHalf; ++dc) {
          double const g = w[dr + kHalf] * w[dc + kHalf];
          double const a = x(r + dr, c + dc), b = y(r + dr, c + dc);
          mx += g * a;
          my += g * b;
          sxx += g * a * a;
          syy += g * b * b;
          sxy += g * a * b;
        }
      }
      double const vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      sum += ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
      ++count;
    }
  }
  if (count == 0) { throw DataError("SSIM mask has no pixel with a full window inside the image"); }
  return sum / static_cast<double>(count);
}

double Psnr(Re2 const &x, Re2 const &y, Mask const &mask)
{
  CheckShapes(x, y, mask);
  double L = -std::numeric_limits<double>::infinity();
  double se = 0.0;
  Index count = 0;
  for (Index i = 0; i < x.size(); ++i) {
    if (!mask[i]) { continue; }
    L = std::max(L, x[i]);
    se += (x[i] - y[i]) * (x[i] - y[i]);
    ++count;
  }
  if (count == 0) { throw DataError("PSNR mask is empty"); }
  if (se == 0.0) { return std::numeric_limits<double>::infinity(); }
  return 10.0 * std::log10(L * L / (se / static_cast<double>(count)));
}

QualityReport Score(Re2 const &reference, Re2 const &test, Mask const &mask)
{
  QualityReport q;
  q.ssim = Ssim(reference, test, mask);
  q.psnr = Psnr(reference, test, mask);
  q.psnr_infinite = std::isinf(q.psnr);
  Index in = 0;
  for (auto v : mask.flat()) {
    in += v ? 1 : 0;
  }
  q.mask_coverage = static_cast<double>(in) / static_cast<double>(mask.size());
  return q;
}

double DensityTvDistance(std::span<Vec2 const> points, DensityGrid const &rho, Index bins)
{
  Index const n = rho.n();
  if (bins < 1 || n % bins != 0) { throw ConfigError(fmt::format("{} bins do not divide the {}-cell grid", bins, n)); }
  if (points.empty()) { throw DataError("no points to histogram"); }
  Re2 h(bins, bins);
  for (Vec2 p : points) {
    auto bin = [&](double v) {
      return std::clamp(static_cast<Index>(std::floor((v + 1.0) * 0.5 * static_cast<double>(bins))), Index{0}, bins - 1);
    };
    h(bin(p.y), bin(p.x)) += 1.0 / static_cast<double>(points.size());
  }
  Index const f = n / bins;
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c < n; ++c) {
      h(r / f, c / f) -= rho(r, c);
    }
  }
  double tv = 0.0;
  for (double v : h.flat()) {
    tv += std::abs(v);
  }
  return std::clamp(0.5 * tv, 0.0, 1.0);
}

Re2 Magnitude(Cx2 const &x)
{
  Re2 m(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) {
    m[i] = std::abs(x[i]);
  }
  return m;
}

} // namespace spark::metrics
