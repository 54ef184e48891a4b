#include "spark/nufft.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace spark::nufft {

namespace {

Index Wrap(Index f, Index m) { return ((f % m) + m) % m; }

} // namespace

// Interpolation taps of every sample and the deapodization profile.
struct Plan::Grid
{
  Index m = 0;    // oversampled side
  Index taps = 0; // per axis
  double beta = 0.0;
  std::vector<double> inv_deapod; // [n], 1 / ψ̂(r / m)
  std::vector<Index> x0, y0;      // first tap per sample
  std::vector<double> wx, wy;     // [P][taps]
  fft::Plan2 fft;

  Grid(std::span<Vec2 const> k, Index n, GridOptions const &opt)
    : m(2 * static_cast<Index>(std::ceil(0.5 * opt.oversampling * static_cast<double>(n))))
    , taps(2 * opt.half_width)
    , fft(m, m)
  {
    double const sigma = static_cast<double>(m) / static_cast<double>(n);
    double const J = static_cast<double>(taps);
    // Beatty et al. choice of the shape parameter for a given width and oversampling.
    beta = std::numbers::pi * std::sqrt(J * J / (sigma * sigma) * (sigma - 0.5) * (sigma - 0.5) - 0.8);
    double const i0b = std::cyl_bessel_i(0.0, beta);

    inv_deapod.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      double const nu = static_cast<double>(i - n / 2) / static_cast<double>(m);
      double const s2 = beta * beta - std::pow(std::numbers::pi * J * nu, 2);
      double ft;
      if (s2 > 0) {
        double const s = std::sqrt(s2);
        ft = J * std::sinh(s) / s;
      } else if (s2 < 0) {
        double const s = std::sqrt(-s2);
        ft = J * std::sin(s) / s;
      } else {
        ft = J;
      }
      inv_deapod[static_cast<std::size_t>(i)] = i0b / ft;
    }

    std::size_t const P = k.size();
    x0.resize(P);
    y0.resize(P);
    wx.resize(P * static_cast<std::size_t>(taps));
    wy.resize(P * static_cast<std::size_t>(taps));
    double const half = 0.5 * static_cast<double>(m);
    auto fill = [&](double u, Index &first, double *w) {
      first = static_cast<Index>(std::floor(u)) - opt.half_width + 1;
      for (Index a = 0; a < taps; ++a) {
        double const t = 2.0 * (u - static_cast<double>(first + a)) / J;
        double const arg = std::max(0.0, 1.0 - t * t);
        w[a] = std::cyl_bessel_i(0.0, beta * std::sqrt(arg)) / i0b;
      }
    };
    for (std::size_t q = 0; q < P; ++q) {
      fill(k[q].x * half, x0[q], &wx[q * static_cast<std::size_t>(taps)]);
      fill(k[q].y * half, y0[q], &wy[q * static_cast<std::size_t>(taps)]);
    }
  }

  template <typename T, typename F>
  void interpolate(Array2<T> const &g, std::size_t P, F &&out) const
  {
#pragma omp parallel for schedule(static)
    for (std::size_t q = 0; q < P; ++q) {
      double const *ax = &wx[q * static_cast<std::size_t>(taps)];
      double const *ay = &wy[q * static_cast<std::size_t>(taps)];
      T acc{};
      for (Index a = 0; a < taps; ++a) {
        Index const r = Wrap(y0[q] + a, m);
        T row{};
        for (Index b = 0; b < taps; ++b) {
          row += ax[b] * g(r, Wrap(x0[q] + b, m));
        }
        acc += ay[a] * row;
      }
      out(q, acc);
    }
  }

  template <typename T, typename F>
  void spread(Array2<T> &g, std::size_t P, F &&in) const
  {
    for (std::size_t q = 0; q < P; ++q) {
      T const v = in(q);
      double const *ax = &wx[q * static_cast<std::size_t>(taps)];
      double const *ay = &wy[q * static_cast<std::size_t>(taps)];
      for (Index a = 0; a < taps; ++a) {
        Index const r = Wrap(y0[q] + a, m);
        T const va = ay[a] * v;
        for (Index b = 0; b < taps; ++b) {
          g(r, Wrap(x0[q] + b, m)) += ax[b] * va;
        }
      }
    }
  }
};

Plan::Plan(std::vector<Vec2> locations, Index n, Mode mode, GridOptions const &grid)
  : k_(std::move(locations))
  , n_(n)
  , mode_(mode)
{
  if (n < 2) { throw ConfigError(fmt::format("image side must be >= 2, got {}", n)); }
  if (k_.empty()) { throw ConfigError("a Fourier plan needs at least one sample"); }
  if (grid.half_width < 1 || !(grid.oversampling >= 1.0)) {
    throw ConfigError(fmt::format("bad gridding options: half width {}, oversampling {}", grid.half_width, grid.oversampling));
  }
  for (std::size_t q = 0; q < k_.size(); ++q) {
    Vec2 const p = k_[q];
    if (!(std::abs(p.x) <= 1.0 && std::abs(p.y) <= 1.0)) {
      throw ConfigError(fmt::format("sample {} at ({}, {}) lies outside [-1, 1]^2", q, p.x, p.y));
    }
  }
  grid_ = std::make_unique<Grid>(k_, n_, grid);
}

Plan::~Plan() = default;
Plan::Plan(Plan &&) noexcept = default;
Plan &Plan::operator=(Plan &&) noexcept = default;

std::vector<Cx> Plan::forward(Cx2 const &image) const
{
  if (image.rows() != n_ || image.cols() != n_) {
    throw DataError(fmt::format("image is {}x{}, plan expects {}x{}", image.rows(), image.cols(), n_, n_));
  }
  std::size_t const P = k_.size();
  std::vector<Cx> y(P);
  Index const c = n_ / 2;

  if (mode_ == Mode::Exact) {
#pragma omp parallel for schedule(static)
    for (std::size_t q = 0; q < P; ++q) {
      std::vector<Cx> ex(static_cast<std::size_t>(n_)), ey(static_cast<std::size_t>(n_));
      for (Index i = 0; i < n_; ++i) {
        double const r = static_cast<double>(i - c);
        ex[static_cast<std::size_t>(i)] = std::polar(1.0, -std::numbers::pi * k_[q].x * r);
        ey[static_cast<std::size_t>(i)] = std::polar(1.0, -std::numbers::pi * k_[q].y * r);
      }
      Cx acc{};
      for (Index i = 0; i < n_; ++i) {
        Cx row{};
        for (Index j = 0; j < n_; ++j) {
          row += ex[static_cast<std::size_t>(j)] * image(i, j);
        }
        acc += ey[static_cast<std::size_t>(i)] * row;
      }
      y[q] = acc;
    }
    return y;
  }

  Grid const &g = *grid_;
  Cx2 buf(g.m, g.m);
  for (Index i = 0; i < n_; ++i) {
    for (Index j = 0; j < n_; ++j) {
      buf(Wrap(i - c, g.m), Wrap(j - c, g.m)) = image(i, j) * (g.inv_deapod[static_cast<std::size_t>(i)] * g.inv_deapod[static_cast<std::size_t>(j)]);
    }
  }
  g.fft.forward(buf);
  g.interpolate(buf, P, [&](std::size_t q, Cx v) { y[q] = v; });
  return y;
}

Cx2 Plan::adjoint(std::span<Cx const> samples, std::span<double const> weights) const
{
  std::size_t const P = k_.size();
  if (samples.size() != P) { throw DataError(fmt::format("{} samples given, plan has {}", samples.size(), P)); }
  if (!weights.empty() && weights.size() != P) { throw DataError(fmt::format("{} weights given, plan has {}", weights.size(), P)); }
  auto value = [&](std::size_t q) { return weights.empty() ? samples[q] : samples[q] * weights[q]; };
  Index const c = n_ / 2;
  Cx2 img(n_, n_);

  if (mode_ == Mode::Exact) {
    std::vector<Cx> ex(static_cast<std::size_t>(n_)), ey(static_cast<std::size_t>(n_));
    for (std::size_t q = 0; q < P; ++q) {
      Cx const v = value(q);
      if (v == Cx{}) { continue; }
      for (Index i = 0; i < n_; ++i) {
        double const r = static_cast<double>(i - c);
        ex[static_cast<std::size_t>(i)] = std::polar(1.0, std::numbers::pi * k_[q].x * r);
        ey[static_cast<std::size_t>(i)] = std::polar(1.0, std::numbers::pi * k_[q].y * r) * v;
      }
      for (Index i = 0; i < n_; ++i) {
        Cx const a = ey[static_cast<std::size_t>(i)];
        for (Index j = 0; j < n_; ++j) {
          img(i, j) += a * ex[static_cast<std::size_t>(j)];
        }
      }
    }
    return img;
  }

  Grid const &g = *grid_;
  Cx2 buf(g.m, g.m);
  g.spread(buf, P, value);
  g.fft.backward(buf);
  for (Index i = 0; i < n_; ++i) {
    for (Index j = 0; j < n_; ++j) {
      img(i, j) = buf(Wrap(i - c, g.m), Wrap(j - c, g.m)) * (g.inv_deapod[static_cast<std::size_t>(i)] * g.inv_deapod[static_cast<std::size_t>(j)]);
    }
  }
  return img;
}

std::vector<double> Plan::smooth(std::span<double const> w) const
{
  std::size_t const P = k_.size();
  if (w.size() != P) { throw DataError(fmt::format("{} weights given, plan has {}", w.size(), P)); }
  Grid const &g = *grid_;
  Re2 buf(g.m, g.m);
  g.spread(buf, P, [&](std::size_t q) { return w[q]; });
  std::vector<double> out(P);
  g.interpolate(buf, P, [&](std::size_t q, double v) { out[q] = v; });
  return out;
}

std::vector<std::vector<Cx>> Forward(Plan const &plan, std::vector<Cx2> const &coils)
{
  std::vector<std::vector<Cx>> out;
  out.reserve(coils.size());
  for (auto const &c : coils) {
    out.push_back(plan.forward(c));
  }
  return out;
}

std::vector<Cx2> Adjoint(Plan const &plan, std::vector<std::vector<Cx>> const &kspace, std::span<double const> weights)
{
  std::vector<Cx2> out;
  out.reserve(kspace.size());
  for (auto const &y : kspace) {
    out.push_back(plan.adjoint(y, weights));
  }
  return out;
}

DcWeights PipeWeights(Plan const &plan, Index n_iter)
{
  if (n_iter < 1) { throw ConfigError(fmt::format("density compensation needs at least one iteration, got {}", n_iter)); }
  std::size_t const P = static_cast<std::size_t>(plan.size());
  DcWeights out;
  out.w.assign(P, 1.0);
  std::vector<double> gw = plan.smooth(out.w);
  for (Index it = 0; it < n_iter; ++it) {
    double big = 0.0;
    for (double v : gw) {
      big = std::max(big, std::abs(v));
    }
    if (!(big > 0.0) || !std::isfinite(big)) { throw DegenerateGeometryError("density compensation: smoothed sample density vanishes"); }
    double const eps = 1e-12 * big;
    for (std::size_t q = 0; q < P; ++q) {
      out.w[q] /= std::max(std::abs(gw[q]), eps);
    }
    gw = plan.smooth(out.w);
    double res = 0.0;
    for (double v : gw) {
      res = std::max(res, std::abs(v - 1.0));
    }
    out.residuals.push_back(res);
  }
  return out;
}

std::vector<Vec2> CartesianGrid(Index n)
{
  std::vector<Vec2> k;
  k.reserve(static_cast<std::size_t>(n * n));
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c < n; ++c) {
      k.push_back({2.0 * static_cast<double>(c - n / 2) / static_cast<double>(n), 2.0 * static_cast<double>(r - n / 2) / static_cast<double>(n)});
    }
  }
  return k;
}

} // namespace spark::nufft
