#pragma once

// Slow, independent reference implementations used only by tests.

#include "spark/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

using spark::Index;
using spark::Vec2;

// Euclidean projection onto the intersection of the shot constraints by Dykstra's algorithm,
// one simple set at a time: each speed ball, each acceleration ball, the box, the pins.
inline std::vector<Vec2> DykstraProjection(std::vector<Vec2> const &z, double a, double b,
                                           std::vector<spark::constraints::Anchor> const &anchors, bool box,
                                           int max_sweeps = 2000000, double tol = 1e-15)
{
  Index const ns = static_cast<Index>(z.size());
  // Flattened coordinates: x[2s], x[2s+1].
  std::vector<double> x(2 * z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    x[2 * i] = z[i].x;
    x[2 * i + 1] = z[i].y;
  }
  std::vector<std::function<void(std::vector<double> &)>> sets;
  for (Index m = 0; m + 1 < ns; ++m) {
    sets.push_back([m, a](std::vector<double> &v) {
      // {‖p_{m+1} − p_m‖ ≤ a}: move both ends symmetrically.
      double dx = v[2 * m + 2] - v[2 * m], dy = v[2 * m + 3] - v[2 * m + 1];
      double const n = std::hypot(dx, dy);
      if (n <= a) { return; }
      double const s = 0.5 * (n - a) / n;
      v[2 * m] += s * dx;
      v[2 * m + 1] += s * dy;
      v[2 * m + 2] -= s * dx;
      v[2 * m + 3] -= s * dy;
    });
  }
  for (Index m = 0; m + 2 < ns; ++m) {
    sets.push_back([m, b](std::vector<double> &v) {
      // {‖p_m − 2p_{m+1} + p_{m+2}‖ ≤ b}, coefficient vector (1, −2, 1) with squared norm 6.
      double const dx = v[2 * m] - 2 * v[2 * m + 2] + v[2 * m + 4];
      double const dy = v[2 * m + 1] - 2 * v[2 * m + 3] + v[2 * m + 5];
      double const n = std::hypot(dx, dy);
      if (n <= b) { return; }
      double const ex = dx * (n - b) / n / 6.0, ey = dy * (n - b) / n / 6.0;
      v[2 * m] -= ex;
      v[2 * m + 1] -= ey;
      v[2 * m + 2] += 2 * ex;
      v[2 * m + 3] += 2 * ey;
      v[2 * m + 4] -= ex;
      v[2 * m + 5] -= ey;
    });
  }
  if (box) {
    sets.push_back([](std::vector<double> &v) {
      for (double &c : v) {
        c = std::clamp(c, -1.0, 1.0);
      }
    });
  }
  for (auto const &an : anchors) {
    sets.push_back([an](std::vector<double> &v) {
      v[2 * an.sample] = an.point.x;
      v[2 * an.sample + 1] = an.point.y;
    });
  }

  std::vector<std::vector<double>> incr(sets.size(), std::vector<double>(x.size(), 0.0));
  std::vector<double> prev(x.size()), y(x.size());
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    prev = x;
    for (std::size_t k = 0; k < sets.size(); ++k) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = x[i] + incr[k][i];
      }
      std::vector<double> p = y;
      sets[k](p);
      for (std::size_t i = 0; i < x.size(); ++i) {
        incr[k][i] = y[i] - p[i];
      }
      x = p;
    }
    double change = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      change = std::max(change, std::abs(x[i] - prev[i]));
    }
    if (change < tol && sweep > 10) { break; }
  }
  std::vector<Vec2> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = {x[2 * i], x[2 * i + 1]};
  }
  return out;
}

// Φ(y) = Σ_g ρ_g ‖y − x_g‖ and its gradient by direct summation over cell centres.
struct PotentialSample
{
  double value = 0.0;
  Vec2 grad;
};

inline PotentialSample DirectPotential(spark::Re2 const &rho, Vec2 y)
{
  Index const n = rho.rows();
  PotentialSample s;
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c < n; ++c) {
      double const dx = y.x - (-1.0 + (c + 0.5) * 2.0 / n);
      double const dy = y.y - (-1.0 + (r + 0.5) * 2.0 / n);
      double const d = std::hypot(dx, dy);
      s.value += rho(r, c) * d;
      if (d > 0) {
        s.grad.x += rho(r, c) * dx / d;
        s.grad.y += rho(r, c) * dy / d;
      }
    }
  }
  return s;
}

// Centered 2D DFT by direct summation: X[f] = Σ_r x[r] exp(−2πi f·r / n), indices shifted by n/2.
inline spark::Cx2 BruteCenteredDft(spark::Cx2 const &x)
{
  Index const n = x.rows();
  spark::Cx2 out(n, n);
  for (Index fy = 0; fy < n; ++fy) {
    for (Index fx = 0; fx < n; ++fx) {
      std::complex<double> acc = 0.0;
      for (Index ry = 0; ry < n; ++ry) {
        for (Index rx = 0; rx < n; ++rx) {
          double const ph = -2.0 * std::numbers::pi *
                            (static_cast<double>((fy - n / 2) * (ry - n / 2)) + static_cast<double>((fx - n / 2) * (rx - n / 2))) /
                            static_cast<double>(n);
          acc += x(ry, rx) * std::polar(1.0, ph);
        }
      }
      out(fy, fx) = acc;
    }
  }
  return out;
}

// Spearman rank correlation, ties given their average rank.
inline double Spearman(std::vector<double> const &a, std::vector<double> const &b)
{
  auto ranks = [](std::vector<double> const &v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      idx[i] = i;
    }
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) {
        ++j;
      }
      for (std::size_t t = i; t <= j; ++t) {
        r[idx[t]] = 0.5 * static_cast<double>(i + j);
      }
      i = j + 1;
    }
    return r;
  };
  auto const ra = ranks(a), rb = ranks(b);
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= static_cast<double>(ra.size());
  mb /= static_cast<double>(rb.size());
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

} // namespace oracle
