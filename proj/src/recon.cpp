#include "spark/recon.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <limits>
#include <numbers>
#include <cmath>
#include <random>

namespace spark::recon {

SensitivityMaps EstimateSensitivities(KSpace const &kspace, nufft::Plan const &plan, double center_fraction)
{
  if (!(center_fraction > 0.0 && center_fraction <= 1.0)) {
    throw ConfigError(fmt::format("center fraction must be in (0, 1], got {}", center_fraction));
  }
  if (kspace.empty()) { throw DataError("no coils in k-space data"); }
  auto const k = plan.locations();
  std::vector<std::size_t> keep;
  for (std::size_t q = 0; q < k.size(); ++q) {
    if (Norm(k[q]) <= center_fraction) { keep.push_back(q); }
  }
  if (keep.empty()) { throw DegenerateGeometryError(fmt::format("no samples within radius {}", center_fraction)); }
  std::vector<Vec2> sub;
  for (auto q : keep) {
    sub.push_back(k[q]);
  }
  nufft::Plan const low(std::move(sub), plan.n(), plan.mode());
  auto const dc = nufft::PipeWeights(low, 10);
  // Hann taper over the disc instead of a hard cut, to keep ringing out of the maps.
  std::vector<double> taper(dc.w);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    double const c = std::cos(0.5 * std::numbers::pi * Norm(k[keep[i]]) / center_fraction);
    taper[i] *= c * c;
  }

  SensitivityMaps out;
  Index const n = plan.n();
  Re2 rss(n, n);
  for (auto const &y : kspace) {
    if (static_cast<Index>(y.size()) != plan.size()) { throw DataError(fmt::format("coil has {} samples, plan has {}", y.size(), plan.size())); }
    std::vector<Cx> ys;
    for (auto q : keep) {
      ys.push_back(y[q]);
    }
    Cx2 img = low.adjoint(ys, taper);
    for (Index i = 0; i < rss.size(); ++i) {
      rss[i] += std::norm(img[i]);
    }
    out.maps.push_back(std::move(img));
  }
  double big = 0.0;
  for (double &v : rss.flat()) {
    v = std::sqrt(v);
    big = std::max(big, v);
  }
  if (!(big > 0.0)) { throw DegenerateGeometryError("k-space centre carries no signal"); }
  for (auto &m : out.maps) {
    for (Index i = 0; i < m.size(); ++i) {
      m[i] /= std::max(rss[i], 1e-6 * big);
    }
  }
  return out;
}

Encoding::Encoding(nufft::Plan const &plan, std::vector<Cx2> const &maps, WaveletConfig const &wavelet, std::span<double const> weights)
  : plan_(plan)
  , maps_(maps)
  , wavelet_(wavelet)
  , weights_(weights.begin(), weights.end())
{
  if (maps_.empty()) { throw DataError("no sensitivity maps"); }
  for (auto const &m : maps_) {
    if (m.rows() != plan.n() || m.cols() != plan.n()) { throw DataError("sensitivity map size does not match the plan"); }
  }
  wavelet_.validate(plan.n());
}

Cx2 Encoding::image(Cx2 const &z) const { return wavelet::Synthesis(z, wavelet_); }

KSpace Encoding::forward(Cx2 const &z) const
{
  Cx2 const x = image(z);
  KSpace out;
  Cx2 c(x.rows(), x.cols());
  for (auto const &m : maps_) {
    for (Index i = 0; i < c.size(); ++i) {
      c[i] = m[i] * x[i];
    }
    out.push_back(plan_.forward(c));
  }
  return out;
}

Cx2 Encoding::adjoint(KSpace const &r) const
{
  Cx2 x(plan_.n(), plan_.n());
  for (std::size_t l = 0; l < maps_.size(); ++l) {
    Cx2 const a = plan_.adjoint(r[l], weights_);
    for (Index i = 0; i < x.size(); ++i) {
      x[i] += std::conj(maps_[l][i]) * a[i];
    }
  }
  return wavelet::Analysis(x, wavelet_);
}

namespace {

double SquaredNorm(Cx2 const &z)
{
  double s = 0.0;
  for (Cx v : z.flat()) {
    s += std::norm(v);
  }
  return s;
}

double L1(Cx2 const &z)
{
  double s = 0.0;
  for (Cx v : z.flat()) {
    s += std::abs(v);
  }
  return s;
}

} // namespace

double PowerIteration(Encoding const &op, Index iters)
{
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> g;
  Cx2 v(op.n(), op.n());
  for (auto &e : v.flat()) {
    e = {g(rng), g(rng)};
  }
  double est = 0.0;
  for (Index it = 0; it < iters; ++it) {
    double const nv = std::sqrt(SquaredNorm(v));
    if (!(nv > 0.0)) { return 0.0; }
    for (auto &e : v.flat()) {
      e /= nv;
    }
    Cx2 const w = op.adjoint(op.forward(v));
    Cx rq{};
    for (Index i = 0; i < v.size(); ++i) {
      rq += std::conj(v[i]) * w[i];
    }
    est = rq.real();
    v = w;
  }
  return est;
}

void ReconConfig::validate(Index n) const
{
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) { throw ConfigError(fmt::format("lambda must be >= 0, got {}", lambda)); }
  if (max_iter < 1) { throw ConfigError(fmt::format("max_iter must be >= 1, got {}", max_iter)); }
  if (!(tol >= 0.0)) { throw ConfigError(fmt::format("tol must be >= 0, got {}", tol)); }
  if (dc_iters < 1 || power_iters < 1) { throw ConfigError("iteration counts must be >= 1"); }
  if (!(lipschitz_margin >= 1.0)) { throw ConfigError(fmt::format("lipschitz margin must be >= 1, got {}", lipschitz_margin)); }
  wavelet.validate(n);
}

Cx SoftThreshold(Cx v, double tau)
{
  double const m = std::abs(v);
  if (m <= tau) { return {}; }
  return v * ((m - tau) / m);
}

ReconResult CsReconstruct(KSpace const &kspace, nufft::Plan const &plan, SensitivityMaps const &maps, ReconConfig const &cfg)
{
  cfg.validate(plan.n());
  if (kspace.size() != maps.maps.size()) {
    throw DataError(fmt::format("{} coils of data but {} sensitivity maps", kspace.size(), maps.maps.size()));
  }
  for (auto const &y : kspace) {
    if (static_cast<Index>(y.size()) != plan.size()) { throw DataError(fmt::format("coil has {} samples, plan has {}", y.size(), plan.size())); }
  }
  auto const t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count(); };

  std::vector<double> w;
  if (cfg.dc_precondition) { w = nufft::PipeWeights(plan, cfg.dc_iters).w; }
  Encoding const op(plan, maps.maps, cfg.wavelet, w);
  auto weight = [&](std::size_t q) { return w.empty() ? 1.0 : w[q]; };

  ReconResult res;
  res.lipschitz = cfg.lipschitz_margin * PowerIteration(op, cfg.power_iters);
  Index const n = plan.n();
  res.image = Cx2(n, n);
  if (!(res.lipschitz > 0.0)) { throw DegenerateGeometryError("encoding operator is zero"); }

  // Data scale: peak of the first gradient image from z = 0.
  Cx2 const g0 = op.adjoint(kspace);
  double peak = 0.0;
  for (Cx v : op.image(g0).flat()) {
    peak = std::max(peak, std::abs(v));
  }
  peak /= res.lipschitz;
  res.data_scale = peak;
  res.log.push_back({0, 0.0, elapsed()});
  if (!(peak > 0.0)) { return res; }

  KSpace y = kspace;
  for (auto &c : y) {
    for (auto &v : c) {
      v /= peak;
    }
  }
  double const inv_lip = 1.0 / res.lipschitz;

  auto data_term = [&](KSpace const &Az) {
    double s = 0.0;
    for (std::size_t l = 0; l < y.size(); ++l) {
      for (std::size_t q = 0; q < y[l].size(); ++q) {
        s += weight(q) * std::norm(Az[l][q] - y[l][q]);
      }
    }
    return 0.5 * s * inv_lip;
  };

  Cx2 x(n, n);
  KSpace Ax(y.size(), std::vector<Cx>(static_cast<std::size_t>(plan.size())));
  Cx2 v = x;
  KSpace Av = Ax;
  double t = 1.0;
  double F = data_term(Ax);
  res.log[0].objective = F;
  bool restarted = false;

  for (Index it = 1; it <= cfg.max_iter; ++it) {
    KSpace r = Av;
    for (std::size_t l = 0; l < r.size(); ++l) {
      for (std::size_t q = 0; q < r[l].size(); ++q) {
        r[l][q] -= y[l][q];
      }
    }
    Cx2 const grad = op.adjoint(r);
    Cx2 xn(n, n);
    for (Index i = 0; i < xn.size(); ++i) {
      xn[i] = SoftThreshold(v[i] - inv_lip * grad[i], cfg.lambda);
    }
    KSpace Axn = op.forward(xn);
    double const Fn = data_term(Axn) + cfg.lambda * L1(xn);
    res.iterations = it;
    if (!std::isfinite(Fn)) {
      res.log.push_back({it, Fn, elapsed()});
      throw ReconDivergence(fmt::format("objective became non-finite at iteration {}", it), res.log);
    }

    if (cfg.monotone_restart && Fn > F && !restarted) {
      // Drop the momentum and retry from the last accepted point.
      t = 1.0;
      v = x;
      Av = Ax;
      restarted = true;
      res.log.push_back({it, F, elapsed()});
      continue;
    }
    restarted = false;

    double const tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    double const beta = (t - 1.0) / tn;
    for (Index i = 0; i < v.size(); ++i) {
      v[i] = xn[i] + beta * (xn[i] - x[i]);
    }
    for (std::size_t l = 0; l < Av.size(); ++l) {
      for (std::size_t q = 0; q < Av[l].size(); ++q) {
        Av[l][q] = Axn[l][q] + beta * (Axn[l][q] - Ax[l][q]);
      }
    }
    x = std::move(xn);
    Ax = std::move(Axn);
    t = tn;
    double const change = std::abs(F - Fn);
    double const scale = std::max(std::abs(F), std::numeric_limits<double>::min());
    F = Fn;
    res.log.push_back({it, F, elapsed()});
    if (change <= cfg.tol * scale) { break; }
  }

  res.image = op.image(x);
  for (auto &e : res.image.flat()) {
    e *= peak;
  }
  return res;
}

Cx2 DcAdjoint(KSpace const &kspace, nufft::Plan const &plan, SensitivityMaps const &maps, std::span<double const> weights)
{
  Cx2 x(plan.n(), plan.n());
  for (std::size_t l = 0; l < kspace.size(); ++l) {
    Cx2 const a = plan.adjoint(kspace[l], weights);
    for (Index i = 0; i < x.size(); ++i) {
      x[i] += std::conj(maps.maps[l][i]) * a[i];
    }
  }
  return x;
}

std::vector<double> LogGrid(Index count, double lo, double hi)
{
  if (count < 1) { throw ConfigError(fmt::format("lambda grid needs at least one value, got {}", count)); }
  if (!(lo > 0.0 && hi >= lo)) { throw ConfigError(fmt::format("bad lambda range [{}, {}]", lo, hi)); }
  std::vector<double> g;
  for (Index i = 0; i < count; ++i) {
    double const f = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    g.push_back(i == 0 ? lo : (i == count - 1 ? hi : std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo)))));
  }
  return g;
}

LambdaSearch SearchLambda(KSpace const &kspace, nufft::Plan const &plan, SensitivityMaps const &maps, Re2 const &reference,
                          std::vector<double> const &grid, ReconConfig cfg, metrics::Mask const &mask)
{
  if (grid.empty()) { throw ConfigError("empty lambda grid"); }
  LambdaSearch out;
  out.table.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    auto &row = out.table[i];
    row.lambda = grid[i];
    ReconConfig c = cfg;
    c.lambda = grid[i];
    try {
      auto const r = CsReconstruct(kspace, plan, maps, c);
      Re2 const mag = metrics::Magnitude(r.image);
      row.ssim = metrics::Ssim(reference, mag, mask);
      row.psnr = metrics::Psnr(reference, mag, mask);
      row.iterations = r.iterations;
    } catch (NumericalError const &e) {
      row.error = e.what();
    }
  }
  double best = -2.0;
  for (auto const &row : out.table) {
    if (row.error.empty() && row.ssim > best) {
      best = row.ssim;
      out.best = row.lambda;
    }
  }
  if (best < -1.5) { throw DivergenceError("every lambda in the search failed"); }
  return out;
}

double FitScale(Re2 const &ref, Re2 const &x, metrics::Mask const &mask)
{
  double num = 0.0, den = 0.0;
  for (Index i = 0; i < ref.size(); ++i) {
    if (!mask[i]) { continue; }
    num += ref[i] * x[i];
    den += x[i] * x[i];
  }
  return den > 0.0 ? std::max(0.0, num / den) : 0.0;
}

} // namespace spark::recon
