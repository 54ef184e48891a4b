#include "spark/density.hpp"

#include "spark/fft.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace spark::density {

void VdsParams::validate() const
{
  if (!(cutoff > 0.0 && cutoff <= 1.0)) { throw ConfigError(fmt::format("vds cutoff must be in (0, 1], got {}", cutoff)); }
  if (!(decay >= 0.0)) { throw ConfigError(fmt::format("vds decay must be >= 0, got {}", decay)); }
}

DensityGrid Vds(Index n, VdsParams const &p)
{
  p.validate();
  if (n < 8) { throw ConfigError(fmt::format("density grid side must be >= 8, got {}", n)); }
  Re2 w(n, n);
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c < n; ++c) {
      double const rad = std::hypot(DensityGrid::CellCenter(c, n), DensityGrid::CellCenter(r, n));
      w(r, c) = rad < p.cutoff ? 1.0 : std::pow(p.cutoff / rad, p.decay);
    }
  }
  return DensityGrid::Normalized(std::move(w));
}

namespace {

void CheckImages(std::vector<Re2> const &images)
{
  if (images.empty()) { throw DataError("spectrum density needs at least one image"); }
  for (auto const &im : images) {
    if (im.rows() != images[0].rows() || im.cols() != images[0].cols()) {
      throw DataError(fmt::format("image shape mismatch: {}x{} vs {}x{}", im.rows(), im.cols(), images[0].rows(), images[0].cols()));
    }
  }
  if (images[0].rows() != images[0].cols()) { throw DataError("spectrum densities need square images"); }
}

Re2 MagnitudeSpectrum(Re2 const &img)
{
  Cx2 x(img.rows(), img.cols());
  for (Index i = 0; i < img.size(); ++i) {
    x[i] = img[i];
  }
  Cx2 const X = fft::Centered(x);
  Re2 mag(img.rows(), img.cols());
  for (Index i = 0; i < mag.size(); ++i) {
    mag[i] = std::abs(X[i]);
  }
  return mag;
}

DensityGrid FromAverage(Re2 avg)
{
  double const lo = *std::min_element(avg.vec().begin(), avg.vec().end());
  for (double &v : avg.flat()) {
    v -= lo;
  }
  return DensityGrid::Normalized(std::move(avg));
}

} // namespace

DensityGrid Spectrum(std::vector<Re2> const &images)
{
  CheckImages(images);
  Re2 avg(images[0].rows(), images[0].cols());
  for (auto const &im : images) {
    Re2 const mag = MagnitudeSpectrum(im);
    for (Index i = 0; i < avg.size(); ++i) {
      avg[i] += mag[i];
    }
  }
  for (double &v : avg.flat()) {
    v /= static_cast<double>(images.size());
  }
  return FromAverage(std::move(avg));
}

DensityGrid LogSpectrum(std::vector<Re2> const &images)
{
  CheckImages(images);
  Re2 avg(images[0].rows(), images[0].cols());
  for (auto const &im : images) {
    Re2 const mag = MagnitudeSpectrum(im);
    double const floor = 1e-12 * *std::max_element(mag.vec().begin(), mag.vec().end());
    if (!(floor > 0.0)) { throw DataError("log-spectrum of an all-zero image is undefined"); }
    for (Index i = 0; i < avg.size(); ++i) {
      avg[i] += std::log(std::max(mag[i], floor));
    }
  }
  for (double &v : avg.flat()) {
    v /= static_cast<double>(images.size());
  }
  return FromAverage(std::move(avg));
}

void LoupeLiteParams::validate() const
{
  if (!(target_sparsity > 0.0 && target_sparsity < 1.0)) {
    throw ConfigError(fmt::format("loupe target sparsity must be in (0, 1), got {}", target_sparsity));
  }
  if (!(slope > 0.0)) { throw ConfigError(fmt::format("loupe slope must be > 0, got {}", slope)); }
  if (epochs < 1) { throw ConfigError(fmt::format("loupe epochs must be >= 1, got {}", epochs)); }
  if (!(step_size > 0.0)) { throw ConfigError(fmt::format("loupe step size must be > 0, got {}", step_size)); }
}

Re2 SpectralEnergy(std::vector<Re2> const &images)
{
  CheckImages(images);
  Index const n = images[0].rows();
  double const norm = 1.0 / (static_cast<double>(n * n) * static_cast<double>(images.size()));
  Re2 energy(n, n);
  for (auto const &im : images) {
    Re2 const mag = MagnitudeSpectrum(im);
    for (Index i = 0; i < energy.size(); ++i) {
      energy[i] += mag[i] * mag[i] * norm;
    }
  }
  return energy;
}

namespace {

double Sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

double Mean(Re2 const &a)
{
  double s = 0.0;
  for (double v : a.flat()) {
    s += v;
  }
  return s / static_cast<double>(a.size());
}

Re2 Squashed(LoupeState const &st)
{
  Re2 pbar(st.logits.rows(), st.logits.cols());
  for (Index i = 0; i < pbar.size(); ++i) {
    pbar[i] = Sigmoid(st.slope * st.logits[i]);
  }
  return pbar;
}

} // namespace

Re2 LoupeState::probabilities() const
{
  Re2 p = Squashed(*this);
  double const m = Mean(p);
  if (m >= sparsity) {
    double const scale = sparsity / m;
    for (double &v : p.flat()) {
      v *= scale;
    }
  } else {
    double const scale = (1.0 - sparsity) / (1.0 - m);
    for (double &v : p.flat()) {
      v = 1.0 - scale * (1.0 - v);
    }
  }
  return p;
}

double LoupeState::loss(Re2 const &energy) const
{
  Re2 const p = probabilities();
  double const cells = static_cast<double>(p.size());
  double l = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    double const miss = 1.0 - p[i];
    l += miss * miss * energy[i];
  }
  return l / cells;
}

Re2 LoupeState::gradient(Re2 const &energy) const
{
  Re2 const pbar = Squashed(*this);
  Re2 const p = probabilities();
  double const cells = static_cast<double>(p.size());
  double const m = Mean(pbar);

  // dL/dP, the loss being quadratic in P.
  Re2 g(p.rows(), p.cols());
  for (Index i = 0; i < p.size(); ++i) {
    g[i] = -2.0 * (1.0 - p[i]) * energy[i] / cells;
  }

  // Back through the budget renormalization, which couples every cell via mean(P̄).
  Re2 gbar(p.rows(), p.cols());
  if (m >= sparsity) {
    double coupling = 0.0;
    for (Index i = 0; i < p.size(); ++i) {
      coupling += g[i] * pbar[i];
    }
    coupling *= sparsity / (m * m * cells);
    for (Index i = 0; i < p.size(); ++i) {
      gbar[i] = sparsity / m * g[i] - coupling;
    }
  } else {
    double const scale = (1.0 - sparsity) / (1.0 - m);
    double coupling = 0.0;
    for (Index i = 0; i < p.size(); ++i) {
      coupling += g[i] * (1.0 - pbar[i]);
    }
    coupling *= (1.0 - sparsity) / ((1.0 - m) * (1.0 - m) * cells);
    for (Index i = 0; i < p.size(); ++i) {
      gbar[i] = scale * g[i] - coupling;
    }
  }

  for (Index i = 0; i < p.size(); ++i) {
    gbar[i] *= slope * pbar[i] * (1.0 - pbar[i]);
  }
  return gbar;
}

LoupeState InitialLoupeState(Index n, LoupeLiteParams const &p)
{
  p.validate();
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  LoupeState st{p.slope, p.target_sparsity, Re2(n, n)};
  constexpr double eps = 1e-3;
  for (double &w : st.logits.flat()) {
    double const u = eps + (1.0 - 2.0 * eps) * unif(rng);
    w = std::log(u / (1.0 - u)) / p.slope;
  }
  return st;
}

LoupeResult LoupeLite(std::vector<Re2> const &images, LoupeLiteParams const &p)
{
  p.validate();
  Re2 const energy = SpectralEnergy(images);
  LoupeState st = InitialLoupeState(energy.rows(), p);

  LoupeResult res;
  res.loss_trace.push_back(st.loss(energy));
  for (Index epoch = 0; epoch < p.epochs; ++epoch) {
    Re2 const g = st.gradient(energy);
    for (Index i = 0; i < g.size(); ++i) {
      st.logits[i] -= p.step_size * g[i];
    }
    double const l = st.loss(energy);
    if (!std::isfinite(l)) { throw DivergenceError(fmt::format("loupe-lite loss became non-finite at epoch {}", epoch)); }
    res.loss_trace.push_back(l);
    res.mean_trace.push_back(Mean(st.probabilities()));
  }
  res.probabilities = st.probabilities();
  res.density = DensityGrid::Normalized(res.probabilities);
  return res;
}

double Entropy(DensityGrid const &rho)
{
  double h = 0.0;
  for (double v : rho.values().flat()) {
    if (v > 0.0) { h -= v * std::log(v); }
  }
  return h;
}

} // namespace spark::density
