#include "spark/wavelet.hpp"

#include <fmt/format.h>

#include <array>
#include <vector>

namespace spark::wavelet {

namespace {

// Symlet 8 decomposition low-pass, as tabulated by PyWavelets.
constexpr std::array<double, 16> kSym8{
  -0.0033824159510061256, -0.0005421323317911481, 0.03169508781149298, 0.007607487324917605,
  -0.1432942383508097,    -0.061273359067658524,  0.4813596512583722,  0.7771857517005235,
  0.3644418948353314,     -0.05194583810770904,   -0.027219029917056003, 0.049137179673607506,
  0.003808752013890615,   -0.01495225833704823,   -0.0003029205147213668, 0.0018899503327594609};

constexpr std::array<double, 2> kHaar{0.7071067811865476, 0.7071067811865476};

// Periodic analysis of x[0..N) with stride into a (first N/2) and d (next N/2).
void Forward1(Cx *x, Index N, Index stride, std::span<double const> h, std::vector<Cx> &tmp)
{
  Index const L = static_cast<Index>(h.size());
  Index const half = N / 2;
  tmp.assign(static_cast<std::size_t>(N), Cx{});
  for (Index k = 0; k < half; ++k) {
    Cx a{}, d{};
    for (Index j = 0; j < L; ++j) {
      Cx const v = x[((2 * k + j) % N) * stride];
      a += h[static_cast<std::size_t>(j)] * v;
      double const g = (j % 2 == 0 ? 1.0 : -1.0) * h[static_cast<std::size_t>(L - 1 - j)];
      d += g * v;
    }
    tmp[static_cast<std::size_t>(k)] = a;
    tmp[static_cast<std::size_t>(half + k)] = d;
  }
  for (Index i = 0; i < N; ++i) {
    x[i * stride] = tmp[static_cast<std::size_t>(i)];
  }
}

void Inverse1(Cx *x, Index N, Index stride, std::span<double const> h, std::vector<Cx> &tmp)
{
  Index const L = static_cast<Index>(h.size());
  Index const half = N / 2;
  tmp.assign(static_cast<std::size_t>(N), Cx{});
  for (Index k = 0; k < half; ++k) {
    Cx const a = x[k * stride];
    Cx const d = x[(half + k) * stride];
    for (Index j = 0; j < L; ++j) {
      double const g = (j % 2 == 0 ? 1.0 : -1.0) * h[static_cast<std::size_t>(L - 1 - j)];
      tmp[static_cast<std::size_t>((2 * k + j) % N)] += h[static_cast<std::size_t>(j)] * a + g * d;
    }
  }
  for (Index i = 0; i < N; ++i) {
    x[i * stride] = tmp[static_cast<std::size_t>(i)];
  }
}

} // namespace

std::span<double const> LowPass(std::string const &family)
{
  if (family == "sym8") { return kSym8; }
  if (family == "haar") { return kHaar; }
  throw ConfigError(fmt::format("unknown wavelet family '{}'", family));
}

void WaveletConfig::validate(Index n) const
{
  (void)LowPass(family);
  if (n_scales < 1) { throw ConfigError(fmt::format("wavelet scales must be >= 1, got {}", n_scales)); }
  if (n_scales > 30 || n % (Index{1} << n_scales) != 0) {
    throw ConfigError(fmt::format("image side {} is not divisible by 2^{}", n, n_scales));
  }
}

Cx2 Analysis(Cx2 const &image, WaveletConfig const &cfg)
{
  if (image.rows() != image.cols()) { throw DataError("wavelet transform needs a square image"); }
  Index const n = image.rows();
  cfg.validate(n);
  auto const h = LowPass(cfg.family);
  Cx2 z = image;
  std::vector<Cx> tmp;
  Index N = n;
  for (Index s = 0; s < cfg.n_scales; ++s, N /= 2) {
    for (Index r = 0; r < N; ++r) {
      Forward1(&z(r, 0), N, 1, h, tmp);
    }
    for (Index c = 0; c < N; ++c) {
      Forward1(&z(0, c), N, n, h, tmp);
    }
  }
  return z;
}

Cx2 Synthesis(Cx2 const &coeffs, WaveletConfig const &cfg)
{
  if (coeffs.rows() != coeffs.cols()) { throw DataError("wavelet transform needs a square image"); }
  Index const n = coeffs.rows();
  cfg.validate(n);
  auto const h = LowPass(cfg.family);
  Cx2 x = coeffs;
  std::vector<Cx> tmp;
  for (Index s = cfg.n_scales - 1; s >= 0; --s) {
    Index const N = n >> s;
    for (Index c = 0; c < N; ++c) {
      Inverse1(&x(0, c), N, n, h, tmp);
    }
    for (Index r = 0; r < N; ++r) {
      Inverse1(&x(r, 0), N, 1, h, tmp);
    }
  }
  return x;
}

} // namespace spark::wavelet
