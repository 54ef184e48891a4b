#include "spark/fft.hpp"

#include <fftw3.h>

#include <mutex>

namespace spark::fft {

namespace {
// The FFTW planner is not thread-safe; execution on existing plans is.
std::mutex planner;
} // namespace

struct Plan2::Impl
{
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;
  ~Impl()
  {
    std::lock_guard lock(planner);
    if (fwd) { fftw_destroy_plan(fwd); }
    if (bwd) { fftw_destroy_plan(bwd); }
  }
};

Plan2::Plan2(Index rows, Index cols)
  : rows_(rows)
  , cols_(cols)
  , impl_(std::make_unique<Impl>())
{
  // FFTW_ESTIMATE leaves the buffer untouched and gives reproducible plans. Arrays executed
  // later are ordinary vectors, so the plan must not assume SIMD alignment.
  Cx2 scratch(rows, cols);
  auto *p = reinterpret_cast<fftw_complex *>(scratch.vec().data());
  std::lock_guard lock(planner);
  impl_->fwd = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), p, p, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
  impl_->bwd = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), p, p, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
}

Plan2::~Plan2() = default;
Plan2::Plan2(Plan2 &&) noexcept = default;
Plan2 &Plan2::operator=(Plan2 &&) noexcept = default;

void Plan2::forward(Cx2 &a) const
{
  auto *p = reinterpret_cast<fftw_complex *>(a.vec().data());
  fftw_execute_dft(impl_->fwd, p, p);
}

void Plan2::backward(Cx2 &a) const
{
  auto *p = reinterpret_cast<fftw_complex *>(a.vec().data());
  fftw_execute_dft(impl_->bwd, p, p);
}

Cx2 Centered(Cx2 const &x, bool inverse)
{
  Index const nr = x.rows(), nc = x.cols();
  Index const cr = nr / 2, cc = nc / 2;
  auto wrap = [](Index v, Index n) { return ((v % n) + n) % n; };

  Cx2 tmp(nr, nc);
  for (Index r = 0; r < nr; ++r) {
    for (Index c = 0; c < nc; ++c) {
      tmp(wrap(r - cr, nr), wrap(c - cc, nc)) = x(r, c);
    }
  }
  Plan2 const plan(nr, nc);
  if (inverse) {
    plan.backward(tmp);
  } else {
    plan.forward(tmp);
  }
  Cx2 out(nr, nc);
  for (Index r = 0; r < nr; ++r) {
    for (Index c = 0; c < nc; ++c) {
      out(r, c) = tmp(wrap(r - cr, nr), wrap(c - cc, nc));
    }
  }
  return out;
}

} // namespace spark::fft
