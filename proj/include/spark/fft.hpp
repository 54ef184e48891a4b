#pragma once

#include "spark/array.hpp"

#include <memory>

namespace spark::fft {

// Owns an FFTW plan for in-place 2D transforms of a fixed size.
class Plan2
{
public:
  Plan2(Index rows, Index cols);
  ~Plan2();
  Plan2(Plan2 const &) = delete;
  Plan2 &operator=(Plan2 const &) = delete;
  Plan2(Plan2 &&) noexcept;
  Plan2 &operator=(Plan2 &&) noexcept;

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }

  // Unnormalized; forward uses exp(-2πi ...), backward exp(+2πi ...).
  void forward(Cx2 &a) const;
  void backward(Cx2 &a) const;

private:
  struct Impl;
  Index rows_;
  Index cols_;
  std::unique_ptr<Impl> impl_;
};

// X[f] = Σ_r x[r] exp(∓2πi f·r / n) with r, f ∈ [-n/2, n - n/2) stored at index (value + n/2).
// Unnormalized in both directions.
Cx2 Centered(Cx2 const &x, bool inverse = false);

} // namespace spark::fft
