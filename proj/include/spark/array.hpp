#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace spark {

using Index = std::ptrdiff_t;
using Cx = std::complex<double>;

struct Vec2
{
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 &operator+=(Vec2 o)
  {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Vec2 &operator-=(Vec2 o)
  {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  constexpr Vec2 &operator*=(double s)
  {
    x *= s;
    y *= s;
    return *this;
  }
  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Vec2 a, Vec2 b) = default;
};

inline double Dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double Norm(Vec2 a) { return std::sqrt(a.x * a.x + a.y * a.y); }

// Dense row-major 2D array. Element (r, c) lives at r * cols + c.
template <typename T>
class Array2
{
public:
  Array2() = default;
  Array2(Index rows, Index cols, T fill = T{})
    : rows_(rows)
    , cols_(cols)
    , data_(static_cast<std::size_t>(rows * cols), fill)
  {
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index size() const { return rows_ * cols_; }

  T &operator()(Index r, Index c) { return data_[static_cast<std::size_t>(r * cols_ + c)]; }
  T const &operator()(Index r, Index c) const { return data_[static_cast<std::size_t>(r * cols_ + c)]; }
  T &operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
  T const &operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

  std::span<T> flat() { return data_; }
  std::span<T const> flat() const { return data_; }
  std::vector<T> &vec() { return data_; }
  std::vector<T> const &vec() const { return data_; }

  friend bool operator==(Array2 const &, Array2 const &) = default;

private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<T> data_;
};

using Re2 = Array2<double>;
using Cx2 = Array2<Cx>;

} // namespace spark
