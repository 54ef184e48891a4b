#include "spark/constraints.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace spark::constraints {

void ConstraintSet::validate(Index n_shots, Index n_samples) const
{
  if (!(step_bound > 0.0)) { throw ConfigError(fmt::format("step bound must be > 0, got {}", step_bound)); }
  if (!(accel_bound > 0.0)) { throw ConfigError(fmt::format("acceleration bound must be > 0, got {}", accel_bound)); }
  for (auto const &a : anchors) {
    if (a.shot < 0 || a.shot >= n_shots || a.sample < 0 || a.sample >= n_samples) {
      throw ConfigError(fmt::format("anchor ({}, {}) outside {} shots x {} samples", a.shot, a.sample, n_shots, n_samples));
    }
  }
}

std::vector<Anchor> CenterAnchors(Index n_shots, Index n_samples)
{
  std::vector<Anchor> out;
  for (Index i = 0; i < n_shots; ++i) {
    out.push_back({i, n_samples / 2, {0.0, 0.0}});
  }
  return out;
}

ConstraintSet FromHardware(TrajectorySpec const &spec, bool anchor_center)
{
  spec.validate();
  ConstraintSet q;
  q.step_bound = NormalizedSpeedBound(spec.hardware);
  q.accel_bound = NormalizedAccelBound(spec.hardware);
  if (anchor_center) { q.anchors = CenterAnchors(spec.n_shots, spec.n_samples); }
  return q;
}

FeasibilityReport CheckFeasible(std::span<Vec2 const> points, Index n_shots, Index n_samples, ConstraintSet const &q,
                                double tol)
{
  FeasibilityReport r;
  for (Index i = 0; i < n_shots; ++i) {
    auto const k = points.subspan(static_cast<std::size_t>(i * n_samples), static_cast<std::size_t>(n_samples));
    for (Index s = 0; s + 1 < n_samples; ++s) {
      double const ratio = Norm(k[s + 1] - k[s]) / q.step_bound;
      if (ratio > r.max_speed_ratio || r.worst_speed_shot < 0) {
        r.max_speed_ratio = std::max(ratio, r.max_speed_ratio);
        r.worst_speed_shot = i;
        r.worst_speed_sample = s;
      }
    }
    for (Index s = 1; s + 1 < n_samples; ++s) {
      double const ratio = Norm(k[s + 1] - 2.0 * k[s] + k[s - 1]) / q.accel_bound;
      if (ratio > r.max_accel_ratio || r.worst_accel_shot < 0) {
        r.max_accel_ratio = std::max(ratio, r.max_accel_ratio);
        r.worst_accel_shot = i;
        r.worst_accel_sample = s;
      }
    }
    if (q.box) {
      for (Vec2 p : k) {
        r.max_box_excess = std::max({r.max_box_excess, std::abs(p.x) - 1.0, std::abs(p.y) - 1.0});
      }
    }
  }
  for (auto const &a : q.anchors) {
    r.max_anchor_error = std::max(r.max_anchor_error, Norm(points[static_cast<std::size_t>(a.shot * n_samples + a.sample)] - a.point));
  }
  r.feasible = r.max_speed_ratio <= 1.0 + tol && r.max_accel_ratio <= 1.0 + tol && r.max_anchor_error <= tol &&
               r.max_box_excess <= tol;
  return r;
}

FeasibilityReport CheckFeasible(Trajectory const &t, ConstraintSet const &q, double tol)
{
  return CheckFeasible(t.points(), t.shots(), t.samples(), q, tol);
}

namespace {

// Lipschitz bound of the dual gradient: ‖D₁‖² + ‖D₂‖² (+ ‖I‖² for the box).
double DualLipschitz(bool box) { return 4.0 + 16.0 + (box ? 1.0 : 0.0); }

// Solves min ½‖k − z‖² subject to ‖D₁k‖ ≤ a, ‖D₂k‖ ≤ b, |k| ≤ 1 and pinned samples, by accelerated
// proximal ascent on the dual of the ball constraints. Pinned samples are eliminated from the primal.
class ShotSolver
{
public:
  ShotSolver(std::span<Vec2 const> z, double a, double b, std::span<Anchor const> anchors, bool box)
    : z_(z)
    , ns_(static_cast<Index>(z.size()))
    , a_(a)
    , b_(b)
    , box_(box)
    , pinned_(z.size(), false)
    , pins_(z.size())
  {
    for (auto const &an : anchors) {
      pinned_[static_cast<std::size_t>(an.sample)] = true;
      pins_[static_cast<std::size_t>(an.sample)] = an.point;
    }
  }

  void primal(ShotDual const &y, std::vector<Vec2> &k) const
  {
    k.assign(z_.begin(), z_.end());
    for (Index m = 0; m + 1 < ns_; ++m) {
      // D₁ᵀ: column m touches samples m (−1) and m+1 (+1)
      k[m] += y.speed[m];
      k[m + 1] -= y.speed[m];
    }
    for (Index m = 0; m + 2 < ns_; ++m) {
      k[m] -= y.accel[m];
      k[m + 1] += 2.0 * y.accel[m];
      k[m + 2] -= y.accel[m];
    }
    if (box_) {
      for (Index s = 0; s < ns_; ++s) {
        k[s] -= y.box[s];
      }
    }
    pin(k);
  }

  void pin(std::vector<Vec2> &k) const
  {
    for (Index s = 0; s < ns_; ++s) {
      if (pinned_[s]) { k[s] = pins_[s]; }
    }
  }

  // y⁺ = prox_{tσ}(ŷ + t A k), a group shrinkage per constraint.
  void ascend(ShotDual const &yhat, std::vector<Vec2> const &k, double t, ShotDual &out) const
  {
    for (Index m = 0; m + 1 < ns_; ++m) {
      out.speed[m] = Shrink(yhat.speed[m] + t * (k[m + 1] - k[m]), a_ * t);
    }
    for (Index m = 0; m + 2 < ns_; ++m) {
      out.accel[m] = Shrink(yhat.accel[m] + t * (k[m + 2] - 2.0 * k[m + 1] + k[m]), b_ * t);
    }
    if (box_) {
      for (Index s = 0; s < ns_; ++s) {
        Vec2 const w = yhat.box[s] + t * k[s];
        out.box[s] = {SoftThreshold(w.x, t), SoftThreshold(w.y, t)};
      }
    }
  }

  struct Status
  {
    double violation; // worst relative constraint excess
    double gap;       // σ(y) − ⟨y, A k⟩
    double objective;
  };

  Status status(ShotDual const &y, std::vector<Vec2> const &k) const
  {
    Status st{0.0, 0.0, 0.0};
    for (Index s = 0; s < ns_; ++s) {
      Vec2 const d = k[s] - z_[s];
      st.objective += 0.5 * Dot(d, d);
    }
    for (Index m = 0; m + 1 < ns_; ++m) {
      Vec2 const d = k[m + 1] - k[m];
      st.violation = std::max(st.violation, (Norm(d) - a_) / a_);
      st.gap += a_ * Norm(y.speed[m]) - Dot(y.speed[m], d);
    }
    for (Index m = 0; m + 2 < ns_; ++m) {
      Vec2 const d = k[m + 2] - 2.0 * k[m + 1] + k[m];
      st.violation = std::max(st.violation, (Norm(d) - b_) / b_);
      st.gap += b_ * Norm(y.accel[m]) - Dot(y.accel[m], d);
    }
    if (box_) {
      for (Index s = 0; s < ns_; ++s) {
        st.violation = std::max({st.violation, std::abs(k[s].x) - 1.0, std::abs(k[s].y) - 1.0});
        st.gap += std::abs(y.box[s].x) + std::abs(y.box[s].y) - Dot(y.box[s], k[s]);
      }
    }
    return st;
  }

  // Certificate for any primal point k with pins in place: P(k) − D(y) bounds its suboptimality
  // by weak duality. For k = k(y) this is the gap above.
  Status certify(ShotDual const &y, std::vector<Vec2> const &k) const
  {
    std::vector<Vec2> ky;
    primal(y, ky);
    auto const d = status(y, ky);
    Status st = status(y, k);
    st.gap = st.objective - (d.objective - d.gap);
    return st;
  }

  // The gap is compared in units of the squared step bound so the tolerance is scale-free.
  double residual(Status const &st) const { return std::max(st.violation, std::abs(st.gap) / (a_ * a_)); }

  Index samples() const { return ns_; }
  bool box() const { return box_; }
  double step_bound() const { return a_; }
  double accel_bound() const { return b_; }
  bool pinned(Index s) const { return pinned_[s]; }
  Vec2 pin_point(Index s) const { return pins_[s]; }
  std::span<Vec2 const> target() const { return z_; }

  static Vec2 Shrink(Vec2 w, double radius)
  {
    double const n = Norm(w);
    if (n <= radius) { return {}; }
    return (1.0 - radius / n) * w;
  }
  static double SoftThreshold(double v, double tau)
  {
    if (v > tau) { return v - tau; }
    if (v < -tau) { return v + tau; }
    return 0.0;
  }

private:

  std::span<Vec2 const> z_;
  Index ns_;
  double a_;
  double b_;
  bool box_;
  std::vector<bool> pinned_;
  std::vector<Vec2> pins_;
};

void Resize(ShotDual &y, Index ns, bool box)
{
  auto fit = [](std::vector<Vec2> &v, Index n) {
    if (static_cast<Index>(v.size()) != n) { v.assign(static_cast<std::size_t>(std::max<Index>(n, 0)), Vec2{}); }
  };
  fit(y.speed, ns - 1);
  fit(y.accel, ns - 2);
  fit(y.box, box ? ns : 0);
}

void Extrapolate(ShotDual const &cur, ShotDual const &prev, double beta, ShotDual &out)
{
  auto mix = [beta](std::vector<Vec2> const &c, std::vector<Vec2> const &p, std::vector<Vec2> &o) {
    for (std::size_t i = 0; i < c.size(); ++i) {
      o[i] = c[i] + beta * (c[i] - p[i]);
    }
  };
  mix(cur.speed, prev.speed, out.speed);
  mix(cur.accel, prev.accel, out.accel);
  mix(cur.box, prev.box, out.box);
}

// ⟨y⁺ − ŷ, y⁺ − y⟩ < 0 means the momentum points away from ascent.
bool ShouldRestart(ShotDual const &next, ShotDual const &hat, ShotDual const &cur)
{
  double s = 0.0;
  auto acc = [&s](std::vector<Vec2> const &n, std::vector<Vec2> const &h, std::vector<Vec2> const &c) {
    for (std::size_t i = 0; i < n.size(); ++i) {
      s += Dot(n[i] - h[i], n[i] - c[i]);
    }
  };
  acc(next.speed, hat.speed, cur.speed);
  acc(next.accel, hat.accel, cur.accel);
  acc(next.box, hat.box, cur.box);
  return s < 0.0;
}

} // namespace

namespace {

ShotProjection DualAscent(ShotSolver const &solver, ProjectionOptions const &opt, ShotDual *warm)
{
  Index const ns = solver.samples();
  bool const box = solver.box();
  ShotDual y;
  if (warm) { y = *warm; }
  Resize(y, ns, box);
  ShotDual y_prev = y, y_hat = y, y_next = y;

  std::vector<Vec2> k;
  solver.primal(y, k);
  auto st = solver.status(y, k);

  ShotProjection best{k, 0, solver.residual(st), st.objective, st.objective - st.gap, false};
  if (best.residual < opt.tol) {
    best.converged = true;
    if (warm) { *warm = y; }
    return best;
  }

  double const t = 1.0 / DualLipschitz(box);
  double theta = 1.0;
  std::vector<Vec2> k_hat(k.size());
  std::vector<Vec2> k_prev = k;
  for (Index it = 1; it <= opt.max_iter; ++it) {
    double const theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    double const beta = (theta - 1.0) / theta_next;
    Extrapolate(y, y_prev, beta, y_hat);
    // The primal map is affine in y, so it extrapolates with the same coefficients.
    for (std::size_t i = 0; i < k.size(); ++i) {
      k_hat[i] = k[i] + beta * (k[i] - k_prev[i]);
    }
    solver.ascend(y_hat, k_hat, t, y_next);
    theta = ShouldRestart(y_next, y_hat, y) ? 1.0 : theta_next;

    std::swap(y_prev, y);
    std::swap(y, y_next);
    std::swap(k_prev, k);
    solver.primal(y, k);
    st = solver.status(y, k);
    double const res = solver.residual(st);
    if (res < best.residual) {
      best = {k, it, res, st.objective, st.objective - st.gap, false};
    }
    if (res < opt.tol) {
      best.converged = true;
      break;
    }
  }
  if (warm) { *warm = y; }
  return best;
}

// Symmetric positive definite band matrix with half-bandwidth W, lower band stored by rows,
// factored in place as L Lᵀ.
template <Index W>
class BandCholesky
{
public:
  explicit BandCholesky(Index n)
    : n_(n)
    , a_(static_cast<std::size_t>((n + 1) * (W + 1)), 0.0)
    , inv_(static_cast<std::size_t>(n))
  {
  }

  void clear() { std::fill(a_.begin(), a_.end(), 0.0); }

  // Entry (i, j) with j ≤ i ≤ j + W.
  double &at(Index i, Index j) { return row(i)[j]; }

  bool factor()
  {
    for (Index i = 0; i < n_; ++i) {
      Index const j0 = std::max<Index>(0, i - W);
      double *ri = row(i);
      for (Index j = j0; j < i; ++j) {
        double const *rj = row(j);
        double s = ri[j];
        for (Index k = j0; k < j; ++k) {
          s -= ri[k] * rj[k];
        }
        ri[j] = s * inv_[j];
      }
      double s = ri[i];
      for (Index k = j0; k < i; ++k) {
        s -= ri[k] * ri[k];
      }
      if (!(s > 0.0)) { return false; }
      ri[i] = std::sqrt(s);
      inv_[i] = 1.0 / ri[i];
    }
    return true;
  }

  void solve(std::vector<double> &x)
  {
    for (Index i = 0; i < n_; ++i) {
      double const *ri = row(i);
      double s = x[i];
      for (Index k = std::max<Index>(0, i - W); k < i; ++k) {
        s -= ri[k] * x[k];
      }
      x[i] = s * inv_[i];
    }
    for (Index i = n_ - 1; i >= 0; --i) {
      double s = x[i];
      for (Index k = i + 1; k <= std::min(n_ - 1, i + W); ++k) {
        s -= row(k)[i] * x[k];
      }
      x[i] = s * inv_[i];
    }
  }

private:
  // row(i)[j] is entry (i, j).
  double *row(Index i) { return a_.data() + i * W + W; }

  Index n_;
  std::vector<double> a_;
  std::vector<double> inv_; // 1 / L(i, i)
};

// Log-barrier path following: minimise t·½‖k − z‖² − Σ log(c² − ‖u‖²) − Σ log(1 − k²) by damped
// Newton steps, raising t until the dual point read off the barrier passes the shared certificate.
// Coordinates are interleaved (x₀, y₀, x₁, ...), so the Hessian has half-bandwidth 5.
class InteriorPoint
{
public:
  explicit InteriorPoint(ShotSolver const &s)
    : s_(s)
    , ns_(s.samples())
    , h_(2 * ns_)
  {
  }

  // An interior start exists when every pin sits at the same point strictly inside the box.
  bool start(std::vector<Vec2> &k) const
  {
    Vec2 p{};
    bool have = false;
    for (Index i = 0; i < ns_; ++i) {
      if (!s_.pinned(i)) { continue; }
      if (have && !(s_.pin_point(i) == p)) { return false; }
      p = s_.pin_point(i);
      have = true;
    }
    if (s_.box() && !(std::abs(p.x) < 1.0 && std::abs(p.y) < 1.0)) { return false; }
    k.assign(static_cast<std::size_t>(ns_), p);
    return true;
  }

  // Pulls the previous answer slightly towards the constant start. Projection is non-expansive,
  // so for a nearby target this interior point is already close to the new answer.
  bool warm_start(ShotDual const &y, std::vector<Vec2> &k) const
  {
    std::vector<Vec2> base;
    if (static_cast<Index>(y.last.size()) != ns_ || !start(base)) { return false; }
    k.resize(base.size());
    for (Index i = 0; i < ns_; ++i) {
      k[i] = base[i] + kShrink * (y.last[i] - base[i]);
    }
    return interior(k);
  }

  ShotProjection run(ProjectionOptions const &opt, ShotDual *warm, ShotProjection best)
  {
    auto const z = s_.target();
    double const a = s_.step_bound();
    double const terms = static_cast<double>((ns_ - 1) + (ns_ - 2) + (s_.box() ? 2 * ns_ : 0));
    // Each barrier term adds at most 1/t to the duality gap.
    double const t_end = 2.0 * terms / (opt.tol * a * a);
    std::vector<Vec2> k;
    bool const warmed = warm && warm_start(*warm, k);
    if (!warmed && !start(k)) { return best; }
    double dist = 0.0, pull = 0.0;
    std::vector<double> g(static_cast<std::size_t>(2 * ns_));
    assemble(k, 0.0, g);
    for (Index i = 0; i < ns_; ++i) {
      if (s_.pinned(i)) { continue; }
      Vec2 const d = k[i] - z[i];
      dist += Dot(d, d);
      pull -= d.x * g[2 * i] + d.y * g[2 * i + 1];
    }
    // From the constant start t is matched to the gap; from a warm start it is the t whose
    // centring condition t (k − z) + ∇φ(k) = 0 is closest to holding.
    double t = warmed && pull > 0.0 ? pull / dist : 2.0 * terms / std::max(dist, 1e-300);
    t = std::clamp(t, 1.0, t_end);

    ShotDual y;
    Resize(y, ns_, s_.box());
    Index newton = 0, stalled = 0;
    double own = std::numeric_limits<double>::infinity();
    for (;;) {
      Index const budget = std::min(kMaxCentering, opt.max_iter - newton);
      Index const steps = center(k, t, budget);
      newton += steps;
      dual(k, t, y);
      auto const st = s_.certify(y, k);
      double const res = s_.residual(st);
      if (res < best.residual) {
        best = {k, newton, res, st.objective, st.objective - st.gap, false};
        if (warm) { *warm = y; }
      }
      stalled = res < own ? 0 : stalled + 1;
      own = std::min(own, res);
      if (res < opt.tol) {
        best.converged = true;
        break;
      }
      // At large t the slacks reach rounding level and the gap stops shrinking.
      // An exhausted centering budget means the Newton systems have become too ill-conditioned.
      if (newton >= opt.max_iter || stalled > 0 || steps >= budget) { break; }
      t *= kGrowth;
    }
    best.iterations = newton;
    return best;
  }

private:
  static constexpr double kGrowth = 40.0;
  static constexpr Index kMaxCentering = 20;
  static constexpr double kShrink = 0.99;

  // Newton steps on the barrier problem at fixed t until the decrement is negligible.
  Index center(std::vector<Vec2> &k, double t, Index budget)
  {
    Index const n = 2 * ns_;
    std::vector<double> g(static_cast<std::size_t>(n)), dx(static_cast<std::size_t>(n));
    std::vector<Vec2> trial(k.size());
    Index it = 0;
    double prev = std::numeric_limits<double>::infinity();
    for (; it < std::max<Index>(budget, 1); ++it) {
      assemble(k, t, g);
      if (!h_.factor()) { break; }
      for (Index i = 0; i < n; ++i) {
        dx[i] = -g[i];
      }
      h_.solve(dx);
      double lambda2 = 0.0;
      for (Index i = 0; i < n; ++i) {
        lambda2 -= g[i] * dx[i];
      }
      // Below 1e-8 the decrement only stalls once it hits rounding noise.
      if (!(lambda2 > 1e-20) || (lambda2 < 1e-8 && lambda2 > 0.25 * prev)) { break; }
      prev = lambda2;
      // Stop short of the boundary, then Armijo backtracking; near the centre the full step is taken.
      double step = std::min(1.0, 0.99 * max_step(k, dx));
      for (int guard = 0;; ++guard) {
        for (Index s = 0; s < ns_; ++s) {
          trial[s] = k[s] + step * Vec2{dx[2 * s], dx[2 * s + 1]};
        }
        if (interior(trial)) { break; }
        if (guard == 60) { return it; }
        step *= 0.5;
      }
      if (lambda2 > 0.0625) {
        double const f0 = value(k, t);
        while (step > 1e-12 && !(value(trial, t) <= f0 - 0.25 * step * lambda2)) {
          step *= 0.5;
          for (Index s = 0; s < ns_; ++s) {
            trial[s] = k[s] + step * Vec2{dx[2 * s], dx[2 * s + 1]};
          }
        }
      }
      k.swap(trial);
      if (lambda2 < 1e-14) {
        ++it;
        break;
      }
    }
    return it;
  }

  // Largest α with k + α·dx on the boundary of the feasible set.
  double max_step(std::vector<Vec2> const &k, std::vector<double> const &dx) const
  {
    auto d = [&dx](Index s) { return Vec2{dx[2 * s], dx[2 * s + 1]}; };
    auto ball = [](Vec2 u, Vec2 du, double r2) {
      // ‖u + α du‖² = r² with ‖u‖ < r has one positive root.
      double const qa = Dot(du, du), qb = Dot(u, du), qc = Dot(u, u) - r2;
      if (!(qa > 0.0)) { return std::numeric_limits<double>::infinity(); }
      double const disc = std::sqrt(std::max(qb * qb - qa * qc, 0.0));
      return qb > 0.0 ? -qc / (qb + disc) : (disc - qb) / qa;
    };
    double const a2 = s_.step_bound() * s_.step_bound(), b2 = s_.accel_bound() * s_.accel_bound();
    double alpha = std::numeric_limits<double>::infinity();
    for (Index m = 0; m + 1 < ns_; ++m) {
      alpha = std::min(alpha, ball(k[m + 1] - k[m], d(m + 1) - d(m), a2));
    }
    for (Index m = 0; m + 2 < ns_; ++m) {
      alpha = std::min(alpha, ball(k[m] - 2.0 * k[m + 1] + k[m + 2], d(m) - 2.0 * d(m + 1) + d(m + 2), b2));
    }
    if (s_.box()) {
      for (Index i = 0; i < 2 * ns_; ++i) {
        double const x = i % 2 == 0 ? k[i / 2].x : k[i / 2].y;
        if (dx[i] > 0.0) { alpha = std::min(alpha, (1.0 - x) / dx[i]); }
        if (dx[i] < 0.0) { alpha = std::min(alpha, (-1.0 - x) / dx[i]); }
      }
    }
    return alpha;
  }

  double value(std::vector<Vec2> const &k, double t) const
  {
    auto const z = s_.target();
    double const a2 = s_.step_bound() * s_.step_bound(), b2 = s_.accel_bound() * s_.accel_bound();
    double f = 0.0;
    for (Index s = 0; s < ns_; ++s) {
      Vec2 const d = k[s] - z[s];
      f += 0.5 * Dot(d, d);
    }
    // Σ log slack as one log of a product, renormalised by frexp every few factors.
    double prod = 1.0;
    int exponent = 0, count = 0;
    auto mul = [&](double v) {
      prod *= v;
      if (++count % 8 == 0) {
        int e = 0;
        prod = std::frexp(prod, &e);
        exponent += e;
      }
    };
    for (Index m = 0; m + 1 < ns_; ++m) {
      Vec2 const u = k[m + 1] - k[m];
      mul(a2 - Dot(u, u));
    }
    for (Index m = 0; m + 2 < ns_; ++m) {
      Vec2 const u = k[m] - 2.0 * k[m + 1] + k[m + 2];
      mul(b2 - Dot(u, u));
    }
    if (s_.box()) {
      for (Vec2 p : k) {
        mul((1.0 - p.x * p.x) * (1.0 - p.y * p.y));
      }
    }
    return t * f - (std::log(prod) + exponent * std::numbers::ln2);
  }

  bool interior(std::vector<Vec2> const &k) const
  {
    double const a2 = s_.step_bound() * s_.step_bound(), b2 = s_.accel_bound() * s_.accel_bound();
    for (Index m = 0; m + 1 < ns_; ++m) {
      Vec2 const u = k[m + 1] - k[m];
      if (!(Dot(u, u) < a2)) { return false; }
    }
    for (Index m = 0; m + 2 < ns_; ++m) {
      Vec2 const u = k[m] - 2.0 * k[m + 1] + k[m + 2];
      if (!(Dot(u, u) < b2)) { return false; }
    }
    if (s_.box()) {
      for (Vec2 p : k) {
        if (!(std::abs(p.x) < 1.0 && std::abs(p.y) < 1.0)) { return false; }
      }
    }
    return true;
  }

  // Adds the barrier term of one ball constraint on u = Σ c_j k[s₀ + j].
  template <std::size_t N>
  void ball(Index s0, std::array<double, N> const &c, Vec2 u, double r2, std::vector<double> &g)
  {
    double const slack = r2 - Dot(u, u);
    Vec2 const gu = (2.0 / slack) * u;
    double const d = 2.0 / slack, q = 4.0 / (slack * slack);
    double const hxx = d + q * u.x * u.x, hyy = d + q * u.y * u.y, hxy = q * u.x * u.y;
    for (std::size_t i = 0; i < N; ++i) {
      Index const si = s0 + static_cast<Index>(i);
      g[2 * si] += c[i] * gu.x;
      g[2 * si + 1] += c[i] * gu.y;
      for (std::size_t j = 0; j <= i; ++j) {
        Index const sj = s0 + static_cast<Index>(j);
        double const w = c[i] * c[j];
        h_.at(2 * si, 2 * sj) += w * hxx;
        h_.at(2 * si + 1, 2 * sj + 1) += w * hyy;
        h_.at(2 * si + 1, 2 * sj) += w * hxy;
        if (j < i) { h_.at(2 * si, 2 * sj + 1) += w * hxy; }
      }
    }
  }

  void assemble(std::vector<Vec2> const &k, double t, std::vector<double> &g)
  {
    auto const z = s_.target();
    double const a2 = s_.step_bound() * s_.step_bound(), b2 = s_.accel_bound() * s_.accel_bound();
    h_.clear();
    for (Index s = 0; s < ns_; ++s) {
      g[2 * s] = t * (k[s].x - z[s].x);
      g[2 * s + 1] = t * (k[s].y - z[s].y);
      h_.at(2 * s, 2 * s) = t;
      h_.at(2 * s + 1, 2 * s + 1) = t;
    }
    for (Index m = 0; m + 1 < ns_; ++m) {
      ball<2>(m, {-1.0, 1.0}, k[m + 1] - k[m], a2, g);
    }
    for (Index m = 0; m + 2 < ns_; ++m) {
      ball<3>(m, {1.0, -2.0, 1.0}, k[m] - 2.0 * k[m + 1] + k[m + 2], b2, g);
    }
    if (s_.box()) {
      for (Index s = 0; s < ns_; ++s) {
        for (int c = 0; c < 2; ++c) {
          double const x = c == 0 ? k[s].x : k[s].y;
          double const slack = 1.0 - x * x;
          g[2 * s + c] += 2.0 * x / slack;
          h_.at(2 * s + c, 2 * s + c) += 2.0 * (1.0 + x * x) / (slack * slack);
        }
      }
    }
    // Pinned samples do not move.
    for (Index s = 0; s < ns_; ++s) {
      if (!s_.pinned(s)) { continue; }
      for (Index r = 2 * s; r < 2 * s + 2; ++r) {
        g[r] = 0.0;
        for (Index j = std::max<Index>(0, r - 5); j < r; ++j) {
          h_.at(r, j) = 0.0;
        }
        for (Index i = r + 1; i <= std::min(2 * ns_ - 1, r + 5); ++i) {
          h_.at(i, r) = 0.0;
        }
        h_.at(r, r) = 1.0;
      }
    }
  }

  // Multipliers of the barrier problem: y = ∇(−log slack) / t for every constraint.
  void dual(std::vector<Vec2> const &k, double t, ShotDual &y) const
  {
    double const a2 = s_.step_bound() * s_.step_bound(), b2 = s_.accel_bound() * s_.accel_bound();
    for (Index m = 0; m + 1 < ns_; ++m) {
      Vec2 const u = k[m + 1] - k[m];
      y.speed[m] = (2.0 / (t * (a2 - Dot(u, u)))) * u;
    }
    for (Index m = 0; m + 2 < ns_; ++m) {
      Vec2 const u = k[m] - 2.0 * k[m + 1] + k[m + 2];
      y.accel[m] = (2.0 / (t * (b2 - Dot(u, u)))) * u;
    }
    if (s_.box()) {
      for (Index s = 0; s < ns_; ++s) {
        y.box[s] = {2.0 * k[s].x / (t * (1.0 - k[s].x * k[s].x)), 2.0 * k[s].y / (t * (1.0 - k[s].y * k[s].y))};
      }
    }
  }

  ShotSolver const &s_;
  Index ns_;
  BandCholesky<5> h_;
};

} // namespace

ShotProjection ProjectShot(std::span<Vec2 const> z, double step_bound, double accel_bound,
                           std::span<Anchor const> anchors, bool box, ProjectionOptions const &opt, ShotDual *warm)
{
  Index const ns = static_cast<Index>(z.size());
  if (ns < 3) { throw DataError(fmt::format("a shot needs at least 3 samples, got {}", ns)); }
  ShotSolver const solver(z, step_bound, accel_bound, anchors, box);
  if (opt.method == ProjectionMethod::DualAscent) { return DualAscent(solver, opt, warm); }
  // A warm dual that already certifies the answer is taken as is.
  ShotDual y;
  if (warm) { y = *warm; }
  Resize(y, ns, box);
  std::vector<Vec2> k;
  solver.primal(y, k);
  auto const st = solver.status(y, k);
  ShotProjection best{k, 0, solver.residual(st), st.objective, st.objective - st.gap, false};
  if (best.residual < opt.tol) {
    best.converged = true;
    if (warm) { warm->last = best.points; }
    return best;
  }
  best = InteriorPoint(solver).run(opt, &y, std::move(best));
  // Several distinct pins leave no interior start, and below about 1e-6 the barrier runs into
  // rounding: either way the first-order method finishes from the best dual so far.
  if (!best.converged) {
    Index const newton = best.iterations;
    best = DualAscent(solver, opt, &y);
    best.iterations += newton;
  }
  y.last = best.points;
  if (warm) { *warm = std::move(y); }
  return best;
}


Projector::Projector(ConstraintSet q, Index n_shots, Index n_samples, ProjectionOptions opt)
  : q_(std::move(q))
  , n_shots_(n_shots)
  , n_samples_(n_samples)
  , opt_(opt)
  , shot_anchors_(static_cast<std::size_t>(n_shots))
  , duals_(static_cast<std::size_t>(n_shots))
{
  q_.validate(n_shots, n_samples);
  for (auto const &a : q_.anchors) {
    shot_anchors_[static_cast<std::size_t>(a.shot)].push_back(a);
  }
}

std::vector<Vec2> Projector::operator()(std::span<Vec2 const> z)
{
  if (static_cast<Index>(z.size()) != n_shots_ * n_samples_) {
    throw DataError(fmt::format("projector expects {} points, got {}", n_shots_ * n_samples_, z.size()));
  }
  std::vector<Vec2> out(z.size());
  std::vector<ShotProjection> results(static_cast<std::size_t>(n_shots_));
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n_shots_; ++i) {
    auto const shot = z.subspan(static_cast<std::size_t>(i * n_samples_), static_cast<std::size_t>(n_samples_));
    results[static_cast<std::size_t>(i)] = ProjectShot(shot, q_.step_bound, q_.accel_bound, shot_anchors_[static_cast<std::size_t>(i)],
                                                       q_.box, opt_, &duals_[static_cast<std::size_t>(i)]);
  }
  last_iterations_ = 0;
  double worst = 0.0;
  Index failed = -1;
  for (Index i = 0; i < n_shots_; ++i) {
    auto const &r = results[static_cast<std::size_t>(i)];
    std::copy(r.points.begin(), r.points.end(), out.begin() + i * n_samples_);
    last_iterations_ = std::max(last_iterations_, r.iterations);
    if (!r.converged && r.residual >= worst) {
      worst = r.residual;
      failed = i;
    }
  }
  if (failed >= 0) {
    throw ProjectionError(fmt::format("projection of shot {} did not converge in {} iterations (residual {:.3e})", failed,
                                      opt_.max_iter, worst),
                          std::move(out), worst);
  }
  return out;
}

Trajectory Project(Trajectory const &z, ConstraintSet const &q, ProjectionOptions const &opt)
{
  Projector proj(q, z.shots(), z.samples(), opt);
  return Trajectory(z.spec(), proj(z.points()));
}

} // namespace spark::constraints
