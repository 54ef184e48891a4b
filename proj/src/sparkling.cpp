#include "spark/sparkling.hpp"

#include "spark/fft.hpp"

#include <fmt/format.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>

namespace spark::sparkling {

namespace {

struct KernelTerms
{
  double v, dx, dy, dxy;
};

// ‖d‖ and its derivatives up to the mixed second derivative.
KernelTerms Kernel(double dx, double dy)
{
  double const r = std::hypot(dx, dy);
  if (r == 0.0) { return {0.0, 0.0, 0.0, 0.0}; }
  return {r, dx / r, dy / r, -dx * dy / (r * r * r)};
}

// Cubic Hermite basis on [0, 1] and derivatives.
struct Hermite
{
  double h0, h1, k0, k1;
  double dh0, dh1, dk0, dk1;

  explicit Hermite(double t)
  {
    double const t2 = t * t, t3 = t2 * t;
    h0 = 2 * t3 - 3 * t2 + 1;
    h1 = -2 * t3 + 3 * t2;
    k0 = t3 - 2 * t2 + t;
    k1 = t3 - t2;
    dh0 = 6 * t2 - 6 * t;
    dh1 = -6 * t2 + 6 * t;
    dk0 = 3 * t2 - 4 * t + 1;
    dk1 = 3 * t2 - 2 * t;
  }
};

} // namespace

AttractionField::AttractionField(DensityGrid const &rho)
  : n_(rho.n())
  , h_(2.0 / static_cast<double>(rho.n()))
  , rho_(rho.values())
  , far_(static_cast<std::size_t>(rho.n() * rho.n()))
{
  Index const n = n_;
  Index const m = 3 * n; // ≥ n + 2n − 1, linear convolution without wrap
  double const h = h_;

  // Kernel offsets between corner a and cell j are (a − j − ½)h with a − j ∈ [−(n−1), n];
  // index d = a − j + n − 1. Two real kernels ride in each complex array.
  Cx2 k_vx(m, m), k_yxy(m, m), r(m, m);
  for (Index dy = 0; dy < 2 * n; ++dy) {
    for (Index dx = 0; dx < 2 * n; ++dx) {
      double const ox = (static_cast<double>(dx - n) + 0.5) * h;
      double const oy = (static_cast<double>(dy - n) + 0.5) * h;
      auto const kt = Kernel(ox, oy);
      k_vx(dy, dx) = Cx(kt.v, kt.dx);
      k_yxy(dy, dx) = Cx(kt.dy, kt.dxy);
    }
  }
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      r(i, j) = rho_(i, j);
    }
  }
  fft::Plan2 const plan(m, m);
  plan.forward(k_vx);
  plan.forward(k_yxy);
  plan.forward(r);
  double const scale = 1.0 / static_cast<double>(m * m);
  for (Index i = 0; i < m * m; ++i) {
    k_vx[i] *= r[i] * scale;
    k_yxy[i] *= r[i] * scale;
  }
  plan.backward(k_vx);
  plan.backward(k_yxy);

  auto total = [&](Index ay, Index ax) -> std::array<double, 4> {
    Cx const a = k_vx(ay + n - 1, ax + n - 1);
    Cx const b = k_yxy(ay + n - 1, ax + n - 1);
    return {a.real(), a.imag(), b.real(), b.imag()};
  };

  for (Index cy = 0; cy < n; ++cy) {
    for (Index cx = 0; cx < n; ++cx) {
      auto &cell = far_[static_cast<std::size_t>(cy * n + cx)];
      for (Index corner = 0; corner < 4; ++corner) {
        Index const ax = cx + (corner & 1);
        Index const ay = cy + (corner >> 1);
        auto t = total(ay, ax);
        double const px = -1.0 + static_cast<double>(ax) * h;
        double const py = -1.0 + static_cast<double>(ay) * h;
        for (Index gy = std::max<Index>(0, cy - kNear); gy <= std::min(n - 1, cy + kNear); ++gy) {
          for (Index gx = std::max<Index>(0, cx - kNear); gx <= std::min(n - 1, cx + kNear); ++gx) {
            double const w = rho_(gy, gx);
            auto const kt = Kernel(px - DensityGrid::CellCenter(gx, n), py - DensityGrid::CellCenter(gy, n));
            t[0] -= w * kt.v;
            t[1] -= w * kt.dx;
            t[2] -= w * kt.dy;
            t[3] -= w * kt.dxy;
          }
        }
        for (Index q = 0; q < 4; ++q) {
          cell[static_cast<std::size_t>(corner * 4 + q)] = t[static_cast<std::size_t>(q)];
        }
      }
    }
  }
}

AttractionField::Sample AttractionField::operator()(Vec2 y) const
{
  Index const n = n_;
  double const h = h_;
  Index const cx = std::clamp(static_cast<Index>(std::floor((y.x + 1.0) / h)), Index{0}, n - 1);
  Index const cy = std::clamp(static_cast<Index>(std::floor((y.y + 1.0) / h)), Index{0}, n - 1);
  double const u = (y.x - (-1.0 + static_cast<double>(cx) * h)) / h;
  double const v = (y.y - (-1.0 + static_cast<double>(cy) * h)) / h;
  Hermite const hu(u), hv(v);

  auto const &cell = far_[static_cast<std::size_t>(cy * n + cx)];
  Sample s{0.0, {}};
  for (Index corner = 0; corner < 4; ++corner) {
    bool const ix = corner & 1, iy = corner >> 1;
    double const Hu = ix ? hu.h1 : hu.h0, Ku = ix ? hu.k1 : hu.k0;
    double const dHu = ix ? hu.dh1 : hu.dh0, dKu = ix ? hu.dk1 : hu.dk0;
    double const Hv = iy ? hv.h1 : hv.h0, Kv = iy ? hv.k1 : hv.k0;
    double const dHv = iy ? hv.dh1 : hv.dh0, dKv = iy ? hv.dk1 : hv.dk0;
    double const f = cell[static_cast<std::size_t>(corner * 4)];
    double const fx = cell[static_cast<std::size_t>(corner * 4 + 1)] * h;
    double const fy = cell[static_cast<std::size_t>(corner * 4 + 2)] * h;
    double const fxy = cell[static_cast<std::size_t>(corner * 4 + 3)] * h * h;
    s.value += Hu * Hv * f + Ku * Hv * fx + Hu * Kv * fy + Ku * Kv * fxy;
    s.grad.x += (dHu * Hv * f + dKu * Hv * fx + dHu * Kv * fy + dKu * Kv * fxy) / h;
    s.grad.y += (Hu * dHv * f + Ku * dHv * fx + Hu * dKv * fy + Ku * dKv * fxy) / h;
  }

  for (Index gy = std::max<Index>(0, cy - kNear); gy <= std::min(n - 1, cy + kNear); ++gy) {
    for (Index gx = std::max<Index>(0, cx - kNear); gx <= std::min(n - 1, cx + kNear); ++gx) {
      double const w = rho_(gy, gx);
      auto const kt = Kernel(y.x - DensityGrid::CellCenter(gx, n), y.y - DensityGrid::CellCenter(gy, n));
      s.value += w * kt.v;
      s.grad.x += w * kt.dx;
      s.grad.y += w * kt.dy;
    }
  }
  return s;
}

namespace {

struct RowSum
{
  double gx, gy, dist;
  Index same;
};

// Pairs (i, j > i) of one row. The row sums are returned; the mirrored terms are subtracted
// from the column accumulators. Terms are formed blockwise (vectorizable) and added into four
// fixed lanes, so the summation order is the same on every build.
__attribute__((target_clones("avx512f", "avx2", "default"))) RowSum
RepulsionRow(double xi, double yi, double const *xs, double const *ys, Index m, double *col_x, double *col_y)
{
  constexpr Index B = 64;
  alignas(32) double tx[B], ty[B], td[B];
  double gx[4] = {}, gy[4] = {}, dist[4] = {};
  Index same = 0;
  for (Index j0 = 0; j0 < m; j0 += B) {
    Index const len = std::min(B, m - j0);
    for (Index j = 0; j < len; ++j) {
      double const dx = xi - xs[j0 + j];
      double const dy = yi - ys[j0 + j];
      double const d = std::sqrt(dx * dx + dy * dy);
      // d == 0 forces dx == dy == 0, so the tiny offset yields the zero subgradient there and
      // is below half an ulp of any distance that occurs in Ω.
      double const inv = 1.0 / (d + 1e-300);
      tx[j] = dx * inv;
      ty[j] = dy * inv;
      td[j] = d;
      col_x[j0 + j] -= tx[j];
      col_y[j0 + j] -= ty[j];
    }
    for (Index j = len; j < B; ++j) {
      tx[j] = ty[j] = td[j] = 0.0;
    }
    for (Index j = 0; j < B; j += 4) {
      for (Index l = 0; l < 4; ++l) {
        gx[l] += tx[j + l];
        gy[l] += ty[j + l];
        dist[l] += td[j + l];
      }
    }
    for (Index j = 0; j < len; ++j) {
      same += td[j] == 0.0;
    }
  }
  return {(gx[0] + gx[1]) + (gx[2] + gx[3]), (gy[0] + gy[1]) + (gy[2] + gy[3]), (dist[0] + dist[1]) + (dist[2] + dist[3]),
          same};
}

} // namespace

Repulsion RepulsionExact(std::span<Vec2 const> points)
{
  Index const p = static_cast<Index>(points.size());
  std::vector<double> xs(points.size()), ys(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    xs[i] = points[i].x;
    ys[i] = points[i].y;
  }
  int const threads = std::max(1, omp_get_max_threads());
  // Per-thread accumulators over a cyclic row schedule, reduced in thread order afterwards:
  // bitwise reproducible for a fixed thread count.
  std::vector<std::vector<double>> acc_x(static_cast<std::size_t>(threads)), acc_y(acc_x.size());
  std::vector<double> dist(acc_x.size(), 0.0);
  std::vector<Index> same(acc_x.size(), 0);
#pragma omp parallel num_threads(threads)
  {
    int const t = omp_get_thread_num();
    auto &ax = acc_x[static_cast<std::size_t>(t)];
    auto &ay = acc_y[static_cast<std::size_t>(t)];
    ax.assign(points.size(), 0.0);
    ay.assign(points.size(), 0.0);
    for (Index i = t; i < p; i += threads) {
      auto const r = RepulsionRow(xs[static_cast<std::size_t>(i)], ys[static_cast<std::size_t>(i)], xs.data() + i + 1,
                                  ys.data() + i + 1, p - i - 1, ax.data() + i + 1, ay.data() + i + 1);
      ax[static_cast<std::size_t>(i)] += r.gx;
      ay[static_cast<std::size_t>(i)] += r.gy;
      dist[static_cast<std::size_t>(t)] += r.dist;
      same[static_cast<std::size_t>(t)] += r.same;
    }
  }
  Repulsion out;
  out.grad.assign(points.size(), Vec2{});
  double const inv_p2 = 1.0 / (static_cast<double>(p) * static_cast<double>(p));
  for (std::size_t t = 0; t < acc_x.size(); ++t) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      out.grad[i].x += acc_x[t][i];
      out.grad[i].y += acc_y[t][i];
    }
    out.value += dist[t];
    out.coincident_pairs += same[t];
  }
  for (auto &g : out.grad) {
    g *= inv_p2;
  }
  out.value *= inv_p2;
  return out;
}

namespace {

struct QuadTree
{
  struct Node
  {
    double cx, cy, half; // square cell
    double mx = 0.0, my = 0.0;
    Index count = 0;
    Index child[4] = {-1, -1, -1, -1};
    Index point = -1; // leaf payload when count == 1
    bool leaf() const { return child[0] < 0 && child[1] < 0 && child[2] < 0 && child[3] < 0; }
  };

  std::vector<Node> nodes;
  std::span<Vec2 const> pts;

  explicit QuadTree(std::span<Vec2 const> points)
    : pts(points)
  {
    double lo = -1.0, hi = 1.0;
    for (Vec2 p : points) {
      lo = std::min({lo, p.x, p.y});
      hi = std::max({hi, p.x, p.y});
    }
    nodes.push_back({0.5 * (lo + hi), 0.5 * (lo + hi), 0.5 * (hi - lo) * (1.0 + 1e-12)});
    for (Index i = 0; i < static_cast<Index>(points.size()); ++i) {
      insert(0, i, 0);
    }
    for (auto &nd : nodes) {
      nd.mx /= static_cast<double>(nd.count);
      nd.my /= static_cast<double>(nd.count);
    }
  }

  int quadrant(Node const &nd, Vec2 p) const { return (p.x >= nd.cx ? 1 : 0) + (p.y >= nd.cy ? 2 : 0); }

  Index make_child(Index parent, int q)
  {
    Node const &nd = nodes[static_cast<std::size_t>(parent)];
    double const hh = 0.5 * nd.half;
    Node c{nd.cx + ((q & 1) ? hh : -hh), nd.cy + ((q & 2) ? hh : -hh), hh};
    nodes.push_back(c);
    Index const id = static_cast<Index>(nodes.size()) - 1;
    nodes[static_cast<std::size_t>(parent)].child[q] = id;
    return id;
  }

  void insert(Index node, Index i, int depth)
  {
    Vec2 const p = pts[static_cast<std::size_t>(i)];
    for (;;) {
      Node &nd = nodes[static_cast<std::size_t>(node)];
      nd.mx += p.x;
      nd.my += p.y;
      nd.count += 1;
      if (nd.count == 1) {
        nd.point = i;
        return;
      }
      // Coincident points stay together in one leaf past a fixed depth.
      if (depth > 48) { return; }
      if (nd.point >= 0) {
        Index const old = nd.point;
        nd.point = -1;
        int const qo = quadrant(nd, pts[static_cast<std::size_t>(old)]);
        Index const c = make_child(node, qo);
        Node &cn = nodes[static_cast<std::size_t>(c)];
        Vec2 const op = pts[static_cast<std::size_t>(old)];
        cn.mx += op.x;
        cn.my += op.y;
        cn.count = 1;
        cn.point = old;
      }
      Node const &cur = nodes[static_cast<std::size_t>(node)];
      int const q = quadrant(cur, p);
      Index c = cur.child[q];
      if (c < 0) { c = make_child(node, q); }
      node = c;
      ++depth;
    }
  }
};

} // namespace

Repulsion RepulsionBarnesHut(std::span<Vec2 const> points, double theta)
{
  QuadTree const tree(points);
  Index const p = static_cast<Index>(points.size());
  Repulsion out;
  out.grad.resize(points.size());
  std::vector<double> row_sum(points.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (Index i = 0; i < p; ++i) {
    Vec2 const pi = points[static_cast<std::size_t>(i)];
    double gx = 0.0, gy = 0.0, dist = 0.0;
    std::vector<Index> stack{0};
    while (!stack.empty()) {
      Index const id = stack.back();
      stack.pop_back();
      auto const &nd = tree.nodes[static_cast<std::size_t>(id)];
      double const dx = pi.x - nd.mx, dy = pi.y - nd.my;
      double const d = std::sqrt(dx * dx + dy * dy);
      bool const contains = std::abs(pi.x - nd.cx) <= nd.half && std::abs(pi.y - nd.cy) <= nd.half;
      if (nd.leaf() || (!contains && 2.0 * nd.half < theta * d)) {
        if (nd.leaf() && nd.count > 1) {
          // Unsplit coincident cluster: every member sits at the mean.
          if (d > 0.0) {
            double const c = static_cast<double>(nd.count);
            gx += c * dx / d;
            gy += c * dy / d;
            dist += c * d;
          }
        } else if (d > 0.0) {
          double const c = static_cast<double>(nd.count);
          gx += c * dx / d;
          gy += c * dy / d;
          dist += c * d;
        }
        continue;
      }
      for (int q = 3; q >= 0; --q) {
        if (nd.child[q] >= 0) { stack.push_back(nd.child[q]); }
      }
    }
    out.grad[static_cast<std::size_t>(i)] = {gx, gy};
    row_sum[static_cast<std::size_t>(i)] = dist;
  }
  double const inv_p2 = 1.0 / (static_cast<double>(p) * static_cast<double>(p));
  for (std::size_t i = 0; i < points.size(); ++i) {
    out.value += row_sum[i];
    out.grad[i] *= inv_p2;
  }
  out.value *= 0.5 * inv_p2;
  return out;
}

Objective ObjectiveAndGradient(std::span<Vec2 const> points, AttractionField const &field, RepulsionOptions const &rep)
{
  Index const p = static_cast<Index>(points.size());
  Objective obj;
  obj.grad.resize(points.size());
  double const inv_p = 1.0 / static_cast<double>(p);
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto const s = field(points[i]);
    obj.attraction += s.value;
    obj.grad[i] = inv_p * s.grad;
  }
  obj.attraction *= inv_p;

  Repulsion const r = p <= rep.exact_max ? RepulsionExact(points) : RepulsionBarnesHut(points, rep.theta);
  obj.repulsion = r.value;
  obj.coincident_pairs = r.coincident_pairs;
  for (std::size_t i = 0; i < points.size(); ++i) {
    obj.grad[i] -= r.grad[i];
  }
  obj.value = obj.attraction - obj.repulsion;
  return obj;
}

void SparklingConfig::validate(Index n_samples) const
{
  if (n_levels < 1) { throw ConfigError(fmt::format("n_levels must be >= 1, got {}", n_levels)); }
  if (iters_per_level < 1) { throw ConfigError(fmt::format("iters_per_level must be >= 1, got {}", iters_per_level)); }
  Index const decim = Index{1} << (n_levels - 1);
  if (n_samples % decim != 0) {
    throw ConfigError(fmt::format("n_samples ({}) must be divisible by 2^(n_levels-1) = {}", n_samples, decim));
  }
  if (n_samples / decim < 3) { throw ConfigError(fmt::format("coarsest level has fewer than 3 samples per shot")); }
  if (!(step_scale > 0.0)) { throw ConfigError(fmt::format("step_scale must be > 0, got {}", step_scale)); }
  if (max_halvings < 0) { throw ConfigError("max_halvings must be >= 0"); }
  if (!(step_growth >= 1.0)) { throw ConfigError(fmt::format("step_growth must be >= 1, got {}", step_growth)); }
  for (auto const *p : {&projection, &final_projection}) {
    if (p->max_iter < 1 || !(p->tol > 0.0)) { throw ConfigError("projection needs max_iter >= 1 and tol > 0"); }
  }
}

Trajectory RadialInit(TrajectorySpec const &spec, bool golden_angle)
{
  spec.validate();
  Index const ns = spec.n_samples;
  double const half = static_cast<double>(ns / 2);
  // Golden angle for half-turn spokes: π (√5 − 1) / 2.
  double const golden = std::numbers::pi * (std::sqrt(5.0) - 1.0) / 2.0;
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(spec.n_shots * ns));
  for (Index i = 0; i < spec.n_shots; ++i) {
    double const angle = golden_angle ? std::fmod(static_cast<double>(i) * golden, std::numbers::pi)
                                      : std::numbers::pi * static_cast<double>(i) / static_cast<double>(spec.n_shots);
    Vec2 const dir{std::cos(angle), std::sin(angle)};
    for (Index s = 0; s < ns; ++s) {
      pts.push_back((static_cast<double>(s) - half) / half * dir);
    }
  }
  return Trajectory(spec, std::move(pts));
}

namespace {

std::vector<Vec2> Decimate(std::span<Vec2 const> pts, Index shots, Index ns, Index factor)
{
  Index const nc = ns / factor;
  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(shots * nc));
  for (Index i = 0; i < shots; ++i) {
    for (Index s = 0; s < nc; ++s) {
      out.push_back(pts[static_cast<std::size_t>(i * ns + s * factor)]);
    }
  }
  return out;
}

// Doubles the raster rate: even samples copy the coarse ones, odd samples are midpoints, the
// final sample continues the last coarse step by half.
std::vector<Vec2> Upsample(std::span<Vec2 const> pts, Index shots, Index nc)
{
  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(shots * nc * 2));
  for (Index i = 0; i < shots; ++i) {
    auto const k = pts.subspan(static_cast<std::size_t>(i * nc), static_cast<std::size_t>(nc));
    for (Index s = 0; s < nc; ++s) {
      out.push_back(k[s]);
      Vec2 next = s + 1 < nc ? 0.5 * (k[s] + k[s + 1]) : k[s] + 0.5 * (k[s] - k[s - 1]);
      next.x = std::clamp(next.x, -1.0, 1.0);
      next.y = std::clamp(next.y, -1.0, 1.0);
      out.push_back(next);
    }
  }
  return out;
}

double MaxNorm(std::vector<Vec2> const &g)
{
  double m = 0.0;
  for (Vec2 v : g) {
    m = std::max({m, std::abs(v.x), std::abs(v.y)});
  }
  return m;
}

constraints::ConstraintSet LevelConstraints(constraints::ConstraintSet const &q, Index shots, Index ns_full, Index factor)
{
  constraints::ConstraintSet lq;
  lq.step_bound = q.step_bound * static_cast<double>(factor);
  lq.accel_bound = q.accel_bound * static_cast<double>(factor * factor);
  lq.box = q.box;
  Index const nc = ns_full / factor;
  for (auto const &a : q.anchors) {
    // Anchors follow their raster time; off-grid times snap to the nearest coarse sample.
    Index const s = std::min(nc - 1, (a.sample + factor / 2) / factor);
    lq.anchors.push_back({a.shot, s, a.point});
  }
  (void)shots;
  return lq;
}

} // namespace

GenerateResult Generate(DensityGrid const &rho, TrajectorySpec const &spec, constraints::ConstraintSet const &q,
                        SparklingConfig const &cfg, std::optional<Trajectory> const &init)
{
  spec.validate();
  cfg.validate(spec.n_samples);
  q.validate(spec.n_shots, spec.n_samples);

  Trajectory k0;
  if (cfg.init == Init::File) {
    if (!init) { throw ConfigError("file initialization requested but no initial trajectory was given"); }
    if (init->shots() != spec.n_shots || init->samples() != spec.n_samples) {
      throw ConfigError(fmt::format("initial trajectory is {}x{}, spec wants {}x{}", init->shots(), init->samples(),
                                    spec.n_shots, spec.n_samples));
    }
    k0 = *init;
  } else {
    k0 = RadialInit(spec, cfg.init == Init::GoldenAngle);
  }

  AttractionField const field(rho);
  GenerateResult res;
  res.initial_objective = ObjectiveAndGradient(k0.points(), field, cfg.repulsion).value;

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);

  Index const shots = spec.n_shots;
  Index factor = Index{1} << (cfg.n_levels - 1);
  std::vector<Vec2> k = Decimate(k0.points(), shots, spec.n_samples, factor);

  std::optional<constraints::Projector> last;
  for (Index level = 0; level < cfg.n_levels; ++level) {
    Index const ns = spec.n_samples / factor;
    auto const lq = LevelConstraints(q, shots, spec.n_samples, factor);
    auto &project = last.emplace(lq, shots, ns, cfg.projection);
    k = project(k);

    auto obj = ObjectiveAndGradient(k, field, cfg.repulsion);
    double eta = cfg.step_scale * lq.step_bound / std::max(MaxNorm(obj.grad), 1e-300);
    for (Index it = 0; it < cfg.iters_per_level; ++it) {
      if (!std::isfinite(obj.value)) {
        throw IterateError(fmt::format("objective became non-finite at level {} iteration {}", level, it), k);
      }
      Index const pairs = static_cast<Index>(k.size()) * (static_cast<Index>(k.size()) - 1) / 2;
      if (obj.coincident_pairs * 100 > pairs) {
        for (auto &pt : k) {
          pt += 1e-6 * lq.step_bound * Vec2{jitter(rng), jitter(rng)};
        }
        k = project(k);
        obj = ObjectiveAndGradient(k, field, cfg.repulsion);
        ++res.jitter_restarts;
      }

      bool accepted = false;
      for (Index halving = 0; halving <= cfg.max_halvings; ++halving) {
        std::vector<Vec2> cand(k.size());
        for (std::size_t i = 0; i < k.size(); ++i) {
          cand[i] = k[i] - eta * obj.grad[i];
        }
        cand = project(cand);
        auto cobj = ObjectiveAndGradient(cand, field, cfg.repulsion);
        if (std::isfinite(cobj.value) && cobj.value < obj.value) {
          k = std::move(cand);
          obj = std::move(cobj);
          accepted = true;
          eta *= cfg.step_growth;
          break;
        }
        eta *= 0.5;
      }
      ++res.iterations;
      if (!accepted) { break; }
      res.trace.push_back(obj.value);
    }

    if (factor > 1) {
      k = Upsample(k, shots, ns);
      factor /= 2;
    }
  }

  // The last level is full resolution; tighten its projector and keep the warm duals.
  last->set_options(cfg.final_projection);
  k = (*last)(k);
  res.final_objective = ObjectiveAndGradient(k, field, cfg.repulsion).value;
  res.trajectory = Trajectory(spec, std::move(k));
  return res;
}

std::vector<Vec2> SampleDwellPoints(Trajectory const &t, Index os)
{
  if (os < 1) { throw ConfigError(fmt::format("oversampling must be >= 1, got {}", os)); }
  if (os == 1) { return {t.points().begin(), t.points().end()}; }
  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(t.shots() * t.samples() * os));
  Index const ns = t.samples();
  for (Index i = 0; i < t.shots(); ++i) {
    auto const k = t.shot(i);
    for (Index s = 0; s < ns; ++s) {
      Vec2 const step = s + 1 < ns ? k[s + 1] - k[s] : k[s] - k[s - 1];
      for (Index j = 0; j < os; ++j) {
        Vec2 p = k[s] + (static_cast<double>(j) / static_cast<double>(os)) * step;
        p.x = std::clamp(p.x, -1.0, 1.0);
        p.y = std::clamp(p.y, -1.0, 1.0);
        out.push_back(p);
      }
    }
  }
  return out;
}

double NearestNeighbourCV(std::span<Vec2 const> points)
{
  if (points.size() < 2) { return 0.0; }
  std::vector<double> nn(points.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      double const d = Norm(points[i] - points[j]);
      nn[i] = std::min(nn[i], d);
      nn[j] = std::min(nn[j], d);
    }
  }
  double mean = 0.0;
  for (double d : nn) {
    mean += d;
  }
  mean /= static_cast<double>(nn.size());
  double var = 0.0;
  for (double d : nn) {
    var += (d - mean) * (d - mean);
  }
  var /= static_cast<double>(nn.size());
  return mean > 0.0 ? std::sqrt(var) / mean : 0.0;
}

} // namespace spark::sparkling
