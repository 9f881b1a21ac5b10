#include "manelab/lagrangian.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace manelab::lagrangian {

namespace {

constexpr std::array<double, 3> kGaussNode = {0.5 - 0.3872983346207417, 0.5, 0.5 + 0.3872983346207417};
constexpr std::array<double, 3> kGaussWeight = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};

double wrap_coord(double t) {
  double r = std::fmod(t, kPeriod);
  if (r < 0.0) r += kPeriod;
  return r >= kPeriod ? 0.0 : r;
}

double torus_diff(double a, double b) {
  double d = std::fmod(b - a, kPeriod);
  if (d > 0.5 * kPeriod) d -= kPeriod;
  if (d < -0.5 * kPeriod) d += kPeriod;
  return d;
}

// Catmull-Rom weights and their first two derivatives at t in [0, 1).
struct CrWeights {
  std::array<double, 4> w, d1, d2;
};

CrWeights catmull_rom(double t) {
  const double t2 = t * t, t3 = t2 * t;
  return {{0.5 * (-t + 2 * t2 - t3), 0.5 * (2 - 5 * t2 + 3 * t3), 0.5 * (t + 4 * t2 - 3 * t3), 0.5 * (-t2 + t3)},
          {0.5 * (-1 + 4 * t - 3 * t2), 0.5 * (-10 * t + 9 * t2), 0.5 * (1 + 8 * t - 9 * t2), 0.5 * (-2 * t + 3 * t2)},
          {0.5 * (4 - 6 * t), 0.5 * (-10 + 18 * t), 0.5 * (8 - 18 * t), 0.5 * (-2 + 6 * t)}};
}

struct CellPos {
  int base;
  CrWeights cw;
};

CellPos locate(double x, int n) {
  const double s = wrap_coord(x) / kPeriod * n;
  int i = static_cast<int>(std::floor(s));
  double t = s - i;
  if (i >= n) i -= n;
  return {i, catmull_rom(t)};
}

Mat2 omega_jacobian(const std::function<Vec2(const Vec2&)>& omega, const Vec2& x, int dim) {
  Mat2 j = Mat2::Zero();
  const double e = 1e-6;
  for (int c = 0; c < dim; ++c) {
    Vec2 dx = Vec2::Zero();
    dx[c] = e;
    j.col(c) = (omega(x + dx) - omega(x - dx)) / (2 * e);
  }
  return j;
}

}  // namespace

Potential Potential::zero() {
  Potential p;
  p.kind = "zero";
  p.value = [](const Vec2&) { return 0.0; };
  p.gradient = [](const Vec2&) { return Vec2::Zero().eval(); };
  p.hessian = [](const Vec2&) { return Mat2::Zero().eval(); };
  return p;
}

Potential Potential::cosine(int dim, double amplitude) {
  Potential p;
  p.kind = "cos";
  const bool two = dim == 2;
  p.value = [=](const Vec2& x) { return amplitude * (std::cos(x[0]) + (two ? std::cos(x[1]) : 0.0)); };
  p.gradient = [=](const Vec2& x) {
    return Vec2(-amplitude * std::sin(x[0]), two ? -amplitude * std::sin(x[1]) : 0.0);
  };
  p.hessian = [=](const Vec2& x) {
    Mat2 h = Mat2::Zero();
    h(0, 0) = -amplitude * std::cos(x[0]);
    if (two) h(1, 1) = -amplitude * std::cos(x[1]);
    return h;
  };
  return p;
}

Potential Potential::table(int dim, std::vector<double> samples) {
  Potential p;
  p.kind = "table";
  int n = static_cast<int>(samples.size());
  if (dim == 2) {
    n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(samples.size()))));
    if (n * n != static_cast<int>(samples.size())) throw std::invalid_argument("table samples must form an n x n grid");
  }
  if (n < 4) throw std::invalid_argument("table potential needs at least 4 samples per dimension");
  p.samples = samples;
  auto s = std::make_shared<std::vector<double>>(std::move(samples));
  const double h = kPeriod / n;
  auto at = [s, n](int i, int j) { return (*s)[((i % n + n) % n) + n * ((j % n + n) % n)]; };

  // Returns value, gradient and Hessian together; the three closures share it.
  auto eval = [=](const Vec2& x) {
    struct Out {
      double v;
      Vec2 g;
      Mat2 h;
    } out{0.0, Vec2::Zero(), Mat2::Zero()};
    const CellPos cx = locate(x[0], n);
    if (dim == 1) {
      for (int a = 0; a < 4; ++a) {
        const double y = at(cx.base + a - 1, 0);
        out.v += cx.cw.w[a] * y;
        out.g[0] += cx.cw.d1[a] * y / h;
        out.h(0, 0) += cx.cw.d2[a] * y / (h * h);
      }
      return out;
    }
    const CellPos cy = locate(x[1], n);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        const double y = at(cx.base + a - 1, cy.base + b - 1);
        out.v += cx.cw.w[a] * cy.cw.w[b] * y;
        out.g[0] += cx.cw.d1[a] * cy.cw.w[b] * y / h;
        out.g[1] += cx.cw.w[a] * cy.cw.d1[b] * y / h;
        out.h(0, 0) += cx.cw.d2[a] * cy.cw.w[b] * y / (h * h);
        out.h(1, 1) += cx.cw.w[a] * cy.cw.d2[b] * y / (h * h);
        out.h(0, 1) += cx.cw.d1[a] * cy.cw.d1[b] * y / (h * h);
      }
    out.h(1, 0) = out.h(0, 1);
    return out;
  };
  p.value = [eval](const Vec2& x) { return eval(x).v; };
  p.gradient = [eval](const Vec2& x) { return eval(x).g; };
  p.hessian = [eval](const Vec2& x) { return eval(x).h; };
  return p;
}

Potential Potential::shifted(double b) const {
  Potential p = *this;
  auto f = value;
  p.value = [f, b](const Vec2& x) { return f(x) + b; };
  return p;
}

Potential Potential::minus(const Potential& phi) const {
  Potential p;
  p.kind = "custom";
  auto f = value;
  auto g = gradient;
  auto h = hessian;
  auto pf = phi.value;
  auto pg = phi.gradient;
  auto ph = phi.hessian;
  p.value = [f, pf](const Vec2& x) { return f(x) - pf(x); };
  p.gradient = [g, pg](const Vec2& x) { return (g(x) - pg(x)).eval(); };
  p.hessian = [h, ph](const Vec2& x) { return (h(x) - ph(x)).eval(); };
  return p;
}

LagrangianModel LagrangianModel::make(int dim, Potential u, std::function<Vec2(const Vec2&)> omega) {
  if (dim != 1 && dim != 2) throw std::invalid_argument("dim must be 1 or 2");
  LagrangianModel m;
  m.dim = dim;
  m.potential = std::move(u);
  m.omega = std::move(omega);
  const int n = dim == 1 ? 2048 : 256;
  m.u_min = std::numeric_limits<double>::infinity();
  m.u_max = -m.u_min;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < (dim == 1 ? 1 : n); ++j) {
      const Vec2 x(kPeriod * i / n, dim == 1 ? 0.0 : kPeriod * j / n);
      const double v = m.potential.value(x);
      m.u_min = std::min(m.u_min, v);
      m.u_max = std::max(m.u_max, v);
      const Eigen::SelfAdjointEigenSolver<Mat2> es(m.potential.hessian(x), Eigen::EigenvaluesOnly);
      m.hessian_bound = std::max(m.hessian_bound, es.eigenvalues().cwiseAbs().maxCoeff());
      if (m.omega) m.omega_bound = std::max(m.omega_bound, m.omega(x).norm());
    }
  return m;
}

double LagrangianModel::L(const Vec2& x, const Vec2& v) const {
  double l = 0.5 * v.squaredNorm() - potential.value(x);
  if (omega) l += omega(x).dot(v);
  return l;
}

Vec2 LagrangianModel::acceleration(const Vec2& x, const Vec2& v) const {
  Vec2 a = -potential.gradient(x);
  if (omega) {
    const Mat2 j = omega_jacobian(omega, x, dim);
    a += (j.transpose() - j) * v;
  }
  if (dim == 1) a[1] = 0.0;
  return a;
}

LagrangianModel LagrangianModel::perturbed(const Potential& phi) const {
  return make(dim, potential.minus(phi), omega);
}

LagrangianModel LagrangianModel::plus_constant(double b) const {
  LagrangianModel m = *this;
  m.potential = potential.shifted(-b);
  m.u_min -= b;
  m.u_max -= b;
  return m;
}

Vec2 wrap(const Vec2& x, int dim) { return {wrap_coord(x[0]), dim == 2 ? wrap_coord(x[1]) : 0.0}; }

Curve Curve::slice(std::size_t first, std::size_t last) const {
  Curve c;
  c.dim = dim;
  c.t.assign(t.begin() + first, t.begin() + last + 1);
  c.x.assign(x.begin() + first, x.begin() + last + 1);
  if (has_velocity()) c.v.assign(v.begin() + first, v.begin() + last + 1);
  return c;
}

void Curve::validate() const {
  if (x.size() != t.size() || (!v.empty() && v.size() != t.size()))
    throw std::invalid_argument("curve sample arrays differ in length");
  for (std::size_t i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1])) throw std::invalid_argument("curve times must be strictly increasing");
}

double energy(const LagrangianModel& model, const PhaseState& s) {
  return 0.5 * s.v.squaredNorm() + model.U(s.x);
}

double segment_action(const LagrangianModel& model, const Vec2& a, const Vec2& b, double dt, double k) {
  const Vec2 d = b - a;
  double pot = 0.0, mag = 0.0;
  for (int g = 0; g < 3; ++g) {
    const Vec2 p = a + kGaussNode[g] * d;
    pot += kGaussWeight[g] * model.U(p);
    if (model.omega) mag += kGaussWeight[g] * model.omega(p).dot(d);
  }
  return 0.5 * d.squaredNorm() / dt - dt * pot + mag + k * dt;
}

double action(const LagrangianModel& model, const Curve& c, double k) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < c.size(); ++i) {
    const double dt = c.t[i + 1] - c.t[i];
    if (c.has_velocity())
      s += 0.5 * dt * (model.L(c.x[i], c.v[i]) + model.L(c.x[i + 1], c.v[i + 1]) + 2 * k);
    else
      s += segment_action(model, c.x[i], c.x[i + 1], dt, k);
  }
  return s;
}

StepTooLarge::StepTooLarge(double step_, double max_step_, double drift_)
    : std::runtime_error([&] {
        char buf[160];
        std::snprintf(buf, sizeof buf, "step %.3g too large: energy drift %.3g; max admissible step %.3g", step_,
                      drift_, max_step_);
        return std::string(buf);
      }()),
      step(step_),
      max_step(max_step_),
      drift(drift_) {}

namespace {

void kdk(const LagrangianModel& m, Vec2& x, Vec2& v, double h) {
  v += 0.5 * h * m.acceleration(x, v);
  x += h * v;
  v += 0.5 * h * m.acceleration(x, v);
}

void yoshida(const LagrangianModel& m, Vec2& x, Vec2& v, double h) {
  static const double cbrt2 = std::cbrt(2.0);
  static const double w1 = 1.0 / (2.0 - cbrt2);
  static const double w0 = -cbrt2 / (2.0 - cbrt2);
  kdk(m, x, v, w1 * h);
  kdk(m, x, v, w0 * h);
  kdk(m, x, v, w1 * h);
}

void implicit_midpoint(const LagrangianModel& m, Vec2& x, Vec2& v, double h) {
  Vec2 x1 = x + h * v, v1 = v + h * m.acceleration(x, v);
  for (int it = 0; it < 60; ++it) {
    const Vec2 xm = 0.5 * (x + x1), vm = 0.5 * (v + v1);
    const Vec2 nx = x + h * vm, nv = v + h * m.acceleration(xm, vm);
    const double change = std::max((nx - x1).cwiseAbs().maxCoeff(), (nv - v1).cwiseAbs().maxCoeff());
    x1 = nx;
    v1 = nv;
    if (change < 1e-15 * (1.0 + x1.norm() + v1.norm())) break;
  }
  x = x1;
  v = v1;
}

}  // namespace

Curve el_flow(const LagrangianModel& model, const PhaseState& s, double duration, double step,
              const FlowOptions& opt) {
  if (!(step > 0.0)) throw std::invalid_argument("step must be positive");
  const long n = std::max(1L, static_cast<long>(std::ceil(std::abs(duration) / step - 1e-9)));
  const double h = duration / static_cast<double>(n);
  Curve c;
  c.dim = model.dim;
  Vec2 x = wrap(s.x, model.dim), v = s.v;
  if (model.dim == 1) v[1] = 0.0;
  const double e0 = energy(model, {x, v});
  double worst = 0.0, worst_abs = 0.0;
  auto record = [&](double t) {
    // Time is stored increasing; backward flows are reversed at the end.
    c.t.push_back(t);
    c.x.push_back(x);
    c.v.push_back(v);
  };
  record(0.0);
  for (long i = 1; i <= n; ++i) {
    if (model.magnetic())
      implicit_midpoint(model, x, v, h);
    else
      yoshida(model, x, v, h);
    const double t = h * static_cast<double>(i);
    const double drift = std::abs(energy(model, {x, v}) - e0);
    if (drift / (1.0 + std::abs(t)) > worst) {
      worst = drift / (1.0 + std::abs(t));
      worst_abs = drift;
    }
    if (i % opt.record_every == 0 || i == n) record(t);
  }
  if (opt.check_energy && worst > opt.tolerance) {
    const double order = model.magnetic() ? 2.0 : 4.0;
    throw StepTooLarge(step, 0.9 * step * std::pow(opt.tolerance / worst, 1.0 / order), worst_abs);
  }
  if (duration < 0.0) {
    std::reverse(c.t.begin(), c.t.end());
    std::reverse(c.x.begin(), c.x.end());
    std::reverse(c.v.begin(), c.v.end());
  }
  return c;
}

double max_energy_drift(const LagrangianModel& model, const Curve& c) {
  double worst = 0.0;
  const double e0 = energy(model, {c.x.front(), c.v.front()});
  for (std::size_t i = 0; i < c.size(); ++i) worst = std::max(worst, std::abs(energy(model, {c.x[i], c.v[i]}) - e0));
  return worst;
}

double reversibility_error(const LagrangianModel& model, const PhaseState& s, double duration, double step) {
  FlowOptions opt;
  opt.check_energy = false;
  const Curve fwd = el_flow(model, s, duration, step, opt);
  const Curve back = el_flow(model, {fwd.x.back(), -fwd.v.back()}, duration, step, opt);
  const Vec2 x0 = fwd.x.front(), v0 = fwd.v.front();
  const Vec2 x1 = back.x.back(), v1 = -back.v.back();
  double err = std::abs(torus_diff(x0[0], x1[0]));
  if (model.dim == 2) err = std::max(err, std::abs(torus_diff(x0[1], x1[1])));
  return std::max(err, (v1 - v0).cwiseAbs().maxCoeff());
}

namespace {

// Partial derivatives of the segment action with respect to both endpoints.
std::pair<Vec2, Vec2> segment_gradient(const LagrangianModel& m, const Vec2& a, const Vec2& b, double dt) {
  const Vec2 d = b - a;
  Vec2 g0 = -d / dt, g1 = d / dt;
  for (int g = 0; g < 3; ++g) {
    const Vec2 p = a + kGaussNode[g] * d;
    const Vec2 du = m.potential.gradient(p);
    g0 -= dt * kGaussWeight[g] * (1 - kGaussNode[g]) * du;
    g1 -= dt * kGaussWeight[g] * kGaussNode[g] * du;
    if (m.omega) {
      const Vec2 w = m.omega(p);
      const Vec2 jd = omega_jacobian(m.omega, p, m.dim).transpose() * d;
      g0 += kGaussWeight[g] * (-w + (1 - kGaussNode[g]) * jd);
      g1 += kGaussWeight[g] * (w + kGaussNode[g] * jd);
    }
  }
  if (m.dim == 1) {
    g0[1] = 0.0;
    g1[1] = 0.0;
  }
  return {g0, g1};
}

struct Blocks {
  Mat2 a00, a01, a11;
};

Blocks segment_hessian(const LagrangianModel& m, const Vec2& a, const Vec2& b, double dt) {
  const Vec2 d = b - a;
  Blocks bl{Mat2::Identity() / dt, -Mat2::Identity() / dt, Mat2::Identity() / dt};
  for (int g = 0; g < 3; ++g) {
    const Mat2 hu = m.potential.hessian(a + kGaussNode[g] * d);
    const double xi = kGaussNode[g], w = kGaussWeight[g];
    bl.a00 -= dt * w * (1 - xi) * (1 - xi) * hu;
    bl.a01 -= dt * w * xi * (1 - xi) * hu;
    bl.a11 -= dt * w * xi * xi * hu;
  }
  return bl;
}

double path_action(const LagrangianModel& m, const std::vector<Vec2>& q, double h) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < q.size(); ++i) s += segment_action(m, q[i], q[i + 1], h);
  return s;
}

Eigen::VectorXd path_gradient(const LagrangianModel& m, const std::vector<Vec2>& q, double h) {
  const int d = m.dim;
  const int n = static_cast<int>(q.size()) - 2;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n * d);
  for (int i = 0; i + 1 < static_cast<int>(q.size()); ++i) {
    const auto [g0, g1] = segment_gradient(m, q[i], q[i + 1], h);
    for (int c = 0; c < d; ++c) {
      if (i >= 1) g[(i - 1) * d + c] += g0[c];
      if (i + 1 <= n) g[i * d + c] += g1[c];
    }
  }
  return g;
}

Eigen::SparseMatrix<double> path_hessian(const LagrangianModel& m, const std::vector<Vec2>& q, double h) {
  const int d = m.dim;
  const int n = static_cast<int>(q.size()) - 2;
  std::vector<Eigen::Triplet<double>> trip;
  auto put = [&](int bi, int bj, const Mat2& blk) {
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) trip.emplace_back(bi * d + r, bj * d + c, blk(r, c));
  };
  for (int i = 0; i + 1 < static_cast<int>(q.size()); ++i) {
    const Blocks bl = segment_hessian(m, q[i], q[i + 1], h);
    const int u = i - 1, w = i;  // unknown indices of the two endpoints
    if (u >= 0) put(u, u, bl.a00);
    if (w < n) put(w, w, bl.a11);
    if (u >= 0 && w < n) {
      put(u, w, bl.a01);
      put(w, u, bl.a01.transpose());
    }
  }
  Eigen::SparseMatrix<double> hm(n * d, n * d);
  hm.setFromTriplets(trip.begin(), trip.end());
  return hm;
}

Curve make_path(int dim, const std::vector<Vec2>& q, double h) {
  Curve c;
  c.dim = dim;
  for (std::size_t i = 0; i < q.size(); ++i) {
    c.t.push_back(h * static_cast<double>(i));
    c.x.push_back(q[i]);
  }
  return c;
}

struct Attempt {
  std::vector<Vec2> q;
  double action = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

Attempt newton_path(const LagrangianModel& m, std::vector<Vec2> q, double h, const MinimizerOptions& opt) {
  const int d = m.dim;
  const int n = static_cast<int>(q.size()) - 2;
  Attempt at;
  double s = path_action(m, q, h);
  double mu = 0.0;
  for (int it = 0; it < opt.max_iterations; ++it) {
    const Eigen::VectorXd g = path_gradient(m, q, h);
    const double res = n > 0 ? g.cwiseAbs().maxCoeff() / h : 0.0;
    at.residual = res;
    at.iterations = it;
    if (res <= opt.tolerance) {
      at.converged = true;
      break;
    }
    Eigen::SparseMatrix<double> hm = path_hessian(m, q, h);
    Eigen::VectorXd step;
    for (int tries = 0; tries < 60; ++tries) {
      Eigen::SparseMatrix<double> shifted = hm;
      if (mu > 0.0)
        for (int k = 0; k < n * d; ++k) shifted.coeffRef(k, k) += mu;
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(shifted);
      if (ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > 0.0) {
        step = -ldlt.solve(g);
        break;
      }
      mu = std::max(2.0 * mu, 1e-3 / h);
    }
    if (step.size() == 0) break;
    double alpha = 1.0;
    bool accepted = false;
    const double slope = g.dot(step);
    for (int ls = 0; ls < 40; ++ls) {
      std::vector<Vec2> trial = q;
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) trial[i + 1][c] += alpha * step[i * d + c];
      const double st = path_action(m, trial, h);
      if (st <= s + 1e-4 * alpha * slope || (alpha * step.cwiseAbs().maxCoeff() < 1e-14 && st <= s + 1e-14)) {
        q = std::move(trial);
        s = st;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    mu = alpha == 1.0 ? mu / 4.0 : std::max(mu, 1e-3 / h);
    if (mu < 1e-12) mu = 0.0;
  }
  at.q = std::move(q);
  at.action = s;
  return at;
}

}  // namespace

PhaseState Minimizer::initial_tangent() const { return {curve.x.front(), initial_velocity}; }

Minimizer tonelli_minimizer(const LagrangianModel& model, const Vec2& x_in, const Vec2& y, double T, int grid,
                            const MinimizerOptions& opt) {
  if (!(T > 0.0)) throw std::invalid_argument("T must be positive");
  if (grid < 1) throw std::invalid_argument("grid must be positive");
  const int d = model.dim;
  const double h = T / grid;
  Vec2 x = x_in;
  if (d == 1) x[1] = 0.0;
  Vec2 base = x;
  base[0] += torus_diff(x[0], y[0]);
  if (d == 2) base[1] += torus_diff(x[1], y[1]);

  std::vector<Eigen::Vector2i> windings;
  const int w2 = d == 2 ? opt.winding : 0;
  for (int a = -opt.winding; a <= opt.winding; ++a)
    for (int b = -w2; b <= w2; ++b) windings.emplace_back(a, b);
  std::sort(windings.begin(), windings.end(),
            [](const auto& p, const auto& q) { return p.squaredNorm() < q.squaredNorm(); });

  std::optional<Minimizer> best;
  std::optional<Minimizer> fallback;
  for (const auto& w : windings) {
    Vec2 end = base + kPeriod * w.cast<double>();
    if (d == 1) end[1] = 0.0;
    // Any path in this class has action at least |y - x|^2 / 2T - T max U.
    const double floor = 0.5 * (end - x).squaredNorm() / T - T * model.u_max -
                         (model.omega ? model.omega_bound * (end - x).norm() : 0.0);
    if (best && floor > best->action) continue;
    std::vector<Vec2> q(grid + 1);
    for (int i = 0; i <= grid; ++i) q[i] = x + (end - x) * (static_cast<double>(i) / grid);
    const double straight = path_action(model, q, h);
    Attempt at = newton_path(model, q, h, opt);
    Minimizer mz;
    mz.curve = make_path(d, at.q, h);
    mz.action = at.action;
    mz.residual = at.residual;
    mz.straight_action = straight;
    mz.winding = w;
    mz.iterations = at.iterations;
    const auto [g0, g1] = segment_gradient(model, at.q[0], at.q[1], h);
    (void)g1;
    Vec2 p0 = -g0;
    if (model.omega) p0 -= model.omega(at.q[0]);
    mz.initial_velocity = p0;
    if (at.converged) {
      if (!best || mz.action < best->action) best = mz;
    } else if (!fallback || mz.residual < fallback->residual) {
      fallback = mz;
    }
  }
  if (!best) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "minimizer did not converge: best residual %.3g", fallback->residual);
    throw NonConvergence(buf, *fallback);
  }
  return *best;
}

double stationarity_residual(const LagrangianModel& model, const Curve& c) {
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < c.size(); ++i) {
    const double h0 = c.t[i] - c.t[i - 1], h1 = c.t[i + 1] - c.t[i];
    const Vec2 g = segment_gradient(model, c.x[i - 1], c.x[i], h0).second +
                   segment_gradient(model, c.x[i], c.x[i + 1], h1).first;
    worst = std::max(worst, g.cwiseAbs().maxCoeff() / (0.5 * (h0 + h1)));
  }
  return worst;
}

double apriori_speed_bound(const LagrangianModel& model, double C) {
  // Some time has L < C; superlinearity bounds that speed, energy conservation
  // carries it to every time.
  const double w = model.omega_bound;
  const double v0 = w + std::sqrt(std::max(0.0, w * w + 2.0 * (C + model.u_max)));
  return std::sqrt(v0 * v0 + 2.0 * (model.u_max - model.u_min));
}

AprioriCheck apriori_bound_check(const LagrangianModel& model, const Curve& c, double C) {
  AprioriCheck r;
  r.premise = action(model, c) < C * c.duration();
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.has_velocity())
      r.sup_speed = std::max(r.sup_speed, c.v[i].norm());
    else if (i + 1 < c.size())
      r.sup_speed = std::max(r.sup_speed, (c.x[i + 1] - c.x[i]).norm() / (c.t[i + 1] - c.t[i]));
  }
  r.bound = apriori_speed_bound(model, C);
  r.holds = r.sup_speed <= r.bound * (1.0 + 1e-12);
  return r;
}

double ell(const LagrangianModel& model, double r, double c) {
  return std::abs(c) + 0.5 * r * r + model.omega_bound * r - model.u_min;
}

double fiber_hessian_bound(const LagrangianModel&, double) { return 1.0; }

LagrangianModel model_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("model: expected an object");
  const int dim = j.value("dim", 1);
  if (dim != 1 && dim != 2) throw std::invalid_argument("model.dim: must be 1 or 2");
  const std::string kind = j.value("potential", std::string("zero"));
  Potential u;
  if (kind == "cos") {
    u = Potential::cosine(dim, j.value("amplitude", 1.0));
  } else if (kind == "table") {
    if (!j.contains("samples") || !j["samples"].is_array())
      throw std::invalid_argument("model.samples: required array for table potentials");
    u = Potential::table(dim, j["samples"].get<std::vector<double>>());
  } else if (kind == "zero" || kind == "free") {
    u = Potential::zero();
  } else {
    throw std::invalid_argument("model.potential: unknown kind '" + kind + "'");
  }
  LagrangianModel m = LagrangianModel::make(dim, std::move(u));
  if (j.contains("shift")) m = m.plus_constant(j["shift"].get<double>());
  return m;
}

std::string curve_csv(const Curve& c) {
  std::ostringstream os;
  os.precision(17);
  os << (c.dim == 1 ? "t,x,v\n" : "t,x1,x2,v1,v2\n");
  for (std::size_t i = 0; i < c.size(); ++i) {
    Vec2 v;
    if (c.has_velocity())
      v = c.v[i];
    else if (c.size() < 2)
      v = Vec2::Zero();
    else {
      const std::size_t a = i + 1 < c.size() ? i : i - 1;
      v = (c.x[a + 1] - c.x[a]) / (c.t[a + 1] - c.t[a]);
    }
    os << c.t[i] << ',' << c.x[i][0];
    if (c.dim == 2) os << ',' << c.x[i][1];
    os << ',' << v[0];
    if (c.dim == 2) os << ',' << v[1];
    os << '\n';
  }
  return os.str();
}

}  // namespace manelab::lagrangian
