#include "manelab/shadowing.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace manelab::shadowing {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kInf = std::numeric_limits<double>::infinity();

Vec2 nearest_rep(const Vec2& w) { return {w.x() - std::round(w.x()), w.y() - std::round(w.y())}; }

double eigen_norm(const CatMap& map, const Vec2& w) {
  const Vec2 e = map.to_eigen(w);
  return std::max(std::abs(e.x()), std::abs(e.y()));
}

// Shift k in {-1, 0, 1} such that (A^k b.x, b.tau - k roof) is closest to a.
int fiber_shift(const HyperbolicModel& m, const PhasePoint& a, const PhasePoint& b, double* dist) {
  int best_k = 0;
  double best = kInf;
  for (int k = -1; k <= 1; ++k) {
    const Vec2 bx = m.linear().iterate(b.x, k);
    const double d = std::max(m.linear().distance(a.x, bx), std::abs(a.tau - (b.tau - k * m.roof())));
    if (d < best) {
      best = d;
      best_k = k;
    }
  }
  if (dist) *dist = best;
  return best_k;
}

// Least squares slope of y against x.
double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace

HyperbolicModel HyperbolicModel::cat_map() { return {ModelKind::cat_map, 0.0, 1.0}; }

HyperbolicModel HyperbolicModel::perturbed_cat_map(double eps) {
  if (!(eps >= 0.0 && eps < 0.2)) throw std::invalid_argument("perturbation must lie in [0, 0.2)");
  return {ModelKind::perturbed_cat_map, eps, 1.0};
}

HyperbolicModel HyperbolicModel::suspension(double roof) {
  if (!(roof > 0.0)) throw std::invalid_argument("roof must be positive");
  return {ModelKind::suspension, 0.0, roof};
}

Vec2 HyperbolicModel::step_lifted(const Vec2& x) const {
  Vec2 y = map_.matrix() * x;
  if (eps_ != 0.0) y += eps_ / kTwoPi * Vec2(std::sin(kTwoPi * x.x()), std::sin(kTwoPi * x.y()));
  return y;
}

Vec2 HyperbolicModel::step(const Vec2& x) const { return wrap(step_lifted(x)); }

Mat2 HyperbolicModel::jacobian(const Vec2& x) const {
  Mat2 j = map_.matrix();
  j(0, 0) += eps_ * std::cos(kTwoPi * x.x());
  j(1, 1) += eps_ * std::cos(kTwoPi * x.y());
  return j;
}

Vec2 HyperbolicModel::step_inverse(const Vec2& y) const {
  if (eps_ == 0.0) return map_.apply_inverse(y);
  Vec2 z = map_.inverse() * y;
  for (int it = 0; it < 50; ++it) {
    const Vec2 r = nearest_rep(step_lifted(z) - y);
    z -= jacobian(z).inverse() * r;
    if (r.lpNorm<Eigen::Infinity>() < 1e-15) break;
  }
  return wrap(z);
}

PhasePoint HyperbolicModel::flow(const PhasePoint& p, double t) const {
  if (is_map()) {
    const long n = std::lround(t);
    if (std::abs(t - static_cast<double>(n)) > 1e-12) throw std::invalid_argument("maps flow for integer times only");
    Vec2 x = p.x;
    for (long i = 0; i < n; ++i) x = step(x);
    for (long i = 0; i < -n; ++i) x = step_inverse(x);
    return {x, p.tau};
  }
  const double s = p.tau + t;
  const double n = std::floor(s / roof_);
  double tau = s - n * roof_;
  if (tau >= roof_) tau = 0.0;
  return {map_.iterate(p.x, static_cast<int>(n)), tau};
}

double HyperbolicModel::distance(const PhasePoint& a, const PhasePoint& b) const {
  if (is_map()) return map_.distance(a.x, b.x);
  double d = 0.0;
  fiber_shift(*this, a, b, &d);
  return d;
}

HyperbolicityReport verify_hyperbolicity(const HyperbolicModel& model, int samples, int horizon, std::uint64_t seed) {
  if (horizon < 1 || horizon > 15) throw std::invalid_argument("horizon must lie in [1, 15]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  HyperbolicityReport rep;
  rep.samples = samples;
  rep.horizon = horizon;
  std::vector<std::vector<double>> ratios;
  double rate = kInf;
  for (int i = 0; i < samples; ++i) {
    const Vec2 x(unit(rng), unit(rng));
    // Stable direction at x: pull a vector back from the forward orbit.
    std::vector<Vec2> orbit{x};
    for (int k = 0; k < 30; ++k) orbit.push_back(model.step(orbit.back()));
    Vec2 w(1.0, 0.3);
    for (int k = 29; k >= 0; --k) w = (model.jacobian(orbit[k]).inverse() * w).normalized();
    std::vector<double> r{1.0};
    Vec2 p = x, v = w;
    for (int k = 1; k <= horizon; ++k) {
      v = model.jacobian(p) * v;
      p = model.step(p);
      r.push_back(v.norm());
    }
    rate = std::min(rate, -std::log(r.back()) / horizon);
    ratios.push_back(std::move(r));
  }
  rep.rate = rate;
  double c = 1.0;
  for (const auto& r : ratios)
    for (int k = 0; k <= horizon; ++k) c = std::max(c, r[k] * std::exp(rate * k));
  rep.constant = c;
  return rep;
}

Bracket canonical_coordinates(const HyperbolicModel& model, const PhasePoint& x, const PhasePoint& y) {
  if (model.kind() == ModelKind::perturbed_cat_map)
    throw std::invalid_argument("canonical coordinates are implemented for linear models");
  const CatMap& map = model.linear();
  PhasePoint yy = y;
  double dxy = 0.0;
  if (model.kind() == ModelKind::suspension) {
    const int k = fiber_shift(model, x, y, &dxy);
    yy = {map.iterate(y.x, k), y.tau - k * model.roof()};
  } else {
    dxy = map.distance(x.x, y.x);
  }
  if (dxy > model.eta0())
    throw std::domain_error("points farther apart than eta0 = " + std::to_string(model.eta0()));
  Bracket b;
  b.v = model.is_map() ? 0.0 : yy.tau - x.tau;
  const Vec2 w = map.displacement(x.x, yy.x);
  const double ws = w.dot(map.e_s());
  const double wu = w.dot(map.e_u());
  b.point.x = wrap(x.x + ws * map.e_s());
  b.point.tau = model.is_map() ? x.tau : yy.tau;
  if (!model.is_map()) b.point = model.flow(b.point, 0.0);
  if (dxy > 0.0) b.bound = std::max({std::abs(b.v), std::abs(ws), std::abs(wu)}) / dxy;
  return b;
}

double SpecificationNumeric::delta() const {
  double d = 0.0;
  for (double j : jumps) d = std::max(d, j);
  return d;
}

double SpecificationNumeric::total_time() const {
  double t = 0.0;
  for (const auto& s : segments) t += s.duration;
  return t;
}

SpecificationNumeric make_specification(const HyperbolicModel& model, std::vector<SpecSegment> segments,
                                        bool periodic, double min_length) {
  if (segments.empty()) throw std::invalid_argument("specification needs at least one segment");
  SpecificationNumeric spec;
  spec.periodic = periodic;
  spec.min_length = min_length;
  for (auto& s : segments) {
    if (s.duration < min_length) throw std::invalid_argument("segment shorter than the minimal length");
    if (model.is_map() && std::abs(s.duration - std::round(s.duration)) > 1e-12)
      throw std::invalid_argument("map specifications need integer durations");
    if (!model.is_map() && s.duration < model.roof())
      throw std::invalid_argument("suspension segments must last at least one roof time");
    s.start.x = wrap(s.start.x);
    if (!model.is_map()) s.start = model.flow(s.start, 0.0);
  }
  spec.segments = std::move(segments);
  const std::size_t p = spec.segments.size();
  spec.jumps.assign(p, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    if (i == 0 && !periodic) continue;
    const auto& prev = spec.segments[(i + p - 1) % p];
    spec.jumps[i] = model.distance(model.flow(prev.start, prev.duration), spec.segments[i].start);
  }
  return spec;
}

double ShadowResult::sigma(double t) const {
  if (sigma_t.empty()) return t;
  if (t <= sigma_t.front()) return sigma_value.front() + (t - sigma_t.front());
  if (t >= sigma_t.back()) return sigma_value.back() + (t - sigma_t.back());
  const auto it = std::upper_bound(sigma_t.begin(), sigma_t.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - sigma_t.begin());
  const double a = (t - sigma_t[i - 1]) / (sigma_t[i] - sigma_t[i - 1]);
  return sigma_value[i - 1] + a * (sigma_value[i] - sigma_value[i - 1]);
}

namespace {

// Solves e_{k+1} = A e_k + j_k in eigen coordinates, stably: the unstable part
// backward, the stable part forward. Cyclic when periodic, otherwise the
// unstable error vanishes at the end and the stable error at the start.
std::vector<Vec2> linear_shadow_errors(const CatMap& map, const std::vector<Vec2>& jumps, bool periodic) {
  const std::size_t n = jumps.size();
  const double lam = map.lambda();
  std::vector<double> ju(n), js(n), eu(n), es(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 e = map.to_eigen(jumps[k]);
    ju[k] = e.x();
    js[k] = e.y();
  }
  if (periodic) {
    const double scale = 1.0 / (1.0 - std::pow(lam, -static_cast<double>(n)));
    double u0 = 0.0, s0 = 0.0, w = 1.0 / lam;
    for (std::size_t m = 0; m < n; ++m) {
      u0 -= w * ju[m];
      w /= lam;
    }
    w = 1.0;
    for (std::size_t m = 1; m <= n; ++m) {
      s0 += w * js[n - m];
      w /= lam;
    }
    u0 *= scale;
    s0 *= scale;
    double next = u0;
    for (std::size_t k = n; k-- > 1;) {
      eu[k] = (next - ju[k]) / lam;
      next = eu[k];
    }
    eu[0] = u0;
    es[0] = s0;
  } else {
    eu[n - 1] = 0.0;
    for (std::size_t k = n - 1; k-- > 0;) eu[k] = (eu[k + 1] - ju[k]) / lam;
    es[0] = 0.0;
  }
  for (std::size_t k = 0; k + 1 < n; ++k) es[k + 1] = es[k] / lam + js[k];
  std::vector<Vec2> e(n);
  for (std::size_t k = 0; k < n; ++k) e[k] = map.from_eigen(eu[k], es[k]);
  return e;
}

// Newton iteration for f(z_k + e_k) = z_{k+1} + e_{k+1} mod Z^2.
int newton_shadow(const HyperbolicModel& model, const std::vector<Vec2>& z, bool periodic, std::vector<Vec2>& e) {
  const int n = static_cast<int>(z.size());
  const CatMap& map = model.linear();
  const int links = periodic ? n : n - 1;
  for (int it = 1; it <= 30; ++it) {
    Eigen::VectorXd r(2 * n);
    double rmax = 0.0;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(8 * n);
    for (int k = 0; k < links; ++k) {
      const int k1 = (k + 1) % n;
      const Vec2 y = z[k] + e[k];
      const Vec2 res = nearest_rep(model.step_lifted(y) - z[k1] - e[k1]);
      r.segment<2>(2 * k) = res;
      rmax = std::max(rmax, res.lpNorm<Eigen::Infinity>());
      const Mat2 j = model.jacobian(y);
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) trip.emplace_back(2 * k + a, 2 * k + b, j(a, b));
        trip.emplace_back(2 * k + a, 2 * k1 + a, -1.0);
      }
    }
    if (!periodic) {
      // Boundary rows: no unstable error at the end, no stable error at the start.
      const int row = 2 * (n - 1);
      r(row) = e[n - 1].dot(map.e_u());
      r(row + 1) = e[0].dot(map.e_s());
      rmax = std::max({rmax, std::abs(r(row)), std::abs(r(row + 1))});
      for (int a = 0; a < 2; ++a) {
        trip.emplace_back(row, 2 * (n - 1) + a, map.e_u()(a));
        trip.emplace_back(row + 1, a, map.e_s()(a));
      }
    }
    if (rmax < 1e-14) return it - 1;
    Eigen::SparseMatrix<double> jac(2 * n, 2 * n);
    jac.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(jac);
    if (lu.info() != Eigen::Success) throw std::runtime_error("shadowing Jacobian is singular");
    const Eigen::VectorXd dx = lu.solve(r);
    for (int k = 0; k < n; ++k) e[k] -= dx.segment<2>(2 * k);
  }
  throw std::runtime_error("Newton shadowing did not converge in 30 iterations");
}

// Shadows the sampled base pseudo-orbit z into res; returns the sup error.
double shadow_samples(const HyperbolicModel& model, const std::vector<Vec2>& z, bool periodic, ShadowResult& res) {
  const CatMap& map = model.linear();
  const std::size_t n = z.size();
  const std::size_t links = periodic ? n : n - 1;
  std::vector<Vec2> jumps(n, Vec2::Zero());
  for (std::size_t k = 0; k < links; ++k) jumps[k] = map.displacement(z[(k + 1) % n], model.step(z[k]));

  std::vector<Vec2> e = linear_shadow_errors(map, jumps, periodic);
  if (model.kind() == ModelKind::perturbed_cat_map) res.newton_iterations = newton_shadow(model, z, periodic, e);

  res.pseudo_orbit = z;
  res.orbit.resize(n);
  double err = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    res.orbit[k] = wrap(z[k] + e[k]);
    err = std::max(err, eigen_norm(map, e[k]));
  }
  double closure = 0.0;
  for (std::size_t k = 0; k < links; ++k)
    closure = std::max(closure, map.distance(model.step(res.orbit[k]), res.orbit[(k + 1) % n]));
  res.closure_residual = closure;
  return err;
}

}  // namespace

ShadowResult shadow_pseudo_orbit(const HyperbolicModel& model, const std::vector<Vec2>& z, bool periodic) {
  if (!model.is_map()) throw std::invalid_argument("shadow_pseudo_orbit: maps only");
  if (z.empty()) throw std::invalid_argument("shadow_pseudo_orbit: empty pseudo-orbit");
  const CatMap& map = model.linear();
  const std::size_t n = z.size();
  double delta = 0.0;
  for (std::size_t k = 0; k + (periodic ? 0 : 1) < n; ++k)
    delta = std::max(delta, map.distance(model.step(z[k]), z[(k + 1) % n]));
  if (delta >= model.delta0())
    throw std::domain_error("jump size " + std::to_string(delta) + " is not below delta0 = " +
                            std::to_string(model.delta0()));
  ShadowResult res;
  res.sup_error = shadow_samples(model, z, periodic, res);
  res.shadow_point = {res.orbit[0], 0.0};
  res.delta = delta;
  res.e_measured = delta > 0.0 ? res.sup_error / delta : 0.0;
  res.period = periodic ? static_cast<double>(n) : 0.0;
  res.sigma_t = {0.0, static_cast<double>(n)};
  res.sigma_value = res.sigma_t;
  return res;
}

ShadowResult shadow_specification(const HyperbolicModel& model, const SpecificationNumeric& spec) {
  const double delta = spec.delta();
  if (delta >= model.delta0())
    throw std::domain_error("jump size " + std::to_string(delta) + " is not below delta0 = " +
                            std::to_string(model.delta0()));
  const std::size_t p = spec.segments.size();

  // Base pseudo-orbit and, for the suspension, fiber offsets at junctions.
  std::vector<Vec2> z;
  std::vector<double> fiber_jump(p, 0.0);
  std::vector<double> seg_start_time(p, 0.0);
  double t_acc = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    const auto& s = spec.segments[i];
    if (s.duration < spec.min_length) throw std::invalid_argument("segment shorter than the minimal length");
    seg_start_time[i] = t_acc;
    t_acc += s.duration;
    long steps = 0;
    if (model.is_map()) {
      steps = std::lround(s.duration);
    } else {
      steps = static_cast<long>(std::floor((s.start.tau + s.duration) / model.roof()));
      if (i > 0 || spec.periodic) {
        const auto& prev = spec.segments[(i + p - 1) % p];
        const PhasePoint end = model.flow(prev.start, prev.duration);
        if (fiber_shift(model, end, s.start, nullptr) != 0)
          throw std::invalid_argument("junction straddles the roof section; move the segment start");
        fiber_jump[i] = s.start.tau - end.tau;
      }
    }
    Vec2 x = s.start.x;
    for (long k = 0; k < steps; ++k) {
      z.push_back(x);
      x = model.step(x);
    }
  }
  ShadowResult res;
  const double err = shadow_samples(model, z, spec.periodic, res);
  res.shadow_point = {res.orbit[0], spec.segments[0].start.tau};

  // Reparametrization: sigma(t) - t constant on each segment, with a short
  // linear ramp before each junction.
  double offset = 0.0, max_fiber = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    if (i > 0) offset += fiber_jump[i];
    const double t0 = seg_start_time[i];
    const double t1 = t0 + spec.segments[i].duration;
    res.sigma_t.push_back(t0);
    res.sigma_value.push_back(t0 + offset);
    const bool last = i + 1 == p;
    if (!last || spec.periodic) {
      const double jump = last ? fiber_jump[0] : fiber_jump[i + 1];
      if (jump != 0.0) {
        const double ramp = std::min(0.5, 0.5 * spec.segments[i].duration);
        res.sigma_t.push_back(t1 - ramp);
        res.sigma_value.push_back(t1 - ramp + offset);
      }
      max_fiber = std::max(max_fiber, std::abs(jump));
    }
  }
  const double total = spec.total_time();
  const double closing = spec.periodic ? fiber_jump[0] : 0.0;
  res.sigma_t.push_back(total);
  res.sigma_value.push_back(total + offset + closing);
  res.period = spec.periodic ? total + offset + closing : 0.0;

  res.sup_error = std::max(err, max_fiber);
  res.delta = delta;
  res.e_measured = delta > 0.0 ? res.sup_error / delta : 0.0;
  return res;
}

ClosenessProfile exponential_closeness(const HyperbolicModel& model, const PhasePoint& x, const PhasePoint& y,
                                       int window) {
  if (window < 1) throw std::invalid_argument("window must be positive");
  const CatMap& map = model.linear();
  ClosenessProfile prof;
  PhasePoint yy = y;
  if (!model.is_map()) {
    const int k = fiber_shift(model, x, y, nullptr);
    yy = {map.iterate(y.x, k), y.tau - k * model.roof()};
    prof.v = yy.tau - x.tau;
  }
  const int size = 2 * window + 1;
  prof.times.resize(size);
  prof.distance.resize(size);
  if (model.kind() == ModelKind::perturbed_cat_map) {
    Vec2 a = x.x, b = yy.x;
    for (int s = 0; s <= window; ++s) {
      prof.times[window + s] = s;
      prof.distance[window + s] = map.distance(a, b);
      a = model.step(a);
      b = model.step(b);
    }
    a = x.x;
    b = yy.x;
    for (int s = 1; s <= window; ++s) {
      a = model.step_inverse(a);
      b = model.step_inverse(b);
      prof.times[window - s] = -s;
      prof.distance[window - s] = map.distance(a, b);
    }
  } else {
    // Linear flow: the displacement evolves by A^s exactly.
    const Vec2 w = map.to_eigen(map.displacement(x.x, yy.x));
    for (int s = -window; s <= window; ++s) {
      prof.times[window + s] = s;
      prof.distance[window + s] = std::max(std::pow(map.lambda(), s) * std::abs(w.x()),
                                           std::pow(map.lambda(), -s) * std::abs(w.y()));
    }
  }
  const double peak = *std::max_element(prof.distance.begin(), prof.distance.end());
  if (peak > model.beta0())
    throw std::domain_error("orbits separate beyond beta0 = " + std::to_string(model.beta0()));
  prof.midpoint = prof.distance[window];
  if (peak == 0.0) return prof;

  const auto imin = static_cast<int>(std::min_element(prof.distance.begin(), prof.distance.end()) - prof.distance.begin());
  // The minimum sits at the kink between the two branches, so it is left out
  // of a side's fit whenever two other samples remain.
  double rate = kInf;
  if (imin >= 1) {
    std::vector<double> xs, ys;
    for (int i = 0; i <= (imin >= 2 ? imin - 1 : imin); ++i) {
      xs.push_back(prof.times[i]);
      ys.push_back(std::log(prof.distance[i]));
    }
    rate = std::min(rate, -slope(xs, ys));
  }
  if (imin <= size - 2) {
    std::vector<double> xs, ys;
    for (int i = (imin <= size - 3 ? imin + 1 : imin); i < size; ++i) {
      xs.push_back(prof.times[i]);
      ys.push_back(std::log(prof.distance[i]));
    }
    rate = std::min(rate, slope(xs, ys));
  }
  prof.decay_rate = rate;
  const double ends = prof.distance.front() + prof.distance.back();
  double dom = 0.0;
  for (int i = 0; i < size; ++i)
    dom = std::max(dom, prof.distance[i] / (std::exp(-model.rate() * (window - std::abs(prof.times[i]))) * ends));
  prof.domination = dom;
  return prof;
}

namespace {

struct RationalPoint {
  long a, b, q;
};

// All points of period dividing n, as exact fractions with denominator |det(A^n - I)|.
std::vector<RationalPoint> periodic_points(int n) {
  long m00 = 1, m01 = 0, m10 = 0, m11 = 1;
  for (int i = 0; i < n; ++i) {
    const long a = 2 * m00 + m10, b = 2 * m01 + m11, c = m00 + m10, d = m01 + m11;
    m00 = a;
    m01 = b;
    m10 = c;
    m11 = d;
  }
  m00 -= 1;
  m11 -= 1;
  const long q = std::labs(m00 * m11 - m01 * m10);
  std::vector<RationalPoint> pts;
  for (long a = 0; a < q; ++a)
    for (long b = 0; b < q; ++b) {
      // (A^n - I)(a, b)/q must be an integer vector.
      if ((m00 * a + m01 * b) % q == 0 && (m10 * a + m11 * b) % q == 0) pts.push_back({a, b, q});
    }
  return pts;
}

RationalPoint rational_step(const RationalPoint& p) {
  return {(2 * p.a + p.b) % p.q, (p.a + p.b) % p.q, p.q};
}

Vec2 to_vec(const RationalPoint& p) {
  return {static_cast<double>(p.a) / p.q, static_cast<double>(p.b) / p.q};
}

}  // namespace

ExpansivityEstimate expansivity_estimate(const HyperbolicModel& model, double eta, int window, int random_pairs,
                                         std::uint64_t seed) {
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
  if (model.kind() == ModelKind::perturbed_cat_map)
    throw std::invalid_argument("expansivity estimate is implemented for linear models");
  const CatMap& map = model.linear();
  ExpansivityEstimate est;
  est.window = window;
  est.ladder = {0.5, 0.45, 0.4, 0.35, 0.3, 0.25, 0.2, 0.15, 0.1, 0.05, 0.02, 0.01};

  // Pairs are summarized by (sup distance over [-L, L], distance at time 0, time shift).
  struct PairSummary {
    double sup, mid, shift;
  };
  std::vector<PairSummary> pairs;

  // Distinct periodic orbits of low period, iterated exactly.
  std::vector<RationalPoint> pts;
  for (int n = 1; n <= 3; ++n)
    for (const auto& p : periodic_points(n)) pts.push_back(p);
  const long common = 2L * 3L * 8L;  // covers lcm of the periods at all denominators used
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      RationalPoint a = pts[i], b = pts[j];
      const double mid = map.distance(to_vec(a), to_vec(b));
      if (mid < 1e-12) continue;  // same point listed under two denominators
      double sup = 0.0;
      for (long k = 0; k < std::max<long>(common, 2L * window + 1); ++k) {
        sup = std::max(sup, map.distance(to_vec(a), to_vec(b)));
        a = rational_step(a);
        b = rational_step(b);
      }
      pairs.push_back({sup, mid, 0.0});
    }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < random_pairs; ++i) {
    // Displacement of size up to 0.5 in eigen coordinates, biased towards small.
    const double scale = std::pow(10.0, -6.0 * unit(rng));
    const double wu = (2.0 * unit(rng) - 1.0) * 0.5 * scale * std::pow(map.lambda(), -window * unit(rng));
    const double ws = (2.0 * unit(rng) - 1.0) * 0.5 * scale;
    double sup = 0.0;
    for (int s = -window; s <= window; ++s) {
      const Vec2 w = map.from_eigen(std::pow(map.lambda(), s) * wu, std::pow(map.lambda(), -s) * ws);
      sup = std::max(sup, map.distance(Vec2::Zero(), wrap(w)));
    }
    const double mid = map.distance(Vec2::Zero(), wrap(map.from_eigen(wu, ws)));
    double shift = 0.0;
    if (!model.is_map()) shift = (2.0 * unit(rng) - 1.0) * 0.5;
    pairs.push_back({std::max(sup, std::abs(shift)), mid, shift});
  }
  est.pairs = static_cast<int>(pairs.size());

  const double lam_l = std::exp(-model.rate() * window);
  for (double alpha : est.ladder) {
    bool ok = true;
    for (const auto& pr : pairs) {
      if (pr.sup > alpha) continue;
      const bool same_orbit = pr.mid <= 2.0 * alpha * lam_l && std::abs(pr.shift) <= eta;
      if (!same_orbit) {
        ok = false;
        break;
      }
    }
    if (ok) {
      est.alpha = alpha;
      break;
    }
  }
  return est;
}

double Profile::at(double time) const {
  if (time <= t.front()) return value.front();
  if (time >= t.back()) return value.back();
  const auto it = std::upper_bound(t.begin(), t.end(), time);
  const std::size_t i = static_cast<std::size_t>(it - t.begin());
  const double a = (time - t[i - 1]) / (t[i] - t[i - 1]);
  return value[i - 1] + a * (value[i] - value[i - 1]);
}

namespace {

// Closed subinterval of piece i where the profile is <= level (or == level
// when equal is set). Returns false when empty.
bool piece_set(const Profile& p, std::size_t i, double level, bool equal, double& lo, double& hi) {
  const double l = p.t[i], r = p.t[i + 1];
  const double gl = p.value[i], gr = p.value[i + 1];
  if (equal) {
    if (gl == level && gr == level) {
      lo = l;
      hi = r;
      return true;
    }
    if ((gl - level) * (gr - level) > 0.0) return false;
    const double x = (gl == gr) ? l : l + (level - gl) / (gr - gl) * (r - l);
    lo = hi = x;
    return true;
  }
  const bool inl = gl <= level, inr = gr <= level;
  if (inl && inr) {
    lo = l;
    hi = r;
    return true;
  }
  if (!inl && !inr) return false;
  const double x = l + (level - gl) / (gr - gl) * (r - l);
  if (inl) {
    lo = l;
    hi = x;
  } else {
    lo = x;
    hi = r;
  }
  return true;
}

// sup{t < a : condition}
std::optional<double> last_before(const Profile& p, double a, double level, bool equal) {
  for (std::size_t i = p.t.size() - 1; i-- > 0;) {
    if (p.t[i] >= a) continue;
    double lo = 0.0, hi = 0.0;
    if (!piece_set(p, i, level, equal, lo, hi)) continue;
    if (lo < a) return std::min(hi, a);
  }
  return std::nullopt;
}

// inf{t > a : condition}
std::optional<double> first_after(const Profile& p, double a, double level, bool equal) {
  for (std::size_t i = 0; i + 1 < p.t.size(); ++i) {
    if (p.t[i + 1] <= a) continue;
    double lo = 0.0, hi = 0.0;
    if (!piece_set(p, i, level, equal, lo, hi)) continue;
    if (hi > a) return std::max(lo, a);
  }
  return std::nullopt;
}

}  // namespace

EscapeSegmentation escape_segmentation(const Profile& f, const Profile& g, const EscapeThresholds& th) {
  if (f.t.size() < 2 || f.t != g.t) throw std::invalid_argument("profiles must share a sample grid of length >= 2");
  if (!(th.near < th.enter && th.enter < th.exit)) throw std::invalid_argument("thresholds must satisfy near < enter < exit");
  for (std::size_t i = 0; i < f.t.size(); ++i) {
    if (i > 0 && !(f.t[i] > f.t[i - 1])) throw std::invalid_argument("sample times must increase");
    if (f.value[i] > g.value[i]) throw std::invalid_argument("distance to the orbit exceeds distance to the tracked point");
  }
  EscapeSegmentation seg;
  seg.thresholds = th;
  double s_prev = 0.0;
  for (std::size_t guard = 0; guard < 2 * f.t.size() + 2; ++guard) {
    const auto tk = last_before(g, s_prev, th.near, false);
    if (!tk) break;
    const auto ck = last_before(f, *tk, th.exit, true);
    if (!ck) break;
    const auto sk = first_after(g, *ck, th.near, false);
    if (!sk) break;
    const auto bk = last_before(f, *ck, th.enter, false);
    seg.t.push_back(*tk);
    seg.c.push_back(*ck);
    seg.s.push_back(*sk);
    seg.b.push_back(bk ? *bk : -kInf);
    s_prev = *sk;
  }
  return seg;
}

int count_segmentation_violations(const EscapeSegmentation& seg, const Profile& f) {
  int bad = 0;
  const double tol = 1e-12;
  for (std::size_t k = 0; k < seg.s.size(); ++k) {
    const double s_prev = k == 0 ? 0.0 : seg.s[k - 1];
    if (!(seg.c[k] < seg.s[k] && seg.s[k] <= seg.t[k] && seg.t[k] <= s_prev)) ++bad;
    if (k + 1 < seg.s.size()) {
      if (!(seg.t[k + 1] <= seg.c[k])) ++bad;
      if (!(seg.b[k] >= seg.t[k + 1])) ++bad;
    }
    if (!(seg.b[k] <= seg.c[k])) ++bad;
    if (f.at(seg.s[k]) > seg.thresholds.exit + tol || f.at(seg.t[k]) > seg.thresholds.exit + tol) ++bad;
    for (std::size_t i = 0; i < f.t.size(); ++i)
      if (f.t[i] >= seg.s[k] && f.t[i] <= seg.t[k] && f.value[i] > seg.thresholds.exit + tol) ++bad;
  }
  return bad;
}

nlohmann::json to_json(const SpecificationNumeric& spec) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : spec.segments)
    segs.push_back({{"x", {s.start.x.x(), s.start.x.y()}}, {"tau", s.start.tau}, {"duration", s.duration}});
  return {{"periodic", spec.periodic}, {"min_length", spec.min_length}, {"segments", segs}, {"jumps", spec.jumps}};
}

SpecificationNumeric specification_from_json(const HyperbolicModel& model, const nlohmann::json& j) {
  std::vector<SpecSegment> segs;
  for (const auto& s : j.at("segments")) {
    SpecSegment seg;
    seg.start.x = Vec2(s.at("x").at(0).get<double>(), s.at("x").at(1).get<double>());
    seg.start.tau = s.value("tau", 0.0);
    seg.duration = s.at("duration").get<double>();
    segs.push_back(seg);
  }
  return make_specification(model, std::move(segs), j.value("periodic", true), j.value("min_length", 1.0));
}

nlohmann::json to_json(const ShadowResult& r) {
  nlohmann::json orbit = nlohmann::json::array();
  for (const auto& y : r.orbit) orbit.push_back({y.x(), y.y()});
  return {{"shadow_point", {{"x", {r.shadow_point.x.x(), r.shadow_point.x.y()}}, {"tau", r.shadow_point.tau}}},
          {"sup_error", r.sup_error},
          {"delta", r.delta},
          {"e_measured", r.e_measured},
          {"closure_residual", r.closure_residual},
          {"period", r.period},
          {"sigma_t", r.sigma_t},
          {"sigma_value", r.sigma_value},
          {"orbit", orbit}};
}

}  // namespace manelab::shadowing
