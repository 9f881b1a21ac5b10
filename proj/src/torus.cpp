#include "manelab/torus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace manelab {

CatMap::CatMap() {
  a_ << 2.0, 1.0, 1.0, 1.0;
  a_inv_ << 1.0, -1.0, -1.0, 2.0;
  lambda_ = (3.0 + std::sqrt(5.0)) / 2.0;
  // Eigenvector for lambda: (1, lambda - 2) normalized; A is symmetric so the
  // stable direction is its rotation by 90 degrees.
  e_u_ = Vec2(1.0, lambda_ - 2.0).normalized();
  e_s_ = Vec2(-e_u_.y(), e_u_.x());
}

double CatMap::log_lambda() const { return std::log(lambda_); }

Vec2 CatMap::apply(const Vec2& x) const { return wrap(a_ * x); }

Vec2 CatMap::apply_inverse(const Vec2& x) const { return wrap(a_inv_ * x); }

Vec2 CatMap::iterate(const Vec2& x, int n) const {
  Vec2 y = x;
  if (n >= 0) {
    for (int i = 0; i < n; ++i) y = apply(y);
  } else {
    for (int i = 0; i < -n; ++i) y = apply_inverse(y);
  }
  return y;
}

Vec2 CatMap::displacement(const Vec2& x, const Vec2& y) const {
  Vec2 w = y - x;
  w.x() -= std::round(w.x());
  w.y() -= std::round(w.y());
  Vec2 best = w;
  double best_norm = std::numeric_limits<double>::infinity();
  for (int i = -1; i <= 1; ++i) {
    for (int j = -1; j <= 1; ++j) {
      const Vec2 c = w + Vec2(i, j);
      const double n = std::max(std::abs(c.dot(e_u_)), std::abs(c.dot(e_s_)));
      if (n < best_norm) {
        best_norm = n;
        best = c;
      }
    }
  }
  return best;
}

double CatMap::distance(const Vec2& x, const Vec2& y) const {
  const Vec2 w = displacement(x, y);
  return std::max(std::abs(w.dot(e_u_)), std::abs(w.dot(e_s_)));
}

double CatMap::expansivity_radius() const {
  double best = std::numeric_limits<double>::infinity();
  for (int i = -3; i <= 3; ++i) {
    for (int j = -3; j <= 3; ++j) {
      if (i == 0 && j == 0) continue;
      const Vec2 c(i, j);
      best = std::min(best, std::max(std::abs(c.dot(e_u_)), std::abs(c.dot(e_s_))));
    }
  }
  return 0.5 * best;
}

double wrap01(double t) {
  double r = t - std::floor(t);
  if (r >= 1.0) r = 0.0;
  return r;
}

Vec2 wrap(const Vec2& x) { return {wrap01(x.x()), wrap01(x.y())}; }

SturmianSet::SturmianSet(const CatMap& map, double alpha, int truncation)
    : map_(map), alpha_(alpha > 0.0 ? alpha : (std::sqrt(5.0) - 1.0) / 2.0), n_(truncation) {
  const Vec2 m(1.0, 0.0);
  c_u_ = m.dot(map_.e_u());
  c_s_ = m.dot(map_.e_s());
  build_factors();
}

int SturmianSet::digit(double rho, long n) const {
  const double a = static_cast<double>(n + 1) * alpha_ + rho;
  const double b = static_cast<double>(n) * alpha_ + rho;
  return static_cast<int>(std::floor(a) - std::floor(b));
}

double SturmianSet::advance(double rho, long steps) const {
  return wrap01(rho + static_cast<double>(steps) * alpha_);
}

Vec2 SturmianSet::point(double rho) const {
  const double lam = map_.lambda();
  double u = 0.0;
  double s = 0.0;
  double w = 1.0;
  for (int n = 0; n <= n_; ++n) {
    u += digit(rho, n) * w;
    w /= lam;
  }
  w = 1.0 / lam;
  for (int n = 1; n <= n_; ++n) {
    s += digit(rho, -n) * w;
    w /= lam;
  }
  return wrap(map_.from_eigen(c_u_ * u, -c_s_ * s));
}

void SturmianSet::build_factors() {
  // Digits on [-N, N] are constant on the arcs cut out by the points -n*alpha.
  std::vector<double> cuts;
  for (long n = -n_; n <= n_ + 1; ++n) cuts.push_back(wrap01(-static_cast<double>(n) * alpha_));
  std::sort(cuts.begin(), cuts.end());
  for (std::size_t i = 0; i < cuts.size(); ++i) {
    const double a = cuts[i];
    const double b = (i + 1 < cuts.size()) ? cuts[i + 1] : cuts[0] + 1.0;
    if (b - a < 1e-15) continue;
    const double mid = wrap01(0.5 * (a + b));
    factor_phases_.push_back(mid);
    factor_points_.push_back(point(mid));
  }
}

double SturmianSet::distance(const Vec2& y) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : factor_points_) best = std::min(best, map_.distance(y, p));
  return best;
}

double SturmianSet::nearest_phase(const Vec2& y) const {
  double best = std::numeric_limits<double>::infinity();
  double phase = 0.0;
  for (std::size_t i = 0; i < factor_points_.size(); ++i) {
    const double d = map_.distance(y, factor_points_[i]);
    if (d < best) {
      best = d;
      phase = factor_phases_[i];
    }
  }
  return phase;
}

}  // namespace manelab
