#pragma once

#include <Eigen/Dense>

#include <vector>

namespace manelab {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

// Hyperbolic toral automorphism x -> A x mod Z^2 with A = [[2,1],[1,1]].
// Distances use the sup norm in the (orthonormal) eigenbasis, wrapped over
// the integer lattice. In that norm the map expands the unstable coordinate
// by exactly lambda and contracts the stable one by exactly 1/lambda.
class CatMap {
 public:
  CatMap();

  double lambda() const { return lambda_; }
  double log_lambda() const;
  const Vec2& e_u() const { return e_u_; }
  const Vec2& e_s() const { return e_s_; }
  const Mat2& matrix() const { return a_; }
  const Mat2& inverse() const { return a_inv_; }

  Vec2 apply(const Vec2& x) const;
  Vec2 apply_inverse(const Vec2& x) const;
  Vec2 iterate(const Vec2& x, int n) const;

  // Eigen coordinates (u, s) of a vector in R^2 (no wrapping).
  Vec2 to_eigen(const Vec2& v) const { return {v.dot(e_u_), v.dot(e_s_)}; }
  Vec2 from_eigen(double u, double s) const { return u * e_u_ + s * e_s_; }

  // Shortest representative w of (y - x) mod Z^2 in the eigen sup norm.
  Vec2 displacement(const Vec2& x, const Vec2& y) const;
  double distance(const Vec2& x, const Vec2& y) const;

  // Half the shortest nonzero lattice vector in the eigen sup norm: two orbits
  // that stay closer than this for all times coincide.
  double expansivity_radius() const;

 private:
  Mat2 a_;
  Mat2 a_inv_;
  Vec2 e_u_;
  Vec2 e_s_;
  double lambda_;
};

Vec2 wrap(const Vec2& x);
double wrap01(double t);

// Invariant set of the cat map obtained as the homoclinic coding of a Sturmian
// subshift of slope alpha: pi(a) = sum_n a_n A^{-n} Delta with Delta the
// unstable projection of a lattice vector. Points are parametrized by the
// rotation phase rho in [0,1); the map acts as rho -> rho + alpha. The set is
// compact, minimal, has zero entropy and contains no periodic orbit.
class SturmianSet {
 public:
  // alpha must be irrational; the default is the golden slope (sqrt 5 - 1) / 2.
  explicit SturmianSet(const CatMap& map, double alpha = -1.0, int truncation = 40);

  const CatMap& map() const { return map_; }
  double alpha() const { return alpha_; }
  int truncation() const { return n_; }

  int digit(double rho, long n) const;
  Vec2 point(double rho) const;
  double advance(double rho, long steps) const;

  // Distance from y to the set, minimizing over all length 2N+1 factors.
  double distance(const Vec2& y) const;
  // Parameter of a set point realizing distance(y).
  double nearest_phase(const Vec2& y) const;

 private:
  void build_factors();

  CatMap map_;
  double alpha_;
  int n_;
  double c_u_;
  double c_s_;
  std::vector<Vec2> factor_points_;
  std::vector<double> factor_phases_;
};

}  // namespace manelab
