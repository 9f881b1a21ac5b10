#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace manelab::lagrangian {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

// Torus coordinates run over [0, 2 pi) so that U = cos x is periodic.
inline constexpr double kPeriod = 6.283185307179586;

// Periodic potential with value, gradient and Hessian. Unused coordinates of
// a one-dimensional potential are zero.
struct Potential {
  std::string kind = "zero";  // zero, cos, table, custom
  std::function<double(const Vec2&)> value;
  std::function<Vec2(const Vec2&)> gradient;
  std::function<Mat2(const Vec2&)> hessian;
  std::vector<double> samples;  // table potentials, row-major n^d grid

  static Potential zero();
  // U = amplitude cos x (plus amplitude cos y in dimension 2).
  static Potential cosine(int dim, double amplitude = 1.0);
  // Periodic cubic (Catmull-Rom) interpolation of n^d equispaced samples.
  static Potential table(int dim, std::vector<double> samples);

  Potential shifted(double b) const;  // U + b
  Potential minus(const Potential& phi) const;  // U - phi
};

// Mechanical Lagrangian L = |v|^2 / 2 + omega(x) . v - U(x) on the flat torus.
struct LagrangianModel {
  int dim = 1;
  Potential potential;
  std::function<Vec2(const Vec2&)> omega;  // optional magnetic covector field
  double u_min = 0.0, u_max = 0.0;  // bounds of U, sampled on construction
  double hessian_bound = 0.0;       // sup |D^2 U|
  double omega_bound = 0.0;         // sup |omega|

  static LagrangianModel make(int dim, Potential u, std::function<Vec2(const Vec2&)> omega = {});
  static LagrangianModel free_particle(int dim = 1) { return make(dim, Potential::zero()); }
  static LagrangianModel pendulum() { return make(1, Potential::cosine(1)); }

  bool magnetic() const { return static_cast<bool>(omega); }
  double U(const Vec2& x) const { return potential.value(x); }
  double L(const Vec2& x, const Vec2& v) const;
  // Euler-Lagrange acceleration.
  Vec2 acceleration(const Vec2& x, const Vec2& v) const;
  // L + phi.
  LagrangianModel perturbed(const Potential& phi) const;
  // L + b.
  LagrangianModel plus_constant(double b) const;
};

struct PhaseState {
  Vec2 x = Vec2::Zero();
  Vec2 v = Vec2::Zero();
};

Vec2 wrap(const Vec2& x, int dim);

// Time-ordered samples of a lifted curve. Velocities are present for flow
// output and empty for broken (piecewise linear) paths.
struct Curve {
  int dim = 1;
  std::vector<double> t;
  std::vector<Vec2> x;
  std::vector<Vec2> v;

  std::size_t size() const { return t.size(); }
  double duration() const { return t.empty() ? 0.0 : t.back() - t.front(); }
  bool has_velocity() const { return !v.empty(); }
  Curve slice(std::size_t first, std::size_t last) const;  // samples [first, last]
  void validate() const;
};

double energy(const LagrangianModel& model, const PhaseState& s);

// Action of L + k. Curves with velocities use the trapezoid rule on the
// samples; broken paths use the exact kinetic term and 3-point Gauss
// quadrature of the potential on each segment.
double action(const LagrangianModel& model, const Curve& c, double k = 0.0);
double segment_action(const LagrangianModel& model, const Vec2& a, const Vec2& b, double dt, double k = 0.0);

class StepTooLarge : public std::runtime_error {
 public:
  StepTooLarge(double step, double max_step, double drift);
  double step, max_step, drift;
};

struct FlowOptions {
  double tolerance = 1e-8;  // energy drift per unit (1 + t)
  int record_every = 1;
  bool check_energy = true;
};

// Fourth-order symplectic composition of kick-drift-kick for mechanical
// models; implicit midpoint when a magnetic term is present. Negative
// durations flow backwards. Throws StepTooLarge naming the largest step that
// meets the energy tolerance.
Curve el_flow(const LagrangianModel& model, const PhaseState& s, double duration, double step,
              const FlowOptions& opt = {});

double max_energy_drift(const LagrangianModel& model, const Curve& c);

// Distance to the start after flowing forward, reversing velocity and flowing
// back for the same duration.
double reversibility_error(const LagrangianModel& model, const PhaseState& s, double duration, double step);

struct MinimizerOptions {
  int winding = 3;  // search lifts y + 2 pi w with |w_i| <= winding
  int max_iterations = 200;
  double tolerance = 1e-6;  // discrete Euler-Lagrange residual
};

struct Minimizer {
  Curve curve;
  double action = 0.0;
  double residual = 0.0;
  double straight_action = 0.0;  // straight lift in the same homotopy class
  Eigen::Vector2i winding = Eigen::Vector2i::Zero();
  int iterations = 0;
  PhaseState initial_tangent() const;
  Vec2 initial_velocity;  // discrete Legendre transform at t = 0
};

class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(const std::string& what, Minimizer best) : std::runtime_error(what), best(std::move(best)) {}
  Minimizer best;
};

// Minimizes the broken-path action with N = grid segments between x and
// lifts of y over time T. Damped Newton from the straight lift of every
// admissible winding; returns the best stationary path.
Minimizer tonelli_minimizer(const LagrangianModel& model, const Vec2& x, const Vec2& y, double T, int grid,
                            const MinimizerOptions& opt = {});

// Residual max_i |dS/dx_i| / h of the discrete Euler-Lagrange equations.
double stationarity_residual(const LagrangianModel& model, const Curve& c);

// A0(C): speed bound for Euler-Lagrange solutions with mean action below C.
double apriori_speed_bound(const LagrangianModel& model, double C);

struct AprioriCheck {
  bool holds = false;
  bool premise = false;  // action < C T
  double sup_speed = 0.0;
  double bound = 0.0;
};

AprioriCheck apriori_bound_check(const LagrangianModel& model, const Curve& c, double C);

// l(r) = |c| + sup{L(x, v) : |v| <= r} and g(r) = sup of the fiber Hessian;
// diagnostics only.
double ell(const LagrangianModel& model, double r, double c = 0.0);
double fiber_hessian_bound(const LagrangianModel& model, double r);

LagrangianModel model_from_json(const nlohmann::json& j);
std::string curve_csv(const Curve& c);

}  // namespace manelab::lagrangian
