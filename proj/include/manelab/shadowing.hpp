#pragma once

#include "manelab/torus.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <vector>

namespace manelab::shadowing {

enum class ModelKind { cat_map, perturbed_cat_map, suspension };

// Point of the phase space. Maps ignore tau; the suspension uses it as the
// fiber time in [0, roof).
struct PhasePoint {
  Vec2 x = Vec2::Zero();
  double tau = 0.0;
};

// Cat map, the nonlinear perturbation x -> A x + eps s(x) with
// s(x) = (sin 2 pi x1, sin 2 pi x2) / (2 pi), or the suspension flow of the
// cat map under a constant roof.
class HyperbolicModel {
 public:
  static HyperbolicModel cat_map();
  static HyperbolicModel perturbed_cat_map(double eps);
  static HyperbolicModel suspension(double roof = 1.0);

  ModelKind kind() const { return kind_; }
  const CatMap& linear() const { return map_; }
  double perturbation() const { return eps_; }
  double roof() const { return roof_; }
  bool is_map() const { return kind_ != ModelKind::suspension; }
  double lambda_u() const { return map_.lambda(); }
  double lambda_s() const { return 1.0 / map_.lambda(); }
  double rate() const { return map_.log_lambda(); }  // exponent per unit time

  Vec2 step(const Vec2& x) const;
  Vec2 step_inverse(const Vec2& x) const;
  Mat2 jacobian(const Vec2& x) const;
  // Lifted image A x + eps s(x) without reduction mod Z^2.
  Vec2 step_lifted(const Vec2& x) const;

  // psi_t; maps require integer t.
  PhasePoint flow(const PhasePoint& p, double t) const;
  double distance(const PhasePoint& a, const PhasePoint& b) const;
  double distance(const Vec2& a, const Vec2& b) const { return map_.distance(a, b); }

  // Largest admissible jump size for shadow_specification, below which the
  // shadow stays inside the expansivity radius.
  double delta0() const { return kind_ == ModelKind::perturbed_cat_map ? 0.05 : 0.1; }
  double eta0() const { return 0.1; }
  double beta0() const { return 0.2; }

 private:
  HyperbolicModel(ModelKind kind, double eps, double roof) : kind_(kind), eps_(eps), roof_(roof) {}

  ModelKind kind_;
  double eps_;
  double roof_;
  CatMap map_;
};

struct HyperbolicityReport {
  double constant = 1.0;  // C in |D psi_n v| <= C exp(-rate n) |v| on stable vectors
  double rate = 0.0;
  int samples = 0;
  int horizon = 0;
};

// Measures the stable contraction along seeded random orbits. Rounding in the
// unstable direction grows like lambda^n, so horizons beyond ~15 lose the
// stable signal in double precision; larger values are rejected.
HyperbolicityReport verify_hyperbolicity(const HyperbolicModel& model, int samples, int horizon, std::uint64_t seed);

struct Bracket {
  PhasePoint point;  // <x, y>
  double v = 0.0;    // time shift
  double bound = 0.0;  // max(|v|, d(x, psi_v x), d(<x,y>, psi_v x), d(<x,y>, y)) / d(x, y)
};

// <x,y> = W^ss(psi_v x) cap W^uu(y). Requires d(x, y) <= eta0. Linear models only.
Bracket canonical_coordinates(const HyperbolicModel& model, const PhasePoint& x, const PhasePoint& y);

struct SpecSegment {
  PhasePoint start;
  double duration = 0.0;  // integer for maps
};

struct SpecificationNumeric {
  std::vector<SpecSegment> segments;
  std::vector<double> jumps;  // jumps[i]: gap between the end of segment i-1 and the start of segment i
  bool periodic = true;
  double min_length = 1.0;

  double delta() const;
  double total_time() const;
};

// Fills in the measured jumps. For a non-periodic specification jumps[0] = 0.
SpecificationNumeric make_specification(const HyperbolicModel& model, std::vector<SpecSegment> segments,
                                        bool periodic, double min_length = 1.0);

struct ShadowResult {
  PhasePoint shadow_point;
  std::vector<Vec2> orbit;             // shadow at integer (base) times over the specification
  std::vector<Vec2> pseudo_orbit;      // specification samples at the same times
  std::vector<double> sigma_t;         // knots of the piecewise linear reparametrization
  std::vector<double> sigma_value;
  double sup_error = 0.0;
  double delta = 0.0;
  double e_measured = 0.0;
  double closure_residual = 0.0;       // max step mismatch of the shadow orbit, cyclic when periodic
  double period = 0.0;                 // shadow period (periodic specifications)
  int newton_iterations = 0;

  double sigma(double t) const;
};

ShadowResult shadow_specification(const HyperbolicModel& model, const SpecificationNumeric& spec);

// Maps only: shadows the pseudo-orbit given by its samples, with jumps between
// f(z_k) and z_{k+1}. Avoids re-iterating long segments, whose rounding grows
// like lambda^n.
ShadowResult shadow_pseudo_orbit(const HyperbolicModel& model, const std::vector<Vec2>& z, bool periodic);

struct ClosenessProfile {
  std::vector<int> times;       // -L..L
  std::vector<double> distance;
  double v = 0.0;
  double decay_rate = 0.0;      // least squares exponent on each monotone side, minimum of the two
  double domination = 0.0;      // max_s distance(s) / (exp(-rate (L - |s|)) (distance(-L) + distance(L)))
  double midpoint = 0.0;
};

ClosenessProfile exponential_closeness(const HyperbolicModel& model, const PhasePoint& x, const PhasePoint& y,
                                       int window);

struct ExpansivityEstimate {
  double alpha = 0.0;
  int pairs = 0;
  int window = 0;
  std::vector<double> ladder;
};

ExpansivityEstimate expansivity_estimate(const HyperbolicModel& model, double eta, int window = 10,
                                         int random_pairs = 2000, std::uint64_t seed = 1);

// Distance profiles sampled at increasing times t_0 < ... < t_n = 0 and
// interpolated linearly.
struct Profile {
  std::vector<double> t;
  std::vector<double> value;
  double at(double time) const;
};

struct EscapeThresholds {
  double near = 0.0;   // C (B + 1) rho
  double exit = 0.0;   // gamma / 3
  double enter = 0.0;  // gamma / 4
};

struct EscapeSegmentation {
  // Index k >= 1 at position k - 1. S_0 = 0 is implicit.
  std::vector<double> s, t, c, b;
  EscapeThresholds thresholds;
};

// f: distance to the whole orbit Gamma, g: distance to the tracked point
// Gamma(v(t)). Requires f <= g and near < enter < exit.
EscapeSegmentation escape_segmentation(const Profile& f, const Profile& g, const EscapeThresholds& th);

// Order relations T_{k+1} <= C_k < S_k <= T_k <= S_{k-1} and f <= exit on
// [S_k, T_k]. Returns the number of violations.
int count_segmentation_violations(const EscapeSegmentation& seg, const Profile& f);

nlohmann::json to_json(const SpecificationNumeric& spec);
SpecificationNumeric specification_from_json(const HyperbolicModel& model, const nlohmann::json& j);
nlohmann::json to_json(const ShadowResult& r);

}  // namespace manelab::shadowing
