#pragma once

#include "manelab/lagrangian.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace manelab::weakkam {

using lagrangian::Curve;
using lagrangian::LagrangianModel;
using lagrangian::Potential;
using lagrangian::Vec2;

struct GraphOptions {
  int n = 200;       // nodes per dimension
  int stencil = -1;  // max jump in cells per coordinate; -1 picks 32 (d = 1) or 4 (d = 2)
  std::vector<double> menu = {0.05, 0.1, 0.2, 0.4};
};

// Grid nodes on T^d joined by straight segments of at most `stencil` cells
// traversed in a menu time dt. Edge weights are the segment action of L + k,
// base + k dt.
class ActionGraph {
 public:
  struct Edge {
    int from, to;
    double dt;
    double base;
    Vec2 disp;  // lifted displacement
  };

  ActionGraph(const LagrangianModel& model, const GraphOptions& opt = {});

  const LagrangianModel& model() const { return model_; }
  int dim() const { return model_.dim; }
  int n() const { return n_; }
  int nodes() const { return nodes_; }
  int stencil() const { return stencil_; }
  double spacing() const { return h_; }
  const std::vector<double>& menu() const { return menu_; }
  double dt_min() const { return dt_min_; }
  double dt_max() const { return dt_max_; }

  Vec2 position(int node) const;
  int node_at(const Vec2& x) const;  // nearest node
  const std::vector<Edge>& edges() const { return edges_; }
  // Edges out of a node are edges()[out_begin(a) .. out_begin(a + 1)).
  int out_begin(int a) const { return out_[a]; }
  const std::vector<int>& in_edges(int b) const { return in_[b]; }
  double weight(const Edge& e, double k) const { return e.base + k * e.dt; }

  // Action gap between a node at a maximum of U and its half-cell neighbour
  // over the shortest menu time; the scale below which cycles are not
  // distinguished.
  double action_resolution() const { return resolution_; }
  // Bound on |c(graph) - c(L)| from the node spacing.
  double discretization_estimate() const { return estimate_; }
  // Slowest nonzero grid speed h / dt_max.
  double speed_resolution() const { return h_ / dt_max_; }

 private:
  LagrangianModel model_;
  int n_, nodes_, stencil_;
  double h_, dt_min_, dt_max_;
  std::vector<double> menu_;
  std::vector<Edge> edges_;
  std::vector<int> out_;
  std::vector<std::vector<int>> in_;
  double resolution_ = 0.0, estimate_ = 0.0;
};

struct NegativeCycle {
  std::vector<int> edges;  // closed edge sequence
  double k = 0.0;
  double cost = 0.0;  // at level k
  double time = 0.0;
  double mean_action() const;  // (sum of base) / time, i.e. mean of L
};

// Shortest paths with at least one edge from `source` at level k. Nodes whose
// value is minus infinity (a negative cycle is reachable from the source and
// reaches them) are flagged, with one such cycle as certificate.
struct PathTree {
  std::vector<double> dist;
  std::vector<int> pred;  // edge index, -1 if unreachable
  std::vector<char> minus_infinity;
  NegativeCycle certificate;
  bool has_negative_cycle = false;
};

PathTree shortest_paths_from(const ActionGraph& g, double k, int source);
// Reverse direction: dist[x] = Phi_k(x, target).
PathTree shortest_paths_to(const ActionGraph& g, double k, int target);

struct PotentialValue {
  double value = 0.0;
  bool minus_infinity = false;
  NegativeCycle certificate;
};

PotentialValue mane_potential(const ActionGraph& g, double k, const Vec2& x, const Vec2& y);

struct CriticalValue {
  double value = 0.0;        // no negative cycle at this level
  double lower = 0.0;        // mean action certificate: c >= lower
  double bracket = 0.0;      // final bisection width
  double estimate = 0.0;     // discretization estimate against the continuous value
  NegativeCycle certificate; // negative at value - bracket
  int iterations = 0;
};

CriticalValue critical_value(const ActionGraph& g, double tolerance = 1e-10);

class BelowCritical : public std::runtime_error {
 public:
  BelowCritical(double k, double rate);
  double k, rate;  // value drift per unit time along a negative cycle
};

// Finds a negative cycle at level k, if any.
std::optional<NegativeCycle> negative_cycle(const ActionGraph& g, double k);

struct ValueField {
  int dim = 1;
  int n = 0;
  double h = 0.0;
  double c = 0.0;
  std::vector<double> values;
  std::vector<int> seeds;  // nodes on zero-action cycles where u = 0
  int passes = 0;
  double residual = 0.0;   // fixed-point residual
  double domination_violation = 0.0;  // max over edges of u(b) - u(a) - w
};

// Value iteration u <- min(u, u(a) + w_c(a, b)) from u = 0 on the nodes of
// zero-action cycles. Throws BelowCritical when level c admits a negative cycle.
ValueField lax_oleinik(const ActionGraph& g, double c);
// Backward field u(x) = min over seeds of Phi_c(x, seed).
ValueField lax_oleinik_backward(const ActionGraph& g, double c);

double domination_fraction(const ActionGraph& g, const ValueField& u, double tol = 1e-9);

enum class SetKind { mather, aubry, mane };
std::string to_string(SetKind k);

// Phase cells (ix, iv): ix a node, iv = round(v / dv) + nv / 2 with dv the
// grid speed resolution.
struct PhaseCell {
  int ix = 0, iv = 0;
  auto operator<=>(const PhaseCell&) const = default;
};

struct InvariantSetApprox {
  SetKind kind = SetKind::aubry;
  std::vector<PhaseCell> cells;  // sorted, unique
  double tolerance = 0.0;
  bool contains(const PhaseCell& c) const;
};

struct PhaseGrid {
  int nx = 0, nv = 0;
  double h = 0.0, dv = 0.0;
  double x(int ix) const { return h * ix; }
  double v(int iv) const { return dv * (iv - nv / 2); }
  int cell_v(double v) const;
};

struct SetTriple {
  PhaseGrid grid;
  InvariantSetApprox mather, aubry, mane;
  std::vector<double> barrier;  // Phi_c(x, x) per node
};

// One-dimensional models only. Mather: edges of zero-action cycles. Aubry:
// nodes with Phi_c(x, x) within 3 action resolutions, with the edges of their
// near-zero cycles. Mane: calibrated edges of the forward and backward
// fields, velocity from the difference quotient of the field.
SetTriple classify_and_extract_sets(const ActionGraph& g, double c, const ValueField& u, int nv = 200);

// Cells of `sub` farther than `slack` cells (sup norm) from every cell of `super`.
int inclusion_violations(const InvariantSetApprox& sub, const InvariantSetApprox& super, int slack = 0);
// Largest distance in cells from a flagged cell to the energy level E = c.
double energy_level_distance(const LagrangianModel& m, double c, const PhaseGrid& grid,
                             const InvariantSetApprox& set);
// Largest cell distance from the flow of each cell centre after `time` to the set.
double flow_invariance_distance(const LagrangianModel& m, const PhaseGrid& grid, const InvariantSetApprox& set,
                                double time, double step = 1e-3);

struct QuadraticBound {
  double K = 0.0;
  int samples = 0;
};

// sup over grid nodes y with inner <= |y - z| <= radius of
// |u(y) - u(z) - p (y - z)| / |y - z|^2, p = d_v L at the static state. The
// inner radius (default radius / 4) skips speeds below the grid resolution.
QuadraticBound quadratic_bound_check(const ActionGraph& g, const ValueField& u, const Vec2& z, const Vec2& zdot,
                                     double radius, double inner = -1.0);

struct CrossingConstants {
  double eps = 0.1, delta = 0.5, eta = 0.0, zeta = 1.0, C = 2.0;
  void validate() const;  // throws unless C > 1 and all positive
};

struct CrossingResult {
  bool accepted = false;
  std::string rejection;  // which precondition failed
  double gain = 0.0;
  double angle = 0.0;     // phase distance of the tangents at t0
  double distance = 0.0;  // distance of the positions at t0
  double eta = 0.0;       // gain / angle^2
  Curve a, c;             // exchange curves on [t0 - eps, t0 + eps]
};

// Exchange curves over [t0 - eps, t0 + eps]: a runs along the chord from
// alpha(t0 - eps) to gamma(t0 + eps) carrying the linearly blended deviations
// of alpha and gamma from their own chords, and c symmetrically. Gain is the
// action surplus of alpha, gamma over a, c for L + phi.
CrossingResult crossing_gain(const LagrangianModel& model, const Potential& phi, const Curve& alpha,
                             const Curve& gamma, double t0, const CrossingConstants& k);

struct SecondOrderReport {
  bool holds = false;
  double K = 0.0;
  double rho = 0.0;
  double bound = 0.0;             // K (1 + T) rho^2
  double quadruple_bound = 0.0;   // 3 K (1 + T) rho^2
  std::vector<double> residuals;  // |A(z) - A(x) - [d_v L (z - x)]_0^T|
  std::vector<double> quadruple;  // |A(x) + A(z) - A(w1) - A(w2)|
};

// K = 8 max(1, sup |D^2 U|) bounds the second-order remainder on the 4 rho
// phase tube. Curves share the reference time grid and carry velocities.
// Throws std::domain_error when a curve leaves the tube.
SecondOrderReport second_order_action_bound(const LagrangianModel& model, const Curve& reference,
                                            const std::vector<Curve>& nearby, double rho);

struct ChannelOptions {
  int dim = 2;
  int n = 400;           // finite-difference grid per dimension
  bool polyline = false; // distance to the closed polyline instead of the point set
};

// Smooth channel phi = (eps / 2) R^2 sigma(r / R), R = gamma_bar / 4, r the
// distance to the projected orbit; sigma(t) = t^2 up to t = 1/2, then a
// quintic that reaches 1 at t = 1 with zero first and second derivatives.
class ContinuousChannel {
 public:
  ContinuousChannel(std::vector<Vec2> orbit, double eps, double rho, double gamma_bar, const ChannelOptions& opt = {});

  double value(const Vec2& x) const;
  Vec2 gradient(const Vec2& x) const;
  lagrangian::Mat2 hessian(const Vec2& x) const;
  Potential as_potential() const;
  double distance(const Vec2& x) const;

  double plateau() const { return eps_ * gamma_bar_ * gamma_bar_ / 32.0; }
  double floor() const { return 0.25 * eps_ * rho_ * rho_; }  // required beyond distance rho
  double eps() const { return eps_; }
  double rho() const { return rho_; }
  double gamma_bar() const { return gamma_bar_; }
  const std::vector<Vec2>& orbit() const { return orbit_; }

  // Finite-difference grid and its C^2 norm max(|phi|, |D phi|, |D^2 phi|).
  std::vector<double> grid_values() const;
  double c2_norm() const;

 private:
  std::pair<double, Vec2> nearest(const Vec2& x) const;  // distance and displacement to the nearest orbit point

  std::vector<Vec2> orbit_;
  double eps_, rho_, gamma_bar_;
  ChannelOptions opt_;
};

// gamma_bar = gamma / (3 C (B + 1)).
double channel_gamma_bar(double gamma, double C, double B);
// Minimum torus distance between distinct orbit points.
double orbit_gap(const std::vector<Vec2>& orbit, int dim);

ContinuousChannel build_channel_continuous(const std::vector<Vec2>& orbit, double eps, double rho, double gamma_bar,
                                           const ChannelOptions& opt = {});

// Actions of L + c along `count` seeded random closed grid curves.
std::vector<double> closed_curve_actions(const ActionGraph& g, double c, int count, std::uint64_t seed);

std::string field_csv(const ActionGraph& g, const ValueField& u);
std::string sets_csv(const SetTriple& s);
nlohmann::json to_json(const CriticalValue& c);

}  // namespace manelab::weakkam
