#pragma once

#include "manelab/sft.hpp"

#include <boost/multiprecision/cpp_int.hpp>
#include <json.hpp>

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace manelab::ergopt {

using Rational = boost::multiprecision::cpp_rational;

// Costs on allowed words of length `window`. The walk on (window-1)-words
// pays values[w] for each step along the window w.
template <class Num>
struct EdgePotential {
  sft::Sft sft = sft::Sft::full_shift(1);
  int window = 2;
  std::map<std::vector<int>, Num> values;
};

// Graph whose vertices are the allowed (window-1)-words.
template <class Num>
struct WindowGraph {
  struct Edge {
    int to;
    Num cost;
  };
  int window = 2;
  std::vector<std::vector<int>> words;
  std::map<std::vector<int>, int> index;
  std::vector<std::vector<Edge>> out;

  int size() const { return static_cast<int>(words.size()); }
  // Symbol word of a vertex cycle: the last symbol of each vertex.
  sft::SymbolicOrbit orbit_of(const std::vector<int>& cycle) const;
  // Vertex cycle of a periodic symbol word; throws if a window is not allowed.
  std::vector<int> cycle_of(const sft::SymbolicOrbit& orbit) const;
};

template <class Num>
WindowGraph<Num> window_graph(const EdgePotential<Num>& f);

template <class Num>
struct CycleMeasure {
  sft::SymbolicOrbit cycle;
  std::vector<int> vertices;
  Num mean{};
};

struct NegativeCycleError : std::runtime_error {
  NegativeCycleError(const std::string& what, std::vector<int> c) : std::runtime_error(what), cycle(std::move(c)) {}
  std::vector<int> cycle;  // vertex cycle of negative reduced cost
};

template <class Num>
CycleMeasure<Num> min_mean_cycle(const EdgePotential<Num>& f);

// Phi(a, b): cheapest path with at least one edge in costs f - m; nullopt
// when b is unreachable from a.
template <class Num>
struct ManePotential {
  std::vector<std::vector<std::optional<Num>>> phi;
  int size() const { return static_cast<int>(phi.size()); }
};

template <class Num>
ManePotential<Num> discrete_mane_potential(const EdgePotential<Num>& f, const Num& m);

struct DiscreteAubry {
  std::vector<int> vertices;                    // sorted vertex indices
  std::vector<std::pair<int, int>> tight_edges;  // edges on zero reduced cost cycles
  std::vector<std::vector<int>> words;          // window graph vertex words, for lookups
  int window = 2;

  bool contains_vertex(int v) const;
  bool has_edge(int a, int b) const;
};

template <class Num>
DiscreteAubry discrete_aubry(const EdgePotential<Num>& f, const Num& m);

template <class Num>
struct SubAction {
  std::vector<Num> values;  // indexed by window graph vertex
  int passes = 0;
};

template <class Num>
SubAction<Num> sub_action(const EdgePotential<Num>& f, const Num& m);

template <class Num>
struct OrbitMetrics {
  double gap = 1.0;            // gamma(Gamma); 1 for fixed points (no pairs at distinct times)
  double aubry_distance = 0.0;  // max over orbit points of the shift distance to the Aubry subshift
  Num action{};                // sum over the cycle of f - m
  long gap_i = -1, gap_j = -1;  // a pair realizing the gap
};

template <class Num>
OrbitMetrics<Num> orbit_metrics(const sft::SymbolicOrbit& orbit, const EdgePotential<Num>& f, const Num& m,
                                const DiscreteAubry& aubry);

template <class Num>
bool alga_holds(const OrbitMetrics<Num>& metrics, const Num& eps);

struct SearchRound {
  int period = 0;
  double gap = 0.0;
  double aubry_distance = 0.0;
  double action = 0.0;
  long witness_i = -1, witness_j = -1;
};

template <class Num>
struct ClassOneResult {
  sft::SymbolicOrbit orbit;
  OrbitMetrics<Num> metrics;
  bool satisfied = false;
  int rounds = 0;
  int initial_period = 0;
  std::string diagnostic;
  std::vector<SearchRound> log;
};

// Cut-and-close search for a periodic orbit with c < eps gamma and
// action < eps^2 gamma^2, starting from tight cycles of every Aubry component
// joined by shortest connecting paths, each traversed for at least `horizon` steps.
template <class Num>
ClassOneResult<Num> class_one_search(const EdgePotential<Num>& f, const Num& eps, int horizon = 4);

template <class Num>
struct Channel {
  EdgePotential<Num> phi;  // on windows of length phi.window
  Num eps{};
  double rho = 0.0;
  double gamma_bar = 0.0;
};

// Default radii for an orbit of gap g: gamma_bar = g, rho = g / 8.
struct ChannelRadii {
  double rho;
  double gamma_bar;
};
ChannelRadii default_channel_radii(double gap);

// phi(u) = eps/2 min(d(u), gamma_bar/4)^2 where d is the centered window
// distance of u to the orbit; zero exactly on windows of the orbit.
template <class Num>
Channel<Num> build_channel_discrete(const sft::Sft& sft, const sft::SymbolicOrbit& orbit, const Num& eps, double rho,
                                    double gamma_bar, int min_window = 2);

// Potential on windows of length `window` >= f.window charging f on the last f.window symbols.
template <class Num>
EdgePotential<Num> lift(const EdgePotential<Num>& f, int window);

template <class Num>
EdgePotential<Num> add(const EdgePotential<Num>& f, const EdgePotential<Num>& g);

template <class Num>
struct LockingReport {
  bool locked = false;
  Num orbit_mean{};
  Num min_mean{};
  std::vector<sft::SymbolicOrbit> competitors;  // cycles with mean <= the orbit's, other than the orbit
};

template <class Num>
LockingReport<Num> verify_locking(const EdgePotential<Num>& f, const Channel<Num>& channel,
                                  const sft::SymbolicOrbit& orbit);

bool same_cycle(const sft::SymbolicOrbit& a, const sft::SymbolicOrbit& b);

double to_double(const Rational& x);
inline double to_double(double x) { return x; }
std::string to_string(const Rational& x);

nlohmann::json to_json(const EdgePotential<Rational>& f);
EdgePotential<Rational> rational_potential_from_json(const nlohmann::json& j);
EdgePotential<double> to_double(const EdgePotential<Rational>& f);

}  // namespace manelab::ergopt
