#pragma once

#include "manelab/torus.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace manelab::sft {

// Subshift of finite type stored as sorted successor lists, so that coded
// systems with tens of thousands of symbols stay cheap.
class Sft {
 public:
  Sft(int alphabet_size, std::vector<std::vector<int>> successors);

  static Sft from_matrix(const std::vector<std::vector<int>>& transitions);
  static Sft full_shift(int m);

  int size() const { return m_; }
  const std::vector<int>& successors(int a) const { return succ_[a]; }
  bool allowed(int a, int b) const;
  std::size_t edge_count() const;
  std::vector<std::vector<int>> matrix() const;
  std::vector<std::vector<int>> predecessors() const;

 private:
  int m_;
  std::vector<std::vector<int>> succ_;
};

// Drops symbols without successors or predecessors until none remain. Returns
// nullopt when nothing survives (no cycle). kept[i] is the original index of
// new symbol i.
std::optional<Sft> prune(int m, std::vector<std::vector<int>> succ, std::vector<int>* kept = nullptr);

std::vector<std::vector<int>> strongly_connected_components(int m, const std::vector<std::vector<int>>& succ);

struct SymbolicOrbit {
  std::vector<int> word;
  int period() const { return static_cast<int>(word.size()); }
};

bool is_valid_orbit(const Sft& sft, const SymbolicOrbit& orbit);

struct EntropyReport {
  double spectral = 0.0;      // log spectral radius, max over recurrent components
  double word_count = 0.0;    // log(N_n / N_{n/2}) / (n/2), N_n = number of allowed n-words
  int word_length = 0;
  double tolerance = 0.02;    // documented agreement bound on irreducible instances
  bool irreducible = false;
  std::vector<int> component;  // symbols of the component realizing the spectral value
};

double spectral_radius(const Sft& sft, std::vector<int>* component = nullptr);
// log of the number of allowed words of length n, accumulated in log scale.
double log_word_count(const Sft& sft, int n);
EntropyReport entropy(const Sft& sft, int word_length = 24);

double lper_bound(int alphabet_size, double entropy);
SymbolicOrbit shortest_periodic_orbit(const Sft& sft);

// Shift metric d(x, y) = 2^{-n}, n = min{|k| : x_k != y_k}, evaluated on the
// bi-infinite periodic extension of word, comparing the shifts by i and j.
double periodic_shift_distance(const std::vector<int>& word, long i, long j);
int periodic_agreement(const std::vector<int>& word, long i, long j);

struct CodedSystem {
  Sft sft;                             // transitions where the time-2T image of a ball meets the target ball
  std::vector<int> sft_centers;        // center index of each symbol of sft
  std::optional<Sft> literal;          // transitions where the image of the center lies in the target ball
  std::vector<int> literal_centers;
  int centers = 0;                     // spanning set cardinality before pruning
  int horizon = 0;
  double delta = 0.0;
};

// Symbolic system: centers are the allowed words of length 2T + 2r - 1 where
// 2^{-r} is the largest metric value not exceeding delta.
CodedSystem dynamic_ball_transitions(const Sft& system, int horizon, double delta);
// Cat map on the whole torus: centers tile the torus by dynamic balls, which
// are boxes in eigen coordinates.
CodedSystem dynamic_ball_transitions(const CatMap& map, int horizon, double delta);
// Cat map restricted to the Sturmian invariant set, spanning set built greedily
// over `samples` equally spaced phases.
CodedSystem dynamic_ball_transitions(const SturmianSet& set, int horizon, double delta, int samples = 4096);

struct SpecificationSymbolic {
  struct Segment {
    int start_symbol = 0;  // center index in the spanning set
    int length = 0;
  };
  std::vector<Segment> segments;
  int jump_count = 0;               // P_T
  std::vector<double> jump_sizes;   // gap at the middle of each junction
  int period = 0;                   // sum of segment lengths
  int spanning_set_size = 0;
  double decay_rate = 0.0;          // rate used to report decay_constant
  double decay_constant = 0.0;      // max jump * exp(rate * T)
  std::vector<Vec2> start_points;   // toral systems: phase point at the start of each segment
  std::vector<double> start_phases; // Sturmian systems: phase of each segment start
};

SpecificationSymbolic build_periodic_specification(const Sft& system, int horizon, double delta);
SpecificationSymbolic build_periodic_specification(const SturmianSet& set, int horizon, double delta,
                                                   int samples = 4096);

struct DecayFit {
  double rate = 0.0;
  double constant = 0.0;
};
// Least squares fit of log(size) = log(constant) - rate * T.
DecayFit fit_exponential_decay(const std::vector<double>& horizons, const std::vector<double>& sizes);

nlohmann::json to_json(const Sft& sft);
Sft sft_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SpecificationSymbolic& spec);

}  // namespace manelab::sft
