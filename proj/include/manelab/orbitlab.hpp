#pragma once

#include "manelab/ergopt.hpp"
#include "manelab/sft.hpp"
#include "manelab/shadowing.hpp"
#include "manelab/torus.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace manelab::orbitlab {

// Cat map with a Sturmian invariant set standing in for the Aubry set. The
// action of an orbit is the sum of squared distances of its points to the set,
// so it vanishes exactly on the set and grows quadratically away from it.
struct CatTestbed {
  shadowing::HyperbolicModel model = shadowing::HyperbolicModel::cat_map();
  SturmianSet aubry;

  explicit CatTestbed(double alpha = -1.0) : aubry(CatMap(), alpha) {}
  double distance_to_aubry(const Vec2& y) const { return aubry.distance(y); }
};

struct PeriodicOrbitNumeric {
  std::vector<Vec2> points;  // one period, points[k + 1] = f(points[k])
  double period = 0.0;
  double action = 0.0;
  double gap = 0.0;             // min distance between distinct orbit points
  double aubry_distance = 0.0;  // max distance of an orbit point to the Aubry set
  long gap_i = -1, gap_j = -1;
  double closure = 0.0;  // cyclic step residual
};

// Recomputes action, gap and Aubry distance for a closed orbit.
PeriodicOrbitNumeric measure_orbit(const CatTestbed& bed, std::vector<Vec2> points, double closure = 0.0);

PeriodicOrbitNumeric spec_to_periodic_orbit(const CatTestbed& bed, const shadowing::SpecificationNumeric& spec,
                                            shadowing::ShadowResult* shadow = nullptr);

// Periodic numeric specification through the spanning-set cycle of the symbolic one.
shadowing::SpecificationNumeric numeric_specification(const CatTestbed& bed, const sft::SpecificationSymbolic& spec);

// Same pseudo-orbit sampled exactly on the invariant set at every integer time.
std::vector<Vec2> specification_samples(const CatTestbed& bed, const sft::SpecificationSymbolic& spec);

// Periodic cat-map orbits are rational; recovers the exact orbit (rounded to
// double) from a close approximation. Periods up to 40 fit the 128-bit
// arithmetic; nullopt beyond that or when the approximation is not within 1e-9.
std::optional<std::vector<Vec2>> exact_periodic_orbit(const CatMap& map, const std::vector<Vec2>& approx);

// Periodic orbit shadowing a sampled periodic pseudo-orbit; cat-map orbits are
// replaced by their exact representatives.
PeriodicOrbitNumeric shadow_to_periodic_orbit(const CatTestbed& bed, const std::vector<Vec2>& samples,
                                              shadowing::ShadowResult* shadow = nullptr);

struct AlgaWitness {
  bool holds = false;
  long r1 = -1, r2 = -1;  // 0 <= r1 < r2, r2 - r1 <= period / 2 after rotation
  double distance = 0.0;
};

// c < eps gamma and action < eps^2 gamma^2. On failure the witness is the
// closest pair of distinct orbit points, ties by earliest r1.
AlgaWitness alga_check(const PeriodicOrbitNumeric& orbit, double eps);

struct CutResult {
  PeriodicOrbitNumeric orbit;
  bool terminal = false;
  std::string reason;
  double shadow_error = 0.0;
  double jump = 0.0;
  // Profile check: d(Y1(s), Y0(s)) <= profile_constant e^{-lambda min(s - r1, r2 - s)} d(Y0(r1), Y0(r2)).
  double profile_constant = 0.0;
};

// Closes the arc [r1, r2) of the orbit by shadowing it with one jump.
CutResult cut_and_shadow(const CatTestbed& bed, const PeriodicOrbitNumeric& orbit, long r1, long r2,
                         double ratio = 1.25);

// Named proof constants measured on a testbed.
struct ConstantLedger {
  std::map<std::string, double> values;

  double operator[](const std::string& k) const { return values.at(k); }
  // Throws std::logic_error unless every constant is positive and B4 > 4.
  void validate() const;
};

struct LedgerOptions {
  int samples = 200;
  std::uint64_t seed = 1;
  double gronwall_cap = 2.0;
};

ConstantLedger measure_constants(const CatTestbed& bed, double eps, const sft::SpecificationSymbolic& spec,
                                 const LedgerOptions& opt = {});

struct PalgaOptions {
  double delta = 0.1;  // spanning-set radius
  double ratio = 1.25;  // R
  double gronwall_cap = 2.0;
  int max_rounds = 64;
};

struct PalgaRound {
  int round = 0;
  long period = 0;
  double action = 0.0;
  double gap = 0.0;
  double aubry_distance = 0.0;
  long r1 = -1, r2 = -1;  // witness, when the round cut the orbit
  double witness_distance = 0.0;
  double shadow_error = 0.0;
  double c_bound = 0.0;        // c(Y_0) + accumulated shadow errors
  double action_bound = 0.0;   // B4^{2n} A1(T)
  std::string replacement;     // junction replacement applied in this round, if any
};

struct PalgaResult {
  PeriodicOrbitNumeric orbit;
  bool satisfied = false;
  bool terminal = false;
  std::string diagnostic;
  int horizon = 0;
  int jump_count = 0;  // P_T
  long initial_period = 0;
  std::vector<PalgaRound> log;
  ConstantLedger ledger;
};

PalgaResult palga_pipeline(const CatTestbed& bed, double eps, int horizon, const PalgaOptions& opt = {});

// Symbolic version on a window potential: class-I search with independent re-verification.
struct DiscretePalga {
  ergopt::ClassOneResult<ergopt::Rational> search;
  bool verified = false;
  double round_bound = 0.0;  // log_{5/4}(initial period)
};

DiscretePalga palga_pipeline(const ergopt::EdgePotential<ergopt::Rational>& f, const ergopt::Rational& eps);

nlohmann::json to_json(const PalgaResult& r);
nlohmann::json to_json(const ConstantLedger& l);

}  // namespace manelab::orbitlab
