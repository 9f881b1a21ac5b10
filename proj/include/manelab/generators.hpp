#pragma once

#include "manelab/ergopt.hpp"
#include "manelab/sft.hpp"
#include "manelab/shadowing.hpp"

#include <optional>
#include <random>
#include <utility>
#include <vector>

// Seeded instance generators shared by the experiment runner.
namespace manelab::generators {

// Random 0/1 matrix with 1 <= M <= max_m and a random density; nullopt when a
// symbol is stranded.
std::optional<sft::Sft> random_sft(std::mt19937_64& rng, int max_m);

// Window 2 potential on a random subshift with costs k / 8, k in [0, 16].
// Retries until the subshift is valid.
ergopt::EdgePotential<ergopt::Rational> random_window_potential(std::mt19937_64& rng, int max_m);

// Orbit of a random cat-map point of period dividing n (n <= 12), exact in
// integers modulo |det(A^n - I)|.
std::vector<Vec2> periodic_cat_orbit(std::mt19937_64& rng, int n);

// Periodic delta-pseudo-orbit of length n along a period-8 orbit: segments of
// random length 4..12 with start displacements that stay below delta / 2.
shadowing::SpecificationNumeric random_pseudo_orbit(const shadowing::HyperbolicModel& m, std::mt19937_64& rng, int n,
                                                    double delta);

// Distance profiles f <= g on [-20, 0] with n + 1 samples.
std::pair<shadowing::Profile, shadowing::Profile> random_profiles(std::mt19937_64& rng, int n);

}  // namespace manelab::generators
