#include "manelab/generators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace manelab::generators {

std::optional<sft::Sft> random_sft(std::mt19937_64& rng, int max_m) {
  std::uniform_int_distribution<int> msize(1, max_m);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int m = msize(rng);
  const double p = 0.15 + 0.5 * unit(rng);
  std::vector<std::vector<int>> t(m, std::vector<int>(m, 0));
  for (auto& row : t)
    for (auto& x : row) x = unit(rng) < p ? 1 : 0;
  for (int a = 0; a < m; ++a) {
    bool row = false, col = false;
    for (int b = 0; b < m; ++b) {
      row = row || t[a][b];
      col = col || t[b][a];
    }
    if (!row || !col) return std::nullopt;
  }
  return sft::Sft::from_matrix(t);
}

ergopt::EdgePotential<ergopt::Rational> random_window_potential(std::mt19937_64& rng, int max_m) {
  std::optional<sft::Sft> s;
  while (!s) s = random_sft(rng, max_m);
  std::uniform_int_distribution<int> k(0, 16);
  ergopt::EdgePotential<ergopt::Rational> f;
  f.sft = *s;
  for (int a = 0; a < s->size(); ++a)
    for (int b : s->successors(a)) f.values[{a, b}] = ergopt::Rational(k(rng), 8);
  return f;
}

std::vector<Vec2> periodic_cat_orbit(std::mt19937_64& rng, int n) {
  if (n < 1 || n > 12) throw std::invalid_argument("periodic_cat_orbit: period must be in [1, 12]");
  long m00 = 1, m01 = 0, m10 = 0, m11 = 1;
  for (int i = 0; i < n; ++i) {
    const long a = 2 * m00 + m10, b = 2 * m01 + m11, c = m00 + m10, d = m01 + m11;
    m00 = a, m01 = b, m10 = c, m11 = d;
  }
  m00 -= 1, m11 -= 1;
  const long q = std::labs(m00 * m11 - m01 * m10);
  // Points of period dividing n are the solutions of (A^n - I) p = 0 mod q on the grid Z^2 / q.
  std::vector<std::pair<long, long>> pts;
  for (long a = 0; a < q; ++a)
    for (long b = 0; b < q; ++b)
      if ((m00 * a + m01 * b) % q == 0 && (m10 * a + m11 * b) % q == 0 && (a != 0 || b != 0)) pts.emplace_back(a, b);
  std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
  auto [a, b] = pts[pick(rng)];
  std::vector<Vec2> orbit;
  for (int k = 0; k < n; ++k) {
    orbit.emplace_back(static_cast<double>(a) / q, static_cast<double>(b) / q);
    const long a2 = (2 * a + b) % q, b2 = (a + b) % q;
    a = a2, b = b2;
  }
  return orbit;
}

shadowing::SpecificationNumeric random_pseudo_orbit(const shadowing::HyperbolicModel& m, std::mt19937_64& rng, int n,
                                                    double delta) {
  const auto base = periodic_cat_orbit(rng, 8);
  const CatMap& a = m.linear();
  std::uniform_int_distribution<int> len(4, 12);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  std::vector<shadowing::SpecSegment> segs;
  int t = 0;
  while (t < n) {
    int l = std::min(len(rng), n - t);
    if (n - t - l > 0 && n - t - l < 4) l = n - t;
    const double u = 0.5 * delta * std::pow(a.lambda(), -l) * sym(rng);
    const double s = 0.5 * delta * sym(rng);
    segs.push_back({{wrap(base[t % 8] + a.from_eigen(u, s)), 0.0}, static_cast<double>(l)});
    t += l;
  }
  return shadowing::make_specification(m, std::move(segs), true);
}

std::pair<shadowing::Profile, shadowing::Profile> random_profiles(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  shadowing::Profile f, g;
  double level = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double t = -20.0 + 20.0 * i / n;
    level = std::clamp(level + 0.2 * (unit(rng) - 0.5), 0.0, 0.6);
    if (unit(rng) < 0.1) level = 0.6 * unit(rng);
    const double gv = (i == n) ? 0.01 * unit(rng) : level;
    f.t.push_back(t);
    g.t.push_back(t);
    g.value.push_back(gv);
    f.value.push_back(gv * (0.3 + 0.7 * unit(rng)));
  }
  return {f, g};
}

}  // namespace manelab::generators
