#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "manelab/ergopt.hpp"
#include "test_support.hpp"

#include <climits>
#include <deque>
#include <functional>
#include <optional>
#include <cmath>
#include <random>
#include <set>

using namespace manelab;
using namespace manelab::ergopt;
using sft::Sft;
using sft::SymbolicOrbit;

namespace {

using Q = Rational;

EdgePotential<Q> potential(const Sft& s, const std::map<std::pair<int, int>, Q>& costs) {
  EdgePotential<Q> f;
  f.sft = s;
  f.window = 2;
  for (const auto& [e, c] : costs) f.values[{e.first, e.second}] = c;
  return f;
}

// Random instance with window 2 and costs k/8, k in [0, 16].
std::optional<EdgePotential<Q>> random_instance(std::mt19937_64& rng, int max_m) {
  auto s = testing::random_sft(rng, max_m);
  if (!s) return std::nullopt;
  std::uniform_int_distribution<int> k(0, 16);
  EdgePotential<Q> f;
  f.sft = *s;
  for (int a = 0; a < s->size(); ++a)
    for (int b : s->successors(a)) f.values[{a, b}] = Q(k(rng), 8);
  return f;
}

// Window 2: vertices are symbols. All simple cycles, by DFS from their least vertex.
std::vector<std::vector<int>> simple_cycles(const Sft& s) {
  std::vector<std::vector<int>> out;
  const int m = s.size();
  std::vector<int> path;
  std::vector<char> used(m, 0);
  std::function<void(int, int)> dfs = [&](int start, int v) {
    for (int b : s.successors(v)) {
      if (b == start) out.push_back(path);
      else if (b > start && !used[b]) {
        used[b] = 1;
        path.push_back(b);
        dfs(start, b);
        path.pop_back();
        used[b] = 0;
      }
    }
  };
  for (int a = 0; a < m; ++a) {
    path = {a};
    used[a] = 1;
    dfs(a, a);
    used[a] = 0;
  }
  return out;
}

Q cycle_cost(const EdgePotential<Q>& f, const std::vector<int>& c) {
  Q sum = 0;
  for (std::size_t i = 0; i < c.size(); ++i) sum += f.values.at({c[i], c[(i + 1) % c.size()]});
  return sum;
}

Q enumerated_min_mean(const EdgePotential<Q>& f) {
  std::optional<Q> best;
  for (const auto& c : simple_cycles(f.sft)) {
    const Q mean = cycle_cost(f, c) / Q(static_cast<long>(c.size()));
    if (!best || mean < *best) best = mean;
  }
  return *best;
}

// Bellman-Ford from every source, independent of Floyd-Warshall.
std::vector<std::vector<std::optional<Q>>> bellman_ford_barriers(const EdgePotential<Q>& f, const Q& m) {
  const int n = f.sft.size();
  std::vector<std::vector<std::optional<Q>>> phi(n, std::vector<std::optional<Q>>(n));
  for (int a = 0; a < n; ++a) {
    auto& d = phi[a];
    for (int b : f.sft.successors(a)) {
      const Q c = f.values.at({a, b}) - m;
      if (!d[b] || c < *d[b]) d[b] = c;
    }
    for (int pass = 0; pass < n; ++pass)
      for (int u = 0; u < n; ++u) {
        if (!d[u]) continue;
        for (int v : f.sft.successors(u)) {
          const Q c = *d[u] + f.values.at({u, v}) - m;
          if (!d[v] || c < *d[v]) d[v] = c;
        }
      }
  }
  return phi;
}

// Gap by comparing the two shifted periodic sequences symbol by symbol.
double brute_gap(const std::vector<int>& w) {
  const long p = static_cast<long>(w.size());
  if (p < 2) return 1.0;
  auto at = [&](long k) { return w[((k % p) + p) % p]; };
  double gap = 1.0;
  for (long i = 0; i < p; ++i)
    for (long j = i + 1; j < p; ++j) {
      long n = 0;
      while (n <= 2 * p && at(i + n) == at(j + n) && at(i - n) == at(j - n)) ++n;
      if (n > 2 * p) continue;
      gap = std::min(gap, std::ldexp(1.0, -static_cast<int>(n)));
    }
  return gap;
}

// Distance to the Aubry subshift using the edges of the enumerated zero-mean cycles.
double brute_aubry_distance(const std::vector<int>& w, const std::set<std::pair<int, int>>& edges,
                            const std::set<int>& vertices) {
  const long p = static_cast<long>(w.size());
  auto at = [&](long k) { return w[((k % p) + p) % p]; };
  auto is_path = [&](long t, long n) {
    for (long k = -(n - 1); k <= n - 1; ++k) {
      if (!vertices.count(at(t + k))) return false;
      if (k < n - 1 && !edges.count({at(t + k), at(t + k + 1)})) return false;
    }
    return true;
  };
  double c = 0.0;
  for (long t = 0; t < p; ++t) {
    long n = 0;
    while (n < 3 * p + 4 && is_path(t, n + 1)) ++n;
    if (n < 3 * p + 4) c = std::max(c, std::ldexp(1.0, -static_cast<int>(n)));
  }
  return c;
}

// Symbols strictly between `from` and `to` on a shortest path, or nullopt.
std::optional<std::vector<int>> shortest_cycle_back(const Sft& s, int from, int to) {
  std::vector<int> parent(s.size(), -2);
  std::deque<int> q{from};
  parent[from] = -1;
  while (!q.empty()) {
    const int u = q.front();
    q.pop_front();
    for (int v : s.successors(u)) {
      if (v == to) {
        std::vector<int> path;
        for (int x = u; x != from; x = parent[x]) path.push_back(x);
        std::reverse(path.begin(), path.end());
        return path;
      }
      if (parent[v] == -2) {
        parent[v] = u;
        q.push_back(v);
      }
    }
  }
  return std::nullopt;
}

const Sft golden = Sft::from_matrix({{1, 1}, {1, 0}});

}  // namespace

TEST_CASE("min mean cycle: elementary graphs") {
  const auto loop = potential(Sft::from_matrix({{1}}), {{{0, 0}, 3}});
  const auto r = min_mean_cycle(loop);
  CHECK(r.mean == 3);
  CHECK(r.cycle.word == std::vector<int>{0});

  const auto two = potential(Sft::from_matrix({{1, 0}, {0, 1}}), {{{0, 0}, 1}, {{1, 1}, 2}});
  const auto t = min_mean_cycle(two);
  CHECK(t.mean == 1);
  CHECK(t.cycle.word == std::vector<int>{0});
}

TEST_CASE("min mean cycle matches exhaustive cycle enumeration") {
  std::mt19937_64 rng(11);
  int done = 0;
  while (done < 200) {
    auto f = random_instance(rng, 8);
    if (!f) continue;
    ++done;
    const Q oracle = enumerated_min_mean(*f);
    const auto r = min_mean_cycle(*f);
    REQUIRE(r.mean == oracle);
    const Q recomputed = cycle_cost(*f, r.cycle.word) / Q(r.cycle.period());
    CHECK(recomputed == r.mean);
    CHECK(sft::is_valid_orbit(f->sft, r.cycle));
    const auto d = min_mean_cycle(to_double(*f));
    CHECK(d.mean == doctest::Approx(to_double(oracle)).epsilon(1e-12));
  }
}

TEST_CASE("reduced cycle costs are nonnegative") {
  std::mt19937_64 rng(12);
  int done = 0;
  while (done < 100) {
    auto f = random_instance(rng, 8);
    if (!f) continue;
    ++done;
    const Q m = min_mean_cycle(*f).mean;
    for (const auto& c : simple_cycles(f->sft)) CHECK(cycle_cost(*f, c) - m * Q(long(c.size())) >= 0);
  }
}

TEST_CASE("barriers: oracle agreement, triangle inequality and the Aubry diagonal") {
  std::mt19937_64 rng(13);
  int done = 0;
  while (done < 100) {
    auto f = random_instance(rng, 8);
    if (!f) continue;
    ++done;
    const auto best = min_mean_cycle(*f);
    const Q m = best.mean;
    const auto mp = discrete_mane_potential(*f, m);
    const auto oracle = bellman_ford_barriers(*f, m);
    const int n = f->sft.size();
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) REQUIRE(mp.phi[a][b] == oracle[a][b]);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c)
          if (mp.phi[a][b] && mp.phi[b][c]) {
            REQUIRE(mp.phi[a][c]);
            CHECK(*mp.phi[a][c] <= *mp.phi[a][b] + *mp.phi[b][c]);
          }
    const auto aubry = discrete_aubry(*f, m);
    for (int a = 0; a < n; ++a) {
      if (!mp.phi[a][a]) continue;
      CHECK(*mp.phi[a][a] >= 0);
      CHECK((*mp.phi[a][a] == 0) == aubry.contains_vertex(a));
    }
    for (int a : best.vertices)
      for (int b : best.vertices) CHECK(*mp.phi[a][b] + *mp.phi[b][a] == 0);
  }
}

TEST_CASE("barriers: a value below the minimal mean exposes a negative cycle") {
  const auto two = potential(Sft::from_matrix({{1, 1}, {1, 1}}), {{{0, 0}, 2}, {{0, 1}, 1}, {{1, 0}, 1}, {{1, 1}, 3}});
  CHECK(min_mean_cycle(two).mean == 1);
  try {
    discrete_mane_potential(two, Q(3, 2));
    FAIL("expected a negative cycle");
  } catch (const NegativeCycleError& e) {
    const auto g = window_graph(two);
    REQUIRE_FALSE(e.cycle.empty());
    const Q cost = cycle_cost(two, g.orbit_of(e.cycle).word);
    CHECK(cost < Q(3, 2) * Q(long(e.cycle.size())));
  }
  const auto loop = potential(Sft::from_matrix({{1}}), {{{0, 0}, 5}});
  CHECK(*discrete_mane_potential(loop, Q(5)).phi[0][0] == 0);
}

TEST_CASE("Aubry set equals the union of zero reduced cost cycles") {
  std::mt19937_64 rng(14);
  int done = 0;
  while (done < 150) {
    auto f = random_instance(rng, 8);
    if (!f) continue;
    ++done;
    const Q m = min_mean_cycle(*f).mean;
    std::set<int> vertices;
    std::set<std::pair<int, int>> edges;
    for (const auto& c : simple_cycles(f->sft))
      if (cycle_cost(*f, c) == m * Q(long(c.size())))
        for (std::size_t i = 0; i < c.size(); ++i) {
          vertices.insert(c[i]);
          edges.insert({c[i], c[(i + 1) % c.size()]});
        }
    const auto a = discrete_aubry(*f, m);
    CHECK(std::set<int>(a.vertices.begin(), a.vertices.end()) == vertices);
    CHECK(std::set<std::pair<int, int>>(a.tight_edges.begin(), a.tight_edges.end()) == edges);

    // Minimizing support inside the Aubry set inside the two-way reachable set.
    const auto best = min_mean_cycle(*f);
    const auto mp = discrete_mane_potential(*f, m);
    for (int v : best.vertices) CHECK(a.contains_vertex(v));
    for (int v : a.vertices) CHECK(mp.phi[v][v].has_value());
  }
}

TEST_CASE("Aubry set: elementary cases") {
  const auto unique = potential(golden, {{{0, 0}, 0}, {{0, 1}, 1}, {{1, 0}, 1}});
  auto a = discrete_aubry(unique, Q(0));
  CHECK(a.vertices == std::vector<int>{0});

  const auto tie = potential(Sft::from_matrix({{1, 1}, {1, 1}}), {{{0, 0}, 1}, {{0, 1}, 4}, {{1, 0}, 4}, {{1, 1}, 1}});
  a = discrete_aubry(tie, min_mean_cycle(tie).mean);
  CHECK(a.vertices == std::vector<int>{0, 1});
  CHECK(a.tight_edges == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});

  EdgePotential<Q> zero;
  zero.sft = Sft::full_shift(3);
  zero.window = 3;
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y)
      for (int z = 0; z < 3; ++z) zero.values[{x, y, z}] = 0;
  a = discrete_aubry(zero, Q(0));
  CHECK(a.vertices.size() == 9);
}

TEST_CASE("sub-actions dominate and calibrate") {
  std::mt19937_64 rng(15);
  int done = 0;
  while (done < 150) {
    auto f = random_instance(rng, 8);
    if (!f) continue;
    ++done;
    const auto best = min_mean_cycle(*f);
    const auto u = sub_action(*f, best.mean);
    const auto g = window_graph(*f);
    CHECK(u.passes <= 2 * (g.size() + 1));
    for (int a = 0; a < g.size(); ++a)
      for (const auto& e : g.out[a]) CHECK(u.values[e.to] - u.values[a] <= e.cost - best.mean);
    const auto& c = best.vertices;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const int a = c[i], b = c[(i + 1) % c.size()];
      CHECK(u.values[b] - u.values[a] == f->values.at({g.words[a].back(), g.words[b].back()}) - best.mean);
    }

    const auto fd = to_double(*f);
    const auto ud = sub_action(fd, to_double(best.mean));
    for (int a = 0; a < g.size(); ++a)
      for (const auto& e : g.out[a])
        CHECK(ud.values[e.to] - ud.values[a] <= to_double(e.cost) - to_double(best.mean) + 1e-12);
  }
}

TEST_CASE("sub-action of a constant potential is constant") {
  std::map<std::pair<int, int>, Q> costs;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) costs[{a, b}] = Q(7, 3);
  const auto f = potential(Sft::full_shift(3), costs);
  const auto u = sub_action(f, Q(7, 3));
  for (const auto& x : u.values) CHECK(x == u.values[0]);
}

TEST_CASE("orbit metrics against quadratic scans") {
  std::mt19937_64 rng(16);
  int done = 0;
  while (done < 100) {
    auto f = random_instance(rng, 6);
    if (!f) continue;
    ++done;
    const auto best = min_mean_cycle(*f);
    const Q m = best.mean;
    const auto a = discrete_aubry(*f, m);
    std::set<int> av(a.vertices.begin(), a.vertices.end());
    std::set<std::pair<int, int>> ae(a.tight_edges.begin(), a.tight_edges.end());

    const auto on = orbit_metrics(best.cycle, *f, m, a);
    CHECK(on.aubry_distance == 0.0);
    CHECK(on.action == 0);

    // Random closed walk.
    std::uniform_int_distribution<int> len(1, 12);
    std::vector<int> w{std::uniform_int_distribution<int>(0, f->sft.size() - 1)(rng)};
    const int target = len(rng);
    for (int k = 1; k < target; ++k) {
      const auto& s = f->sft.successors(w.back());
      w.push_back(s[std::uniform_int_distribution<int>(0, int(s.size()) - 1)(rng)]);
    }
    const auto back = shortest_cycle_back(f->sft, w.back(), w.front());
    if (!back) continue;
    w.insert(w.end(), back->begin(), back->end());
    SymbolicOrbit o{w};
    REQUIRE(sft::is_valid_orbit(f->sft, o));
    const auto met = orbit_metrics(o, *f, m, a);
    CHECK(met.gap == brute_gap(w));
    CHECK(met.aubry_distance == brute_aubry_distance(w, ae, av));
    CHECK(met.action == cycle_cost(*f, w) - m * Q(long(w.size())));
    CHECK(met.action >= 0);
  }
}

TEST_CASE("class-I search: fixed points") {
  const auto f = potential(golden, {{{0, 0}, 0}, {{0, 1}, 1}, {{1, 0}, 1}});
  const auto r = class_one_search(f, Q(1, 10));
  CHECK(r.satisfied);
  CHECK(r.orbit.word == std::vector<int>{0});
  CHECK(r.rounds == 0);
  CHECK(r.metrics.aubry_distance == 0.0);
  CHECK(r.metrics.action == 0);
  for (const Q eps : {Q(1, 100), Q(1, 2), Q(99, 100)}) CHECK(class_one_search(f, eps).satisfied);
  CHECK_THROWS_AS(class_one_search(f, Q(0)), std::invalid_argument);
}

TEST_CASE("class-I search: random instances pass independent re-verification") {
  std::mt19937_64 rng(17);
  int done = 0;
  while (done < 100) {
    auto f = random_instance(rng, 6);
    if (!f) continue;
    ++done;
    const Q eps(1, 10);
    const auto r = class_one_search(*f, eps);
    REQUIRE(r.satisfied);
    const Q m = enumerated_min_mean(*f);
    const auto a = discrete_aubry(*f, m);
    std::set<int> av(a.vertices.begin(), a.vertices.end());
    std::set<std::pair<int, int>> ae(a.tight_edges.begin(), a.tight_edges.end());
    const double gap = brute_gap(r.orbit.word);
    const double c = brute_aubry_distance(r.orbit.word, ae, av);
    const Q action = cycle_cost(*f, r.orbit.word) - m * Q(r.orbit.period());
    const Q qgap(gap), qc(c);
    CHECK(((qc < eps * qgap && action < eps * eps * qgap * qgap) || (c == 0.0 && action == 0)));
    CHECK(std::pow(1.25, r.rounds) <= r.initial_period);
  }
}

TEST_CASE("channel: values on, near and far from the orbit") {
  const Sft s = Sft::full_shift(2);
  const SymbolicOrbit orbit{{0, 0, 1}};
  const double gap = 0.5;
  const auto radii = default_channel_radii(gap);
  const Q eps(1, 10);
  const auto ch = build_channel_discrete(s, orbit, eps, radii.rho, radii.gamma_bar);
  CHECK(ch.phi.window % 2 == 1);
  const int w = ch.phi.window, h = (w - 1) / 2;
  std::set<std::vector<int>> on;
  for (int t = 0; t < 3; ++t) {
    std::vector<int> u;
    for (int k = 0; k < w; ++k) u.push_back(orbit.word[(t + k) % 3]);
    on.insert(u);
  }
  const Q far = eps * Q(radii.gamma_bar) * Q(radii.gamma_bar) / Q(32);
  for (const auto& [u, v] : ch.phi.values) {
    CHECK(v >= 0);
    CHECK((v == 0) == (on.count(u) == 1));
    // Centered distance by direct comparison with each orbit alignment.
    int n = 0;
    for (int t = 0; t < 3; ++t) {
      int k = 0;
      while (k <= h && u[h + k] == orbit.word[((t + k) % 3 + 3) % 3] && u[h - k] == orbit.word[((t - k) % 3 + 3) % 3]) ++k;
      n = std::max(n, k);
    }
    const double d = std::ldexp(1.0, -n);
    if (on.count(u)) continue;
    if (d >= radii.rho) CHECK(v >= eps * Q(radii.rho) * Q(radii.rho) / Q(4));
    if (d >= radii.gamma_bar / 4) CHECK(v == far);
  }
}

TEST_CASE("channel: radius ordering is enforced") {
  const SymbolicOrbit orbit{{0, 1}};
  const Sft s = Sft::full_shift(2);
  CHECK_THROWS_WITH_AS(build_channel_discrete(s, orbit, Q(1, 10), 0.2, 0.4), doctest::Contains("rho < gamma_bar / 4"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(build_channel_discrete(s, orbit, Q(1, 10), 0.01, 2.0),
                       doctest::Contains("gamma_bar / 4 < gamma(orbit) / 2"), std::invalid_argument);
}

TEST_CASE("lift and add preserve cycle costs") {
  std::mt19937_64 rng(18);
  auto f = *random_instance(rng, 1);
  for (int tries = 0; tries < 50; ++tries)
    if (auto g = random_instance(rng, 5)) f = *g;
  const auto l = lift(f, 5);
  const auto g2 = window_graph(f);
  const auto g5 = window_graph(l);
  CHECK(min_mean_cycle(l).mean == min_mean_cycle(f).mean);
  const auto sum = add(f, f);
  CHECK(min_mean_cycle(sum).mean == 2 * min_mean_cycle(f).mean);
  CHECK(g5.window == 5);
  CHECK(g2.size() == f.sft.size());
}

TEST_CASE("locking: zero potential and unique minimizers") {
  const Sft s = Sft::full_shift(2);
  EdgePotential<Q> zero;
  zero.sft = s;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) zero.values[{a, b}] = 0;
  for (const auto& word : std::vector<std::vector<int>>{{0}, {0, 1}, {0, 0, 1}, {0, 1, 1, 0, 1}}) {
    const SymbolicOrbit orbit{word};
    const double gap = brute_gap(word);
    const auto r = default_channel_radii(gap);
    const auto ch = build_channel_discrete(s, orbit, Q(1, 10), r.rho, r.gamma_bar);
    const auto rep = verify_locking(zero, ch, orbit);
    CHECK(rep.locked);
    CHECK(rep.orbit_mean == 0);
    CHECK(rep.min_mean == 0);
  }

  // Unique minimizer with a vanishing channel.
  const auto f = potential(golden, {{{0, 0}, 2}, {{0, 1}, 1}, {{1, 0}, 1}});
  Channel<Q> none;
  none.phi = f;
  for (auto& [u, v] : none.phi.values) v = 0;
  CHECK(verify_locking(f, none, SymbolicOrbit{{0, 1}}).locked);
  const auto fail = verify_locking(f, none, SymbolicOrbit{{0}});
  CHECK_FALSE(fail.locked);
  REQUIRE(fail.competitors.size() == 1);
  CHECK(same_cycle(fail.competitors[0], SymbolicOrbit{{1, 0}}));
}

TEST_CASE("locking: co-minimal cycles are reported") {
  const Sft s = Sft::full_shift(2);
  EdgePotential<Q> zero;
  zero.sft = s;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) zero.values[{a, b}] = 0;
  Channel<Q> none;
  none.phi = zero;
  const auto rep = verify_locking(zero, none, SymbolicOrbit{{0, 1}});
  CHECK_FALSE(rep.locked);
  CHECK_FALSE(rep.competitors.empty());
}

TEST_CASE("locking: class-I orbits lock and locking is monotone in eps") {
  std::mt19937_64 rng(19);
  int done = 0, locked = 0;
  while (done < 100) {
    auto f = random_instance(rng, 6);
    if (!f) continue;
    ++done;
    const auto r = class_one_search(*f, Q(1, 10));
    REQUIRE(r.satisfied);
    const auto radii = default_channel_radii(r.metrics.gap);
    const auto ch = build_channel_discrete(f->sft, r.orbit, Q(1, 10), radii.rho, radii.gamma_bar);
    const auto rep = verify_locking(*f, ch, r.orbit);
    if (!rep.locked) {
      // Certificates must be genuine competitors.
      REQUIRE_FALSE(rep.competitors.empty());
      continue;
    }
    ++locked;
    for (const Q eps : {Q(1, 5), Q(1, 2), Q(1)}) {
      const auto big = build_channel_discrete(f->sft, r.orbit, eps, radii.rho, radii.gamma_bar);
      CHECK(verify_locking(*f, big, r.orbit).locked);
    }
  }
  CHECK(locked == done);
}

TEST_CASE("float and rational modes agree") {
  std::mt19937_64 rng(20);
  int done = 0;
  while (done < 50) {
    auto f = random_instance(rng, 6);
    if (!f) continue;
    ++done;
    const auto fd = to_double(*f);
    const Q m = min_mean_cycle(*f).mean;
    const auto aq = discrete_aubry(*f, m);
    const auto ad = discrete_aubry(fd, to_double(m));
    CHECK(aq.vertices == ad.vertices);
    CHECK(aq.tight_edges == ad.tight_edges);
  }
}

TEST_CASE("potential JSON roundtrip keeps exact costs") {
  const auto f = potential(golden, {{{0, 0}, Q(1, 3)}, {{0, 1}, Q(-2, 7)}, {{1, 0}, 1}});
  const auto back = rational_potential_from_json(nlohmann::json::parse(to_json(f).dump()));
  CHECK(back.values == f.values);
  CHECK(back.window == 2);
  auto j = to_json(f);
  j["values"].erase(0);
  CHECK_THROWS_AS(rational_potential_from_json(j), std::invalid_argument);
}
