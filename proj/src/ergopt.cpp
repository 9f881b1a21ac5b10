#include "manelab/ergopt.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <deque>
#include <limits>
#include <set>
#include <sstream>

namespace manelab::ergopt {

using sft::Sft;
using sft::SymbolicOrbit;

namespace {

// Exact comparisons for rationals. In float mode strict inequalities need a
// 1e-12 margin; tight edges and zero cycles are accepted up to 1e-9, which
// absorbs the rounding accumulated along Floyd-Warshall paths.
constexpr double kStrictTol = 1e-12;
constexpr double kZeroTol = 1e-9;

bool is_zero(const Rational& x) { return x == 0; }
bool is_zero(double x) { return std::abs(x) <= kZeroTol; }
bool less(const Rational& a, const Rational& b) { return a < b; }
bool less(double a, double b) { return a < b - kStrictTol; }

template <class Num>
Num from_double(double x) {
  return Num(x);
}

std::vector<std::vector<int>> allowed_words(const Sft& s, int length) {
  std::vector<std::vector<int>> words;
  if (length <= 0) return {{}};
  for (int a = 0; a < s.size(); ++a) words.push_back({a});
  for (int len = 1; len < length; ++len) {
    std::vector<std::vector<int>> next;
    for (const auto& w : words)
      for (int b : s.successors(w.back())) {
        auto x = w;
        x.push_back(b);
        next.push_back(std::move(x));
      }
    words = std::move(next);
  }
  return words;
}

template <class Num>
std::vector<int> find_negative_cycle(const WindowGraph<Num>& g, const Num& m) {
  const int n = g.size();
  std::vector<Num> dist(n, Num(0));
  std::vector<int> pred(n, -1);
  int last = -1;
  for (int pass = 0; pass < n; ++pass) {
    last = -1;
    for (int u = 0; u < n; ++u)
      for (const auto& e : g.out[u]) {
        const Num c = dist[u] + e.cost - m;
        if (less(c, dist[e.to])) {
          dist[e.to] = c;
          pred[e.to] = u;
          last = e.to;
        }
      }
    if (last < 0) return {};
  }
  int v = last;
  for (int i = 0; i < n; ++i) v = pred[v];
  std::vector<int> cycle{v};
  for (int u = pred[v]; u != v; u = pred[u]) cycle.push_back(u);
  std::reverse(cycle.begin(), cycle.end());
  return cycle;
}

// Shortest path potentials for costs f - m, assuming no negative cycle.
template <class Num>
std::vector<Num> potentials(const WindowGraph<Num>& g, const Num& m) {
  const int n = g.size();
  std::vector<Num> dist(n, Num(0));
  for (int pass = 0; pass <= n; ++pass) {
    bool changed = false;
    for (int u = 0; u < n; ++u)
      for (const auto& e : g.out[u]) {
        const Num c = dist[u] + e.cost - m;
        if (less(c, dist[e.to])) {
          dist[e.to] = c;
          changed = true;
        }
      }
    if (!changed) return dist;
  }
  throw NegativeCycleError("negative reduced cycle", find_negative_cycle(g, m));
}

// Edges of zero reduced cost with respect to the potentials.
template <class Num>
std::vector<std::vector<int>> tight_graph(const WindowGraph<Num>& g, const Num& m) {
  const auto pi = potentials(g, m);
  std::vector<std::vector<int>> tight(g.size());
  for (int u = 0; u < g.size(); ++u)
    for (const auto& e : g.out[u])
      if (is_zero(pi[u] + e.cost - m - pi[e.to])) tight[u].push_back(e.to);
  return tight;
}

bool nontrivial(const std::vector<int>& comp, const std::vector<std::vector<int>>& adj) {
  if (comp.size() > 1) return true;
  const int v = comp[0];
  return std::find(adj[v].begin(), adj[v].end(), v) != adj[v].end();
}

// Shortest cycle through the component, by BFS inside it.
std::vector<int> shortest_cycle_in(const std::vector<int>& comp, const std::vector<std::vector<int>>& adj) {
  const std::set<int> in(comp.begin(), comp.end());
  std::vector<int> best;
  for (int s : comp) {
    std::map<int, int> parent;
    std::deque<int> q{s};
    parent[s] = -1;
    int closing = -1;
    while (!q.empty() && closing < 0) {
      const int u = q.front();
      q.pop_front();
      for (int v : adj[u]) {
        if (!in.count(v)) continue;
        if (v == s) {
          closing = u;
          break;
        }
        if (!parent.count(v)) {
          parent[v] = u;
          q.push_back(v);
        }
      }
    }
    if (closing < 0) continue;
    std::vector<int> cyc;
    for (int u = closing; u != -1; u = parent[u]) cyc.push_back(u);
    std::reverse(cyc.begin(), cyc.end());
    if (best.empty() || cyc.size() < best.size()) best = cyc;
  }
  return best;
}

// Vertices of a path from a to b inside the component, excluding a.
std::vector<int> path_within(const std::vector<int>& comp, const std::vector<std::vector<int>>& adj, int a, int b) {
  std::map<int, int> parent{{a, -1}};
  std::deque<int> q{a};
  while (!q.empty()) {
    const int u = q.front();
    q.pop_front();
    if (u == b && u != a) break;
    for (int v : adj[u]) {
      if (!std::binary_search(comp.begin(), comp.end(), v) || parent.count(v)) continue;
      parent[v] = u;
      q.push_back(v);
    }
  }
  std::vector<int> path;
  for (int u = b; u != a; u = parent.at(u)) path.push_back(u);
  std::reverse(path.begin(), path.end());
  return path;
}

// A cycle in the component that uses an edge outside `route`, or empty.
std::vector<int> off_route_cycle(const std::vector<int>& comp, const std::vector<std::vector<int>>& adj,
                                 const std::map<int, int>& route) {
  for (int v : comp)
    for (int x : adj[v]) {
      const auto it = route.find(v);
      if ((it != route.end() && it->second == x) || !std::binary_search(comp.begin(), comp.end(), x)) continue;
      if (x == v) return {v};
      std::vector<int> cyc{v, x};
      const auto back = path_within(comp, adj, x, v);
      cyc.insert(cyc.end(), back.begin(), back.end() - 1);
      return cyc;
    }
  return {};
}

SymbolicOrbit primitive_root(const SymbolicOrbit& o) {
  const int p = o.period();
  for (int q = 1; q < p; ++q) {
    if (p % q) continue;
    bool ok = true;
    for (int k = q; k < p && ok; ++k) ok = o.word[k] == o.word[k - q];
    if (ok) return SymbolicOrbit{std::vector<int>(o.word.begin(), o.word.begin() + q)};
  }
  return o;
}

// BFS path from a to b (exclusive of a, inclusive of b) in the full graph.
template <class Num>
std::vector<int> shortest_path(const WindowGraph<Num>& g, int a, int b) {
  std::vector<int> parent(g.size(), -2);
  std::deque<int> q{a};
  parent[a] = -1;
  while (!q.empty()) {
    const int u = q.front();
    q.pop_front();
    for (const auto& e : g.out[u]) {
      if (e.to == b) {
        std::vector<int> path{b};
        for (int w = u; w != a; w = parent[w]) path.push_back(w);
        std::reverse(path.begin(), path.end());
        return path;
      }
      if (parent[e.to] == -2) {
        parent[e.to] = u;
        q.push_back(e.to);
      }
    }
  }
  throw std::logic_error("window graph is not strongly connected between Aubry components");
}

// Is the symbol word a factor of the Aubry subshift?
bool aubry_word(const DiscreteAubry& a, const std::vector<int>& word, const std::map<std::vector<int>, int>& index) {
  const int k = a.window - 1;
  const int len = static_cast<int>(word.size());
  if (len == 0) return true;
  if (len < k) {
    for (int v : a.vertices) {
      const auto& w = a.words[v];
      if (std::search(w.begin(), w.end(), word.begin(), word.end()) != w.end()) return true;
    }
    return false;
  }
  int prev = -1;
  for (int i = 0; i + k <= len; ++i) {
    const auto it = index.find(std::vector<int>(word.begin() + i, word.begin() + i + k));
    if (it == index.end() || !a.contains_vertex(it->second)) return false;
    if (prev >= 0 && !a.has_edge(prev, it->second)) return false;
    prev = it->second;
  }
  return true;
}

}  // namespace

template <class Num>
SymbolicOrbit WindowGraph<Num>::orbit_of(const std::vector<int>& cycle) const {
  SymbolicOrbit o;
  for (int v : cycle) o.word.push_back(words[v].back());
  return o;
}

template <class Num>
std::vector<int> WindowGraph<Num>::cycle_of(const SymbolicOrbit& orbit) const {
  const int p = orbit.period();
  const int k = window - 1;
  std::vector<int> cyc;
  for (int t = 0; t < p; ++t) {
    std::vector<int> w;
    for (int j = k - 1; j >= 0; --j) w.push_back(orbit.word[((t - j) % p + p) % p]);
    const auto it = index.find(w);
    if (it == index.end()) throw std::invalid_argument("orbit uses a word outside the subshift");
    cyc.push_back(it->second);
  }
  for (int t = 0; t < p; ++t) {
    const int u = cyc[t], v = cyc[(t + 1) % p];
    const bool ok = std::any_of(out[u].begin(), out[u].end(), [&](const Edge& e) { return e.to == v; });
    if (!ok) throw std::invalid_argument("orbit uses a transition outside the subshift");
  }
  return cyc;
}

template <class Num>
WindowGraph<Num> window_graph(const EdgePotential<Num>& f) {
  if (f.window < 2) throw std::invalid_argument("window must be at least 2");
  WindowGraph<Num> g;
  g.window = f.window;
  g.words = allowed_words(f.sft, f.window - 1);
  for (int i = 0; i < g.size(); ++i) g.index[g.words[i]] = i;
  g.out.resize(g.size());
  for (int i = 0; i < g.size(); ++i) {
    for (int b : f.sft.successors(g.words[i].back())) {
      std::vector<int> w = g.words[i];
      w.push_back(b);
      const auto it = f.values.find(w);
      if (it == f.values.end()) throw std::invalid_argument("potential undefined on an allowed window");
      std::vector<int> next(w.begin() + 1, w.end());
      g.out[i].push_back({g.index.at(next), it->second});
    }
  }
  if (f.values.size() != [&] {
        std::size_t e = 0;
        for (const auto& o : g.out) e += o.size();
        return e;
      }())
    throw std::invalid_argument("potential defined on words outside the subshift");
  return g;
}

template <class Num>
CycleMeasure<Num> min_mean_cycle(const EdgePotential<Num>& f) {
  const auto g = window_graph(f);
  const int n = g.size();
  // Karp: d[k][v] = cheapest walk with exactly k edges ending at v.
  std::vector<std::vector<std::optional<Num>>> d(n + 1, std::vector<std::optional<Num>>(n));
  for (int v = 0; v < n; ++v) d[0][v] = Num(0);
  for (int k = 0; k < n; ++k)
    for (int u = 0; u < n; ++u) {
      if (!d[k][u]) continue;
      for (const auto& e : g.out[u]) {
        const Num c = *d[k][u] + e.cost;
        if (!d[k + 1][e.to] || c < *d[k + 1][e.to]) d[k + 1][e.to] = c;
      }
    }
  std::optional<Num> best;
  for (int v = 0; v < n; ++v) {
    if (!d[n][v]) continue;
    std::optional<Num> worst;
    for (int k = 0; k < n; ++k) {
      if (!d[k][v]) continue;
      const Num r = (*d[n][v] - *d[k][v]) / Num(n - k);
      if (!worst || r > *worst) worst = r;
    }
    if (worst && (!best || *worst < *best)) best = worst;
  }
  if (!best) throw std::logic_error("subshift without cycles");
  CycleMeasure<Num> out;
  out.mean = *best;
  const auto tight = tight_graph(g, out.mean);
  for (const auto& comp : sft::strongly_connected_components(n, tight)) {
    if (!nontrivial(comp, tight)) continue;
    auto cyc = shortest_cycle_in(comp, tight);
    if (out.vertices.empty() || *std::min_element(cyc.begin(), cyc.end()) < *std::min_element(out.vertices.begin(), out.vertices.end()))
      out.vertices = cyc;
  }
  if (out.vertices.empty()) throw std::logic_error("no tight cycle at the minimal mean");
  out.cycle = g.orbit_of(out.vertices);
  return out;
}

template <class Num>
ManePotential<Num> discrete_mane_potential(const EdgePotential<Num>& f, const Num& m) {
  const auto g = window_graph(f);
  const int n = g.size();
  ManePotential<Num> mp;
  mp.phi.assign(n, std::vector<std::optional<Num>>(n));
  for (int u = 0; u < n; ++u)
    for (const auto& e : g.out[u]) {
      const Num c = e.cost - m;
      if (!mp.phi[u][e.to] || c < *mp.phi[u][e.to]) mp.phi[u][e.to] = c;
    }
  for (int k = 0; k < n; ++k)
    for (int a = 0; a < n; ++a) {
      if (!mp.phi[a][k]) continue;
      for (int b = 0; b < n; ++b) {
        if (!mp.phi[k][b]) continue;
        const Num c = *mp.phi[a][k] + *mp.phi[k][b];
        if (!mp.phi[a][b] || c < *mp.phi[a][b]) mp.phi[a][b] = c;
      }
    }
  for (int a = 0; a < n; ++a)
    if (mp.phi[a][a] && less(*mp.phi[a][a], Num(0)))
      throw NegativeCycleError("m is below the minimal mean: negative reduced cycle", find_negative_cycle(g, m));
  return mp;
}

bool DiscreteAubry::contains_vertex(int v) const { return std::binary_search(vertices.begin(), vertices.end(), v); }

bool DiscreteAubry::has_edge(int a, int b) const {
  return std::binary_search(tight_edges.begin(), tight_edges.end(), std::make_pair(a, b));
}

template <class Num>
DiscreteAubry discrete_aubry(const EdgePotential<Num>& f, const Num& m) {
  const auto g = window_graph(f);
  const auto mp = discrete_mane_potential(f, m);
  DiscreteAubry a;
  a.window = f.window;
  a.words = g.words;
  for (int v = 0; v < g.size(); ++v)
    if (mp.phi[v][v] && is_zero(*mp.phi[v][v])) a.vertices.push_back(v);
  for (int u : a.vertices)
    for (const auto& e : g.out[u])
      if (mp.phi[e.to][u] && is_zero(e.cost - m + *mp.phi[e.to][u])) a.tight_edges.emplace_back(u, e.to);
  std::sort(a.tight_edges.begin(), a.tight_edges.end());
  return a;
}

template <class Num>
SubAction<Num> sub_action(const EdgePotential<Num>& f, const Num& m) {
  const auto g = window_graph(f);
  const auto aubry = discrete_aubry(f, m);
  const int n = g.size();
  std::vector<std::optional<Num>> u(n);
  for (int v : aubry.vertices) u[v] = Num(0);
  SubAction<Num> out;
  while (true) {
    bool seeded = false;
    for (const auto& x : u) seeded = seeded || x.has_value();
    if (!seeded) u[0] = Num(0);
    int passes = 0;
    bool changed = true;
    while (changed) {
      changed = false;
      if (++passes > n + 1) throw std::logic_error("sub-action iteration exceeded the vertex count");
      for (int a = 0; a < n; ++a) {
        if (!u[a]) continue;
        for (const auto& e : g.out[a]) {
          const Num c = *u[a] + e.cost - m;
          if (!u[e.to] || less(c, *u[e.to])) {
            u[e.to] = c;
            changed = true;
          }
        }
      }
    }
    out.passes += passes;
    const auto missing = std::find_if(u.begin(), u.end(), [](const auto& x) { return !x.has_value(); });
    if (missing == u.end()) break;
    *missing = Num(0);  // vertex not reachable from the Aubry set: any start value works
  }
  for (const auto& x : u) out.values.push_back(*x);
  return out;
}

template <class Num>
OrbitMetrics<Num> orbit_metrics(const SymbolicOrbit& orbit, const EdgePotential<Num>& f, const Num& m,
                                const DiscreteAubry& aubry) {
  const auto g = window_graph(f);
  const auto cyc = g.cycle_of(orbit);
  const long p = orbit.period();
  OrbitMetrics<Num> out;
  out.action = Num(0);
  for (long t = 0; t < p; ++t) {
    const int u = cyc[t], v = cyc[(t + 1) % p];
    for (const auto& e : g.out[u])
      if (e.to == v) {
        out.action += e.cost - m;
        break;
      }
  }
  if (p >= 2) {
    for (long i = 0; i < p; ++i)
      for (long j = i + 1; j < p; ++j) {
        if (sft::periodic_agreement(orbit.word, i, j) == INT_MAX) continue;  // same point of a non-primitive word
        const double d = sft::periodic_shift_distance(orbit.word, i, j);
        if (d < out.gap || out.gap_i < 0) {
          out.gap = d;
          out.gap_i = i;
          out.gap_j = j;
        }
      }
  }
  auto at = [&](long k) { return orbit.word[((k % p) + p) % p]; };
  double c = 0.0;
  for (long t = 0; t < p; ++t) {
    long agree = 0;
    bool inside = false;
    for (long n = 1;; ++n) {
      std::vector<int> w;
      for (long k = -(n - 1); k <= n - 1; ++k) w.push_back(at(t + k));
      if (!aubry_word(aubry, w, g.index)) break;
      agree = n;
      if (2 * n - 1 >= p + aubry.window) {
        inside = true;
        break;
      }
    }
    if (!inside) c = std::max(c, std::ldexp(1.0, -static_cast<int>(agree)));
  }
  out.aubry_distance = c;
  return out;
}

template <class Num>
bool alga_holds(const OrbitMetrics<Num>& x, const Num& eps) {
  const Num gap = from_double<Num>(x.gap);
  const Num c = from_double<Num>(x.aubry_distance);
  if (is_zero(c) && is_zero(x.action)) return x.gap > 0.0;
  return less(c, eps * gap) && less(x.action, eps * eps * gap * gap);
}

template <class Num>
ClassOneResult<Num> class_one_search(const EdgePotential<Num>& f, const Num& eps, int horizon) {
  if (!(Num(0) < eps && eps < Num(1))) throw std::invalid_argument("eps must lie in (0, 1)");
  const auto g = window_graph(f);
  const Num m = min_mean_cycle(f).mean;
  const auto aubry = discrete_aubry(f, m);

  // Periodic specification near the Aubry set.
  std::vector<std::vector<int>> tadj(g.size());
  for (const auto& [a, b] : aubry.tight_edges) tadj[a].push_back(b);
  std::vector<std::vector<int>> cycles;
  for (const auto& comp : sft::strongly_connected_components(g.size(), tadj))
    if (nontrivial(comp, tadj)) cycles.push_back(shortest_cycle_in(comp, tadj));
  std::sort(cycles.begin(), cycles.end());
  // Aubry cycles in other irreducible components cannot be joined; keep the first component's.
  {
    std::vector<std::vector<int>> adj(g.size());
    for (int u = 0; u < g.size(); ++u)
      for (const auto& e : g.out[u]) adj[u].push_back(e.to);
    std::vector<int> comp_of(g.size());
    const auto comps = sft::strongly_connected_components(g.size(), adj);
    for (std::size_t c = 0; c < comps.size(); ++c)
      for (int v : comps[c]) comp_of[v] = static_cast<int>(c);
    const int keep = comp_of[cycles.at(0).at(0)];
    std::erase_if(cycles, [&](const std::vector<int>& z) { return comp_of[z[0]] != keep; });
  }
  std::vector<int> spec;
  if (cycles.size() == 1) {
    spec = cycles[0];
  } else {
    for (std::size_t i = 0; i < cycles.size(); ++i) {
      const auto& z = cycles[i];
      const int reps = (horizon + static_cast<int>(z.size()) - 1) / static_cast<int>(z.size());
      for (int r = 0; r < reps; ++r) spec.insert(spec.end(), z.begin(), z.end());
      const auto& next = cycles[(i + 1) % cycles.size()];
      auto path = shortest_path(g, z.back(), next[0]);
      path.pop_back();  // next[0] opens the next block
      spec.insert(spec.end(), path.begin(), path.end());
    }
  }

  ClassOneResult<Num> res;
  res.orbit = g.orbit_of(spec);
  res.initial_period = res.orbit.period();
  const double bound = std::log(static_cast<double>(res.initial_period)) / std::log(1.25);
  while (true) {
    res.orbit = primitive_root(res.orbit);
    res.metrics = orbit_metrics(res.orbit, f, m, aubry);
    SearchRound round{res.orbit.period(), res.metrics.gap, res.metrics.aubry_distance, to_double(res.metrics.action)};
    if (alga_holds(res.metrics, eps)) {
      res.satisfied = true;
      res.log.push_back(round);
      break;
    }
    const auto& w = res.orbit.word;
    const long p = res.orbit.period();
    if (p == 1) {
      res.diagnostic = "reached a fixed point without the class-I inequalities";
      res.log.push_back(round);
      break;
    }
    // Closest self-approach admitting a valid cut; ties by shorter result, then earliest pair.
    long bi = -1, bj = -1, bper = LONG_MAX;
    long bagree = -1;
    for (long i = 0; i < p; ++i)
      for (long j = i + 1; j < p; ++j) {
        const int a = sft::periodic_agreement(w, i, j);
        if (a < f.window - 1) continue;
        const long agree = a == INT_MAX ? LONG_MAX : a;
        const long per = std::min(j - i, p - (j - i));
        if (agree > bagree || (agree == bagree && per < bper)) {
          bagree = agree;
          bper = per;
          bi = i;
          bj = j;
        }
      }
    if (bi < 0) {
      res.diagnostic = "no self-approach close enough to cut";
      res.log.push_back(round);
      break;
    }
    round.witness_i = bi;
    round.witness_j = bj;
    res.log.push_back(round);
    SymbolicOrbit next;
    if (bj - bi <= p - (bj - bi)) {
      next.word.assign(w.begin() + bi, w.begin() + bj);
    } else {
      next.word.assign(w.begin() + bj, w.end());
      next.word.insert(next.word.end(), w.begin(), w.begin() + bi);
    }
    if (static_cast<double>(next.period()) > p / 1.25) throw std::logic_error("cut did not shrink the period by 5/4");
    res.orbit = next;
    ++res.rounds;
    if (res.rounds > bound + 1e-9) throw std::logic_error("cut-and-close exceeded log_{5/4} of the initial period");
  }
  return res;
}

ChannelRadii default_channel_radii(double gap) { return {gap / 8.0, gap}; }

template <class Num>
EdgePotential<Num> lift(const EdgePotential<Num>& f, int window) {
  if (window < f.window) throw std::invalid_argument("lift window must be at least the potential window");
  if (window == f.window) return f;
  EdgePotential<Num> out;
  out.sft = f.sft;
  out.window = window;
  for (const auto& w : allowed_words(f.sft, window))
    out.values[w] = f.values.at(std::vector<int>(w.end() - f.window, w.end()));
  return out;
}

template <class Num>
EdgePotential<Num> add(const EdgePotential<Num>& f, const EdgePotential<Num>& g) {
  const int w = std::max(f.window, g.window);
  auto a = lift(f, w);
  const auto b = lift(g, w);
  for (auto& [word, v] : a.values) v += b.values.at(word);
  return a;
}

template <class Num>
Channel<Num> build_channel_discrete(const Sft& s, const SymbolicOrbit& orbit, const Num& eps, double rho,
                                    double gamma_bar, int min_window) {
  const long p = orbit.period();
  if (p < 1) throw std::invalid_argument("empty orbit");
  double gap = 1.0;
  for (long i = 0; i < p; ++i)
    for (long j = i + 1; j < p; ++j) gap = std::min(gap, sft::periodic_shift_distance(orbit.word, i, j));
  if (!(rho > 0.0)) throw std::invalid_argument("channel: rho must be positive");
  if (!(rho < 0.25 * gamma_bar)) throw std::invalid_argument("channel: rho < gamma_bar / 4 violated");
  if (!(0.25 * gamma_bar < 0.5 * gap)) throw std::invalid_argument("channel: gamma_bar / 4 < gamma(orbit) / 2 violated");
  if (!(Num(0) < eps)) throw std::invalid_argument("channel: eps must be positive");
  auto at = [&](long k) { return orbit.word[((k % p) + p) % p]; };

  // Shortest odd window, at least min_window, whose orbit words determine the position.
  int w = std::max(3, min_window);
  if (w % 2 == 0) ++w;
  while (true) {
    std::set<std::vector<int>> seen;
    bool distinct = true;
    for (long t = 0; t < p && distinct; ++t) {
      std::vector<int> u;
      for (int k = 0; k < w - 1; ++k) u.push_back(at(t + k));
      distinct = seen.insert(u).second;
    }
    if (distinct) break;
    w += 2;
  }
  const int h = (w - 1) / 2;
  std::set<std::vector<int>> orbit_words;
  for (long t = 0; t < p; ++t) {
    std::vector<int> u;
    for (int k = 0; k < w; ++k) u.push_back(at(t + k));
    orbit_words.insert(u);
  }
  Channel<Num> ch;
  ch.eps = eps;
  ch.rho = rho;
  ch.gamma_bar = gamma_bar;
  ch.phi.sft = s;
  ch.phi.window = w;
  const double cap = 0.25 * gamma_bar;
  for (const auto& u : allowed_words(s, w)) {
    if (orbit_words.count(u)) {
      ch.phi.values[u] = Num(0);
      continue;
    }
    // Centered agreement radius of u with the orbit, within the window.
    int best = 0;
    for (long t = 0; t < p; ++t) {
      int n = 0;
      while (n <= h && u[h + n] == at(t + n) && u[h - n] == at(t - n)) ++n;
      best = std::max(best, n);
    }
    const double d = std::min(std::ldexp(1.0, -best), cap);
    ch.phi.values[u] = eps * from_double<Num>(d) * from_double<Num>(d) / Num(2);
  }
  return ch;
}

bool same_cycle(const SymbolicOrbit& a, const SymbolicOrbit& b) {
  if (a.period() != b.period()) return false;
  const int p = a.period();
  for (int r = 0; r < p; ++r) {
    bool eq = true;
    for (int k = 0; k < p && eq; ++k) eq = a.word[k] == b.word[(k + r) % p];
    if (eq) return true;
  }
  return false;
}

template <class Num>
LockingReport<Num> verify_locking(const EdgePotential<Num>& f, const Channel<Num>& channel, const SymbolicOrbit& orbit) {
  const auto total = add(f, channel.phi);
  const auto g = window_graph(total);
  LockingReport<Num> rep;
  const auto cyc = g.cycle_of(orbit);
  Num sum(0);
  for (std::size_t t = 0; t < cyc.size(); ++t)
    for (const auto& e : g.out[cyc[t]])
      if (e.to == cyc[(t + 1) % cyc.size()]) {
        sum += e.cost;
        break;
      }
  rep.orbit_mean = sum / Num(orbit.period());
  const auto best = min_mean_cycle(total);
  rep.min_mean = best.mean;
  if (less(best.mean, rep.orbit_mean)) {
    rep.competitors.push_back(best.cycle);
    return rep;
  }
  // Every cycle of the tight graph at the orbit's mean is co-minimal.
  const auto tight = tight_graph(g, rep.orbit_mean);
  for (const auto& comp : sft::strongly_connected_components(g.size(), tight)) {
    if (!nontrivial(comp, tight)) continue;
    const auto z = g.orbit_of(shortest_cycle_in(comp, tight));
    if (!same_cycle(z, orbit)) {
      rep.competitors.push_back(z);
      continue;
    }
    // The orbit's component must carry no tight edge off the orbit route.
    std::map<int, int> route;
    for (std::size_t t = 0; t < cyc.size(); ++t) route[cyc[t]] = cyc[(t + 1) % cyc.size()];
    if (auto alt = off_route_cycle(comp, tight, route); !alt.empty()) rep.competitors.push_back(g.orbit_of(alt));
  }
  rep.locked = rep.competitors.empty();
  return rep;
}

double to_double(const Rational& x) { return x.convert_to<double>(); }

std::string to_string(const Rational& x) {
  std::ostringstream s;
  s << x;
  return s.str();
}

nlohmann::json to_json(const EdgePotential<Rational>& f) {
  nlohmann::json j = sft::to_json(f.sft);
  j["window"] = f.window;
  nlohmann::json vals = nlohmann::json::array();
  for (const auto& [w, v] : f.values) vals.push_back({{"word", w}, {"cost", to_string(v)}});
  j["values"] = vals;
  return j;
}

EdgePotential<Rational> rational_potential_from_json(const nlohmann::json& j) {
  EdgePotential<Rational> f;
  f.sft = sft::sft_from_json(j);
  f.window = j.at("window").get<int>();
  for (const auto& e : j.at("values")) {
    const auto& c = e.at("cost");
    Rational v = c.is_string() ? Rational(c.get<std::string>()) : Rational(c.get<double>());
    f.values[e.at("word").get<std::vector<int>>()] = v;
  }
  window_graph(f);  // validates coverage of the allowed windows
  return f;
}

EdgePotential<double> to_double(const EdgePotential<Rational>& f) {
  EdgePotential<double> d;
  d.sft = f.sft;
  d.window = f.window;
  for (const auto& [w, v] : f.values) d.values[w] = to_double(v);
  return d;
}

#define MANELAB_ERGOPT_INSTANTIATE(Num)                                                                          \
  template struct WindowGraph<Num>;                                                                              \
  template WindowGraph<Num> window_graph(const EdgePotential<Num>&);                                             \
  template CycleMeasure<Num> min_mean_cycle(const EdgePotential<Num>&);                                          \
  template ManePotential<Num> discrete_mane_potential(const EdgePotential<Num>&, const Num&);                    \
  template DiscreteAubry discrete_aubry(const EdgePotential<Num>&, const Num&);                                  \
  template SubAction<Num> sub_action(const EdgePotential<Num>&, const Num&);                                     \
  template OrbitMetrics<Num> orbit_metrics(const SymbolicOrbit&, const EdgePotential<Num>&, const Num&,         \
                                           const DiscreteAubry&);                                                \
  template bool alga_holds(const OrbitMetrics<Num>&, const Num&);                                                \
  template ClassOneResult<Num> class_one_search(const EdgePotential<Num>&, const Num&, int);                    \
  template Channel<Num> build_channel_discrete(const Sft&, const SymbolicOrbit&, const Num&, double, double, int); \
  template EdgePotential<Num> lift(const EdgePotential<Num>&, int);                                              \
  template EdgePotential<Num> add(const EdgePotential<Num>&, const EdgePotential<Num>&);                        \
  template LockingReport<Num> verify_locking(const EdgePotential<Num>&, const Channel<Num>&, const SymbolicOrbit&);

MANELAB_ERGOPT_INSTANTIATE(double)
MANELAB_ERGOPT_INSTANTIATE(Rational)

}  // namespace manelab::ergopt
