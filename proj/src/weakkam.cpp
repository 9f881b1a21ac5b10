#include "manelab/weakkam.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace manelab::weakkam {

using lagrangian::kPeriod;
using lagrangian::Mat2;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTight = 1e-9;

double torus_diff(double a, double b) {
  double d = std::fmod(b - a, kPeriod);
  if (d > 0.5 * kPeriod) d -= kPeriod;
  if (d < -0.5 * kPeriod) d += kPeriod;
  return d;
}

Vec2 torus_disp(const Vec2& a, const Vec2& b, int dim) {
  return {torus_diff(a[0], b[0]), dim == 2 ? torus_diff(a[1], b[1]) : 0.0};
}

bool improves(double cand, double cur, double rel = 1e-12) {
  return cur == kInf ? cand < kInf : cand < cur - rel * (1.0 + std::abs(cur));
}

// Iterative Tarjan; comp[v] is the component index.
std::vector<int> scc(int n, const std::vector<std::vector<int>>& adj, int* count) {
  std::vector<int> index(n, -1), low(n, 0), comp(n, -1), stack;
  std::vector<char> on(n, 0);
  int next = 0, ncomp = 0;
  std::vector<std::pair<int, std::size_t>> call;
  for (int s = 0; s < n; ++s) {
    if (index[s] >= 0) continue;
    call.emplace_back(s, 0);
    index[s] = low[s] = next++;
    stack.push_back(s);
    on[s] = 1;
    while (!call.empty()) {
      auto& [v, i] = call.back();
      if (i < adj[v].size()) {
        const int w = adj[v][i++];
        if (index[w] < 0) {
          index[w] = low[w] = next++;
          stack.push_back(w);
          on[w] = 1;
          call.emplace_back(w, 0);
        } else if (on[w]) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      if (low[v] == index[v]) {
        int w;
        do {
          w = stack.back();
          stack.pop_back();
          on[w] = 0;
          comp[w] = ncomp;
        } while (w != v);
        ++ncomp;
      }
      const int done = v;
      call.pop_back();
      if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[done]);
    }
  }
  if (count) *count = ncomp;
  return comp;
}

NegativeCycle cycle_from(const ActionGraph& g, double k, const std::vector<int>& pred, int v, bool reverse) {
  const auto& E = g.edges();
  auto step = [&](int node) { return reverse ? E[pred[node]].to : E[pred[node]].from; };
  for (int i = 0; i < g.nodes(); ++i) v = step(v);
  NegativeCycle c;
  c.k = k;
  int u = v;
  do {
    c.edges.push_back(pred[u]);
    u = step(u);
  } while (u != v && static_cast<int>(c.edges.size()) <= g.nodes());
  if (!reverse) std::reverse(c.edges.begin(), c.edges.end());
  for (int e : c.edges) {
    c.cost += g.weight(E[e], k);
    c.time += E[e].dt;
  }
  return c;
}

// Queue-based Bellman-Ford. `init` gives starting distances; `reverse` runs on
// the transposed graph. Returns a negative cycle when one is reachable.
std::optional<NegativeCycle> spfa(const ActionGraph& g, double k, std::vector<double>& dist, std::vector<int>& pred,
                                  bool reverse) {
  const int n = g.nodes();
  const auto& E = g.edges();
  std::vector<int> len(n, 0);
  std::vector<char> queued(n, 0);
  std::deque<int> q;
  for (int v = 0; v < n; ++v)
    if (dist[v] < kInf) {
      q.push_back(v);
      queued[v] = 1;
    }
  while (!q.empty()) {
    const int a = q.front();
    q.pop_front();
    queued[a] = 0;
    auto relax = [&](int e, int target) {
      const double nd = dist[a] + g.weight(E[e], k);
      if (!improves(nd, dist[target])) return false;
      dist[target] = nd;
      pred[target] = e;
      len[target] = len[a] + 1;
      if (len[target] > n) return true;
      if (!queued[target]) {
        queued[target] = 1;
        q.push_back(target);
      }
      return false;
    };
    if (!reverse) {
      for (int e = g.out_begin(a); e < g.out_begin(a + 1); ++e)
        if (relax(e, E[e].to)) return cycle_from(g, k, pred, E[e].to, false);
    } else {
      for (int e : g.in_edges(a))
        if (relax(e, E[e].from)) return cycle_from(g, k, pred, E[e].from, true);
    }
  }
  return std::nullopt;
}

PathTree paths(const ActionGraph& g, double k, int root, bool reverse) {
  const int n = g.nodes();
  const auto& E = g.edges();
  PathTree t;
  t.dist.assign(n, kInf);
  t.pred.assign(n, -1);
  t.minus_infinity.assign(n, 0);
  // Paths with at least one edge: seed with the edges at the root.
  auto seed = [&](int e, int v) {
    const double w = g.weight(E[e], k);
    if (w < t.dist[v]) {
      t.dist[v] = w;
      t.pred[v] = e;
    }
  };
  if (!reverse)
    for (int e = g.out_begin(root); e < g.out_begin(root + 1); ++e) seed(e, E[e].to);
  else
    for (int e : g.in_edges(root)) seed(e, E[e].from);
  std::vector<double> dist = t.dist;
  std::vector<int> pred = t.pred;
  auto cyc = spfa(g, k, dist, pred, reverse);
  if (!cyc) {
    t.dist = std::move(dist);
    t.pred = std::move(pred);
    return t;
  }
  // Full Bellman-Ford passes, then everything reachable from a node that still
  // relaxes is minus infinity.
  t.has_negative_cycle = true;
  t.certificate = *cyc;
  dist = t.dist;
  pred = t.pred;
  for (int pass = 0; pass < n; ++pass)
    for (std::size_t e = 0; e < E.size(); ++e) {
      const int a = reverse ? E[e].to : E[e].from, b = reverse ? E[e].from : E[e].to;
      if (dist[a] < kInf && dist[a] + g.weight(E[e], k) < dist[b]) {
        dist[b] = dist[a] + g.weight(E[e], k);
        pred[b] = static_cast<int>(e);
      }
    }
  std::deque<int> q;
  for (std::size_t e = 0; e < E.size(); ++e) {
    const int a = reverse ? E[e].to : E[e].from, b = reverse ? E[e].from : E[e].to;
    if (dist[a] < kInf && dist[a] + g.weight(E[e], k) < dist[b] && !t.minus_infinity[b]) {
      t.minus_infinity[b] = 1;
      q.push_back(b);
    }
  }
  while (!q.empty()) {
    const int a = q.front();
    q.pop_front();
    auto mark = [&](int b) {
      if (!t.minus_infinity[b]) {
        t.minus_infinity[b] = 1;
        q.push_back(b);
      }
    };
    if (!reverse)
      for (int e = g.out_begin(a); e < g.out_begin(a + 1); ++e) mark(E[e].to);
    else
      for (int e : g.in_edges(a)) mark(E[e].from);
  }
  for (int v = 0; v < n; ++v)
    if (t.minus_infinity[v]) dist[v] = -kInf;
  t.dist = std::move(dist);
  t.pred = std::move(pred);
  return t;
}

}  // namespace

ActionGraph::ActionGraph(const LagrangianModel& model, const GraphOptions& opt) : model_(model) {
  if (opt.n < 4) throw std::invalid_argument("graph needs at least 4 nodes per dimension");
  if (opt.menu.empty()) throw std::invalid_argument("time menu is empty");
  n_ = opt.n;
  const int d = model.dim;
  nodes_ = d == 1 ? n_ : n_ * n_;
  stencil_ = opt.stencil >= 0 ? opt.stencil : (d == 1 ? 32 : 4);
  stencil_ = std::min(stencil_, (n_ - 1) / 2);
  h_ = kPeriod / n_;
  menu_ = opt.menu;
  dt_min_ = *std::min_element(menu_.begin(), menu_.end());
  dt_max_ = *std::max_element(menu_.begin(), menu_.end());
  const int J = stencil_, w = 2 * J + 1;
  const int jumps = d == 1 ? w : w * w;
  edges_.reserve(static_cast<std::size_t>(nodes_) * jumps * menu_.size());
  out_.assign(nodes_ + 1, 0);
  in_.assign(nodes_, {});
  for (int a = 0; a < nodes_; ++a) {
    out_[a] = static_cast<int>(edges_.size());
    const int ax = a % n_, ay = a / n_;
    const Vec2 pa = position(a);
    for (int jx = -J; jx <= J; ++jx)
      for (int jy = (d == 2 ? -J : 0); jy <= (d == 2 ? J : 0); ++jy) {
        const int bx = ((ax + jx) % n_ + n_) % n_, by = ((ay + jy) % n_ + n_) % n_;
        const int b = d == 1 ? bx : bx + n_ * by;
        const Vec2 disp(jx * h_, jy * h_);
        for (double dt : menu_) {
          in_[b].push_back(static_cast<int>(edges_.size()));
          edges_.push_back({a, b, dt, lagrangian::segment_action(model_, pa, pa + disp, dt), disp});
        }
      }
  }
  out_[nodes_] = static_cast<int>(edges_.size());

  double grad = 0.0;
  for (int a = 0; a < nodes_; ++a) grad = std::max(grad, model_.potential.gradient(position(a)).norm());
  grad += model_.hessian_bound * h_;
  resolution_ = std::max(dt_min_ * 0.5 * model_.hessian_bound * 0.25 * h_ * h_, 1e-12);
  estimate_ = 0.5 * h_ * std::sqrt(static_cast<double>(d)) * grad;
}

Vec2 ActionGraph::position(int node) const {
  return model_.dim == 1 ? Vec2(h_ * node, 0.0) : Vec2(h_ * (node % n_), h_ * (node / n_));
}

int ActionGraph::node_at(const Vec2& x) const {
  auto idx = [&](double t) {
    long i = std::lround(lagrangian::wrap(Vec2(t, 0.0), 1)[0] / h_);
    return static_cast<int>(((i % n_) + n_) % n_);
  };
  return model_.dim == 1 ? idx(x[0]) : idx(x[0]) + n_ * idx(x[1]);
}

double NegativeCycle::mean_action() const { return (cost - k * time) / time; }

PathTree shortest_paths_from(const ActionGraph& g, double k, int source) { return paths(g, k, source, false); }
PathTree shortest_paths_to(const ActionGraph& g, double k, int target) { return paths(g, k, target, true); }

PotentialValue mane_potential(const ActionGraph& g, double k, const Vec2& x, const Vec2& y) {
  const PathTree t = shortest_paths_from(g, k, g.node_at(x));
  PotentialValue r;
  const int b = g.node_at(y);
  r.minus_infinity = t.minus_infinity[b] != 0;
  r.value = t.dist[b];
  if (r.minus_infinity) r.certificate = t.certificate;
  return r;
}

std::optional<NegativeCycle> negative_cycle(const ActionGraph& g, double k) {
  std::vector<double> dist(g.nodes(), 0.0);
  std::vector<int> pred(g.nodes(), -1);
  return spfa(g, k, dist, pred, false);
}

CriticalValue critical_value(const ActionGraph& g, double tolerance) {
  const auto& E = g.edges();
  double umax = -kInf, ratio_min = kInf;
  for (int a = 0; a < g.nodes(); ++a) umax = std::max(umax, g.model().U(g.position(a)));
  for (const auto& e : E) ratio_min = std::min(ratio_min, e.base / e.dt);
  // Self-loops at a maximum of U are negative below umax; every weight is
  // nonnegative above -ratio_min.
  double lo = umax - 1.0, hi = -ratio_min + 1e-12;
  std::optional<NegativeCycle> lo_cycle = negative_cycle(g, lo);
  for (int retry = 0; !lo_cycle && retry < 1; ++retry) {
    lo -= 2.0 * (hi - lo) + 1.0;
    lo_cycle = negative_cycle(g, lo);
  }
  if (!lo_cycle) throw std::runtime_error("critical value bracket failure: no negative cycle below " + std::to_string(lo));
  if (negative_cycle(g, hi)) {
    hi += 2.0 * (hi - lo) + 1.0;
    if (negative_cycle(g, hi))
      throw std::runtime_error("critical value bracket failure: negative cycle at " + std::to_string(hi));
  }
  CriticalValue cv;
  NegativeCycle cert = *lo_cycle;
  while (hi - lo > tolerance) {
    const double mid = 0.5 * (lo + hi);
    if (auto c = negative_cycle(g, mid)) {
      lo = mid;
      cert = *c;
    } else {
      hi = mid;
    }
    ++cv.iterations;
  }
  cv.value = hi;
  cv.bracket = hi - lo;
  cv.certificate = cert;
  cv.lower = -cert.mean_action();
  cv.estimate = g.discretization_estimate();
  return cv;
}

BelowCritical::BelowCritical(double k_, double rate_)
    : std::runtime_error([&] {
        char buf[160];
        std::snprintf(buf, sizeof buf, "level %.17g is below the critical value: values drift at rate %.6g per unit time",
                      k_, rate_);
        return std::string(buf);
      }()),
      k(k_),
      rate(rate_) {}

namespace {

// Nodes on zero-action cycles at level c, found as cyclic components of the
// edges that are tight for a shortest-path potential.
std::vector<int> zero_cycle_nodes(const ActionGraph& g, double c) {
  const int n = g.nodes();
  const auto& E = g.edges();
  std::vector<double> phi(n, 0.0);
  std::vector<int> pred(n, -1);
  if (auto cyc = spfa(g, c, phi, pred, false)) throw BelowCritical(c, cyc->cost / cyc->time);
  std::vector<std::vector<int>> adj(n);
  std::vector<char> self(n, 0);
  for (const auto& e : E) {
    if (phi[e.from] + g.weight(e, c) - phi[e.to] > kTight) continue;
    if (e.from == e.to)
      self[e.from] = 1;
    else
      adj[e.from].push_back(e.to);
  }
  int count = 0;
  const std::vector<int> comp = scc(n, adj, &count);
  std::vector<int> size(count, 0);
  for (int v = 0; v < n; ++v) ++size[comp[v]];
  std::vector<int> seeds;
  for (int v = 0; v < n; ++v)
    if (self[v] || size[comp[v]] > 1) seeds.push_back(v);
  if (seeds.empty()) {
    // Above the critical value no cycle is tight; start from the cheapest rest point.
    double best = kInf;
    int arg = 0;
    for (const auto& e : E)
      if (e.from == e.to && g.weight(e, c) / e.dt < best) {
        best = g.weight(e, c) / e.dt;
        arg = e.from;
      }
    seeds.push_back(arg);
  }
  return seeds;
}

ValueField value_iteration(const ActionGraph& g, double c, bool backward) {
  const int n = g.nodes();
  const auto& E = g.edges();
  ValueField u;
  u.dim = g.dim();
  u.n = g.n();
  u.h = g.spacing();
  u.c = c;
  u.seeds = zero_cycle_nodes(g, c);
  u.values.assign(n, kInf);
  for (int s : u.seeds) u.values[s] = 0.0;
  const int cap = n * static_cast<int>(g.menu().size()) + 1;
  bool changed = true;
  while (changed) {
    changed = false;
    ++u.passes;
    if (u.passes > cap) throw BelowCritical(c, 0.0);
    for (const auto& e : E) {
      const int a = backward ? e.to : e.from, b = backward ? e.from : e.to;
      if (u.values[a] == kInf) continue;
      const double nd = u.values[a] + g.weight(e, c);
      if (improves(nd, u.values[b], 1e-15)) {
        u.values[b] = nd;
        changed = true;
      }
    }
  }
  std::vector<double> target(n, kInf);
  for (int s : u.seeds) target[s] = 0.0;
  for (const auto& e : E) {
    const int a = backward ? e.to : e.from, b = backward ? e.from : e.to;
    const double w = g.weight(e, c);
    target[b] = std::min(target[b], u.values[a] + w);
    const double viol = backward ? u.values[a] - u.values[b] - w : u.values[b] - u.values[a] - w;
    u.domination_violation = std::max(u.domination_violation, viol);
  }
  for (int v = 0; v < n; ++v)
    if (u.values[v] < kInf) u.residual = std::max(u.residual, std::abs(u.values[v] - target[v]));
  return u;
}

}  // namespace

ValueField lax_oleinik(const ActionGraph& g, double c) { return value_iteration(g, c, false); }
ValueField lax_oleinik_backward(const ActionGraph& g, double c) { return value_iteration(g, c, true); }

double domination_fraction(const ActionGraph& g, const ValueField& u, double tol) {
  std::size_t ok = 0, total = 0;
  for (const auto& e : g.edges()) {
    if (!std::isfinite(u.values[e.from]) || !std::isfinite(u.values[e.to])) continue;
    ++total;
    if (u.values[e.to] - u.values[e.from] <= g.weight(e, u.c) + tol) ++ok;
  }
  return total ? static_cast<double>(ok) / static_cast<double>(total) : 1.0;
}

std::string to_string(SetKind k) {
  switch (k) {
    case SetKind::mather: return "mather";
    case SetKind::aubry: return "aubry";
    case SetKind::mane: return "mane";
  }
  return "?";
}

bool InvariantSetApprox::contains(const PhaseCell& c) const { return std::binary_search(cells.begin(), cells.end(), c); }

int PhaseGrid::cell_v(double v) const {
  return std::clamp(static_cast<int>(std::lround(v / dv)) + nv / 2, 0, nv - 1);
}

namespace {

InvariantSetApprox make_set(SetKind kind, std::set<PhaseCell> cells, double tol) {
  InvariantSetApprox s;
  s.kind = kind;
  s.cells.assign(cells.begin(), cells.end());
  s.tolerance = tol;
  return s;
}

}  // namespace

SetTriple classify_and_extract_sets(const ActionGraph& g, double c, const ValueField& u, int nv) {
  if (g.dim() != 1) throw std::invalid_argument("phase-space sets are implemented for one-dimensional models");
  const int n = g.nodes();
  const auto& E = g.edges();
  SetTriple out;
  out.grid = {g.n(), nv, g.spacing(), g.speed_resolution()};
  const PhaseGrid& grid = out.grid;
  auto velocity = [](const ActionGraph::Edge& e) { return e.disp[0] / e.dt; };

  // Mather: edges of zero-action cycles, i.e. cyclic components of the edges
  // calibrated by u.
  {
    std::vector<std::vector<int>> adj(n);
    for (const auto& e : E)
      if (e.from != e.to && u.values[e.from] + g.weight(e, c) - u.values[e.to] <= kTight) adj[e.from].push_back(e.to);
    int count = 0;
    const std::vector<int> comp = scc(n, adj, &count);
    std::set<PhaseCell> cells;
    for (const auto& e : E) {
      if (u.values[e.from] + g.weight(e, c) - u.values[e.to] > kTight) continue;
      if (e.from == e.to || comp[e.from] == comp[e.to]) cells.insert({e.from, grid.cell_v(velocity(e))});
    }
    out.mather = make_set(SetKind::mather, std::move(cells), kTight);
  }

  // Aubry: Peierls-type barrier Phi_c(x, x) within 3 action resolutions.
  const double tol = 3.0 * g.action_resolution();
  out.barrier.assign(n, kInf);
  std::vector<int> aubry_nodes;
  for (int x = 0; x < n; ++x) {
    out.barrier[x] = shortest_paths_from(g, c, x).dist[x];
    if (out.barrier[x] <= tol) aubry_nodes.push_back(x);
  }
  {
    std::set<PhaseCell> cells;
    std::vector<char> is_aubry(n, 0);
    for (int x : aubry_nodes) is_aubry[x] = 1;
    for (int x : aubry_nodes) {
      const PathTree back = shortest_paths_to(g, c, x);
      for (int e = g.out_begin(x); e < g.out_begin(x + 1); ++e) {
        const int y = E[e].to;
        if (!is_aubry[y]) continue;
        const double ret = y == x ? 0.0 : back.dist[y];
        if (g.weight(E[e], c) + ret <= tol) cells.insert({x, grid.cell_v(velocity(E[e]))});
      }
    }
    out.aubry = make_set(SetKind::aubry, std::move(cells), tol);
  }

  // Mane: semi-static arcs leaving or entering the seeds. On a calibrated arc
  // L + c = v^2, so the difference quotient of the field is the velocity.
  {
    const ValueField ub = lax_oleinik_backward(g, c);
    std::set<PhaseCell> cells;
    for (const auto& e : E) {
      const double w = g.weight(e, c);
      const double d = e.disp[0];
      if (u.values[e.from] + w - u.values[e.to] <= kTight * (1.0 + std::abs(u.values[e.to])))
        cells.insert({e.to, grid.cell_v(d == 0.0 ? 0.0 : (u.values[e.to] - u.values[e.from]) / d)});
      if (ub.values[e.to] + w - ub.values[e.from] <= kTight * (1.0 + std::abs(ub.values[e.from])))
        cells.insert({e.from, grid.cell_v(d == 0.0 ? 0.0 : (ub.values[e.from] - ub.values[e.to]) / d)});
    }
    out.mane = make_set(SetKind::mane, std::move(cells), kTight);
  }
  return out;
}

namespace {

int cell_distance(const PhaseCell& a, const PhaseCell& b, int nx) {
  int dx = std::abs(a.ix - b.ix);
  dx = std::min(dx, nx - dx);
  return std::max(dx, std::abs(a.iv - b.iv));
}

int distance_to_set(const PhaseCell& c, const InvariantSetApprox& s, int nx) {
  int best = std::numeric_limits<int>::max();
  for (const auto& d : s.cells) best = std::min(best, cell_distance(c, d, nx));
  return best;
}

}  // namespace

int inclusion_violations(const InvariantSetApprox& sub, const InvariantSetApprox& super, int slack) {
  int bad = 0;
  const int nx = std::numeric_limits<int>::max() / 2;
  for (const auto& c : sub.cells)
    if (slack == 0 ? !super.contains(c) : distance_to_set(c, super, nx) > slack) ++bad;
  return bad;
}

double energy_level_distance(const LagrangianModel& m, double c, const PhaseGrid& grid,
                             const InvariantSetApprox& set) {
  double worst = 0.0;
  for (const auto& cell : set.cells) {
    const double x = grid.x(cell.ix), v = grid.v(cell.iv);
    double best = kInf;
    for (int s = -48; s <= 48; ++s) {
      const double xp = x + s * grid.h / 16.0;
      const double gap = c - m.U(Vec2(xp, 0.0));
      if (gap < -1e-12) continue;
      const double speed = std::sqrt(std::max(0.0, 2.0 * gap));
      for (double sign : {-1.0, 1.0})
        best = std::min(best, std::max(std::abs(s) / 16.0, std::abs(v - sign * speed) / grid.dv));
    }
    worst = std::max(worst, best);
  }
  return worst;
}

double flow_invariance_distance(const LagrangianModel& m, const PhaseGrid& grid, const InvariantSetApprox& set,
                                double time, double step) {
  int worst = 0;
  for (const auto& cell : set.cells) {
    const lagrangian::Curve c =
        lagrangian::el_flow(m, {Vec2(grid.x(cell.ix), 0.0), Vec2(grid.v(cell.iv), 0.0)}, time, step);
    const Vec2 x = lagrangian::wrap(c.x.back(), 1);
    const int ix = static_cast<int>(std::lround(x[0] / grid.h)) % grid.nx;
    worst = std::max(worst, distance_to_set({ix, grid.cell_v(c.v.back()[0])}, set, grid.nx));
  }
  return worst;
}

QuadraticBound quadratic_bound_check(const ActionGraph& g, const ValueField& u, const Vec2& z, const Vec2& zdot,
                                     double radius, double inner) {
  if (radius < 2.0 * g.spacing()) throw std::domain_error("radius below grid resolution");
  if (inner < 0.0) inner = 0.25 * radius;
  const int iz = g.node_at(z);
  Vec2 p = zdot;
  if (g.model().omega) p += g.model().omega(g.position(iz));
  QuadraticBound q;
  for (int y = 0; y < g.nodes(); ++y) {
    const Vec2 d = torus_disp(g.position(iz), g.position(y), g.dim());
    const double r = d.norm();
    if (r < inner || r > radius || r == 0.0) continue;
    if (!std::isfinite(u.values[y]) || !std::isfinite(u.values[iz])) continue;
    q.K = std::max(q.K, std::abs(u.values[y] - u.values[iz] - p.dot(d)) / (r * r));
    ++q.samples;
  }
  return q;
}

void CrossingConstants::validate() const {
  if (!(C > 1.0)) throw std::invalid_argument("crossing constant C must exceed 1");
  if (!(eps > 0.0 && delta > 0.0 && zeta > 0.0 && eta >= 0.0))
    throw std::invalid_argument("crossing constants must be positive");
}

namespace {

bool same_grid(const Curve& a, const Curve& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a.t[i] - b.t[i]) > 1e-12 * (1.0 + std::abs(a.t[i]))) return false;
  return true;
}

std::size_t nearest_index(const Curve& c, double t) {
  const auto it = std::lower_bound(c.t.begin(), c.t.end(), t);
  std::size_t i = static_cast<std::size_t>(it - c.t.begin());
  if (i == c.size()) return i - 1;
  if (i > 0 && t - c.t[i - 1] < c.t[i] - t) --i;
  return i;
}

double el_residual(const LagrangianModel& m, const Curve& c, std::size_t i0, std::size_t i1) {
  double worst = 0.0;
  for (std::size_t i = std::max<std::size_t>(i0, 1); i <= i1 && i + 1 < c.size(); ++i) {
    const Vec2 acc = (c.v[i + 1] - c.v[i - 1]) / (c.t[i + 1] - c.t[i - 1]);
    worst = std::max(worst, (acc - m.acceleration(c.x[i], c.v[i])).norm());
  }
  return worst;
}

double sampled_c2_norm(const Potential& phi, int dim) {
  double worst = 0.0;
  const int n = 128;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < (dim == 2 ? n : 1); ++j) {
      const Vec2 x(kPeriod * i / n, dim == 2 ? kPeriod * j / n : 0.0);
      const Eigen::SelfAdjointEigenSolver<Mat2> es(phi.hessian(x), Eigen::EigenvaluesOnly);
      worst = std::max({worst, std::abs(phi.value(x)), phi.gradient(x).norm(), es.eigenvalues().cwiseAbs().maxCoeff()});
    }
  return worst;
}

}  // namespace

CrossingResult crossing_gain(const LagrangianModel& model, const Potential& phi, const Curve& alpha,
                             const Curve& gamma, double t0, const CrossingConstants& k) {
  k.validate();
  CrossingResult r;
  if (!alpha.has_velocity() || !gamma.has_velocity() || !same_grid(alpha, gamma))
    throw std::invalid_argument("crossing curves need velocities on a shared time grid");
  const std::size_t i0 = nearest_index(alpha, t0 - k.eps), im = nearest_index(alpha, t0),
                    i1 = nearest_index(alpha, t0 + k.eps);
  r.distance = (alpha.x[im] - gamma.x[im]).norm();
  r.angle = std::sqrt(r.distance * r.distance + (alpha.v[im] - gamma.v[im]).squaredNorm());
  auto reject = [&](const std::string& why) {
    r.rejection = why;
    return r;
  };
  if (alpha.t[i0] > t0 - k.eps + 1e-9 || alpha.t[i1] < t0 + k.eps - 1e-9)
    return reject("window [t0 - eps, t0 + eps] exceeds the curves");
  const LagrangianModel lp = model.perturbed(phi);
  if (sampled_c2_norm(phi, model.dim) >= k.zeta) return reject("C2 norm of phi is not below zeta");
  if (std::max(el_residual(lp, alpha, i0, i1), el_residual(lp, gamma, i0, i1)) > 1e-4)
    return reject("curves do not solve the Euler-Lagrange equation of L + phi");
  if (r.distance > k.delta) return reject("distance at t0 exceeds delta");
  if (r.angle < k.C * r.distance) return reject("crossing angle below C times distance");

  const Curve a_in = alpha.slice(i0, i1), g_in = gamma.slice(i0, i1);
  r.a = a_in;
  r.c = g_in;
  // Chord between the swapped endpoints plus the blended deviations of each
  // curve from its own chord; identical curves give a = alpha exactly.
  const double ta = a_in.t.front(), span = a_in.t.back() - ta;
  const std::size_t last = a_in.size() - 1;
  const Vec2 a0 = a_in.x[0], a1 = a_in.x[last], g0 = g_in.x[0], g1 = g_in.x[last];
  for (std::size_t i = 0; i < a_in.size(); ++i) {
    const double s = (a_in.t[i] - ta) / span, ds = 1.0 / span;
    const Vec2 da = a_in.x[i] - ((1 - s) * a0 + s * a1), dg = g_in.x[i] - ((1 - s) * g0 + s * g1);
    const Vec2 dva = a_in.v[i] - (a1 - a0) * ds, dvg = g_in.v[i] - (g1 - g0) * ds;
    r.a.x[i] = (1 - s) * a0 + s * g1 + (1 - s) * da + s * dg;
    r.a.v[i] = (g1 - a0) * ds + (1 - s) * dva + s * dvg + ds * (dg - da);
    r.c.x[i] = (1 - s) * g0 + s * a1 + (1 - s) * dg + s * da;
    r.c.v[i] = (a1 - g0) * ds + (1 - s) * dvg + s * dva + ds * (da - dg);
  }
  r.gain = lagrangian::action(lp, a_in) + lagrangian::action(lp, g_in) - lagrangian::action(lp, r.a) -
           lagrangian::action(lp, r.c);
  r.eta = r.angle > 0.0 ? r.gain / (r.angle * r.angle) : 0.0;
  r.accepted = true;
  return r;
}

SecondOrderReport second_order_action_bound(const LagrangianModel& model, const Curve& reference,
                                            const std::vector<Curve>& nearby, double rho) {
  if (!reference.has_velocity()) throw std::invalid_argument("reference curve needs velocities");
  SecondOrderReport rep;
  rep.rho = rho;
  rep.K = 8.0 * std::max(1.0, model.hessian_bound);
  const double T = reference.duration();
  rep.bound = rep.K * (1.0 + T) * rho * rho;
  rep.quadruple_bound = 3.0 * rep.bound;
  auto momentum = [&](std::size_t i) {
    Vec2 p = reference.v[i];
    if (model.omega) p += model.omega(reference.x[i]);
    return p;
  };
  auto check_tube = [&](const Curve& z, const char* name) {
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double d = std::sqrt((z.x[i] - reference.x[i]).squaredNorm() + (z.v[i] - reference.v[i]).squaredNorm());
      if (d > 4.0 * rho * (1.0 + 1e-12))
        throw std::domain_error(std::string(name) + " curve exits the 4 rho tube at t = " + std::to_string(z.t[i]));
    }
  };
  const double ax = lagrangian::action(model, reference);
  const std::size_t last = reference.size() - 1;
  rep.holds = true;
  for (const Curve& z : nearby) {
    if (!z.has_velocity() || !same_grid(z, reference))
      throw std::invalid_argument("nearby curves need velocities on the reference time grid");
    check_tube(z, "nearby");
    const double boundary = momentum(last).dot(z.x[last] - reference.x[last]) - momentum(0).dot(z.x[0] - reference.x[0]);
    const double res = std::abs(lagrangian::action(model, z) - ax - boundary);
    rep.residuals.push_back(res);
    // Exchange pair: w1 from x(0) to z(T), w2 from z(0) to x(T).
    Curve w1 = z, w2 = z;
    for (std::size_t i = 0; i <= last; ++i) {
      const double s = (z.t[i] - z.t[0]) / T;
      const Vec2 dx = z.x[i] - reference.x[i], dv = z.v[i] - reference.v[i];
      w1.x[i] = reference.x[i] + s * dx;
      w1.v[i] = reference.v[i] + s * dv + dx / T;
      w2.x[i] = z.x[i] - s * dx;
      w2.v[i] = z.v[i] - s * dv - dx / T;
    }
    check_tube(w1, "exchange");
    check_tube(w2, "exchange");
    const double quad =
        std::abs(ax + lagrangian::action(model, z) - lagrangian::action(model, w1) - lagrangian::action(model, w2));
    rep.quadruple.push_back(quad);
    rep.holds = rep.holds && res <= rep.bound && quad <= rep.quadruple_bound;
  }
  return rep;
}

namespace {

// sigma and its derivatives.
std::array<double, 3> sigma(double t) {
  if (t <= 0.5) return {t * t, 2.0 * t, 2.0};
  if (t >= 1.0) return {1.0, 0.0, 0.0};
  const double u = 2.0 * t - 1.0, u2 = u * u, u3 = u2 * u, u4 = u3 * u, u5 = u4 * u;
  // Quintic Hermite data: q(0) = 1/4, q'(0) = 1/2, q''(0) = 1/2, q(1) = 1, q'(1) = q''(1) = 0.
  const double h0 = 1 - 10 * u3 + 15 * u4 - 6 * u5, h1 = u - 6 * u3 + 8 * u4 - 3 * u5,
               h2 = 0.5 * u2 - 1.5 * u3 + 1.5 * u4 - 0.5 * u5, h3 = 10 * u3 - 15 * u4 + 6 * u5;
  const double d0 = -30 * u2 + 60 * u3 - 30 * u4, d1 = 1 - 18 * u2 + 32 * u3 - 15 * u4,
               d2 = u - 4.5 * u2 + 6 * u3 - 2.5 * u4, d3 = 30 * u2 - 60 * u3 + 30 * u4;
  const double s0 = -60 * u + 180 * u2 - 120 * u3, s1 = -36 * u + 96 * u2 - 60 * u3,
               s2 = 1 - 9 * u + 18 * u2 - 10 * u3, s3 = 60 * u - 180 * u2 + 120 * u3;
  const double q = 0.25 * h0 + 0.5 * h1 + 0.5 * h2 + h3;
  const double dq = 0.25 * d0 + 0.5 * d1 + 0.5 * d2 + d3;
  const double ddq = 0.25 * s0 + 0.5 * s1 + 0.5 * s2 + s3;
  return {q, 2.0 * dq, 4.0 * ddq};
}

}  // namespace

double channel_gamma_bar(double gamma, double C, double B) {
  if (!(C > 1.0)) throw std::invalid_argument("C must exceed 1");
  if (B < 0.0) throw std::invalid_argument("B must be nonnegative");
  return gamma / (3.0 * C * (B + 1.0));
}

double orbit_gap(const std::vector<Vec2>& orbit, int dim) {
  double gap = kInf;
  for (std::size_t i = 0; i < orbit.size(); ++i)
    for (std::size_t j = i + 1; j < orbit.size(); ++j) {
      const double d = torus_disp(orbit[i], orbit[j], dim).norm();
      if (d > 0.0) gap = std::min(gap, d);
    }
  return gap;
}

ContinuousChannel::ContinuousChannel(std::vector<Vec2> orbit, double eps, double rho, double gamma_bar,
                                     const ChannelOptions& opt)
    : orbit_(std::move(orbit)), eps_(eps), rho_(rho), gamma_bar_(gamma_bar), opt_(opt) {
  if (orbit_.empty()) throw std::invalid_argument("channel orbit is empty");
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
  if (!(rho < 0.25 * gamma_bar)) throw std::invalid_argument("rho < gamma_bar / 4");
  if (!opt.polyline && orbit_.size() > 1 && !(0.25 * gamma_bar < 0.5 * orbit_gap(orbit_, opt.dim)))
    throw std::invalid_argument("gamma_bar / 4 < gamma(orbit) / 2");
}

std::pair<double, Vec2> ContinuousChannel::nearest(const Vec2& x) const {
  double best = kInf;
  Vec2 disp = Vec2::Zero();
  const int dim = opt_.dim;
  for (std::size_t i = 0; i < orbit_.size(); ++i) {
    Vec2 d = torus_disp(orbit_[i], x, dim);
    if (opt_.polyline) {
      const Vec2 seg = torus_disp(orbit_[i], orbit_[(i + 1) % orbit_.size()], dim);
      const double len2 = seg.squaredNorm();
      if (len2 > 0.0) {
        const double s = std::clamp(d.dot(seg) / len2, 0.0, 1.0);
        d -= s * seg;
      }
    }
    if (d.norm() < best) {
      best = d.norm();
      disp = d;
    }
  }
  return {best, disp};
}

double ContinuousChannel::distance(const Vec2& x) const { return nearest(x).first; }

double ContinuousChannel::value(const Vec2& x) const {
  const double R = 0.25 * gamma_bar_;
  return 0.5 * eps_ * R * R * sigma(nearest(x).first / R)[0];
}

Vec2 ContinuousChannel::gradient(const Vec2& x) const {
  const double R = 0.25 * gamma_bar_;
  const auto [r, d] = nearest(x);
  if (r == 0.0) return Vec2::Zero();
  return 0.5 * eps_ * R * sigma(r / R)[1] * d / r;
}

lagrangian::Mat2 ContinuousChannel::hessian(const Vec2& x) const {
  const double R = 0.25 * gamma_bar_;
  const auto [r, d] = nearest(x);
  const auto s = sigma(r / R);
  Mat2 proj = Mat2::Identity();
  if (opt_.dim == 1) proj(1, 1) = 0.0;
  if (r == 0.0) return eps_ * proj;
  const Vec2 n = d / r;
  const Mat2 nn = n * n.transpose();
  // Point-distance Hessian; polyline interiors have no tangential curvature
  // term, which the point formula overstates only where phi is quadratic.
  return 0.5 * eps_ * s[2] * nn + 0.5 * eps_ * R * s[1] / r * (proj - nn);
}

Potential ContinuousChannel::as_potential() const {
  Potential p;
  p.kind = "custom";
  const ContinuousChannel self = *this;
  p.value = [self](const Vec2& x) { return self.value(x); };
  p.gradient = [self](const Vec2& x) { return self.gradient(x); };
  p.hessian = [self](const Vec2& x) { return self.hessian(x); };
  return p;
}

std::vector<double> ContinuousChannel::grid_values() const {
  const int n = opt_.n, dim = opt_.dim;
  std::vector<double> v(dim == 1 ? n : n * n);
  const double h = kPeriod / n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < (dim == 2 ? n : 1); ++j) v[i + n * j] = value(Vec2(h * i, h * j));
  return v;
}

double ContinuousChannel::c2_norm() const {
  const int n = opt_.n, dim = opt_.dim;
  const std::vector<double> v = grid_values();
  const double h = kPeriod / n;
  auto at = [&](int i, int j) { return v[((i % n + n) % n) + (dim == 2 ? n * ((j % n + n) % n) : 0)]; };
  double worst = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < (dim == 2 ? n : 1); ++j) {
      Mat2 hs = Mat2::Zero();
      Vec2 gr = Vec2::Zero();
      gr[0] = (at(i + 1, j) - at(i - 1, j)) / (2 * h);
      hs(0, 0) = (at(i + 1, j) - 2 * at(i, j) + at(i - 1, j)) / (h * h);
      if (dim == 2) {
        gr[1] = (at(i, j + 1) - at(i, j - 1)) / (2 * h);
        hs(1, 1) = (at(i, j + 1) - 2 * at(i, j) + at(i, j - 1)) / (h * h);
        hs(0, 1) = hs(1, 0) = (at(i + 1, j + 1) - at(i + 1, j - 1) - at(i - 1, j + 1) + at(i - 1, j - 1)) / (4 * h * h);
      }
      const Eigen::SelfAdjointEigenSolver<Mat2> es(hs, Eigen::EigenvaluesOnly);
      worst = std::max({worst, std::abs(at(i, j)), gr.norm(), es.eigenvalues().cwiseAbs().maxCoeff()});
    }
  return worst;
}

ContinuousChannel build_channel_continuous(const std::vector<Vec2>& orbit, double eps, double rho, double gamma_bar,
                                           const ChannelOptions& opt) {
  return ContinuousChannel(orbit, eps, rho, gamma_bar, opt);
}

std::vector<double> closed_curve_actions(const ActionGraph& g, double c, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int n = g.n(), d = g.dim(), J = g.stencil(), m = static_cast<int>(g.menu().size());
  const int w = 2 * J + 1;
  std::uniform_int_distribution<int> node(0, g.nodes() - 1), steps(1, 30), jump(-J, J), menu(0, m - 1);
  auto edge_index = [&](int a, int jx, int jy) {
    const int local = d == 1 ? (jx + J) : (jx + J) * w + (jy + J);
    return g.out_begin(a) + local * m + menu(rng);
  };
  std::vector<double> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    const int start = node(rng);
    int a = start;
    long cx = 0, cy = 0;  // lifted displacement in cells
    double s = 0.0;
    auto take = [&](int jx, int jy) {
      const auto& e = g.edges()[edge_index(a, jx, jy)];
      s += g.weight(e, c);
      a = e.to;
      cx += jx;
      cy += jy;
    };
    const int len = steps(rng);
    for (int i = 0; i < len; ++i) take(jump(rng), d == 2 ? jump(rng) : 0);
    // Close through the nearest lift of the start point.
    auto target = [&](long c0) { return -(c0 - n * static_cast<long>(std::lround(static_cast<double>(c0) / n))); };
    long rx = target(cx), ry = d == 2 ? target(cy) : 0;
    while (rx != 0 || ry != 0) {
      const int jx = static_cast<int>(std::clamp<long>(rx, -J, J)), jy = static_cast<int>(std::clamp<long>(ry, -J, J));
      take(jx, jy);
      rx -= jx;
      ry -= jy;
    }
    if (a != start) throw std::logic_error("closed curve did not return to its start");
    out.push_back(s);
  }
  return out;
}

std::string field_csv(const ActionGraph& g, const ValueField& u) {
  std::ostringstream os;
  os.precision(17);
  os << (g.dim() == 1 ? "x,u\n" : "x1,x2,u\n");
  for (int v = 0; v < g.nodes(); ++v) {
    const Vec2 p = g.position(v);
    os << p[0] << ',';
    if (g.dim() == 2) os << p[1] << ',';
    os << u.values[v] << '\n';
  }
  return os.str();
}

std::string sets_csv(const SetTriple& s) {
  std::ostringstream os;
  os.precision(17);
  os << "set,ix,iv,x,v\n";
  for (const auto* set : {&s.mather, &s.aubry, &s.mane})
    for (const auto& c : set->cells)
      os << to_string(set->kind) << ',' << c.ix << ',' << c.iv << ',' << s.grid.x(c.ix) << ',' << s.grid.v(c.iv)
         << '\n';
  return os.str();
}

nlohmann::json to_json(const CriticalValue& c) {
  nlohmann::json cyc = nlohmann::json::array();
  for (int e : c.certificate.edges) cyc.push_back(e);
  return {{"value", c.value},       {"lower", c.lower},         {"bracket", c.bracket},
          {"estimate", c.estimate}, {"iterations", c.iterations}, {"certificate_edges", cyc},
          {"certificate_time", c.certificate.time}};
}

}  // namespace manelab::weakkam
