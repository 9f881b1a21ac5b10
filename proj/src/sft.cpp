#include "manelab/sft.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace manelab::sft {

Sft::Sft(int alphabet_size, std::vector<std::vector<int>> successors)
    : m_(alphabet_size), succ_(std::move(successors)) {
  if (m_ <= 0) throw std::invalid_argument("sft: alphabet size must be positive");
  if (static_cast<int>(succ_.size()) != m_) throw std::invalid_argument("sft: successor table size mismatch");
  std::vector<char> has_pred(m_, 0);
  for (int a = 0; a < m_; ++a) {
    auto& s = succ_[a];
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    if (s.empty()) throw std::invalid_argument("sft: symbol " + std::to_string(a) + " has no successor");
    for (int b : s) {
      if (b < 0 || b >= m_) throw std::invalid_argument("sft: transition target out of range");
      has_pred[b] = 1;
    }
  }
  for (int b = 0; b < m_; ++b) {
    if (!has_pred[b]) throw std::invalid_argument("sft: symbol " + std::to_string(b) + " has no predecessor");
  }
}

Sft Sft::from_matrix(const std::vector<std::vector<int>>& t) {
  const int m = static_cast<int>(t.size());
  std::vector<std::vector<int>> succ(m);
  for (int a = 0; a < m; ++a) {
    if (static_cast<int>(t[a].size()) != m) throw std::invalid_argument("sft: transition matrix must be square");
    for (int b = 0; b < m; ++b) {
      if (t[a][b] != 0 && t[a][b] != 1) throw std::invalid_argument("sft: transition entries must be 0 or 1");
      if (t[a][b]) succ[a].push_back(b);
    }
  }
  return Sft(m, std::move(succ));
}

Sft Sft::full_shift(int m) {
  std::vector<std::vector<int>> succ(m);
  for (auto& s : succ) {
    s.resize(m);
    std::iota(s.begin(), s.end(), 0);
  }
  return Sft(m, std::move(succ));
}

bool Sft::allowed(int a, int b) const {
  const auto& s = succ_[a];
  return std::binary_search(s.begin(), s.end(), b);
}

std::size_t Sft::edge_count() const {
  std::size_t n = 0;
  for (const auto& s : succ_) n += s.size();
  return n;
}

std::vector<std::vector<int>> Sft::matrix() const {
  std::vector<std::vector<int>> t(m_, std::vector<int>(m_, 0));
  for (int a = 0; a < m_; ++a)
    for (int b : succ_[a]) t[a][b] = 1;
  return t;
}

std::vector<std::vector<int>> Sft::predecessors() const {
  std::vector<std::vector<int>> pred(m_);
  for (int a = 0; a < m_; ++a)
    for (int b : succ_[a]) pred[b].push_back(a);
  return pred;
}

std::optional<Sft> prune(int m, std::vector<std::vector<int>> succ, std::vector<int>* kept) {
  std::vector<int> outdeg(m, 0), indeg(m, 0);
  std::vector<std::vector<int>> pred(m);
  for (int a = 0; a < m; ++a) {
    auto& s = succ[a];
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    outdeg[a] = static_cast<int>(s.size());
    for (int b : s) {
      ++indeg[b];
      pred[b].push_back(a);
    }
  }
  std::vector<char> alive(m, 1);
  std::deque<int> queue;
  for (int a = 0; a < m; ++a)
    if (outdeg[a] == 0 || indeg[a] == 0) queue.push_back(a);
  while (!queue.empty()) {
    const int a = queue.front();
    queue.pop_front();
    if (!alive[a]) continue;
    alive[a] = 0;
    for (int b : succ[a])
      if (alive[b] && --indeg[b] == 0) queue.push_back(b);
    for (int p : pred[a])
      if (alive[p] && --outdeg[p] == 0) queue.push_back(p);
  }
  std::vector<int> index(m, -1);
  std::vector<int> keep;
  for (int a = 0; a < m; ++a) {
    if (alive[a]) {
      index[a] = static_cast<int>(keep.size());
      keep.push_back(a);
    }
  }
  if (kept) *kept = keep;
  if (keep.empty()) return std::nullopt;
  std::vector<std::vector<int>> out(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i)
    for (int b : succ[keep[i]])
      if (alive[b]) out[i].push_back(index[b]);
  return Sft(static_cast<int>(keep.size()), std::move(out));
}

std::vector<std::vector<int>> strongly_connected_components(int m, const std::vector<std::vector<int>>& succ) {
  // Iterative Tarjan.
  std::vector<int> index(m, -1), low(m, 0), stack;
  std::vector<char> on_stack(m, 0);
  std::vector<std::vector<int>> comps;
  int counter = 0;
  std::vector<std::pair<int, std::size_t>> call;
  for (int root = 0; root < m; ++root) {
    if (index[root] >= 0) continue;
    call.push_back({root, 0});
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!call.empty()) {
      auto& [v, pos] = call.back();
      if (pos < succ[v].size()) {
        const int w = succ[v][pos++];
        if (index[w] < 0) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = 1;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
      } else {
        const int vv = v;
        call.pop_back();
        if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[vv]);
        if (low[vv] == index[vv]) {
          std::vector<int> comp;
          int w;
          do {
            w = stack.back();
            stack.pop_back();
            on_stack[w] = 0;
            comp.push_back(w);
          } while (w != vv);
          std::sort(comp.begin(), comp.end());
          comps.push_back(std::move(comp));
        }
      }
    }
  }
  return comps;
}

bool is_valid_orbit(const Sft& sft, const SymbolicOrbit& orbit) {
  const int p = orbit.period();
  if (p == 0) return false;
  for (int i = 0; i < p; ++i) {
    const int a = orbit.word[i];
    const int b = orbit.word[(i + 1) % p];
    if (a < 0 || a >= sft.size() || b < 0 || b >= sft.size() || !sft.allowed(a, b)) return false;
  }
  return true;
}

namespace {

bool recurrent(const std::vector<int>& comp, const Sft& sft) {
  if (comp.size() > 1) return true;
  return sft.allowed(comp[0], comp[0]);
}

double component_radius(const Sft& sft, const std::vector<int>& comp) {
  const int n = static_cast<int>(comp.size());
  std::unordered_map<int, int> local;
  for (int i = 0; i < n; ++i) local[comp[i]] = i;
  if (n <= 300) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int b : sft.successors(comp[i])) {
        auto it = local.find(b);
        if (it != local.end()) a(i, it->second) = 1.0;
      }
    Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
    double r = 0.0;
    for (int i = 0; i < n; ++i) r = std::max(r, std::abs(es.eigenvalues()[i]));
    return r;
  }
  // Power iteration on A + I, which is primitive on an irreducible component.
  std::vector<std::vector<int>> adj(n);
  for (int i = 0; i < n; ++i)
    for (int b : sft.successors(comp[i])) {
      auto it = local.find(b);
      if (it != local.end()) adj[i].push_back(it->second);
    }
  std::vector<double> x(n, 1.0), y(n);
  double estimate = 0.0;
  for (int iter = 0; iter < 5000; ++iter) {
    for (int i = 0; i < n; ++i) {
      double s = x[i];
      for (int j : adj[i]) s += x[j];
      y[i] = s;
    }
    double num = 0.0, den = 0.0, mx = 0.0;
    for (int i = 0; i < n; ++i) {
      num += y[i];
      den += x[i];
      mx = std::max(mx, y[i]);
    }
    const double next = num / den - 1.0;
    for (int i = 0; i < n; ++i) x[i] = y[i] / mx;
    if (iter > 10 && std::abs(next - estimate) <= 1e-12 * std::max(1.0, next)) {
      estimate = next;
      break;
    }
    estimate = next;
  }
  return estimate;
}

}  // namespace

double spectral_radius(const Sft& sft, std::vector<int>* component) {
  std::vector<std::vector<int>> succ(sft.size());
  for (int a = 0; a < sft.size(); ++a) succ[a] = sft.successors(a);
  double best = 0.0;
  for (const auto& comp : strongly_connected_components(sft.size(), succ)) {
    if (!recurrent(comp, sft)) continue;
    const double r = component_radius(sft, comp);
    if (r > best + 1e-12 || (component && component->empty())) {
      best = std::max(best, r);
      if (component) *component = comp;
    }
  }
  return best;
}

double log_word_count(const Sft& sft, int n) {
  if (n <= 0) return 0.0;
  const int m = sft.size();
  std::vector<double> v(m, 1.0), w(m);
  double log_scale = 0.0;
  for (int k = 1; k < n; ++k) {
    double mx = 0.0;
    for (int a = 0; a < m; ++a) {
      double s = 0.0;
      for (int b : sft.successors(a)) s += v[b];
      w[a] = s;
      mx = std::max(mx, s);
    }
    for (int a = 0; a < m; ++a) v[a] = w[a] / mx;
    log_scale += std::log(mx);
  }
  double total = 0.0;
  for (double x : v) total += x;
  return log_scale + std::log(total);
}

EntropyReport entropy(const Sft& sft, int word_length) {
  if (word_length < 2) throw std::invalid_argument("entropy: word length must be at least 2");
  EntropyReport r;
  r.word_length = word_length;
  r.spectral = std::log(std::max(1.0, spectral_radius(sft, &r.component)));
  const int half = word_length / 2;
  r.word_count = (log_word_count(sft, word_length) - log_word_count(sft, half)) / (word_length - half);
  std::vector<std::vector<int>> succ(sft.size());
  for (int a = 0; a < sft.size(); ++a) succ[a] = sft.successors(a);
  r.irreducible = strongly_connected_components(sft.size(), succ).size() == 1;
  return r;
}

double lper_bound(int alphabet_size, double h) { return 1.0 + alphabet_size * std::exp(1.0 - h); }

SymbolicOrbit shortest_periodic_orbit(const Sft& sft) {
  const int m = sft.size();
  int best_len = INT_MAX;
  std::vector<int> best_cycle;
  std::vector<int> dist(m), parent(m);
  for (int s = 0; s < m; ++s) {
    if (sft.allowed(s, s)) {
      best_len = 1;
      best_cycle = {s};
      break;
    }
    std::fill(dist.begin(), dist.end(), -1);
    std::deque<int> queue{s};
    dist[s] = 0;
    bool done = false;
    while (!queue.empty() && !done) {
      const int a = queue.front();
      queue.pop_front();
      if (dist[a] + 1 >= best_len) break;
      for (int b : sft.successors(a)) {
        if (b == s) {
          best_len = dist[a] + 1;
          best_cycle.clear();
          for (int x = a; x != s; x = parent[x]) best_cycle.push_back(x);
          best_cycle.push_back(s);
          std::reverse(best_cycle.begin(), best_cycle.end());
          done = true;
          break;
        }
        if (dist[b] < 0) {
          dist[b] = dist[a] + 1;
          parent[b] = a;
          queue.push_back(b);
        }
      }
    }
  }
  if (best_cycle.empty()) throw std::logic_error("shortest_periodic_orbit: subshift has no cycle");
  const double h = std::log(std::max(1.0, spectral_radius(sft)));
  if (best_len > lper_bound(m, h) + 1e-9)
    throw std::logic_error("shortest_periodic_orbit: period exceeds 1 + M e^{1-h}");
  return SymbolicOrbit{best_cycle};
}

int periodic_agreement(const std::vector<int>& word, long i, long j) {
  const long p = static_cast<long>(word.size());
  auto at = [&](long k) { return word[((k % p) + p) % p]; };
  for (long k = 0; k <= p; ++k) {
    if (at(i + k) != at(j + k) || at(i - k) != at(j - k)) return static_cast<int>(k);
  }
  return INT_MAX;
}

double periodic_shift_distance(const std::vector<int>& word, long i, long j) {
  const int n = periodic_agreement(word, i, j);
  return n == INT_MAX ? 0.0 : std::ldexp(1.0, -n);
}

namespace {

int radius_exponent(double delta) {
  if (!(delta > 0.0) || delta >= 1.0)
    throw std::invalid_argument("dynamic_ball_transitions: delta must lie in (0, 1), the expansivity range of the shift metric");
  return std::max(1, static_cast<int>(std::ceil(-std::log2(delta) - 1e-12)));
}

// Allowed words of a fixed length, in lexicographic order.
std::vector<std::vector<int>> allowed_words(const Sft& sft, int length, std::size_t cap) {
  std::vector<std::vector<int>> out;
  std::vector<int> w;
  std::vector<std::size_t> pos;
  for (int a = 0; a < sft.size(); ++a) {
    w = {a};
    pos = {0};
    while (!w.empty()) {
      if (static_cast<int>(w.size()) == length) {
        out.push_back(w);
        if (out.size() > cap) throw std::runtime_error("dynamic_ball_transitions: spanning set exceeds size cap");
        w.pop_back();
        pos.pop_back();
        continue;
      }
      const auto& s = sft.successors(w.back());
      if (pos.back() < s.size()) {
        const int next = s[pos.back()++];
        w.push_back(next);
        pos.push_back(0);
      } else {
        w.pop_back();
        pos.pop_back();
      }
    }
  }
  return out;
}

// Canonical bi-infinite extension of a center word: smallest allowed symbol
// to the right and to the left.
struct Representative {
  std::vector<int> digits;  // positions [-left, right]
  long left = 0;
  int at(long k) const { return digits[static_cast<std::size_t>(k + left)]; }
};

Representative extend(const Sft& sft, const std::vector<std::vector<int>>& pred, const std::vector<int>& word,
                      int origin, long reach) {
  Representative r;
  std::vector<int> right(word.begin(), word.end());
  while (static_cast<long>(right.size()) - origin <= reach) right.push_back(sft.successors(right.back()).front());
  std::vector<int> left;
  int first = word.front();
  while (static_cast<long>(left.size()) + origin < reach) {
    const auto& p = pred[first];
    first = *std::min_element(p.begin(), p.end());
    left.push_back(first);
  }
  std::reverse(left.begin(), left.end());
  r.left = static_cast<long>(left.size()) + origin;
  r.digits = left;
  r.digits.insert(r.digits.end(), right.begin(), right.end());
  return r;
}

CodedSystem assemble(int centers, int horizon, double delta, std::vector<std::vector<int>> meet,
                     std::vector<std::vector<int>> literal) {
  std::vector<int> kept;
  auto main = prune(centers, std::move(meet), &kept);
  if (!main) throw std::runtime_error("dynamic_ball_transitions: coded subshift is empty");
  CodedSystem out{*main, kept, std::nullopt, {}, centers, horizon, delta};
  std::vector<int> kept_lit;
  out.literal = prune(centers, std::move(literal), &kept_lit);
  out.literal_centers = kept_lit;
  return out;
}

}  // namespace

CodedSystem dynamic_ball_transitions(const Sft& system, int horizon, double delta) {
  if (horizon < 1) throw std::invalid_argument("dynamic_ball_transitions: horizon must be positive");
  const int r = radius_exponent(delta);
  const int length = 2 * horizon + 2 * r - 1;
  const int overlap = 2 * r - 1;
  auto words = allowed_words(system, length, 200000);
  if (words.empty()) throw std::runtime_error("dynamic_ball_transitions: empty spanning set");
  const int n = static_cast<int>(words.size());
  std::map<std::vector<int>, std::vector<int>> by_prefix;
  std::map<std::vector<int>, int> by_word;
  for (int i = 0; i < n; ++i) {
    by_prefix[std::vector<int>(words[i].begin(), words[i].begin() + overlap)].push_back(i);
    by_word[words[i]] = i;
  }
  const auto pred = system.predecessors();
  std::vector<std::vector<int>> meet(n), literal(n);
  for (int i = 0; i < n; ++i) {
    std::vector<int> suffix(words[i].end() - overlap, words[i].end());
    auto it = by_prefix.find(suffix);
    if (it != by_prefix.end()) meet[i] = it->second;
    // Image of the canonical representative, read on the target window.
    const Representative rep = extend(system, pred, words[i], r - 1, 4L * horizon + r);
    std::vector<int> image;
    for (long k = 2L * horizon - (r - 1); k <= 4L * horizon + r - 1; ++k) image.push_back(rep.at(k));
    auto jt = by_word.find(image);
    if (jt != by_word.end()) literal[i].push_back(jt->second);
  }
  return assemble(n, horizon, delta, std::move(meet), std::move(literal));
}

CodedSystem dynamic_ball_transitions(const CatMap& map, int horizon, double delta) {
  if (horizon < 1) throw std::invalid_argument("dynamic_ball_transitions: horizon must be positive");
  if (!(delta > 0.0) || delta >= map.expansivity_radius())
    throw std::invalid_argument("dynamic_ball_transitions: delta must lie in (0, expansivity radius)");
  const double lam2t = std::pow(map.lambda(), 2.0 * horizon);
  const double du = delta / lam2t;  // half width of a dynamic ball along e_u
  const double ds = delta;          // half width along e_s

  // Fundamental square in eigen coordinates and its bounding box.
  std::vector<Vec2> corners;
  for (int cx = 0; cx <= 1; ++cx)
    for (int cy = 0; cy <= 1; ++cy) corners.push_back(map.to_eigen(Vec2(cx, cy)));
  double umin = 1e9, umax = -1e9, smin = 1e9, smax = -1e9;
  for (const auto& c : corners) {
    umin = std::min(umin, c.x());
    umax = std::max(umax, c.x());
    smin = std::min(smin, c.y());
    smax = std::max(smax, c.y());
  }
  const double u0 = umin - du, s0 = smin - ds;
  const int nu = static_cast<int>(std::ceil((umax - umin) / (2.0 * du))) + 2;
  const int ns = static_cast<int>(std::ceil((smax - smin) / (2.0 * ds))) + 2;
  auto center = [&](int i, int j) { return map.from_eigen(u0 + (2 * i + 1) * du, s0 + (2 * j + 1) * ds); };

  // A tile is needed when it meets the fundamental square: separating axis
  // test along the standard axes (the box is a rotated rectangle there).
  auto meets_square = [&](int i, int j) {
    const Vec2 c = center(i, j);
    const double ex = std::abs(map.e_u().x()) * du + std::abs(map.e_s().x()) * ds;
    const double ey = std::abs(map.e_u().y()) * du + std::abs(map.e_s().y()) * ds;
    return c.x() + ex >= 0.0 && c.x() - ex <= 1.0 && c.y() + ey >= 0.0 && c.y() - ey <= 1.0;
  };

  std::vector<int> id(static_cast<std::size_t>(nu) * ns, -1);
  std::vector<std::pair<int, int>> cells;
  for (int i = 0; i < nu; ++i)
    for (int j = 0; j < ns; ++j)
      if (meets_square(i, j)) {
        id[static_cast<std::size_t>(i) * ns + j] = static_cast<int>(cells.size());
        cells.push_back({i, j});
      }

  // Tiles containing a point (all lattice translates that land in the grid).
  auto tiles_containing = [&](const Vec2& p, double hu, double hs, std::vector<int>& out) {
    out.clear();
    const Vec2 w = wrap(p);
    for (int kx = -1; kx <= 1; ++kx)
      for (int ky = -1; ky <= 1; ++ky) {
        const Vec2 e = map.to_eigen(w + Vec2(kx, ky));
        const int ilo = static_cast<int>(std::ceil((e.x() - hu - u0) / (2.0 * du) - 0.5));
        const int ihi = static_cast<int>(std::floor((e.x() + hu - u0) / (2.0 * du) - 0.5));
        const int jlo = static_cast<int>(std::ceil((e.y() - hs - s0) / (2.0 * ds) - 0.5));
        const int jhi = static_cast<int>(std::floor((e.y() + hs - s0) / (2.0 * ds) - 0.5));
        for (int i = std::max(0, ilo); i <= std::min(nu - 1, ihi); ++i)
          for (int j = std::max(0, jlo); j <= std::min(ns - 1, jhi); ++j) {
            const int c = id[static_cast<std::size_t>(i) * ns + j];
            if (c >= 0) out.push_back(c);
          }
      }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  };

  // Removal pass: drop a tile whose probe points are all inside other tiles.
  std::vector<char> removed(cells.size(), 0);
  std::vector<int> hits;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto [i, j] = cells[c];
    bool redundant = true;
    for (int a = -2; a <= 2 && redundant; ++a)
      for (int b = -2; b <= 2 && redundant; ++b) {
        const Vec2 e = map.to_eigen(center(i, j)) + Vec2(0.5 * a * du, 0.5 * b * ds);
        const Vec2 p = map.from_eigen(e.x(), e.y());
        if (p.x() < 0.0 || p.x() >= 1.0 || p.y() < 0.0 || p.y() >= 1.0) continue;
        tiles_containing(p, du, ds, hits);
        bool other = false;
        for (int h : hits)
          if (h != static_cast<int>(c) && !removed[h]) other = true;
        if (!other) redundant = false;
      }
    if (redundant) removed[c] = 1;
  }
  std::vector<int> symbol(cells.size(), -1);
  int n = 0;
  for (std::size_t c = 0; c < cells.size(); ++c)
    if (!removed[c]) symbol[c] = n++;
  if (n == 0) throw std::runtime_error("dynamic_ball_transitions: empty spanning set");

  std::vector<std::vector<int>> meet(n), literal(n);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (removed[c]) continue;
    const int a = symbol[c];
    const Vec2 img = map.iterate(wrap(center(cells[c].first, cells[c].second)), 2 * horizon);
    tiles_containing(img, delta + du, ds / lam2t + ds, hits);
    for (int h : hits)
      if (!removed[h]) meet[a].push_back(symbol[h]);
    tiles_containing(img, du, ds, hits);
    for (int h : hits)
      if (!removed[h]) literal[a].push_back(symbol[h]);
  }
  return assemble(n, horizon, delta, std::move(meet), std::move(literal));
}

namespace {

struct SturmianCoding {
  std::vector<double> phases;              // candidate phases
  std::vector<std::vector<Vec2>> orbits;   // orbit points j = 0..2T of each candidate
  std::vector<int> centers;                // candidate index of each center
  std::vector<std::vector<int>> members;   // candidates covered by each center
};

// True when the two orbit pieces stay within delta at every time.
bool within(const CatMap& map, const std::vector<Vec2>& a, const std::vector<Vec2>& b, double delta) {
  for (std::size_t j = 0; j < a.size(); ++j)
    if (map.distance(a[j], b[j]) > delta) return false;
  return true;
}

std::vector<Vec2> orbit_points(const SturmianSet& set, double rho, int length) {
  std::vector<Vec2> pts(length);
  for (int j = 0; j < length; ++j) pts[j] = set.point(set.advance(rho, j));
  return pts;
}

SturmianCoding sturmian_spanning_set(const SturmianSet& set, int horizon, double delta, int samples) {
  if (horizon < 1) throw std::invalid_argument("dynamic_ball_transitions: horizon must be positive");
  if (!(delta > 0.0) || delta >= set.map().expansivity_radius())
    throw std::invalid_argument("dynamic_ball_transitions: delta must lie in (0, expansivity radius)");
  if (samples < 2) throw std::invalid_argument("dynamic_ball_transitions: need at least two samples");
  SturmianCoding sc;
  const int len = 2 * horizon + 1;
  for (int k = 0; k < samples; ++k) {
    sc.phases.push_back(static_cast<double>(k) / samples);
    sc.orbits.push_back(orbit_points(set, sc.phases.back(), len));
  }
  std::vector<int> cover(samples, 0);
  for (int k = 0; k < samples; ++k) {
    if (cover[k]) continue;
    std::vector<int> ball;
    for (int q = 0; q < samples; ++q)
      if (within(set.map(), sc.orbits[k], sc.orbits[q], delta)) ball.push_back(q);
    for (int q : ball) ++cover[q];
    sc.centers.push_back(k);
    sc.members.push_back(std::move(ball));
  }
  // Removal pass in the same order.
  std::vector<int> keep_centers;
  std::vector<std::vector<int>> keep_members;
  for (std::size_t c = 0; c < sc.centers.size(); ++c) {
    bool redundant = true;
    for (int q : sc.members[c])
      if (cover[q] < 2) redundant = false;
    if (redundant) {
      for (int q : sc.members[c]) --cover[q];
    } else {
      keep_centers.push_back(sc.centers[c]);
      keep_members.push_back(sc.members[c]);
    }
  }
  sc.centers = std::move(keep_centers);
  sc.members = std::move(keep_members);
  if (sc.centers.empty()) throw std::runtime_error("dynamic_ball_transitions: empty spanning set");
  return sc;
}

}  // namespace

namespace {

CodedSystem sturmian_coding(const SturmianSet& set, const SturmianCoding& sc, int horizon, double delta,
                            bool with_meet) {
  const int n = static_cast<int>(sc.centers.size());
  const int len = 2 * horizon + 1;
  const CatMap& map = set.map();
  std::vector<std::vector<int>> meet(n), literal(n);
  for (int a = 0; a < n; ++a) {
    const auto img = orbit_points(set, set.advance(sc.phases[sc.centers[a]], 2 * horizon), len);
    for (int b = 0; b < n; ++b)
      if (within(map, img, sc.orbits[sc.centers[b]], delta)) literal[a].push_back(b);
    if (!with_meet) {
      meet[a] = literal[a];
      continue;
    }
    for (int q : sc.members[a]) {
      const auto qi = orbit_points(set, set.advance(sc.phases[q], 2 * horizon), len);
      for (int b = 0; b < n; ++b)
        if (within(map, qi, sc.orbits[sc.centers[b]], delta)) meet[a].push_back(b);
    }
  }
  for (int a = 0; a < n; ++a)
    if (meet[a].empty()) meet[a] = literal[a];
  return assemble(n, horizon, delta, std::move(meet), std::move(literal));
}

}  // namespace

CodedSystem dynamic_ball_transitions(const SturmianSet& set, int horizon, double delta, int samples) {
  const SturmianCoding sc = sturmian_spanning_set(set, horizon, delta, samples);
  return sturmian_coding(set, sc, horizon, delta, true);
}

namespace {

SymbolicOrbit literal_cycle(const CodedSystem& coded) {
  if (!coded.literal) throw std::logic_error("build_periodic_specification: coded subshift has no periodic orbit");
  SymbolicOrbit cyc = shortest_periodic_orbit(*coded.literal);
  for (int& s : cyc.word) s = coded.literal_centers[s];
  return cyc;
}

}  // namespace

SpecificationSymbolic build_periodic_specification(const Sft& system, int horizon, double delta) {
  const CodedSystem coded = dynamic_ball_transitions(system, horizon, delta);
  const SymbolicOrbit cyc = literal_cycle(coded);
  const int r = radius_exponent(delta);
  const int length = 2 * horizon + 2 * r - 1;
  auto words = allowed_words(system, length, 200000);
  const auto pred = system.predecessors();
  const long reach = 4L * horizon + 2L * r + 2L * system.size() + 8;
  std::vector<Representative> reps;
  for (int c : cyc.word) reps.push_back(extend(system, pred, words[c], r - 1, reach + 4L * horizon));

  SpecificationSymbolic spec;
  spec.jump_count = cyc.period();
  spec.spanning_set_size = coded.centers;
  spec.decay_rate = std::log(2.0);
  for (int i = 0; i < cyc.period(); ++i) {
    spec.segments.push_back({cyc.word[i], 2 * horizon});
    const Representative& prev = reps[(i + cyc.period() - 1) % cyc.period()];
    const Representative& cur = reps[i];
    // Middle of the junction: sigma^{3T} of the previous center against sigma^T of this one.
    double d = 0.0;
    for (long k = 0; k <= reach; ++k) {
      if (prev.at(3L * horizon + k) != cur.at(horizon + k) || prev.at(3L * horizon - k) != cur.at(horizon - k)) {
        d = std::ldexp(1.0, -static_cast<int>(k));
        break;
      }
    }
    spec.jump_sizes.push_back(d);
  }
  spec.period = 2 * horizon * cyc.period();
  const double mx = *std::max_element(spec.jump_sizes.begin(), spec.jump_sizes.end());
  spec.decay_constant = mx * std::exp(spec.decay_rate * horizon);
  return spec;
}

SpecificationSymbolic build_periodic_specification(const SturmianSet& set, int horizon, double delta, int samples) {
  const SturmianCoding sc = sturmian_spanning_set(set, horizon, delta, samples);
  const CodedSystem coded = sturmian_coding(set, sc, horizon, delta, false);
  const SymbolicOrbit cyc = literal_cycle(coded);
  const CatMap& map = set.map();
  SpecificationSymbolic spec;
  spec.jump_count = cyc.period();
  spec.spanning_set_size = coded.centers;
  spec.decay_rate = map.log_lambda();
  const int p = cyc.period();
  for (int i = 0; i < p; ++i) {
    const double rho = sc.phases[sc.centers[cyc.word[i]]];
    const double rho_prev = sc.phases[sc.centers[cyc.word[(i + p - 1) % p]]];
    spec.segments.push_back({cyc.word[i], 2 * horizon});
    spec.start_phases.push_back(set.advance(rho, horizon));
    spec.start_points.push_back(set.point(spec.start_phases.back()));
    spec.jump_sizes.push_back(map.distance(set.point(set.advance(rho_prev, 3L * horizon)), spec.start_points.back()));
  }
  spec.period = 2 * horizon * p;
  const double mx = *std::max_element(spec.jump_sizes.begin(), spec.jump_sizes.end());
  spec.decay_constant = mx * std::exp(spec.decay_rate * horizon);
  return spec;
}

DecayFit fit_exponential_decay(const std::vector<double>& t, const std::vector<double>& y) {
  if (t.size() != y.size() || t.size() < 2) throw std::invalid_argument("fit_exponential_decay: need two or more points");
  const double n = static_cast<double>(t.size());
  double st = 0, sy = 0, stt = 0, sty = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(y[i] > 0.0)) throw std::invalid_argument("fit_exponential_decay: sizes must be positive");
    const double ly = std::log(y[i]);
    st += t[i];
    sy += ly;
    stt += t[i] * t[i];
    sty += t[i] * ly;
  }
  const double slope = (n * sty - st * sy) / (n * stt - st * st);
  const double icpt = (sy - slope * st) / n;
  return {-slope, std::exp(icpt)};
}

nlohmann::json to_json(const Sft& sft) {
  return {{"alphabet_size", sft.size()}, {"transitions", sft.matrix()}};
}

Sft sft_from_json(const nlohmann::json& j) {
  if (!j.contains("alphabet_size") || !j.contains("transitions"))
    throw std::invalid_argument("sft json: expected fields alphabet_size and transitions");
  const int m = j.at("alphabet_size").get<int>();
  auto t = j.at("transitions").get<std::vector<std::vector<int>>>();
  if (static_cast<int>(t.size()) != m) throw std::invalid_argument("sft json: transitions must have alphabet_size rows");
  return Sft::from_matrix(t);
}

nlohmann::json to_json(const SpecificationSymbolic& spec) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : spec.segments) segs.push_back({{"start_symbol", s.start_symbol}, {"length", s.length}});
  nlohmann::json j{{"segments", segs},
                   {"jump_count", spec.jump_count},
                   {"jump_sizes", spec.jump_sizes},
                   {"period", spec.period},
                   {"spanning_set_size", spec.spanning_set_size},
                   {"decay_rate", spec.decay_rate},
                   {"decay_constant", spec.decay_constant}};
  if (!spec.start_points.empty()) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : spec.start_points) pts.push_back({p.x(), p.y()});
    j["start_points"] = pts;
  }
  return j;
}

}  // namespace manelab::sft
