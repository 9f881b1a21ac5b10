#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "manelab/shadowing.hpp"
#include "shadow_support.hpp"

#include <cmath>
#include <random>

using namespace manelab;
using namespace manelab::shadowing;

namespace {

// Independent oracle for the linear shadow: dense solve of the cyclic system
// e_{k+1} - A e_k = j_k.
std::vector<Vec2> dense_cyclic_solve(const CatMap& map, const std::vector<Vec2>& z) {
  const int n = static_cast<int>(z.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  Eigen::VectorXd rhs(2 * n);
  for (int k = 0; k < n; ++k) {
    const int k1 = (k + 1) % n;
    m.block<2, 2>(2 * k, 2 * k1) += Mat2::Identity();
    m.block<2, 2>(2 * k, 2 * k) -= map.matrix();
    rhs.segment<2>(2 * k) = map.displacement(z[k1], map.apply(z[k]));
  }
  const Eigen::VectorXd e = m.partialPivLu().solve(rhs);
  std::vector<Vec2> out(n);
  for (int k = 0; k < n; ++k) out[k] = e.segment<2>(2 * k);
  return out;
}

}  // namespace

TEST_CASE("cat map contracts stable vectors at exactly log lambda") {
  const auto m = HyperbolicModel::cat_map();
  const auto rep = verify_hyperbolicity(m, 20, 12, 3);
  CHECK(rep.rate == doctest::Approx(m.rate()).epsilon(1e-9));
  CHECK(rep.constant == doctest::Approx(1.0).epsilon(1e-9));
  const auto pert = verify_hyperbolicity(HyperbolicModel::perturbed_cat_map(0.05), 20, 12, 3);
  CHECK(pert.rate >= 0.8 * m.rate());
  CHECK(pert.constant < 3.0);
}

TEST_CASE("bracket of a point with itself is the point") {
  const auto m = HyperbolicModel::cat_map();
  const PhasePoint x{Vec2(0.3, 0.7), 0.0};
  const auto b = canonical_coordinates(m, x, x);
  CHECK(m.distance(b.point, x) == 0.0);
  CHECK(b.v == 0.0);
}

TEST_CASE("cat map bracket matches the linear intersection of stable and unstable lines") {
  const auto m = HyperbolicModel::cat_map();
  const CatMap& a = m.linear();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const Vec2 x(unit(rng), unit(rng));
    const Vec2 y = wrap(x + Vec2(unit(rng) - 0.5, unit(rng) - 0.5) * 0.08);
    // z = x + a e_s = y + b e_u  =>  [e_s, -e_u] (a, b) = y - x.
    Mat2 sys;
    sys.col(0) = a.e_s();
    sys.col(1) = -a.e_u();
    const Vec2 ab = sys.partialPivLu().solve(a.displacement(x, y));
    const Vec2 oracle = wrap(x + ab(0) * a.e_s());
    const auto b = canonical_coordinates(m, {x, 0.0}, {y, 0.0});
    CHECK(a.distance(b.point.x, oracle) < 1e-13);
    CHECK(b.bound <= 1.0 + 1e-12);
    // Invariance of the two foliations.
    if (a.distance(a.apply(x), a.apply(y)) <= m.eta0()) {
      const auto img = canonical_coordinates(m, {a.apply(x), 0.0}, {a.apply(y), 0.0});
      CHECK(a.distance(img.point.x, a.apply(b.point.x)) < 1e-12);
    }
  }
  CHECK_THROWS_AS(canonical_coordinates(m, {Vec2(0.1, 0.1), 0.0}, {Vec2(0.5, 0.5), 0.0}), std::domain_error);
}

TEST_CASE("suspension bracket recovers the time shift along an orbit") {
  const auto m = HyperbolicModel::suspension(1.0);
  const PhasePoint x{Vec2(0.21, 0.63), 0.4};
  for (double v : {-0.07, 0.03, 0.09}) {
    const PhasePoint y = m.flow(x, v);
    const auto b = canonical_coordinates(m, x, y);
    CHECK(b.v == doctest::Approx(v).epsilon(1e-12));
    CHECK(m.distance(b.point, y) < 1e-12);
  }
  // Across the roof section.
  const PhasePoint z{Vec2(0.21, 0.63), 0.97};
  const auto b = canonical_coordinates(m, z, m.flow(z, 0.06));
  CHECK(b.v == doctest::Approx(0.06).epsilon(1e-9));
}

TEST_CASE("a true periodic orbit shadows itself") {
  const auto m = HyperbolicModel::cat_map();
  std::mt19937_64 rng(4);
  const auto orbit = testing::periodic_orbit(rng, 8);
  const auto spec = make_specification(m, {{{orbit[0], 0.0}, 8.0}}, true);
  // Only rounding separates the floating point orbit from the exact one.
  CHECK(spec.delta() < 1e-11);
  const auto r = shadow_specification(m, spec);
  CHECK(r.sup_error < 1e-11);
  CHECK(r.period == 8.0);
  for (double t : {0.0, 2.5, 7.0}) CHECK(r.sigma(t) == doctest::Approx(t));
}

TEST_CASE("single jump periodic pseudo-orbit: geometric series bound and dense oracle") {
  const auto m = HyperbolicModel::cat_map();
  const CatMap& a = m.linear();
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto orbit = testing::periodic_orbit(rng, 8);
    const double delta = 1e-3 * (trial + 1);
    // Start off the orbit by r chosen so that the closing jump A^8 r - r has norm delta.
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double th = 6.283185307179586 * unit(rng);
    const double ju = std::cos(th), js = std::sin(th);
    const double norm = std::max(std::abs(ju), std::abs(js));
    const double l8 = std::pow(a.lambda(), 8);
    const Vec2 off = a.from_eigen(delta * ju / norm / (l8 - 1.0), delta * js / norm / (1.0 / l8 - 1.0));
    const auto spec = make_specification(m, {{{wrap(orbit[0] + off), 0.0}, 8.0}}, true);
    CHECK(spec.delta() == doctest::Approx(delta).epsilon(1e-9));
    const auto r = shadow_specification(m, spec);
    CHECK(r.sup_error <= delta * golden * (1.0 + 1e-9));
    CHECK(r.closure_residual < 1e-13);
    const auto e = dense_cyclic_solve(a, r.pseudo_orbit);
    for (std::size_t k = 0; k < e.size(); ++k) CHECK(a.distance(r.orbit[k], wrap(r.pseudo_orbit[k] + e[k])) < 1e-12);
  }
}

TEST_CASE("shadow error is linear in the jump size") {
  const auto m = HyperbolicModel::cat_map();
  std::vector<double> logd, loge;
  for (double delta : {1e-2, 1e-3, 1e-4}) {
    std::mt19937_64 rng(99);
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
      const auto spec = testing::random_pseudo_orbit(m, rng, 200, delta);
      const auto r = shadow_specification(m, spec);
      CHECK(r.sup_error <= 1.7 * spec.delta());
      CHECK(r.closure_residual < 1e-12);
      worst = std::max(worst, r.sup_error);
    }
    logd.push_back(std::log(delta));
    loge.push_back(std::log(worst));
  }
  const double s = (loge[2] - loge[0]) / (logd[2] - logd[0]);
  CHECK(s == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("Newton shadowing on the perturbed cat map") {
  const auto m = HyperbolicModel::perturbed_cat_map(0.01);
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    // A periodic orbit of the linear map is a pseudo-orbit of the perturbation.
    const auto orbit = testing::periodic_orbit(rng, 8);
    std::vector<SpecSegment> segs;
    for (int lap = 0; lap < 4; ++lap)
      for (int k = 0; k < 8; k += 2) segs.push_back({{orbit[k], 0.0}, 2.0});
    const auto spec = make_specification(m, segs, true);
    const auto r = shadow_specification(m, spec);
    CHECK(r.newton_iterations >= 1);
    CHECK(r.closure_residual < 1e-12);
    CHECK(r.sup_error <= 2.0 * spec.delta());
  }
  const auto far = make_specification(m, {{{Vec2(0.1, 0.2), 0.0}, 3.0}, {{Vec2(0.7, 0.5), 0.0}, 3.0}}, true);
  CHECK_THROWS_AS(shadow_specification(m, far), std::domain_error);
}

TEST_CASE("suspension shadow absorbs fiber jumps in the reparametrization") {
  const auto m = HyperbolicModel::suspension(1.0);
  std::mt19937_64 rng(5);
  const auto orbit = testing::periodic_orbit(rng, 8);
  std::vector<SpecSegment> segs;
  const double taus[] = {0.40, 0.43, 0.38, 0.41};
  for (int i = 0; i < 4; ++i) segs.push_back({{orbit[2 * i], taus[i]}, 2.0 + taus[(i + 1) % 4] - taus[i] - 0.004});
  const auto spec = make_specification(m, segs, true, 1.0);
  const auto r = shadow_specification(m, spec);
  CHECK(r.sup_error <= 1.7 * spec.delta());
  // The shadow period is the spec period plus the accumulated fiber jumps.
  CHECK(r.period == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(std::abs(r.period - spec.total_time()) <= r.e_measured * spec.delta() * 4 + 1e-12);
  for (std::size_t i = 1; i < r.sigma_t.size(); ++i) CHECK(r.sigma_value[i] > r.sigma_value[i - 1]);
}

TEST_CASE("exponential closeness along a stable line and for generic pairs") {
  const auto m = HyperbolicModel::cat_map();
  const CatMap& a = m.linear();
  const Vec2 x(0.37, 0.11);
  for (int l : {5, 10, 20}) {
    const double d = 0.1 * std::pow(a.lambda(), -l);
    const auto stable = exponential_closeness(m, {x, 0.0}, {wrap(x + d * a.e_s()), 0.0}, l);
    CHECK(stable.decay_rate >= 0.9 * a.log_lambda());
    for (std::size_t i = 0; i < stable.times.size(); ++i)
      CHECK(stable.distance[i] == doctest::Approx(d * std::pow(a.lambda(), -stable.times[i])).epsilon(1e-6));
    const auto gen = exponential_closeness(m, {x, 0.0}, {wrap(x + a.from_eigen(0.5 * d, -0.7 * d)), 0.0}, l);
    CHECK(gen.decay_rate >= 0.9 * a.log_lambda());
    CHECK(gen.domination <= 1.0 + 1e-9);
    CHECK(gen.midpoint <= std::exp(-a.log_lambda() * l) * (gen.distance.front() + gen.distance.back()) * (1 + 1e-9));
    const double peak = *std::max_element(gen.distance.begin(), gen.distance.end());
    CHECK((peak == gen.distance.front() || peak == gen.distance.back()));
  }
  const auto same = exponential_closeness(m, {x, 0.0}, {x, 0.0}, 10);
  CHECK(same.midpoint == 0.0);
  CHECK(same.v == 0.0);
  CHECK_THROWS_AS(exponential_closeness(m, {x, 0.0}, {wrap(x + 0.01 * a.e_u()), 0.0}, 10), std::domain_error);
}

TEST_CASE("suspension closeness reports the time offset") {
  const auto m = HyperbolicModel::suspension(1.0);
  const PhasePoint x{Vec2(0.37, 0.11), 0.2};
  const auto p = exponential_closeness(m, x, m.flow(x, 0.05), 8);
  CHECK(p.v == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(p.midpoint < 1e-12);
}

TEST_CASE("expansivity estimate is positive, stable in the window and monotone in eta") {
  const auto m = HyperbolicModel::cat_map();
  const auto e10 = expansivity_estimate(m, 0.1, 10);
  const auto e20 = expansivity_estimate(m, 0.1, 20);
  CHECK(e10.alpha > 0.0);
  CHECK(e20.alpha >= 0.9 * e10.alpha);
  CHECK(e10.alpha <= 2.0 * m.linear().expansivity_radius());
  const auto s = HyperbolicModel::suspension(1.0);
  const auto lo = expansivity_estimate(s, 0.05, 10);
  const auto hi = expansivity_estimate(s, 0.1, 10);
  CHECK(lo.alpha > 0.0);
  CHECK(lo.alpha <= hi.alpha);
  CHECK(hi.alpha <= 0.1);
}

TEST_CASE("orbits of distinct periodic points never come closer than a fixed gap") {
  const CatMap a;
  std::mt19937_64 rng(12);
  const auto p = testing::periodic_orbit(rng, 2);
  const auto q = testing::periodic_orbit(rng, 3);
  double gap = 1.0;
  for (int k = 0; k < 6; ++k) gap = std::min(gap, a.distance(p[k % p.size()], q[k % q.size()]));
  CHECK(gap > 0.0);
  // Below that gap the pair is never ball-close, so it cannot spoil expansivity.
  for (int k = 0; k < 60; ++k) CHECK(a.distance(p[k % p.size()], q[k % q.size()]) >= gap);
}

TEST_CASE("escape segmentation: trivial and single bump profiles") {
  const EscapeThresholds th{0.01, 1.0 / 3.0, 0.25};
  Profile zero{{-10.0, -5.0, 0.0}, {0.0, 0.0, 0.0}};
  const auto none = escape_segmentation(zero, zero, th);
  CHECK(none.s.empty());

  // One excursion: f rises from 0 at t=-6 to 0.5 at t=-4 and returns to 0 at t=-2.
  Profile f{{-10.0, -6.0, -4.0, -2.0, 0.0}, {0.0, 0.0, 0.5, 0.0, 0.0}};
  const auto seg = escape_segmentation(f, f, th);
  REQUIRE(seg.s.size() == 1);
  // Direct scan: the last level-1/3 crossing before T_1 = 0 is on the way down.
  CHECK(seg.t[0] == 0.0);
  CHECK(seg.c[0] == doctest::Approx(-4.0 + 2.0 * (0.5 - 1.0 / 3.0) / 0.5));
  CHECK(seg.s[0] == doctest::Approx(-2.0 - 2.0 * (0.01 / 0.5)));
  CHECK(seg.b[0] == doctest::Approx(-4.0 - 2.0 * (0.25 / 0.5)));
  CHECK(count_segmentation_violations(seg, f) == 0);
}

TEST_CASE("escape segmentation order relations on random profiles") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 200; ++i) {
    const auto [f, g] = testing::random_profiles(rng, 60);
    const EscapeThresholds th{0.02, 1.0 / 3.0, 0.25};
    const auto seg = escape_segmentation(f, g, th);
    CHECK(count_segmentation_violations(seg, f) == 0);
  }
}

TEST_CASE("specification json round trip") {
  const auto m = HyperbolicModel::suspension(1.0);
  const auto spec = make_specification(m, {{{Vec2(0.1, 0.2), 0.3}, 2.5}, {{Vec2(0.4, 0.9), 0.7}, 1.5}}, false);
  const auto back = specification_from_json(m, to_json(spec));
  REQUIRE(back.segments.size() == 2);
  CHECK(back.jumps == spec.jumps);
  CHECK(back.segments[1].start.tau == 0.7);
}
