#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "manelab/lagrangian.hpp"

#include <cmath>
#include <random>

using namespace manelab::lagrangian;

namespace {

const double kPi = std::acos(-1.0);

// Least-squares slope of y against x.
double slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace

TEST_CASE("energy at rest, at the hilltop and on the separatrix") {
  CHECK(energy(LagrangianModel::free_particle(), {Vec2(1.0, 0.0), Vec2::Zero()}) == 0.0);
  const auto p = LagrangianModel::pendulum();
  CHECK(energy(p, {Vec2::Zero(), Vec2::Zero()}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(energy(p, {Vec2(kPi, 0.0), Vec2(2.0, 0.0)}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p.u_max == doctest::Approx(1.0));
  CHECK(p.u_min == doctest::Approx(-1.0));
}

TEST_CASE("free particle flows along straight lines") {
  const auto m = LagrangianModel::free_particle(2);
  const Curve c = el_flow(m, {Vec2(1.0, 2.0), Vec2(0.3, -0.7)}, 5.0, 1e-2);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(c.x[i][0] == doctest::Approx(1.0 + 0.3 * c.t[i]).epsilon(1e-12));
    CHECK(c.x[i][1] == doctest::Approx(2.0 - 0.7 * c.t[i]).epsilon(1e-12));
  }
}

TEST_CASE("pendulum energy drift stays below 1e-8 (1 + t) at step 1e-3") {
  const auto p = LagrangianModel::pendulum();
  for (const PhaseState s : {PhaseState{Vec2(kPi - 1.0, 0.0), Vec2(0.3, 0.0)}, PhaseState{Vec2(kPi, 0.0), Vec2::Zero()},
                             PhaseState{Vec2(0.2, 0.0), Vec2(2.5, 0.0)}, PhaseState{Vec2(1.0, 0.0), Vec2(1.9, 0.0)}}) {
    const Curve c = el_flow(p, s, 100.0, 1e-3, {1e-8, 100});
    const double e0 = energy(p, {c.x.front(), c.v.front()});
    for (std::size_t i = 0; i < c.size(); ++i)
      CHECK(std::abs(energy(p, {c.x[i], c.v[i]}) - e0) <= 1e-8 * (1.0 + c.t[i]));
  }
}

TEST_CASE("separatrix orbit approaches the hilltop at rate one") {
  const auto p = LagrangianModel::pendulum();
  const Curve c = el_flow(p, {Vec2(kPi, 0.0), Vec2(2.0, 0.0)}, 14.0, 1e-3, {1e-8, 100});
  std::vector<double> t, logd;
  for (std::size_t i = 0; i < c.size(); ++i) {
    // Closed form of the separatrix: v = 2 sin(x / 2).
    CHECK(c.v[i][0] == doctest::Approx(2.0 * std::sin(c.x[i][0] / 2.0)).epsilon(1e-6));
    if (c.t[i] >= 3.0 && c.t[i] <= 12.0) {
      t.push_back(c.t[i]);
      logd.push_back(std::log(2.0 * kPi - c.x[i][0]));
    }
  }
  CHECK(slope(t, logd) == doctest::Approx(-1.0).epsilon(0.02));
  CHECK(2.0 * kPi - c.x.back()[0] < 1e-5);
}

TEST_CASE("flow is time reversible and runs backwards") {
  const auto p = LagrangianModel::pendulum();
  CHECK(reversibility_error(p, {Vec2(1.0, 0.0), Vec2(0.5, 0.0)}, 20.0, 1e-3) < 1e-9);
  const Curve fwd = el_flow(p, {Vec2(0.5, 0.0), Vec2(1.0, 0.0)}, 2.0, 1e-3);
  const Curve back = el_flow(p, {fwd.x.back(), fwd.v.back()}, -2.0, 1e-3);
  CHECK(back.t.front() < back.t.back());
  CHECK(back.x.front()[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(back.v.front()[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("oversized step is rejected with an admissible step") {
  const auto p = LagrangianModel::pendulum();
  const PhaseState s{Vec2(1.0, 0.0), Vec2(1.5, 0.0)};
  double suggested = 0.0;
  try {
    el_flow(p, s, 100.0, 0.2);
    FAIL("expected StepTooLarge");
  } catch (const StepTooLarge& e) {
    suggested = e.max_step;
    CHECK(std::string(e.what()).find("max admissible step") != std::string::npos);
  }
  REQUIRE(suggested > 0.0);
  CHECK(suggested < 0.2);
  CHECK_NOTHROW(el_flow(p, s, 100.0, suggested));
}

TEST_CASE("magnetic term bends trajectories and conserves energy") {
  // omega = (0, b sin x1): field strength b cos x1.
  const double b = 0.8;
  const auto m = LagrangianModel::make(2, Potential::cosine(2, 0.5), [b](const Vec2& x) {
    return Vec2(0.0, b * std::sin(x[0]));
  });
  const auto plain = LagrangianModel::make(2, Potential::cosine(2, 0.5));
  const PhaseState s{Vec2(0.3, 1.0), Vec2(0.7, 0.2)};
  const Curve c = el_flow(m, s, 20.0, 1e-3, {1e-6, 10});
  const Curve d = el_flow(plain, s, 20.0, 1e-3, {1e-8, 10});
  CHECK(max_energy_drift(m, c) < 1e-6);
  CHECK((c.x.back() - d.x.back()).norm() > 1e-2);
  // Exact forms in dimension 1 leave the equations of motion unchanged.
  const auto m1 = LagrangianModel::make(1, Potential::cosine(1), [](const Vec2& x) {
    return Vec2(0.4 * std::cos(x[0]), 0.0);
  });
  CHECK((m1.acceleration(Vec2(0.7, 0.0), Vec2(1.1, 0.0)) -
         LagrangianModel::pendulum().acceleration(Vec2(0.7, 0.0), Vec2(1.1, 0.0)))
            .norm() < 1e-8);
}

TEST_CASE("action is additive on shared sample grids") {
  const auto p = LagrangianModel::pendulum();
  const Curve c = el_flow(p, {Vec2(0.4, 0.0), Vec2(1.2, 0.0)}, 5.0, 1e-3, {1e-8, 5});
  for (std::size_t s : {std::size_t{1}, c.size() / 3, c.size() / 2, c.size() - 2}) {
    const double whole = action(p, c), parts = action(p, c.slice(0, s)) + action(p, c.slice(s, c.size() - 1));
    CHECK(parts == doctest::Approx(whole).epsilon(1e-12));
  }
  Curve broken;
  broken.dim = 1;
  for (int i = 0; i <= 20; ++i) {
    broken.t.push_back(0.1 * i);
    broken.x.push_back(Vec2(std::sin(i), 0.0));
  }
  CHECK(action(p, broken.slice(0, 7)) + action(p, broken.slice(7, 20)) ==
        doctest::Approx(action(p, broken)).epsilon(1e-12));
  CHECK(action(p, broken, 0.5) == doctest::Approx(action(p, broken) + 0.5 * broken.duration()).epsilon(1e-12));
}

TEST_CASE("free particle minimizers are constant speed geodesics") {
  const auto f = LagrangianModel::free_particle();
  for (double d : {0.5, 1.0, 2.5})
    for (double T : {0.5, 2.0, 7.0}) {
      const Minimizer mz = tonelli_minimizer(f, Vec2(0.2, 0.0), Vec2(0.2 + d, 0.0), T, 40);
      CHECK(mz.action == doctest::Approx(d * d / (2.0 * T)).epsilon(1e-10));
      CHECK(mz.winding[0] == 0);
      for (std::size_t i = 0; i + 1 < mz.curve.size(); ++i)
        CHECK((mz.curve.x[i + 1][0] - mz.curve.x[i][0]) == doctest::Approx(d / 40).epsilon(1e-9));
    }
  const Minimizer rest = tonelli_minimizer(f, Vec2(1.0, 0.0), Vec2(1.0, 0.0), 3.0, 30);
  CHECK(std::abs(rest.action) < 1e-14);
  for (const auto& x : rest.curve.x) CHECK(x[0] == doctest::Approx(1.0));
  // Beyond half the circumference the other lift is shorter.
  const Minimizer wrap = tonelli_minimizer(f, Vec2(0.0, 0.0), Vec2(4.0, 0.0), 1.0, 20);
  CHECK(wrap.action == doctest::Approx(std::pow(2.0 * kPi - 4.0, 2) / 2.0).epsilon(1e-10));
  const auto f2 = LagrangianModel::free_particle(2);
  const Minimizer m2 = tonelli_minimizer(f2, Vec2(0.0, 0.0), Vec2(1.0, 5.0), 2.0, 20);
  CHECK(m2.action == doctest::Approx((1.0 + std::pow(2.0 * kPi - 5.0, 2)) / 4.0).epsilon(1e-10));
}

TEST_CASE("pendulum minimizers between antipodal points converge under refinement") {
  const auto p = LagrangianModel::pendulum();
  for (double T : {1.0, 3.0, 8.0}) {
    double prev = INFINITY;
    for (int per_unit : {20, 40, 80, 160}) {
      const Minimizer mz = tonelli_minimizer(p, Vec2(0.0, 0.0), Vec2(kPi, 0.0), T, static_cast<int>(per_unit * T));
      CHECK(mz.residual <= 1e-6);
      CHECK(stationarity_residual(p, mz.curve) <= 1e-6);
      CHECK(mz.action <= mz.straight_action + 1e-12);
      CHECK(mz.action <= prev + 1e-10);
      prev = mz.action;
    }
  }
}

TEST_CASE("flow from a minimizer's initial tangent reproduces it") {
  const auto p = LagrangianModel::pendulum();
  for (double h : {0.02, 0.01, 0.005}) {
    const int grid = static_cast<int>(std::lround(3.0 / h));
    const Minimizer mz = tonelli_minimizer(p, Vec2(0.3, 0.0), Vec2(2.0, 0.0), 3.0, grid);
    const int every = static_cast<int>(std::lround(h / 1e-3));
    const Curve f = el_flow(p, mz.initial_tangent(), 3.0, 1e-3, {1e-8, every});
    REQUIRE(f.size() == mz.curve.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) worst = std::max(worst, std::abs(f.x[i][0] - mz.curve.x[i][0]));
    CHECK(worst < 2.0 * h * h);
  }
}

TEST_CASE("a priori speed bound") {
  const auto f = LagrangianModel::free_particle();
  // |v| <= sqrt(2 C) for the free particle.
  CHECK(apriori_speed_bound(f, 0.5) == doctest::Approx(1.0));
  for (double v : {0.3, 0.9, 1.7}) {
    const Curve c = el_flow(f, {Vec2::Zero(), Vec2(v, 0.0)}, 2.0, 1e-2);
    const double C = 0.5 * v * v + 1e-6;
    const AprioriCheck r = apriori_bound_check(f, c, C);
    CHECK(r.premise);
    CHECK(r.holds);
    CHECK(r.sup_speed <= std::sqrt(2.0 * C));
  }
  const Curve rest = el_flow(f, {Vec2(1.0, 0.0), Vec2::Zero()}, 1.0, 1e-2);
  CHECK(apriori_bound_check(f, rest, 1e-3).sup_speed == 0.0);
  CHECK(apriori_bound_check(f, rest, 1e-3).holds);

  // Minimizers over growing times keep a speed bound independent of T.
  const auto p = LagrangianModel::pendulum();
  double bound_T1 = 0.0, worst = 0.0;
  for (double T : {1.0, 2.0, 5.0, 10.0, 20.0, 50.0}) {
    const Minimizer mz = tonelli_minimizer(p, Vec2(0.0, 0.0), Vec2(kPi, 0.0), T, static_cast<int>(20 * T));
    const double C = mz.action / T + 1e-9;
    const AprioriCheck r = apriori_bound_check(p, mz.curve, C);
    CHECK(r.premise);
    CHECK(r.holds);
    if (T == 1.0) bound_T1 = r.bound;
    worst = std::max(worst, r.sup_speed);
  }
  CHECK(worst <= bound_T1);
  CHECK(ell(p, 1.0) == doctest::Approx(1.5));
}

TEST_CASE("table potential interpolates smoothly with consistent derivatives") {
  std::vector<double> s(64);
  for (int i = 0; i < 64; ++i) s[i] = std::cos(2.0 * kPi * i / 64) + 0.3 * std::sin(4.0 * kPi * i / 64);
  const auto u = Potential::table(1, s);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> x(0.0, 2.0 * kPi);
  for (int i = 0; i < 200; ++i) {
    const double t = x(rng);
    CHECK(u.value(Vec2(t, 0)) == doctest::Approx(std::cos(t) + 0.3 * std::sin(2 * t)).epsilon(1e-3));
    const double fd = (u.value(Vec2(t + 1e-6, 0)) - u.value(Vec2(t - 1e-6, 0))) / 2e-6;
    CHECK(u.gradient(Vec2(t, 0))[0] == doctest::Approx(fd).epsilon(1e-5));
  }
  const auto m = LagrangianModel::make(1, u);
  const Curve c = el_flow(m, {Vec2(0.5, 0.0), Vec2(0.8, 0.0)}, 10.0, 1e-3, {1e-6, 10});
  CHECK(max_energy_drift(m, c) < 1e-6);
}

TEST_CASE("model json and curve csv") {
  const auto m = model_from_json({{"dim", 1}, {"potential", "cos"}});
  CHECK(m.U(Vec2::Zero()) == doctest::Approx(1.0));
  const auto shifted = model_from_json({{"dim", 1}, {"potential", "cos"}, {"shift", 0.5}});
  CHECK(shifted.L(Vec2::Zero(), Vec2::Zero()) == doctest::Approx(m.L(Vec2::Zero(), Vec2::Zero()) + 0.5));
  CHECK_THROWS_WITH_AS(model_from_json({{"dim", 3}}), "model.dim: must be 1 or 2", std::invalid_argument);
  CHECK_THROWS_WITH_AS(model_from_json({{"potential", "table"}}),
                       "model.samples: required array for table potentials", std::invalid_argument);
  const Curve c = el_flow(m, {Vec2(1.0, 0.0), Vec2(0.5, 0.0)}, 0.02, 1e-2);
  const std::string csv = curve_csv(c);
  CHECK(csv.rfind("t,x,v\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}
