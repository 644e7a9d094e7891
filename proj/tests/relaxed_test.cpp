#include "fracfb/relaxed.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>

using namespace fracfb;

namespace {

const ProblemConfig kCfg{0.5, 1.0};
const ControlSet kP = make_example_controls();

RelaxedControl random_relaxed(std::mt19937& rng, double lo, double hi, int pieces) {
  std::uniform_real_distribution<double> u01(0.05, 1.0);
  RelaxedControl mu;
  mu.lo = lo;
  mu.hi = hi;
  for (int i = 1; i <= pieces; ++i) mu.frac_until.push_back(double(i) / pieces);
  for (int i = 0; i < pieces; ++i) {
    Vec w(3);
    w << u01(rng), u01(rng), u01(rng);
    mu.weights.push_back(w / w.sum());
  }
  return mu;
}

}  // namespace

TEST_CASE("lift_ordinary produces Dirac rows") {
  PiecewiseControl u = PiecewiseControl::uniform(0.25, 1.0, {2, 0, 1});
  RelaxedControl mu = lift_ordinary(u, kP);
  mu.validate(kP);
  CHECK(mu.lo == 0.25);
  CHECK(mu.weights.size() == 3);
  CHECK(mu.weights[0][2] == 1.0);
  CHECK(mu.weights[1][0] == 1.0);
  CHECK(mu.weights[2][1] == 1.0);
  CHECK(mu.weights[0].sum() == 1.0);

  PiecewiseControl bad = u;
  bad.idx[1] = 7;
  CHECK_THROWS_AS(lift_ordinary(bad, kP), std::invalid_argument);
}

TEST_CASE("time change maps boundaries affinely and round-trips exactly") {
  std::mt19937 rng(11);
  RelaxedControl mu = random_relaxed(rng, 0.5, 1.0, 4);
  RelaxedControl nu = time_change_pi(mu);
  CHECK(nu.lo == 0.0);
  CHECK(nu.hi == 1.0);
  CHECK(nu.until_abs(0) == Catch::Approx(0.25));   // 0.625 on [0.5, 1]
  CHECK(mu.until_abs(0) == Catch::Approx(0.625));

  for (int rep = 0; rep < 10; ++rep) {
    RelaxedControl m2 = random_relaxed(rng, 0.3, 0.9, 5);
    RelaxedControl back = time_change_pi_inverse(time_change_pi(m2), m2.lo, m2.hi);
    REQUIRE(back.frac_until == m2.frac_until);
    for (std::size_t i = 0; i < m2.weights.size(); ++i)
      REQUIRE(back.weights[i] == m2.weights[i]);
    CHECK(back.lo == m2.lo);
    CHECK(back.hi == m2.hi);
  }
}

TEST_CASE("relaxed control validation") {
  RelaxedControl mu = RelaxedControl::constant_dirac(0.0, 1.0, 1, 3);
  mu.validate(kP);
  RelaxedControl bad = mu;
  bad.weights[0][1] = 0.7;
  CHECK_THROWS_AS(bad.validate(kP), std::invalid_argument);
  bad = mu;
  bad.weights[0] = Vec::Zero(2);
  CHECK_THROWS_AS(bad.validate(kP), std::invalid_argument);
  bad = mu;
  bad.frac_until = {0.5, 0.4, 1.0};
  CHECK_THROWS_AS(bad.validate(kP), std::invalid_argument);
}

TEST_CASE("auxiliary trajectory equals the motion after time change") {
  SECTION("flat gain, closed form") {
    Dynamics dyn = make_example_dynamics("one", 0.5);
    RelaxedControl nu = RelaxedControl::constant_dirac(0.0, 1.0, 2, 3);
    AuxSolution y = solve_auxiliary_y(make_position(0.0, 0.0), kCfg, dyn, kP, nu, 128);
    for (std::size_t j = 0; j < y.theta.size(); ++j)
      CHECK(y.y[j][0] == Catch::Approx(2.0 * std::sqrt(y.theta[j])).margin(1e-13));
  }
  SECTION("general gain and start, against the untransformed solve") {
    Dynamics dyn = make_example_dynamics("cos", 0.5);
    Position p = make_position(0.4, 0.6);
    std::mt19937 rng(3);
    for (int rep = 0; rep < 3; ++rep) {
      RelaxedControl mu = random_relaxed(rng, 0.4, 1.0, 3);
      Motion m = solve_motion_relaxed(p, kCfg, dyn, kP, mu, 2048);
      AuxSolution y = solve_auxiliary_y(p, kCfg, dyn, kP, time_change_pi(mu), 512);
      for (std::size_t j = 0; j < y.theta.size(); j += 31) {
        const double tau = p.t + y.theta[j] * (kCfg.T - p.t);
        CHECK(y.y[j][0] == Catch::Approx(m.state(kCfg.alpha, tau)[0]).margin(1e-2));
      }
      CHECK(y.terminal()[0] == Catch::Approx(m.terminal()[0]).margin(1e-2));
    }
  }
}

TEST_CASE("auxiliary solver guards") {
  Dynamics dyn = make_example_dynamics("one", 0.5);
  RelaxedControl nu = RelaxedControl::constant_dirac(0.0, 1.0, 0, 3);
  CHECK_THROWS_AS(
      solve_auxiliary_y(make_position(1.0, 0.0), kCfg, dyn, kP, nu, 16),
      std::invalid_argument);
  RelaxedControl off = RelaxedControl::constant_dirac(0.2, 1.0, 0, 3);
  CHECK_THROWS_AS(
      solve_auxiliary_y(make_position(0.0, 0.0), kCfg, dyn, kP, off, 16),
      std::invalid_argument);
  CHECK_THROWS_AS(solve_auxiliary_y_on(make_position(0.0, 0.0), kCfg, dyn, kP, nu,
                                       {0.0, 0.5, 0.9}),
                  std::invalid_argument);
}

TEST_CASE("minimum over Dirac lifts equals minimum over ordinary controls") {
  Dynamics dyn = make_example_dynamics("poly", 0.5);
  CostFn cost = make_example_cost();
  Position p = make_position(0.0, 0.3);
  double best_ord = 1e300, best_lift = 1e300;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      PiecewiseControl u = PiecewiseControl::uniform(0.0, 1.0, {i, j});
      best_ord = std::min(best_ord,
                          cost.sigma(solve_motion(p, kCfg, dyn, kP, u, 64).terminal()));
      best_lift = std::min(
          best_lift, cost.sigma(solve_motion_relaxed(p, kCfg, dyn, kP,
                                                     lift_ordinary(u, kP), 64)
                                    .terminal()));
    }
  CHECK(best_ord == Catch::Approx(best_lift).margin(1e-12));
}
