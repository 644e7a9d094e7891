#include "fracfb/sensitivity.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "oracles.hpp"

using namespace fracfb;

namespace {

Vec v1(double x) {
  Vec v(1);
  v << x;
  return v;
}

const ProblemConfig kCfg{0.5, 1.0};
const ControlSet kP = make_example_controls();
const CostFn kCost = make_example_cost();
constexpr double kSqrtPi = 1.7724538509055160273;

Position const_history_pos(double t, double w0, double c) {
  Position p;
  p.t = t;
  p.w0 = v1(w0);
  p.caputo = StepFn({0.0, t}, {v1(c)});
  return p;
}

Dynamics linear_state_dynamics(double a0) {
  Dynamics dyn;
  dyn.n = 1;
  dyn.f = [a0](double, const Vec& x, const Vec&) { return Vec(a0 * x); };
  dyn.df_dtau = [](double, const Vec&, const Vec&) { return Vec(Vec::Zero(1)); };
  dyn.df_dx = [a0](double, const Vec&, const Vec&) {
    return Mat(a0 * Mat::Identity(1, 1));
  };
  dyn.growth_c = std::fabs(a0) + 0.1;
  dyn.lip_x = std::fabs(a0);
  return dyn;
}

}  // namespace

TEST_CASE("graded mesh clusters at zero") {
  auto th = graded_mesh(8, 0.5);
  REQUIRE(th.size() == 9);
  CHECK(th.front() == 0.0);
  CHECK(th.back() == 1.0);
  CHECK(th[1] == Catch::Approx(std::pow(1.0 / 8.0, 2.0)));
  CHECK_THROWS_AS(graded_mesh(1, 0.5), std::invalid_argument);

  RelaxedControl nu;
  nu.lo = 0.0;
  nu.hi = 1.0;
  nu.frac_until = {0.37, 1.0};
  nu.weights = {Vec::Constant(3, 1.0 / 3.0), Vec::Constant(3, 1.0 / 3.0)};
  auto mesh = sensitivity_mesh(8, 0.5, nu);
  CHECK(std::count(mesh.begin(), mesh.end(), 0.37) == 1);
}

TEST_CASE("forcing_q closed form for constant histories") {
  const double c = 0.8, t = 0.4, alpha = kCfg.alpha;
  Position p = const_history_pos(t, 0.3, c);
  for (double th : {0.1, 0.5, 1.0}) {
    const double s = t + th * (kCfg.T - t);
    const double expect = (1.0 - th) * c / gamma_fn(alpha) *
                          (std::pow(s, alpha - 1.0) -
                           std::pow(th * (kCfg.T - t), alpha - 1.0));
    CHECK(forcing_q(p, kCfg, th)[0] == Catch::Approx(expect).epsilon(1e-12));
  }
  CHECK(forcing_q(make_position(0.0, 1.0), kCfg, 0.5).isZero());
  CHECK(forcing_q(make_position(0.3, 1.0), kCfg, 0.5).isZero());  // zero history
  CHECK_THROWS_AS(forcing_q(p, kCfg, 0.0), std::domain_error);
}

TEST_CASE("forcing_q matches direct quadrature on a piecewise history") {
  Position p;
  p.t = 0.5;
  p.w0 = v1(0.0);
  p.caputo = StepFn({0.0, 0.2, 0.5}, {v1(1.2), v1(-0.7)});
  const double alpha = 0.6;
  ProblemConfig cfg{alpha, 1.0};
  for (double th : {0.2, 0.7}) {
    const double s = p.t + th * (cfg.T - p.t);
    auto cdw = [&](double xi) { return p.caputo.value_at(xi)[0]; };
    const double integral = oracles::adaptive_simpson(
        [&](double xi) { return cdw(xi) * std::pow(s - xi, alpha - 2.0); }, 0.0, 0.5,
        1e-13);
    const double expect = -(1.0 - alpha) * (1.0 - th) / gamma_fn(alpha) * integral;
    CHECK(forcing_q(p, cfg, th)[0] == Catch::Approx(expect).epsilon(1e-7));
  }
}

TEST_CASE("forcing_Q scales like theta^{alpha-1}") {
  Position p = make_position(0.2, 0.0);
  const double span = 0.8;
  for (double th : {0.25, 1.0}) {
    const double expect = 1.0 / (gamma_fn(0.5) * std::sqrt(th) * std::sqrt(span));
    CHECK(forcing_Q(p, kCfg, th)(0, 0) == Catch::Approx(expect).epsilon(1e-13));
  }
  CHECK_THROWS_AS(forcing_Q(p, kCfg, 0.0), std::domain_error);
  CHECK_THROWS_AS(forcing_Q(make_position(1.0, 0.0), kCfg, 0.5),
                  std::invalid_argument);
}

TEST_CASE("coefficients of the linearized equations") {
  SECTION("benchmark family: A vanishes, b has the two pinned terms") {
    Dynamics dyn = make_example_dynamics("cos", 0.5);
    const double t = 0.2, span = kCfg.T - t;
    const Vec u = kP.points[2];  // +1
    for (double th : {0.0, 0.4, 1.0}) {
      const double s = t + th * span;
      Coeffs c = coeffs_A_b(dyn, kCfg, t, th, v1(0.7), u);
      CHECK(c.A(0, 0) == 0.0);
      const double expect =
          (1.0 - th) * std::pow(span, 0.5) * gamma_fn(0.5) * (-std::sin(s)) -
          0.5 * std::pow(span, -0.5) * gamma_fn(0.5) * std::cos(s);
      CHECK(c.b[0] == Catch::Approx(expect).epsilon(1e-13));
    }
  }
  SECTION("state-linear family exposes A") {
    Dynamics dyn = linear_state_dynamics(0.7);
    Coeffs c = coeffs_A_b(dyn, kCfg, 0.0, 0.3, v1(2.0), kP.points[0]);
    CHECK(c.A(0, 0) == Catch::Approx(0.7));  // (T-t)^alpha = 1
    CHECK(c.b[0] == Catch::Approx(-0.5 * 0.7 * 2.0));
  }
  SECTION("weighted means interpolate the pointwise coefficients") {
    Dynamics dyn = make_example_dynamics("poly", 0.5);
    Vec w(3);
    w << 0.25, 0.0, 0.75;
    Coeffs mix = coeffs_star(dyn, kP, kCfg, 0.1, 0.6, v1(0.2), w);
    Coeffs c0 = coeffs_A_b(dyn, kCfg, 0.1, 0.6, v1(0.2), kP.points[0]);
    Coeffs c2 = coeffs_A_b(dyn, kCfg, 0.1, 0.6, v1(0.2), kP.points[2]);
    CHECK(mix.b[0] == Catch::Approx(0.25 * c0.b[0] + 0.75 * c2.b[0]).epsilon(1e-14));
    Vec dirac = Vec::Zero(3);
    dirac[1] = 1.0;
    Coeffs d = coeffs_star(dyn, kP, kCfg, 0.1, 0.6, v1(0.2), dirac);
    Coeffs c1 = coeffs_A_b(dyn, kCfg, 0.1, 0.6, v1(0.2), kP.points[1]);
    CHECK(d.b[0] == c1.b[0]);
  }
}

TEST_CASE("sensitivity pair on the flat benchmark is exact") {
  Dynamics dyn = make_example_dynamics("one", 0.5);
  RelaxedControl nu = RelaxedControl::constant_dirac(0.0, 1.0, 2, 3);
  SensitivitySolution s = solve_z(make_position(0.0, 0.0), kCfg, dyn, kP, nu, 64);
  // z(theta) = -theta^alpha, so the regularized samples are -theta
  for (std::size_t i = 1; i < s.theta.size(); ++i) {
    CHECK(s.z_reg[i][0] == Catch::Approx(-s.theta[i]).margin(1e-12));
    CHECK(s.Z_reg[i](0, 0) == Catch::Approx(1.0 / kSqrtPi).margin(1e-12));
  }
  CHECK(s.z_terminal()[0] == Catch::Approx(-1.0).margin(1e-12));
  CHECK(s.Z_terminal()(0, 0) == Catch::Approx(1.0 / kSqrtPi).margin(1e-12));
  CHECK_THROWS_AS(s.z_at(0), std::out_of_range);
}

TEST_CASE("matrix sensitivity matches the Mittag-Leffler resolvent") {
  for (double a0 : {-1.0, 0.5}) {
    Dynamics dyn = linear_state_dynamics(a0);
    RelaxedControl nu = RelaxedControl::constant_dirac(0.0, 1.0, 0, 3);
    const double want = mittag_leffler(0.5, 0.5, a0);
    std::vector<double> errs;
    for (int m : {512, 2048}) {
      SensitivitySolution s = solve_Z(make_position(0.0, 0.0), kCfg, dyn, kP, nu, m);
      errs.push_back(std::fabs(s.Z_terminal()(0, 0) - want));
    }
    INFO("a0 " << a0 << " errors " << errs[0] << " " << errs[1]);
    CHECK(errs[1] <= 2e-3);
    CHECK(errs[1] < errs[0]);
  }
}

TEST_CASE("psi closed form on the benchmark") {
  Dynamics dyn = make_example_dynamics("one", 0.5);
  const Position p0 = make_position(0.0, 0.0);
  CHECK(psi(p0, kCfg, dyn, kP, kCost, RelaxedControl::constant_dirac(0.0, 1.0, 2, 3),
            128) == Catch::Approx(-4.0).margin(1e-10));
  CHECK(psi(p0, kCfg, dyn, kP, kCost, RelaxedControl::constant_dirac(0.0, 1.0, 0, 3),
            128) == Catch::Approx(-4.0).margin(1e-10));
  CHECK(psi(p0, kCfg, dyn, kP, kCost, RelaxedControl::constant_dirac(0.0, 1.0, 1, 3),
            128) == Catch::Approx(0.0).margin(1e-12));

  // general gain: y(1) = a(T) + u int_t^T g (T-xi)^{alpha-1} dxi
  Dynamics dcos = make_example_dynamics("cos", 0.5);
  Position p = const_history_pos(0.3, 0.5, 0.8);
  const double aT = extension_a(p, kCfg, 1.0)[0];
  // kappa = int_t^1 cos(xi) (1-xi)^{-1/2} dxi, desingularized by xi = 1 - v^2
  const double kappa = oracles::adaptive_simpson(
      [](double v) { return 2.0 * std::cos(1.0 - v * v); }, 0.0, std::sqrt(0.7), 1e-12);
  const double want = -std::pow(aT + kappa, 2.0);
  CHECK(psi(p, kCfg, dcos, kP, kCost, RelaxedControl::constant_dirac(0.0, 1.0, 2, 3),
            4096) == Catch::Approx(want).epsilon(5e-4));
}

TEST_CASE("order-alpha derivative pair at the benchmark positions") {
  Dynamics dyn = make_example_dynamics("one", 0.5);
  RelaxedControl plus = RelaxedControl::constant_dirac(0.0, 1.0, 2, 3);
  SECTION("kinked start (0, w = 0)") {
    PsiDerivatives d = psi_derivatives(make_position(0.0, 0.0), kCfg, dyn, kP, kCost,
                                       plus, 256);
    CHECK(d.value == Catch::Approx(-4.0).margin(1e-11));
    CHECK(d.dt == Catch::Approx(4.0).margin(1e-11));
    CHECK(d.grad[0] == Catch::Approx(-4.0 / kSqrtPi).margin(1e-11));
  }
  SECTION("smooth start (0, w = 1)") {
    PsiDerivatives d = psi_derivatives(make_position(0.0, 1.0), kCfg, dyn, kP, kCost,
                                       plus, 256);
    CHECK(d.dt == Catch::Approx(6.0).margin(1e-11));
    CHECK(d.grad[0] == Catch::Approx(-6.0 / kSqrtPi).margin(1e-11));
  }
}

TEST_CASE("finite differences confirm the derivative formula") {
  struct Case {
    const char* g;
    Position p;
    std::vector<double> fracs;
    std::vector<Vec> ws;
    double f;
  };
  Vec uniform = Vec::Constant(3, 1.0 / 3.0);
  Vec tilt(3);
  tilt << 0.2, 0.3, 0.5;
  Vec dirac_plus = Vec::Zero(3);
  dirac_plus[2] = 1.0;
  std::vector<Case> cases{
      {"one", make_position(0.0, 0.5), {1.0}, {dirac_plus}, 1.0},
      {"cos", const_history_pos(0.3, 0.5, 0.8), {0.4, 1.0}, {tilt, dirac_plus}, 1.3},
      {"poly", const_history_pos(0.5, -0.4, -0.6), {1.0}, {uniform}, -2.0},
      {"cos", make_position(0.25, 1.0), {0.5, 1.0}, {dirac_plus, uniform}, 0.0},
  };
  for (const Case& c : cases) {
    Dynamics dyn = make_example_dynamics(c.g, 0.5);
    RelaxedControl nu;
    nu.lo = 0.0;
    nu.hi = 1.0;
    nu.frac_until = c.fracs;
    nu.weights = c.ws;
    PsiDerivatives d = psi_derivatives(c.p, kCfg, dyn, kP, kCost, nu, 1024);
    const Vec f = v1(c.f);
    const double formula = d.dt + d.grad.dot(f);
    const double delta = 1e-3 * (kCfg.T - c.p.t);
    const double fd = fd_directional_psi(c.p, kCfg, dyn, kP, kCost, nu, f, delta, 2048);
    const double tol = 0.02 * (1.0 + std::fabs(d.dt) + d.grad.norm() * f.norm());
    INFO("g=" << c.g << " t=" << c.p.t << " formula=" << formula << " fd=" << fd);
    CHECK(std::fabs(fd - formula) <= tol);
  }
}

TEST_CASE("response is additive in the history forcing") {
  // With state-independent dynamics the map history -> z(1) is affine.
  Dynamics dyn = make_example_dynamics("cos", 0.5);
  RelaxedControl nu = RelaxedControl::constant_dirac(0.0, 1.0, 2, 3);
  auto z1_of = [&](double c) {
    return solve_z(const_history_pos(0.4, 0.2, c), kCfg, dyn, kP, nu, 256)
        .z_terminal()[0];
  };
  const double base = z1_of(0.0);
  CHECK(z1_of(0.7) + z1_of(-0.3) - base ==
        Catch::Approx(z1_of(0.4)).margin(1e-10));
}

TEST_CASE("regularized samples stay bounded under refinement") {
  Dynamics dyn = make_example_dynamics("cos", 0.5);
  Position p = const_history_pos(0.3, 0.5, 1.0);
  RelaxedControl nu = RelaxedControl::constant_dirac(0.0, 1.0, 2, 3);
  std::vector<double> sups;
  for (int m : {128, 512}) {
    SensitivitySolution s = solve_z(p, kCfg, dyn, kP, nu, m);
    double sup = 0.0;
    for (const Vec& zr : s.z_reg) sup = std::max(sup, zr.norm());
    sups.push_back(sup);
  }
  CHECK(sups[1] <= 1.5 * sups[0] + 1e-9);
  CHECK(sups[1] < 20.0);
}

TEST_CASE("derivatives respond continuously to the measure") {
  Dynamics dyn = make_example_dynamics("poly", 0.5);
  Position p = make_position(0.2, 0.8);
  auto with_eps = [&](double eps) {
    RelaxedControl nu;
    nu.lo = 0.0;
    nu.hi = 1.0;
    nu.frac_until = {1.0};
    Vec w(3);
    w << eps, 0.0, 1.0 - eps;
    nu.weights = {w};
    return psi_derivatives(p, kCfg, dyn, kP, kCost, nu, 256);
  };
  PsiDerivatives base = with_eps(0.0);
  double prev_gap = 1e300;
  for (double eps : {0.1, 0.01, 0.0001}) {
    PsiDerivatives d = with_eps(eps);
    const double gap = std::fabs(d.value - base.value) + std::fabs(d.dt - base.dt) +
                       (d.grad - base.grad).norm();
    CHECK(gap < prev_gap);
    prev_gap = gap;
  }
  CHECK(prev_gap <= 0.05);
}
