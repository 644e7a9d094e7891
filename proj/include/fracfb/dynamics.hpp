#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <string>

#include "fracfb/control.hpp"
#include "fracfb/position.hpp"

namespace fracfb {

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Right-hand side of the Caputo system (^C D^alpha x)(tau) = f(tau, x, u),
// with the partial derivatives the sensitivity equations need and a linear
// growth constant: ||f(tau, x, u)|| <= growth_c (1 + ||x||) for admissible u.
struct Dynamics {
  Eigen::Index n = 1;
  std::function<Vec(double, const Vec&, const Vec&)> f;
  std::function<Vec(double, const Vec&, const Vec&)> df_dtau;
  std::function<Mat(double, const Vec&, const Vec&)> df_dx;
  double growth_c = 1.0;
  std::optional<double> lip_x;  // Lipschitz constant in x, enables step checks
};

// Terminal cost and its gradient.
struct CostFn {
  std::function<double(const Vec&)> sigma;
  std::function<Vec(const Vec&)> dsigma_dx;
};

// Mean right-hand side under probability weights mu over the control set:
// f^*(tau, x, mu) = sum_k mu_k f(tau, x, u_k). Zero weights are skipped, so a
// Dirac row reproduces f(tau, x, u_k) exactly.
inline Vec f_star(const Dynamics& dyn, const ControlSet& P, double tau, const Vec& x,
                  const Vec& w) {
  Vec acc = Vec::Zero(dyn.n);
  for (Eigen::Index k = 0; k < w.size(); ++k)
    if (w[k] != 0.0) acc += w[k] * dyn.f(tau, x, P.points[std::size_t(k)]);
  return acc;
}

struct VolterraOptions {
  int max_picard = 50;
  double picard_tol = 1e-12;
};

namespace detail {

/*
 * Product-integration sweep for the weakly singular Volterra equation
 *
 *   v(s_i) = base(s_i) + (scale/Gamma(alpha)) int_{s_0}^{s_i} F(xi, v(xi))
 *            (s_i - xi)^{alpha-1} dxi
 *
 * on the given node vector. The integrand is frozen per cell at the right
 * node (implicit); kernel cell moments are exact, so piecewise-constant
 * integrands are integrated without error. The diagonal cell is resolved by
 * Picard iteration.
 */
template <class BaseFn, class CellFn>
std::vector<Vec> volterra_solve(const std::vector<double>& s, double alpha, double scale,
                                Eigen::Index n, BaseFn&& base, CellFn&& fcell,
                                const VolterraOptions& opt = {}) {
  const std::size_t K = s.size() - 1;
  const double ga = gamma_fn(alpha);
  std::vector<Vec> v(K + 1), F(K + 1);
  v[0] = base(s[0]);
  if (v[0].size() != n) throw SolverError("volterra_solve: base dimension mismatch");
  for (std::size_t i = 1; i <= K; ++i) {
    Vec known = Vec::Zero(n);
    double prev_pow = std::pow(s[i] - s[0], alpha);
    for (std::size_t j = 1; j < i; ++j) {
      const double next_pow = std::pow(s[i] - s[j], alpha);
      known += F[j] * ((prev_pow - next_pow) / alpha);
      prev_pow = next_pow;
    }
    const Vec b = base(s[i]);
    const double ci = prev_pow / alpha;  // moment of the diagonal cell
    Vec x = v[i - 1];
    bool converged = false;
    for (int it = 0; it < opt.max_picard; ++it) {
      Vec xn = b + (scale / ga) * (known + ci * fcell(i, s[i], x));
      if (!xn.allFinite()) throw SolverError("volterra_solve: non-finite iterate");
      const double gap = (xn - x).norm();
      x = std::move(xn);
      if (gap <= opt.picard_tol * (1.0 + x.norm())) {
        converged = true;
        break;
      }
    }
    if (!converged) throw SolverError("volterra_solve: Picard iteration stalled");
    v[i] = x;
    F[i] = fcell(i, s[i], v[i]);
  }
  return v;
}

// Uniform nodes on [lo, hi] merged with the mapped piece boundaries of mu,
// so no solver cell straddles a control switch.
inline std::vector<double> control_aware_mesh(double lo, double hi, int steps,
                                              const RelaxedControl& mu) {
  if (steps < 1) throw std::invalid_argument("mesh: steps must be >= 1");
  std::set<double> nodes;
  for (int i = 0; i <= steps; ++i)
    nodes.insert(lo + (hi - lo) * double(i) / double(steps));
  for (std::size_t i = 0; i + 1 < mu.frac_until.size(); ++i) {
    const double b = mu.until_abs(i);
    if (b > lo && b < hi) nodes.insert(b);
  }
  std::vector<double> out(nodes.begin(), nodes.end());
  const double tiny = 1e-13 * (1.0 + std::fabs(hi));
  std::vector<double> dedup{out.front()};
  for (double x : out)
    if (x - dedup.back() > tiny) dedup.push_back(x);
  dedup.back() = hi;
  return dedup;
}

}  // namespace detail

/*
 * A solved motion: the trajectory on [t, T] from a starting position, stored
 * as node states on the solver segment plus the full Caputo record on [0, T]
 * (history cells followed by right-node samples of f along the solve).
 * Restricting the Caputo record reproduces intermediate positions exactly.
 */
struct Motion {
  Position start;
  std::vector<double> nodes;  // solver nodes on [start.t, T]
  std::vector<Vec> x;         // states at nodes
  StepFn caputo;              // on [0, T]

  const Vec& terminal() const { return x.back(); }

  Position position_at(double tau) const {
    if (tau < start.t || tau > caputo.hi() + 1e-12)
      throw std::out_of_range("Motion: tau outside [t, T]");
    Position p;
    p.t = std::min(tau, caputo.hi());
    p.w0 = start.w0;
    p.caputo = p.t > 0.0 ? caputo.restrict_to(p.t) : StepFn();
    return p;
  }

  Vec state(double alpha, double tau) const {
    return start.w0 + rl_integral(caputo, alpha, tau);
  }
};

// Solves the relaxed motion on [p.t, T]:
//   x(tau) = a(tau | p) + (1/Gamma(alpha)) int_t^tau f^*(xi, x(xi), mu(xi))
//            (tau - xi)^{alpha-1} dxi.
inline Motion solve_motion_relaxed(const Position& p, const ProblemConfig& cfg,
                                   const Dynamics& dyn, const ControlSet& P,
                                   const RelaxedControl& mu, int steps,
                                   const VolterraOptions& opt = {}) {
  cfg.validate();
  p.validate(cfg);
  P.validate();
  mu.validate(P);
  if (!(p.t < cfg.T)) throw std::invalid_argument("solve_motion: position at the horizon");
  if (std::fabs(mu.lo - p.t) > 1e-12 * (1.0 + cfg.T) ||
      std::fabs(mu.hi - cfg.T) > 1e-12 * (1.0 + cfg.T))
    throw std::invalid_argument("solve_motion: control interval must be [t, T]");

  const std::vector<double> s = detail::control_aware_mesh(p.t, cfg.T, steps, mu);
  if (dyn.lip_x) {
    double hmax = 0.0;
    for (std::size_t i = 1; i < s.size(); ++i) hmax = std::max(hmax, s[i] - s[i - 1]);
    const double contraction = *dyn.lip_x * std::pow(hmax, cfg.alpha) / gamma_fn(cfg.alpha + 1.0);
    if (contraction >= 0.95)
      throw SolverError("solve_motion: step size too large for Picard contraction");
  }

  std::vector<Vec> F(s.size());
  auto fcell = [&](std::size_t j, double sj, const Vec& v) {
    const double mid = 0.5 * (s[j - 1] + s[j]);
    return f_star(dyn, P, sj, v, mu.weights_at(mid));
  };
  auto base = [&](double tau) { return extension_a(p, cfg, tau); };
  std::vector<Vec> v = detail::volterra_solve(s, cfg.alpha, 1.0, dyn.n, base, fcell, opt);

  Motion m;
  m.start = p;
  m.nodes = s;
  m.x = v;
  m.caputo = p.caputo;
  if (m.caputo.empty()) m.caputo.bounds.assign(1, 0.0);
  for (std::size_t j = 1; j < s.size(); ++j) {
    const double mid = 0.5 * (s[j - 1] + s[j]);
    m.caputo.append_cell(s[j], f_star(dyn, P, s[j], v[j], mu.weights_at(mid)));
  }
  return m;
}

// Ordinary motion: solved through the Dirac lift, hence node-identical to the
// relaxed solve of the lifted control.
inline Motion solve_motion(const Position& p, const ProblemConfig& cfg, const Dynamics& dyn,
                           const ControlSet& P, const PiecewiseControl& u, int steps,
                           const VolterraOptions& opt = {}) {
  return solve_motion_relaxed(p, cfg, dyn, P, lift_ordinary(u, P), steps, opt);
}

// min_{u in P} <s, f(tau, x, u)>; ties resolved to the lowest index.
inline std::pair<double, int> hamiltonian(const Dynamics& dyn, const ControlSet& P,
                                          double tau, const Vec& x, const Vec& s) {
  P.validate();
  double best = std::numeric_limits<double>::infinity();
  int arg = -1;
  for (std::size_t k = 0; k < P.size(); ++k) {
    const double h = s.dot(dyn.f(tau, x, P.points[k]));
    if (h < best) {
      best = h;
      arg = int(k);
    }
  }
  return {best, arg};
}

// Independent residual of the integral equation along a solved motion: the
// state is interpolated linearly and the integral re-evaluated on split
// cells, so the residual reflects genuine discretization error.
inline double volterra_residual(const Motion& m, const ProblemConfig& cfg,
                                const Dynamics& dyn, const ControlSet& P,
                                const RelaxedControl& mu) {
  const auto& s = m.nodes;
  double worst = 0.0;
  auto interp = [&](double tau) -> Vec {
    auto it = std::upper_bound(s.begin(), s.end(), tau);
    std::size_t j = std::min(std::size_t(it - s.begin()), s.size() - 1);
    if (j == 0) j = 1;
    const double lam = (tau - s[j - 1]) / (s[j] - s[j - 1]);
    return (1.0 - lam) * m.x[j - 1] + lam * m.x[j];
  };
  for (std::size_t i = 1; i < s.size(); ++i) {
    Vec acc = Vec::Zero(dyn.n);
    for (std::size_t j = 1; j <= i; ++j) {
      const double a = s[j - 1], b = s[j], mid = 0.5 * (a + b);
      const Vec& w = mu.weights_at(mid);
      acc += f_star(dyn, P, 0.5 * (a + mid), interp(0.5 * (a + mid)), w) *
             weak_moment(s[i], a, mid, cfg.alpha);
      acc += f_star(dyn, P, 0.5 * (mid + b), interp(0.5 * (mid + b)), w) *
             weak_moment(s[i], mid, b, cfg.alpha);
    }
    const Vec rhs = extension_a(m.start, cfg, s[i]) + acc / gamma_fn(cfg.alpha);
    worst = std::max(worst, (m.x[i] - rhs).norm());
  }
  return worst;
}

struct DynamicsDiagnostics {
  double max_growth_violation = 0.0;  // max(||f|| - c(1+||x||), 0)
  double max_dtau_err = 0.0;          // relative FD mismatch of df_dtau
  double max_dx_err = 0.0;            // relative FD mismatch of df_dx
};

// Central-difference check of the declared derivatives and the growth bound
// over a sampling lattice.
inline DynamicsDiagnostics validate_dynamics(const Dynamics& dyn, const ControlSet& P,
                                             const std::vector<double>& taus,
                                             const std::vector<Vec>& xs) {
  DynamicsDiagnostics d;
  for (double tau : taus)
    for (const Vec& x : xs)
      for (const Vec& u : P.points) {
        const Vec fv = dyn.f(tau, x, u);
        d.max_growth_violation = std::max(
            d.max_growth_violation, fv.norm() - dyn.growth_c * (1.0 + x.norm()));
        const double ht = 1e-5 * (1.0 + std::fabs(tau));
        const Vec fd_t = (dyn.f(tau + ht, x, u) - dyn.f(tau - ht, x, u)) / (2.0 * ht);
        d.max_dtau_err = std::max(
            d.max_dtau_err, (fd_t - dyn.df_dtau(tau, x, u)).norm() / (1.0 + fd_t.norm()));
        const Mat J = dyn.df_dx(tau, x, u);
        for (Eigen::Index c = 0; c < x.size(); ++c) {
          Vec xp = x, xm = x;
          const double hx = 1e-5 * (1.0 + std::fabs(x[c]));
          xp[c] += hx;
          xm[c] -= hx;
          const Vec fd_x = (dyn.f(tau, xp, u) - dyn.f(tau, xm, u)) / (2.0 * hx);
          d.max_dx_err = std::max(
              d.max_dx_err, (fd_x - J.col(c)).norm() / (1.0 + fd_x.norm()));
        }
      }
  return d;
}

// Sampling diagnostic for convexity of the velocity sets: f evaluated at
// midpoints of control-point pairs must stay inside the hull of the sampled
// f-image (interval in 1D). A violation means the control grid under-samples
// a curved velocity set. Dimensions above 1 are not checked here.
inline int convexity_violations(const Dynamics& dyn, const ControlSet& P,
                                const std::vector<double>& taus,
                                const std::vector<Vec>& xs, double tol = 1e-9) {
  if (dyn.n != 1) return 0;
  int bad = 0;
  for (double tau : taus)
    for (const Vec& x : xs) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const Vec& u : P.points) {
        const double y = dyn.f(tau, x, u)[0];
        lo = std::min(lo, y);
        hi = std::max(hi, y);
      }
      for (std::size_t i = 0; i < P.size(); ++i)
        for (std::size_t j = i + 1; j < P.size(); ++j) {
          const Vec umid = 0.5 * (P.points[i] + P.points[j]);
          const double y = dyn.f(tau, x, umid)[0];
          if (y < lo - tol || y > hi + tol) ++bad;
        }
    }
  return bad;
}

/*
 * Benchmark family (^C D^alpha x)(tau) = Gamma(alpha) g(tau) u, u in [-1, 1],
 * with terminal cost sigma(x) = -x^2. Shapes: "one" (g = 1), "cos"
 * (g = cos tau), "poly" (g = 1 + tau^2/4). All are positive on [0, 1], so the
 * closed-form value below stays elementary.
 */
inline double example_g(const std::string& name, double tau) {
  if (name == "one") return 1.0;
  if (name == "cos") return std::cos(tau);
  if (name == "poly") return 1.0 + 0.25 * tau * tau;
  throw std::invalid_argument("example_g: unknown shape '" + name + "'");
}

inline double example_g_prime(const std::string& name, double tau) {
  if (name == "one") return 0.0;
  if (name == "cos") return -std::sin(tau);
  if (name == "poly") return 0.5 * tau;
  throw std::invalid_argument("example_g: unknown shape '" + name + "'");
}

inline Dynamics make_example_dynamics(const std::string& g_name, double alpha) {
  example_g(g_name, 0.0);
  const double ga = gamma_fn(alpha);
  Dynamics dyn;
  dyn.n = 1;
  dyn.f = [g_name, ga](double tau, const Vec&, const Vec& u) {
    Vec out(1);
    out << ga * example_g(g_name, tau) * u[0];
    return out;
  };
  dyn.df_dtau = [g_name, ga](double tau, const Vec&, const Vec& u) {
    Vec out(1);
    out << ga * example_g_prime(g_name, tau) * u[0];
    return out;
  };
  dyn.df_dx = [](double, const Vec&, const Vec&) { return Mat::Zero(1, 1); };
  dyn.growth_c = 2.0 * ga;
  dyn.lip_x = 0.0;
  return dyn;
}

inline CostFn make_example_cost() {
  CostFn c;
  c.sigma = [](const Vec& x) { return -x.squaredNorm(); };
  c.dsigma_dx = [](const Vec& x) { return Vec(-2.0 * x); };
  return c;
}

inline ControlSet make_example_controls(int m = 3) {
  if (m < 2) throw std::invalid_argument("make_example_controls: need at least 2 points");
  std::vector<double> us;
  for (int i = 0; i < m; ++i) us.push_back(-1.0 + 2.0 * double(i) / double(m - 1));
  return scalar_controls(std::move(us));
}

}  // namespace fracfb
