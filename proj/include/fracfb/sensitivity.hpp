#pragma once

#include "fracfb/relaxed.hpp"

namespace fracfb {

/*
 * Directional-derivative machinery for the terminal functional
 *
 *   psi(t, w, nu) = sigma(y(1))
 *
 * along constant-derivative position shifts. The pair of linear Volterra
 * equations solved here (vector z for the time component, matrix Z for the
 * state component) shares the coefficients
 *
 *   A(theta, u) = (T-t)^alpha df_dx(s, y(theta), u)
 *   b(theta, u) = (1-theta)(T-t)^alpha df_dtau(s, y(theta), u)
 *               - alpha f(s, y(theta), u) (T-t)^{alpha-1},     s = t + theta (T-t),
 *
 * averaged under the relaxed weights, with forcing terms q (from the frozen
 * history) and Q (the kernel of the shift itself). Both unknowns behave like
 * theta^{alpha-1} near zero, so the solver advances the regularized samples
 * theta^{1-alpha} z on a mesh graded as theta_j = (j/m)^{1/alpha}.
 */

inline std::vector<double> graded_mesh(int m, double alpha) {
  if (m < 2) throw std::invalid_argument("graded_mesh: need at least 2 cells");
  std::vector<double> th(std::size_t(m) + 1);
  for (int j = 0; j <= m; ++j) th[std::size_t(j)] = std::pow(double(j) / m, 1.0 / alpha);
  th.front() = 0.0;
  th.back() = 1.0;
  return th;
}

// Graded mesh merged with the piece boundaries of nu (so coefficient averages
// never straddle a switch of the measure).
inline std::vector<double> sensitivity_mesh(int m, double alpha, const RelaxedControl& nu) {
  std::set<double> nodes;
  for (double th : graded_mesh(m, alpha)) nodes.insert(th);
  for (std::size_t i = 0; i + 1 < nu.frac_until.size(); ++i)
    if (nu.frac_until[i] > 0.0 && nu.frac_until[i] < 1.0) nodes.insert(nu.frac_until[i]);
  std::vector<double> all(nodes.begin(), nodes.end());
  std::vector<double> out{all.front()};
  for (double x : all)
    if (x - out.back() > 1e-13) out.push_back(x);
  out.back() = 1.0;
  return out;
}

// History forcing
//   q(theta) = -((1-alpha)(1-theta)/Gamma(alpha))
//              int_0^t cdw(xi) (t + theta (T-t) - xi)^{alpha-2} dxi,
// evaluated with exact cell moments of the hypersingular kernel. q blows up
// like theta^{alpha-1}; theta must be positive.
inline Vec forcing_q(const Position& p, const ProblemConfig& cfg, double theta) {
  if (!(theta > 0.0) || theta > 1.0)
    throw std::domain_error("forcing_q: theta must lie in (0, 1]");
  Vec acc = Vec::Zero(p.w0.size());
  if (p.caputo.empty()) return acc;
  const double s = p.t + theta * (cfg.T - p.t);
  for (std::size_t j = 0; j < p.caputo.cells(); ++j)
    acc += p.caputo.values[j] *
           hyper_moment(s, p.caputo.bounds[j], p.caputo.bounds[j + 1], cfg.alpha);
  return -(1.0 - cfg.alpha) * (1.0 - theta) / gamma_fn(cfg.alpha) * acc;
}

// Shift forcing Q(theta) = Id / (Gamma(alpha) theta^{1-alpha} (T-t)^{1-alpha}).
inline Mat forcing_Q(const Position& p, const ProblemConfig& cfg, double theta) {
  if (!(theta > 0.0) || theta > 1.0)
    throw std::domain_error("forcing_Q: theta must lie in (0, 1]");
  if (!(p.t < cfg.T)) throw std::invalid_argument("forcing_Q: position at the horizon");
  const Eigen::Index n = p.w0.size();
  const double denom = gamma_fn(cfg.alpha) * std::pow(theta, 1.0 - cfg.alpha) *
                       std::pow(cfg.T - p.t, 1.0 - cfg.alpha);
  return Mat::Identity(n, n) / denom;
}

struct Coeffs {
  Mat A;
  Vec b;
};

// Coefficients of the linearized equations at a single control point.
inline Coeffs coeffs_A_b(const Dynamics& dyn, const ProblemConfig& cfg, double t,
                         double theta, const Vec& y_theta, const Vec& u) {
  const double span = cfg.T - t;
  if (!(span > 0.0)) throw std::invalid_argument("coeffs_A_b: position at the horizon");
  const double s = t + theta * span;
  const double sp_a = std::pow(span, cfg.alpha);
  Coeffs c;
  c.A = sp_a * dyn.df_dx(s, y_theta, u);
  c.b = (1.0 - theta) * sp_a * dyn.df_dtau(s, y_theta, u) -
        cfg.alpha * std::pow(span, cfg.alpha - 1.0) * dyn.f(s, y_theta, u);
  return c;
}

// Weighted means A*, b* under relaxed weights; zero weights are skipped.
inline Coeffs coeffs_star(const Dynamics& dyn, const ControlSet& P,
                          const ProblemConfig& cfg, double t, double theta,
                          const Vec& y_theta, const Vec& w) {
  Coeffs acc{Mat::Zero(dyn.n, dyn.n), Vec::Zero(dyn.n)};
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    if (w[k] == 0.0) continue;
    Coeffs c = coeffs_A_b(dyn, cfg, t, theta, y_theta, P.points[std::size_t(k)]);
    acc.A += w[k] * c.A;
    acc.b += w[k] * c.b;
  }
  return acc;
}

// Regularized samples of the sensitivity pair on the graded mesh:
// reg values are theta^{1-alpha} z(theta) and theta^{1-alpha} Z(theta).
struct SensitivitySolution {
  double alpha = 0.5;
  std::vector<double> theta;
  std::vector<Vec> z_reg;
  std::vector<Mat> Z_reg;

  Vec z_at(std::size_t i) const {
    if (i == 0) throw std::out_of_range("SensitivitySolution: z singular at theta=0");
    return z_reg[i] * std::pow(theta[i], alpha - 1.0);
  }
  Mat Z_at(std::size_t i) const {
    if (i == 0) throw std::out_of_range("SensitivitySolution: Z singular at theta=0");
    return Z_reg[i] * std::pow(theta[i], alpha - 1.0);
  }
  Vec z_terminal() const { return z_reg.back(); }
  Mat Z_terminal() const { return Z_reg.back(); }
};

// Solves both linear Volterra equations along a solved auxiliary trajectory.
// aux must be the solution for (p, nu) on exactly the mesh it carries.
inline SensitivitySolution solve_sensitivity(const Position& p, const ProblemConfig& cfg,
                                             const Dynamics& dyn, const ControlSet& P,
                                             const RelaxedControl& nu,
                                             const AuxSolution& aux) {
  const double alpha = cfg.alpha;
  const std::vector<double>& th = aux.theta;
  const std::size_t m = th.size() - 1;
  const double ga = gamma_fn(alpha);
  const double span = cfg.T - p.t;
  const Eigen::Index n = dyn.n;
  const double q_reg_scale = 1.0 / (ga * std::pow(span, 1.0 - alpha));

  SensitivitySolution out;
  out.alpha = alpha;
  out.theta = th;
  out.z_reg.resize(m + 1);
  out.Z_reg.resize(m + 1);

  // per-node coefficient averages and forcing
  std::vector<Coeffs> cs(m + 1);
  std::vector<Vec> q(m + 1);
  for (std::size_t i = 1; i <= m; ++i) {
    const Vec& w = nu.weights_at_frac(0.5 * (th[i - 1] + th[i]));
    cs[i] = coeffs_star(dyn, P, cfg, p.t, th[i], aux.y[i], w);
    q[i] = forcing_q(p, cfg, th[i]);
  }

  const Mat id = Mat::Identity(n, n);
  std::vector<double> reg_pow(m + 1);  // theta_i^{1-alpha}
  for (std::size_t i = 1; i <= m; ++i) reg_pow[i] = std::pow(th[i], 1.0 - alpha);

  for (std::size_t i = 1; i <= m; ++i) {
    // moments of the regularized representation z ~ zreg_j zeta^{alpha-1}
    // over cell j, against the kernel (theta_i - zeta)^{alpha-1}
    Vec rhs_z = q[i];
    Mat rhs_Z = id * (std::pow(th[i], alpha - 1.0) * q_reg_scale);
    const double th2a = std::pow(th[i], 2.0 * alpha - 1.0);
    double mu_ii = 0.0;
    for (std::size_t j = 1; j <= i; ++j) {
      const double mu = th2a * beta_segment(alpha, alpha, th[j - 1] / th[i], th[j] / th[i]);
      if (j == i) {
        mu_ii = mu;
      } else {
        rhs_z += (cs[j].A * out.z_reg[j]) * (mu / ga);
        rhs_Z += (cs[j].A * out.Z_reg[j]) * (mu / ga);
      }
      rhs_z += cs[j].b * (weak_moment(th[i], th[j - 1], th[j], alpha) / ga);
    }
    const Mat lhs = id - (mu_ii * reg_pow[i] / ga) * cs[i].A;
    Eigen::FullPivLU<Mat> lu(lhs);
    if (!lu.isInvertible())
      throw SolverError("solve_sensitivity: singular linear step");
    const Vec zi = lu.solve(rhs_z);
    const Mat Zi = lu.solve(rhs_Z);
    out.z_reg[i] = reg_pow[i] * zi;
    out.Z_reg[i] = reg_pow[i] * Zi;
  }
  out.z_reg[0] = m >= 1 ? out.z_reg[1] : Vec::Zero(n);
  out.Z_reg[0] = m >= 1 ? out.Z_reg[1] : Mat::Zero(n, n);
  return out;
}

namespace detail {

inline AuxSolution solve_aux_for_sensitivity(const Position& p, const ProblemConfig& cfg,
                                             const Dynamics& dyn, const ControlSet& P,
                                             const RelaxedControl& nu, int m) {
  return solve_auxiliary_y_on(p, cfg, dyn, P, nu, sensitivity_mesh(m, cfg.alpha, nu));
}

}  // namespace detail

inline SensitivitySolution solve_z(const Position& p, const ProblemConfig& cfg,
                                   const Dynamics& dyn, const ControlSet& P,
                                   const RelaxedControl& nu, int m) {
  const AuxSolution aux = detail::solve_aux_for_sensitivity(p, cfg, dyn, P, nu, m);
  return solve_sensitivity(p, cfg, dyn, P, nu, aux);
}

inline SensitivitySolution solve_Z(const Position& p, const ProblemConfig& cfg,
                                   const Dynamics& dyn, const ControlSet& P,
                                   const RelaxedControl& nu, int m) {
  return solve_z(p, cfg, dyn, P, nu, m);
}

// Terminal functional of the relaxed control from a position.
inline double psi(const Position& p, const ProblemConfig& cfg, const Dynamics& dyn,
                  const ControlSet& P, const CostFn& cost, const RelaxedControl& nu,
                  int steps) {
  return cost.sigma(solve_auxiliary_y(p, cfg, dyn, P, nu, steps).terminal());
}

struct PsiDerivatives {
  double value = 0.0;  // psi itself, from the same auxiliary solve
  double dt = 0.0;     // time component of the order-alpha derivative
  Vec grad;            // state component (gradient)
};

// Order-alpha derivative pair of psi at p:
//   dt = <dsigma(y(1)), z(1)>,   grad = Z(1)^T dsigma(y(1)).
inline PsiDerivatives psi_derivatives(const Position& p, const ProblemConfig& cfg,
                                      const Dynamics& dyn, const ControlSet& P,
                                      const CostFn& cost, const RelaxedControl& nu,
                                      int m) {
  const AuxSolution aux = detail::solve_aux_for_sensitivity(p, cfg, dyn, P, nu, m);
  const SensitivitySolution s = solve_sensitivity(p, cfg, dyn, P, nu, aux);
  PsiDerivatives d;
  d.value = cost.sigma(aux.terminal());
  const Vec ds = cost.dsigma_dx(aux.terminal());
  d.dt = ds.dot(s.z_terminal());
  d.grad = s.Z_terminal().transpose() * ds;
  return d;
}

// Finite-difference quotient of psi along the constant-derivative shift by f:
//   [psi(t + delta, x^{(f)}, nu) - psi(t, w, nu)] / delta.
inline double fd_directional_psi(const Position& p, const ProblemConfig& cfg,
                                 const Dynamics& dyn, const ControlSet& P,
                                 const CostFn& cost, const RelaxedControl& nu,
                                 const Vec& f, double delta, int steps) {
  const double base = psi(p, cfg, dyn, P, cost, nu, steps);
  const Position shifted = shift_position(p, cfg, f, delta);
  const double moved = psi(shifted, cfg, dyn, P, cost, nu, steps);
  return (moved - base) / delta;
}

}  // namespace fracfb
