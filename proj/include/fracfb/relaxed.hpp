#pragma once

#include "fracfb/dynamics.hpp"

namespace fracfb {

// Motion after the time change theta = (tau - t) / (T - t): the auxiliary
// trajectory y on [0, 1] with y(theta) = x(t + theta (T - t)).
struct AuxSolution {
  double t = 0.0;
  double horizon = 1.0;             // T
  std::vector<double> theta;        // nodes in [0, 1]
  std::vector<Vec> y;               // states at nodes
  const Vec& terminal() const { return y.back(); }
};

// Solves the time-changed equation
//   y(theta) = a(t + theta (T-t) | p)
//            + ((T-t)^alpha / Gamma(alpha)) int_0^theta
//              f^*(t + zeta (T-t), y(zeta), nu(zeta)) (theta - zeta)^{alpha-1} dzeta
// on a caller-supplied node vector (must start at 0 and end at 1).
inline AuxSolution solve_auxiliary_y_on(const Position& p, const ProblemConfig& cfg,
                                        const Dynamics& dyn, const ControlSet& P,
                                        const RelaxedControl& nu,
                                        const std::vector<double>& mesh,
                                        const VolterraOptions& opt = {}) {
  cfg.validate();
  p.validate(cfg);
  P.validate();
  nu.validate(P);
  if (!(p.t < cfg.T))
    throw std::invalid_argument("solve_auxiliary_y: position at the horizon");
  if (std::fabs(nu.lo) > 1e-14 || std::fabs(nu.hi - 1.0) > 1e-14)
    throw std::invalid_argument("solve_auxiliary_y: control must live on [0,1]");
  if (mesh.size() < 2 || mesh.front() != 0.0 || std::fabs(mesh.back() - 1.0) > 1e-14)
    throw std::invalid_argument("solve_auxiliary_y: mesh must span [0,1]");
  const double span = cfg.T - p.t;
  auto base = [&](double th) { return extension_a(p, cfg, p.t + th * span); };
  auto fcell = [&](std::size_t j, double thj, const Vec& v) {
    const double mid = 0.5 * (mesh[j - 1] + mesh[j]);
    return f_star(dyn, P, p.t + thj * span, v, nu.weights_at_frac(mid));
  };
  AuxSolution out;
  out.t = p.t;
  out.horizon = cfg.T;
  out.theta = mesh;
  out.y = detail::volterra_solve(mesh, cfg.alpha, std::pow(span, cfg.alpha), dyn.n, base,
                                 fcell, opt);
  return out;
}

// Same, on a uniform mesh merged with the piece boundaries of nu.
inline AuxSolution solve_auxiliary_y(const Position& p, const ProblemConfig& cfg,
                                     const Dynamics& dyn, const ControlSet& P,
                                     const RelaxedControl& nu, int steps,
                                     const VolterraOptions& opt = {}) {
  return solve_auxiliary_y_on(p, cfg, dyn, P, nu,
                              detail::control_aware_mesh(0.0, 1.0, steps, nu), opt);
}

}  // namespace fracfb
