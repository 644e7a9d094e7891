#pragma once

#include "fracfb/sensitivity.hpp"

namespace fracfb {

// Candidate controls for the envelope representation of the value: a finite
// family of relaxed controls on [0, 1], each inducing the functional
// psi(t, w, nu). The value candidate is the family minimum.
struct CandidateFamily {
  std::vector<RelaxedControl> members;
};

// One constant Dirac member per control point.
inline CandidateFamily constant_dirac_family(const ControlSet& P) {
  CandidateFamily fam;
  for (std::size_t k = 0; k < P.size(); ++k)
    fam.members.push_back(RelaxedControl::constant_dirac(0.0, 1.0, k, P.size()));
  return fam;
}

struct ActiveSet {
  std::vector<double> values;        // psi per member
  std::vector<std::size_t> indices;  // members within tolerance of the minimum
  double min_value = 0.0;
};

namespace detail {

inline std::vector<std::size_t> active_indices(const std::vector<double>& values,
                                               double tol_scale, double* min_out) {
  if (values.empty()) throw std::invalid_argument("active_set: empty family");
  const double mn = *std::min_element(values.begin(), values.end());
  const double tol = tol_scale * (1.0 + std::fabs(mn));
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] <= mn + tol) idx.push_back(i);
  if (min_out) *min_out = mn;
  return idx;
}

}  // namespace detail

// Members whose psi lies within tol_scale (1 + |min|) of the family minimum.
inline ActiveSet active_set(const Position& p, const ProblemConfig& cfg,
                            const Dynamics& dyn, const ControlSet& P, const CostFn& cost,
                            const CandidateFamily& family, int steps,
                            double tol_scale = 1e-2) {
  ActiveSet as;
  for (const RelaxedControl& nu : family.members)
    as.values.push_back(psi(p, cfg, dyn, P, cost, nu, steps));
  as.indices = detail::active_indices(as.values, tol_scale, &as.min_value);
  return as;
}

// Family evaluation with derivative pairs on the active members only.
struct FamilyEval {
  std::vector<double> values;
  std::vector<std::size_t> active;
  std::vector<PsiDerivatives> active_derivs;  // parallel to `active`
  double min_value = 0.0;
};

inline FamilyEval evaluate_family(const Position& p, const ProblemConfig& cfg,
                                  const Dynamics& dyn, const ControlSet& P,
                                  const CostFn& cost, const CandidateFamily& family,
                                  int m, double tol_scale = 1e-2) {
  FamilyEval ev;
  std::vector<AuxSolution> auxes;
  auxes.reserve(family.members.size());
  for (const RelaxedControl& nu : family.members) {
    auxes.push_back(detail::solve_aux_for_sensitivity(p, cfg, dyn, P, nu, m));
    ev.values.push_back(cost.sigma(auxes.back().terminal()));
  }
  ev.active = detail::active_indices(ev.values, tol_scale, &ev.min_value);
  for (std::size_t i : ev.active) {
    const SensitivitySolution s =
        solve_sensitivity(p, cfg, dyn, P, family.members[i], auxes[i]);
    PsiDerivatives d;
    d.value = ev.values[i];
    const Vec ds = cost.dsigma_dx(auxes[i].terminal());
    d.dt = ds.dot(s.z_terminal());
    d.grad = s.Z_terminal().transpose() * ds;
    ev.active_derivs.push_back(std::move(d));
  }
  return ev;
}

// Envelope formula: the order-alpha derivative of a pointwise minimum of
// functionals, given each member's value and derivative pair at the point.
struct EnvelopeMember {
  double value = 0.0;
  double dt = 0.0;
  Vec grad;
};

inline double envelope_dderiv_generic(const std::vector<EnvelopeMember>& members,
                                      const Vec& f, double tol_scale = 1e-2) {
  std::vector<double> values;
  for (const EnvelopeMember& m : members) values.push_back(m.value);
  double mn = 0.0;
  const auto idx = detail::active_indices(values, tol_scale, &mn);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i : idx) best = std::min(best, members[i].dt + members[i].grad.dot(f));
  return best;
}

// Order-alpha directional derivative of the family value at p along the
// constant-derivative shift by f: min over active members of dt + <grad, f>.
inline double dderiv_value(const Position& p, const ProblemConfig& cfg,
                           const Dynamics& dyn, const ControlSet& P, const CostFn& cost,
                           const CandidateFamily& family, const Vec& f, int m,
                           double tol_scale = 1e-2) {
  const FamilyEval ev = evaluate_family(p, cfg, dyn, P, cost, family, m, tol_scale);
  double best = std::numeric_limits<double>::infinity();
  for (const PsiDerivatives& d : ev.active_derivs)
    best = std::min(best, d.dt + d.grad.dot(f));
  return best;
}

// min over the control grid of the directional derivative along f(t, w(t), u):
// the discrete residual of the terminal-value equation at p.
inline double hjb_residual(const Position& p, const ProblemConfig& cfg,
                           const Dynamics& dyn, const ControlSet& P, const CostFn& cost,
                           const CandidateFamily& family, int m,
                           double tol_scale = 1e-2) {
  const FamilyEval ev = evaluate_family(p, cfg, dyn, P, cost, family, m, tol_scale);
  const Vec wt = reconstruct(p, cfg.alpha, p.t);
  double best = std::numeric_limits<double>::infinity();
  for (const Vec& u : P.points) {
    const Vec f = dyn.f(p.t, wt, u);
    for (const PsiDerivatives& d : ev.active_derivs)
      best = std::min(best, d.dt + d.grad.dot(f));
  }
  return best;
}

// Exhaustive minimum of sigma(x(T)) over piecewise-constant controls with
// `pieces` equal pieces on [t, T]. The enumeration is capped at 10^6 combos.
inline double value_bruteforce(const Position& p, const ProblemConfig& cfg,
                               const Dynamics& dyn, const ControlSet& P,
                               const CostFn& cost, int pieces, int steps,
                               std::vector<int>* best_ids = nullptr) {
  if (pieces < 1) throw std::invalid_argument("value_bruteforce: pieces must be >= 1");
  double combos = 1.0;
  for (int i = 0; i < pieces; ++i) {
    combos *= double(P.size());
    if (combos > 1e6)
      throw std::invalid_argument("value_bruteforce: enumeration exceeds 10^6 controls");
  }
  std::vector<int> ids(std::size_t(pieces), 0);
  double best = std::numeric_limits<double>::infinity();
  for (;;) {
    PiecewiseControl u = PiecewiseControl::uniform(p.t, cfg.T, ids);
    const double val = cost.sigma(solve_motion(p, cfg, dyn, P, u, steps).terminal());
    if (val < best) {
      best = val;
      if (best_ids) *best_ids = ids;
    }
    std::size_t d = 0;
    while (d < ids.size() && ++ids[d] == int(P.size())) ids[d++] = 0;
    if (d == ids.size()) break;
  }
  return best;
}

/*
 * Benchmark closed forms. For (^C D^alpha x) = Gamma(alpha) g(tau) u with
 * u in [-1, 1] and sigma(x) = -x^2, the value is
 *
 *   rho(t, w) = -( |a(T | t, w)| + int_t^T |g(tau)| (T - tau)^{alpha-1} dtau )^2.
 *
 * The singular integral is evaluated with exact kernel moments against a
 * piecewise-linear sampling of |g|.
 */
inline double gain_tail_integral(const std::function<double(double)>& g,
                                 const ProblemConfig& cfg, double t, int cells = 8192) {
  if (!(t < cfg.T)) throw std::invalid_argument("gain_tail_integral: t at the horizon");
  const double h = (cfg.T - t) / cells;
  double acc = 0.0;
  double ga = std::fabs(g(t));
  for (int j = 0; j < cells; ++j) {
    const double a = t + j * h, b = (j + 1 == cells) ? cfg.T : t + (j + 1) * h;
    const double gb = std::fabs(g(b));
    const double i0 = weak_moment(cfg.T, a, b, cfg.alpha);
    const double i1 = (cfg.T - a) * i0 -
                      (std::pow(cfg.T - a, cfg.alpha + 1.0) -
                       std::pow(cfg.T - b, cfg.alpha + 1.0)) /
                          (cfg.alpha + 1.0);
    acc += ga * i0 + (gb - ga) / (b - a) * i1;
    ga = gb;
  }
  return acc;
}

inline double example_kappa(const std::string& g_name, const ProblemConfig& cfg,
                            double t) {
  return gain_tail_integral([&](double tau) { return example_g(g_name, tau); }, cfg, t);
}

inline double value_closed_form_gain(const Position& p, const ProblemConfig& cfg,
                                     const std::function<double(double)>& g) {
  if (p.w0.size() != 1)
    throw std::invalid_argument("value_closed_form: scalar states only");
  const double aT = extension_a(p, cfg, cfg.T)[0];
  const double kappa = gain_tail_integral(g, cfg, p.t);
  const double s = std::fabs(aT) + kappa;
  return -s * s;
}

inline double value_closed_form_example(const Position& p, const ProblemConfig& cfg,
                                        const std::string& g_name) {
  return value_closed_form_gain(p, cfg,
                                [&](double tau) { return example_g(g_name, tau); });
}

// Closed-form order-alpha directional derivative of the benchmark value at p
// along f. Away from a vanishing terminal estimate this is dt + grad f with
//   dt   =  2 |g(t)| (T-t)^{alpha-1} S,
//   grad = -2 sgn(a(T)) S / (Gamma(alpha) (T-t)^{1-alpha}),
// S = |a(T)| + tail integral; at a(T) = 0 the |f| envelope branch applies.
struct GainDerivatives {
  double dt = 0.0;
  double grad = 0.0;
  double a_terminal = 0.0;
};

inline GainDerivatives example_ci_derivatives(const Position& p, const ProblemConfig& cfg,
                                              const std::string& g_name) {
  if (p.w0.size() != 1)
    throw std::invalid_argument("example_ci_derivatives: scalar states only");
  const double aT = extension_a(p, cfg, cfg.T)[0];
  const double S = std::fabs(aT) + example_kappa(g_name, cfg, p.t);
  const double span = cfg.T - p.t;
  GainDerivatives d;
  d.a_terminal = aT;
  d.dt = 2.0 * std::fabs(example_g(g_name, p.t)) * std::pow(span, cfg.alpha - 1.0) * S;
  const double sgn = aT > 0.0 ? 1.0 : (aT < 0.0 ? -1.0 : 0.0);
  d.grad = -2.0 * sgn * S / (gamma_fn(cfg.alpha) * std::pow(span, 1.0 - cfg.alpha));
  return d;
}

inline double example_dderiv(const Position& p, const ProblemConfig& cfg,
                             const std::string& g_name, double f,
                             double zero_tol = 1e-9) {
  const double aT = extension_a(p, cfg, cfg.T)[0];
  const double span = cfg.T - p.t;
  if (std::fabs(aT) <= zero_tol) {
    const double kappa = example_kappa(g_name, cfg, p.t);
    return 2.0 *
           (gamma_fn(cfg.alpha) * std::fabs(example_g(g_name, p.t)) - std::fabs(f)) /
           (gamma_fn(cfg.alpha) * std::pow(span, 1.0 - cfg.alpha)) * kappa;
  }
  const GainDerivatives d = example_ci_derivatives(p, cfg, g_name);
  return d.dt + d.grad * f;
}

}  // namespace fracfb
