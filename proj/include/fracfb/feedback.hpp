#pragma once

#include <chrono>
#include <cstdio>
#include <sstream>

#include "fracfb/value_envelope.hpp"

namespace fracfb {

namespace detail {

inline std::string fmt_g12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Index of the control point nearest to a scalar target, lowest index on ties.
inline std::size_t nearest_control(const ControlSet& P, double target) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < P.size(); ++k) {
    if (P.points[k].size() != 1)
      throw std::invalid_argument("nearest_control: scalar control points expected");
    const double d = std::fabs(P.points[k][0] - target);
    if (d < bd) {
      bd = d;
      best = k;
    }
  }
  return best;
}

}  // namespace detail

// Sampling instants tau_1 = t < tau_2 < ... < tau_{k+1} = T.
struct Partition {
  std::vector<double> times;

  void validate() const {
    if (times.size() < 2) throw std::invalid_argument("Partition: needs >= 2 instants");
    for (std::size_t i = 1; i < times.size(); ++i)
      if (!(times[i] > times[i - 1]))
        throw std::invalid_argument("Partition: instants must increase strictly");
  }
  std::size_t pieces() const { return times.size() - 1; }
  double diam() const {
    double d = 0.0;
    for (std::size_t i = 1; i < times.size(); ++i) d = std::max(d, times[i] - times[i - 1]);
    return d;
  }
  static Partition uniform(double lo, double hi, std::size_t k) {
    if (k < 1 || !(hi > lo)) throw std::invalid_argument("Partition: bad interval");
    Partition d;
    for (std::size_t i = 0; i <= k; ++i)
      d.times.push_back(lo + (hi - lo) * double(i) / double(k));
    d.times.back() = hi;
    return d;
  }
  // Uniform partition with the smallest piece count whose diameter <= diam.
  static Partition with_diameter(double lo, double hi, double diam) {
    if (!(diam > 0.0)) throw std::invalid_argument("Partition: diameter must be positive");
    const auto k = std::size_t(std::ceil((hi - lo) / diam - 1e-12));
    return uniform(lo, hi, std::max<std::size_t>(k, 1));
  }
};

// A positional strategy: maps the current position to a control-grid index.
struct Strategy {
  std::string name;
  std::function<std::size_t(const Position&)> pick;
};

struct SimReport {
  std::string strategy;
  std::vector<double> partition;
  std::vector<std::size_t> controls;  // control index per piece
  std::vector<Vec> control_values;
  Motion motion;  // nodes over [t, T], Caputo record over [0, T]
  double cost = 0.0;
  std::optional<double> rho;      // reference value when available
  std::optional<double> epsilon;  // cost - rho
  std::size_t u_final = 0;        // control recorded at the closing instant
  double wall_ms = 0.0;
};

// Recursive sampled feedback: at each instant of the partition, evaluate the
// strategy on the position accumulated so far, hold that control until the
// next instant, and advance the solver. The control at the closing instant is
// the configured u_final; it never affects the cost.
inline SimReport run_feedback(const Position& p, const ProblemConfig& cfg,
                              const Dynamics& dyn, const ControlSet& P, const CostFn& cost,
                              const Strategy& U, const Partition& delta,
                              int steps_per_piece, std::size_t u_final = 0,
                              std::optional<double> rho = std::nullopt,
                              const VolterraOptions& opt = {}) {
  delta.validate();
  const double tol = 1e-12 * (1.0 + cfg.T);
  if (std::fabs(delta.times.front() - p.t) > tol ||
      std::fabs(delta.times.back() - cfg.T) > tol)
    throw std::invalid_argument("run_feedback: partition must span [t, T]");
  if (u_final >= P.size())
    throw std::invalid_argument("run_feedback: u_final outside the control grid");
  if (!U.pick) throw std::invalid_argument("run_feedback: empty strategy");

  const auto t0 = std::chrono::steady_clock::now();
  SimReport r;
  r.strategy = U.name;
  r.partition = delta.times;
  r.u_final = u_final;

  Position pos = p;
  for (std::size_t j = 0; j + 1 < delta.times.size(); ++j) {
    const std::size_t k = U.pick(pos);
    if (k >= P.size())
      throw std::invalid_argument("run_feedback: strategy left the control grid");
    r.controls.push_back(k);
    r.control_values.push_back(P.points[k]);

    const ProblemConfig piece{cfg.alpha, delta.times[j + 1]};
    const Motion m = solve_motion(
        pos, piece, dyn, P, PiecewiseControl::constant(pos.t, piece.T, int(k)),
        steps_per_piece, opt);
    if (j == 0) {
      r.motion = m;
    } else {
      r.motion.nodes.insert(r.motion.nodes.end(), m.nodes.begin() + 1, m.nodes.end());
      r.motion.x.insert(r.motion.x.end(), m.x.begin() + 1, m.x.end());
      r.motion.caputo = m.caputo;
    }
    pos = m.position_at(piece.T);
  }
  r.cost = cost.sigma(r.motion.terminal());
  r.rho = rho;
  if (rho) r.epsilon = r.cost - *rho;
  r.wall_ms = std::chrono::duration<double, std::milli>(
                  std::chrono::steady_clock::now() - t0)
                  .count();
  return r;
}

inline bool epsilon_check(const SimReport& r, double rho, double eps) {
  if (!std::isfinite(rho)) throw std::invalid_argument("epsilon_check: rho not finite");
  return r.cost <= rho + eps;
}

/*
 * Strategy driven by the sign of the terminal estimate a(T | t, w) for the
 * scalar gain dynamics (^C D^alpha x) = Gamma(alpha) g(tau) u, |u| <= 1:
 * sgn(g(t)) when the estimate is positive, -sgn(g(t)) when negative, +1 on
 * the (measure-zero) zero branch, mapped to the nearest control point.
 */
inline Strategy strategy_terminal_sign(std::function<double(double)> g,
                                       const ProblemConfig& cfg, const ControlSet& P,
                                       double zero_tol = 1e-9) {
  Strategy U;
  U.name = "terminal-sign";
  U.pick = [g = std::move(g), cfg, P, zero_tol](const Position& p) -> std::size_t {
    const double aT = extension_a(p, cfg, cfg.T)[0];
    const double band = zero_tol * (1.0 + p.w0.norm());
    double target = 1.0;
    if (aT > band)
      target = detail::sgn(g(p.t));
    else if (aT < -band)
      target = -detail::sgn(g(p.t));
    return detail::nearest_control(P, target);
  };
  return U;
}

inline Strategy strategy_example(const std::string& g_name, const ProblemConfig& cfg,
                                 const ControlSet& P, double zero_tol = 1e-9) {
  Strategy U = strategy_terminal_sign(
      [g_name](double tau) { return example_g(g_name, tau); }, cfg, P, zero_tol);
  U.name = "example-" + g_name;
  return U;
}

// Strategy from a smooth value candidate: minimize <grad(p), f(t, w(t), u)>
// over the control grid, lowest index on ties. The caller supplies the
// order-alpha gradient, e.g. a closed form valid away from kinks.
inline Strategy strategy_smooth(std::function<Vec(const Position&)> grad,
                                const ProblemConfig& cfg, const Dynamics& dyn,
                                const ControlSet& P) {
  Strategy U;
  U.name = "smooth-gradient";
  U.pick = [grad = std::move(grad), cfg, dyn, P](const Position& p) -> std::size_t {
    const Vec wt = reconstruct(p, cfg.alpha, p.t);
    const Vec gr = grad(p);
    return std::size_t(hamiltonian(dyn, P, p.t, wt, gr).second);
  };
  return U;
}

// Strategy from the envelope representation: minimize the directional
// derivative of the family value along f(t, w(t), u) over the control grid,
// lowest index on ties.
inline Strategy strategy_envelope(const ProblemConfig& cfg, const Dynamics& dyn,
                                  const ControlSet& P, const CostFn& cost,
                                  const CandidateFamily& family, int m,
                                  double tol_scale = 1e-2) {
  Strategy U;
  U.name = "envelope";
  U.pick = [cfg, dyn, P, cost, family, m, tol_scale](const Position& p) -> std::size_t {
    const FamilyEval ev = evaluate_family(p, cfg, dyn, P, cost, family, m, tol_scale);
    const Vec wt = reconstruct(p, cfg.alpha, p.t);
    std::size_t arg = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < P.size(); ++k) {
      const Vec f = dyn.f(p.t, wt, P.points[k]);
      double dd = std::numeric_limits<double>::infinity();
      for (const PsiDerivatives& d : ev.active_derivs)
        dd = std::min(dd, d.dt + d.grad.dot(f));
      if (dd < best) {
        best = dd;
        arg = k;
      }
    }
    return arg;
  };
  return U;
}

// Uniform-partition sweep over decreasing diameters; each report carries the
// achieved epsilon against the supplied reference value.
inline std::vector<SimReport> sweep_partitions(const Position& p, const ProblemConfig& cfg,
                                               const Dynamics& dyn, const ControlSet& P,
                                               const CostFn& cost, const Strategy& U,
                                               const std::vector<double>& diam_list,
                                               int steps_per_piece,
                                               std::optional<double> rho = std::nullopt,
                                               const VolterraOptions& opt = {}) {
  if (diam_list.empty()) throw std::invalid_argument("sweep_partitions: empty diameters");
  for (std::size_t i = 0; i < diam_list.size(); ++i) {
    if (!(diam_list[i] > 0.0))
      throw std::invalid_argument("sweep_partitions: diameters must be positive");
    if (i > 0 && !(diam_list[i] < diam_list[i - 1]))
      throw std::invalid_argument("sweep_partitions: diameters must decrease");
  }
  std::vector<SimReport> out;
  for (double d : diam_list)
    out.push_back(run_feedback(p, cfg, dyn, P, cost, U,
                               Partition::with_diameter(p.t, cfg.T, d), steps_per_piece,
                               0, rho, opt));
  return out;
}

inline nlohmann::json sim_report_to_json(const SimReport& r) {
  nlohmann::json j;
  j["strategy"] = r.strategy;
  j["partition"] = r.partition;
  j["controls"] = r.controls;
  nlohmann::json vals = nlohmann::json::array();
  for (const Vec& v : r.control_values)
    vals.push_back(std::vector<double>(v.data(), v.data() + v.size()));
  j["control_values"] = std::move(vals);
  const Vec& xT = r.motion.terminal();
  j["terminal_state"] = std::vector<double>(xT.data(), xT.data() + xT.size());
  j["cost"] = r.cost;
  if (r.rho) j["rho"] = *r.rho;
  if (r.epsilon) j["epsilon"] = *r.epsilon;
  j["u_final"] = r.u_final;
  j["wall_time_ms"] = r.wall_ms;
  return j;
}

// CSV rows for a sweep: '.' decimal, 12 significant digits, one row per run.
inline std::string sweep_to_csv(const std::vector<SimReport>& reports) {
  std::ostringstream os;
  os << "diam,cost,rho,epsilon,k,wall_time_ms\n";
  for (const SimReport& r : reports) {
    Partition d;
    d.times = r.partition;
    os << detail::fmt_g12(d.diam()) << ',' << detail::fmt_g12(r.cost) << ','
       << (r.rho ? detail::fmt_g12(*r.rho) : "") << ','
       << (r.epsilon ? detail::fmt_g12(*r.epsilon) : "") << ',' << r.controls.size()
       << ',' << detail::fmt_g12(r.wall_ms) << '\n';
  }
  return os.str();
}

}  // namespace fracfb
