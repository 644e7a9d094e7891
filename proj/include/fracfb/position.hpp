#pragma once

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <set>
#include <stdexcept>
#include <vector>

#include "fracfb/grid.hpp"

namespace fracfb {

struct ProblemConfig {
  double alpha = 0.5;  // fractional order, in (0, 1)
  double T = 1.0;      // horizon, > 0

  void validate() const {
    if (!(alpha > 0.0) || !(alpha < 1.0))
      throw std::invalid_argument("ProblemConfig: alpha out of (0,1)");
    if (!(T > 0.0)) throw std::invalid_argument("ProblemConfig: T must be positive");
  }
};

/*
 * A position is the pair (t, w) where w is the state trajectory observed so
 * far. It is stored by the data that determines it exactly under the
 * fractional dynamics: the initial state w0 and the piecewise-constant
 * samples of the Caputo derivative of w on [0, t]. The trajectory itself is
 * recovered on demand:
 *
 *   w(tau) = w0 + (1/Gamma(alpha)) int_0^tau caputo(xi) (tau-xi)^{alpha-1} dxi.
 */
struct Position {
  double t = 0.0;
  Vec w0;
  StepFn caputo;  // support [0, t]; empty iff t == 0

  void validate(const ProblemConfig& cfg) const {
    if (!(t >= 0.0) || t > cfg.T) throw std::invalid_argument("Position: t out of [0,T]");
    if (w0.size() == 0) throw std::invalid_argument("Position: empty state");
    if (caputo.lo() != 0.0) throw std::invalid_argument("Position: history must start at 0");
    if (t == 0.0) {
      if (!caputo.empty()) throw std::invalid_argument("Position: nonempty history at t=0");
    } else {
      if (caputo.empty() || std::fabs(caputo.hi() - t) > 1e-12 * (1.0 + t))
        throw std::invalid_argument("Position: history must cover [0,t]");
      if (caputo.dim() != w0.size())
        throw std::invalid_argument("Position: history dimension mismatch");
    }
  }
};

// Position with identically zero Caputo derivative on [0, t] (constant state).
inline Position make_position(double t, Vec w0) {
  Position p;
  p.t = t;
  p.w0 = std::move(w0);
  if (t > 0.0)
    p.caputo = StepFn({0.0, t}, {Vec::Zero(p.w0.size())});
  return p;
}

inline Position make_position(double t, double w0_scalar) {
  Vec w0(1);
  w0 << w0_scalar;
  return make_position(t, std::move(w0));
}

// State of the observed trajectory at tau in [0, t].
inline Vec reconstruct(const Position& p, double alpha, double tau) {
  if (tau < 0.0 || tau > p.t + 1e-12 * (1.0 + p.t))
    throw std::out_of_range("reconstruct: tau outside [0, t]");
  if (p.caputo.empty()) return p.w0;
  return p.w0 + rl_integral(p.caputo, alpha, std::min(tau, p.t));
}

// Extension of the observed trajectory by zero Caputo derivative beyond t:
// the "coasting" continuation a(tau | t, w), defined on all of [0, T].
inline Vec extension_a(const Position& p, const ProblemConfig& cfg, double tau) {
  if (tau < 0.0 || tau > cfg.T + 1e-12 * (1.0 + cfg.T))
    throw std::out_of_range("extension_a: tau outside [0, T]");
  if (tau <= p.t || p.caputo.empty()) return reconstruct(p, cfg.alpha, std::min(tau, p.t));
  return p.w0 + rl_integral(p.caputo, cfg.alpha, tau);
}

// Extension with constant Caputo derivative f beyond t:
//   x^{(f)}(tau) = a(tau | t, w) + (tau - t)^alpha f / Gamma(alpha + 1).
inline Vec extension_xf(const Position& p, const ProblemConfig& cfg, const Vec& f,
                        double tau) {
  Vec out = extension_a(p, cfg, tau);
  if (tau > p.t)
    out += std::pow(tau - p.t, cfg.alpha) / gamma_fn(cfg.alpha + 1.0) * f;
  return out;
}

// The position reached at t + delta along the constant-derivative extension:
// history extended by a single cell [t, t+delta] with value f. Exact.
inline Position shift_position(const Position& p, const ProblemConfig& cfg, const Vec& f,
                               double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("shift_position: delta must be positive");
  if (p.t + delta > cfg.T + 1e-12 * (1.0 + cfg.T))
    throw std::invalid_argument("shift_position: shift exceeds horizon");
  Position out = p;
  out.t = p.t + delta;
  if (out.caputo.empty()) out.caputo.bounds.assign(1, 0.0);
  out.caputo.append_cell(out.t, f);
  return out;
}

/*
 * Metric on positions:
 *
 *   dist = |t - t'| + max_tau || w(min(tau, t)) - w'(min(tau, t')) ||
 *
 * with the max evaluated on the merged cell-boundary grid of both histories
 * (past the shorter history each trajectory is frozen at its endpoint).
 */
inline double dist(const Position& p, const Position& q, double alpha) {
  if (p.w0.size() != q.w0.size())
    throw std::invalid_argument("dist: dimension mismatch");
  std::set<double> taus{0.0, p.t, q.t};
  for (double b : p.caputo.bounds) taus.insert(b);
  for (double b : q.caputo.bounds) taus.insert(b);
  double m = 0.0;
  for (double tau : taus) {
    const Vec wp = reconstruct(p, alpha, std::min(tau, p.t));
    const Vec wq = reconstruct(q, alpha, std::min(tau, q.t));
    m = std::max(m, (wp - wq).norm());
  }
  return std::fabs(p.t - q.t) + m;
}

/*
 * JSON form of a position together with its problem parameters:
 *
 *   { "alpha": 0.5, "T": 1.0, "t": 0.25, "w0": [0.5],
 *     "step": 0.0625, "caputo": [[c_1], [c_2], [c_3], [c_4]] }
 *
 * caputo holds one row per uniform cell of width `step` covering [0, t].
 * At t == 0, step and caputo are omitted.
 */
struct PositionDoc {
  ProblemConfig cfg;
  Position pos;
};

inline void to_json(nlohmann::json& j, const PositionDoc& doc) {
  j = nlohmann::json{{"alpha", doc.cfg.alpha},
                     {"T", doc.cfg.T},
                     {"t", doc.pos.t},
                     {"w0", std::vector<double>(doc.pos.w0.begin(), doc.pos.w0.end())}};
  if (doc.pos.t > 0.0) {
    const auto& h = doc.pos.caputo;
    const double step = (h.hi() - h.lo()) / double(h.cells());
    for (std::size_t k = 0; k < h.bounds.size(); ++k)
      if (std::fabs(h.bounds[k] - (h.lo() + step * double(k))) > 1e-9 * (1.0 + h.hi()))
        throw std::invalid_argument("position: only uniform histories serialize to JSON");
    j["step"] = step;
    nlohmann::json rows = nlohmann::json::array();
    for (const Vec& v : h.values)
      rows.push_back(std::vector<double>(v.begin(), v.end()));
    j["caputo"] = rows;
  }
}

inline void from_json(const nlohmann::json& j, PositionDoc& doc) {
  for (const auto& [key, _] : j.items())
    if (key != "alpha" && key != "T" && key != "t" && key != "w0" && key != "step" &&
        key != "caputo")
      throw std::invalid_argument("position: unknown field '" + key + "'");
  doc.cfg.alpha = j.at("alpha").get<double>();
  doc.cfg.T = j.at("T").get<double>();
  doc.cfg.validate();
  doc.pos.t = j.at("t").get<double>();
  const auto w0 = j.at("w0").get<std::vector<double>>();
  doc.pos.w0 = Eigen::Map<const Vec>(w0.data(), Eigen::Index(w0.size()));
  doc.pos.caputo = StepFn();
  if (doc.pos.t > 0.0) {
    const double step = j.at("step").get<double>();
    if (!(step > 0.0)) throw std::invalid_argument("position: step must be positive");
    const auto rows = j.at("caputo").get<std::vector<std::vector<double>>>();
    const double k = doc.pos.t / step;
    if (std::fabs(k - std::round(k)) > 1e-9 || rows.size() != std::size_t(std::round(k)))
      throw std::invalid_argument("position: caputo rows must tile [0,t] with width step");
    std::vector<Vec> vals;
    vals.reserve(rows.size());
    for (const auto& r : rows) {
      if (r.size() != w0.size())
        throw std::invalid_argument("position: caputo row dimension mismatch");
      vals.push_back(Eigen::Map<const Vec>(r.data(), Eigen::Index(r.size())));
    }
    doc.pos.caputo = StepFn::uniform(0.0, step, std::move(vals));
    doc.pos.caputo.bounds.back() = doc.pos.t;
  }
  doc.pos.validate(doc.cfg);
}

}  // namespace fracfb
