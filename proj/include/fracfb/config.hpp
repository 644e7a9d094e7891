#pragma once

#include <fstream>

#include <json.hpp>

#include "fracfb/feedback.hpp"

namespace fracfb {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                std::initializer_list<const char*> known,
                                const std::string& where) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) throw ConfigError(where + ": unknown field '" + item.key() + "'");
  }
}

inline Vec vec_from_json(const nlohmann::json& j, const std::string& where) {
  if (j.is_number()) {
    Vec v(1);
    v[0] = j.get<double>();
    return v;
  }
  if (j.is_array() && !j.empty()) {
    Vec v(Eigen::Index(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_number()) throw ConfigError(where + ": expected numbers");
      v[Eigen::Index(i)] = j[i].get<double>();
    }
    return v;
  }
  throw ConfigError(where + ": expected a number or a non-empty array");
}

}  // namespace detail

/*
 * Run configuration, one strict JSON document. Unknown fields are rejected so
 * typos surface instead of silently applying defaults.
 *
 * {
 *   "problem": "example-g", "g": "one", "alpha": 0.5, "T": 1.0,
 *   "control_grid": [-1, 0, 1],
 *   "starts": [{"t": 0, "w0": 0.5},
 *              {"t": 0.25, "w0": [1.0], "step": 0.125, "caputo": [[0.3], [0.1]]}],
 *   "diameters": [0.0625, 0.015625, 0.00390625],
 *   "steps": 256, "steps_per_piece": 4, "sensitivity_m": 256, "pieces": 4,
 *   "delta": 1e-3, "active_tol": 1e-2, "strategy": "example"
 * }
 */
struct RunConfig {
  std::string problem = "example-g";
  std::string g = "one";
  double alpha = 0.5;
  double T = 1.0;
  std::vector<double> control_grid{-1.0, 0.0, 1.0};
  std::vector<Position> starts;
  std::vector<double> diameters{1.0 / 16, 1.0 / 64, 1.0 / 256};
  int steps = 256;
  int steps_per_piece = 4;
  int sensitivity_m = 256;
  int pieces = 4;
  double delta = 1e-3;
  double active_tol = 1e-2;
  std::string strategy = "example";

  ProblemConfig problem_config() const { return {alpha, T}; }
  ControlSet control_set() const { return scalar_controls(control_grid); }
  Dynamics dynamics() const { return make_example_dynamics(g, alpha); }
  CostFn cost() const { return make_example_cost(); }

  Strategy build_strategy() const {
    const ProblemConfig cfg = problem_config();
    const ControlSet P = control_set();
    if (strategy == "example") return strategy_example(g, cfg, P);
    if (strategy == "smooth") {
      const std::string g_name = g;
      return strategy_smooth(
          [g_name, cfg](const Position& p) {
            Vec gr(1);
            gr[0] = example_ci_derivatives(p, cfg, g_name).grad;
            return gr;
          },
          cfg, dynamics(), P);
    }
    if (strategy == "envelope")
      return strategy_envelope(problem_config(), dynamics(), P, cost(),
                               constant_dirac_family(P), sensitivity_m, active_tol);
    throw ConfigError("strategy: expected example, smooth, or envelope");
  }

  void validate() const {
    if (problem != "example-g")
      throw ConfigError("problem: only 'example-g' is supported");
    if (g != "one" && g != "cos" && g != "poly")
      throw ConfigError("g: expected one, cos, or poly");
    try {
      problem_config().validate();
      control_set().validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (starts.empty()) throw ConfigError("starts: at least one start required");
    for (const Position& p : starts) {
      try {
        p.validate(problem_config());
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("starts: ") + e.what());
      }
      if (!(p.t < T)) throw ConfigError("starts: t must be below the horizon T");
    }
    for (double d : diameters)
      if (!(d > 0.0)) throw ConfigError("diameters: entries must be positive");
    if (diameters.empty()) throw ConfigError("diameters: at least one entry required");
    if (steps < 1 || steps_per_piece < 1 || sensitivity_m < 2 || pieces < 1)
      throw ConfigError("steps, steps_per_piece, sensitivity_m, pieces must be positive");
    if (!(delta > 0.0)) throw ConfigError("delta: must be positive");
    if (!(active_tol > 0.0)) throw ConfigError("active_tol: must be positive");
    if (strategy != "example" && strategy != "smooth" && strategy != "envelope")
      throw ConfigError("strategy: expected example, smooth, or envelope");
  }

  static RunConfig from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    detail::reject_unknown_keys(
        j,
        {"problem", "g", "alpha", "T", "control_grid", "starts", "diameters", "steps",
         "steps_per_piece", "sensitivity_m", "pieces", "delta", "active_tol", "strategy"},
        "config");
    RunConfig c;
    if (j.contains("problem")) c.problem = j["problem"].get<std::string>();
    if (j.contains("g")) c.g = j["g"].get<std::string>();
    if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
    if (j.contains("T")) c.T = j["T"].get<double>();
    if (j.contains("control_grid"))
      c.control_grid = j["control_grid"].get<std::vector<double>>();
    if (j.contains("diameters")) c.diameters = j["diameters"].get<std::vector<double>>();
    if (j.contains("steps")) c.steps = j["steps"].get<int>();
    if (j.contains("steps_per_piece")) c.steps_per_piece = j["steps_per_piece"].get<int>();
    if (j.contains("sensitivity_m")) c.sensitivity_m = j["sensitivity_m"].get<int>();
    if (j.contains("pieces")) c.pieces = j["pieces"].get<int>();
    if (j.contains("delta")) c.delta = j["delta"].get<double>();
    if (j.contains("active_tol")) c.active_tol = j["active_tol"].get<double>();
    if (j.contains("strategy")) c.strategy = j["strategy"].get<std::string>();

    if (j.contains("starts")) {
      if (!j["starts"].is_array()) throw ConfigError("starts: expected an array");
      for (const auto& s : j["starts"]) {
        detail::reject_unknown_keys(s, {"t", "w0", "step", "caputo"}, "starts");
        if (!s.contains("t") || !s.contains("w0"))
          throw ConfigError("starts: each entry needs t and w0");
        const double t = s["t"].get<double>();
        Position p = make_position(t, detail::vec_from_json(s["w0"], "starts.w0"));
        if (s.contains("caputo")) {
          if (!s.contains("step"))
            throw ConfigError("starts: caputo rows require a step");
          const double step = s["step"].get<double>();
          if (!(step > 0.0)) throw ConfigError("starts: step must be positive");
          std::vector<Vec> rows;
          for (const auto& row : s["caputo"])
            rows.push_back(detail::vec_from_json(row, "starts.caputo"));
          if (rows.empty()) throw ConfigError("starts: caputo must be non-empty");
          p.caputo = StepFn::uniform(0.0, step, rows);
          if (std::fabs(p.caputo.hi() - t) > 1e-9 * (1.0 + t))
            throw ConfigError("starts: caputo rows must tile [0, t]");
        } else if (s.contains("step")) {
          throw ConfigError("starts: step without caputo rows");
        }
        c.starts.push_back(std::move(p));
      }
    } else {
      Vec z = Vec::Zero(1);
      c.starts.push_back(make_position(0.0, z));
    }
    c.validate();
    return c;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    return from_json(j);
  }
};

}  // namespace fracfb
