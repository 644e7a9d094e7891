// Command-line front end: feedback simulations, partition sweeps, directional
// derivatives, value candidates, and the acceptance self-test.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "fracfb/acceptance.hpp"
#include "fracfb/config.hpp"

namespace {

using namespace fracfb;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitSolver = 2;
constexpr int kExitAcceptance = 3;
constexpr int kExitUsage = 64;

struct GlobalOpts {
  std::string config_path;
  std::string out_dir;
  int steps = 0;       // > 0 overrides config
  double delta = 0.0;  // > 0 overrides config
  bool quiet = false;
};

std::size_t thread_cap(std::size_t tasks) {
  std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FRACFB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) cap = std::size_t(v);
  }
  return std::min(cap, std::max<std::size_t>(tasks, 1));
}

// Runs fn(0..n-1) on up to FRACFB_THREADS workers; results are indexed, so
// output ordering stays deterministic. The first exception is rethrown.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = thread_cap(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mx;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::scoped_lock lk(err_mx);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

void write_file(const std::string& dir, const std::string& name,
                const std::string& body) {
  if (dir.empty()) return;
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / name);
  if (!out) throw std::runtime_error("cannot write " + (fs::path(dir) / name).string());
  out << body;
}

RunConfig load_config(const GlobalOpts& g) {
  RunConfig c = RunConfig::load(g.config_path);
  if (g.steps > 0) c.steps = g.steps;
  if (g.delta > 0.0) c.delta = g.delta;
  return c;
}

std::string start_label(const Position& p) {
  std::ostringstream os;
  os << "t=" << detail::fmt_g12(p.t) << " w0=" << detail::fmt_g12(p.w0[0]);
  return os.str();
}

nlohmann::json start_json(const Position& p) {
  nlohmann::json j;
  j["t"] = p.t;
  j["w0"] = std::vector<double>(p.w0.data(), p.w0.data() + p.w0.size());
  return j;
}

int cmd_simulate(const GlobalOpts& g) {
  const RunConfig c = load_config(g);
  const ProblemConfig cfg = c.problem_config();
  const ControlSet P = c.control_set();
  const Dynamics dyn = c.dynamics();
  const CostFn cost = c.cost();
  const Strategy U = c.build_strategy();

  struct Task {
    std::size_t start;
    double diam;
  };
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < c.starts.size(); ++s)
    for (double d : c.diameters) tasks.push_back({s, d});

  std::vector<double> rho(c.starts.size());
  for (std::size_t s = 0; s < c.starts.size(); ++s)
    rho[s] = value_closed_form_example(c.starts[s], cfg, c.g);

  std::vector<SimReport> reports(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) {
    const Task& t = tasks[i];
    reports[i] = run_feedback(c.starts[t.start], cfg, dyn, P, cost, U,
                              Partition::with_diameter(c.starts[t.start].t, cfg.T, t.diam),
                              c.steps_per_piece, 0, rho[t.start]);
  });

  std::ostringstream csv;
  csv << "start_t,start_w0,diam,cost,rho,epsilon,k,wall_time_ms\n";
  nlohmann::json out_json;
  out_json["reports"] = nlohmann::json::array();
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Position& p = c.starts[tasks[i].start];
    csv << detail::fmt_g12(p.t) << ',' << detail::fmt_g12(p.w0[0]) << ','
        << detail::fmt_g12(tasks[i].diam) << ',' << detail::fmt_g12(reports[i].cost)
        << ',' << detail::fmt_g12(*reports[i].rho) << ','
        << detail::fmt_g12(*reports[i].epsilon) << ',' << reports[i].controls.size()
        << ',' << detail::fmt_g12(reports[i].wall_ms) << '\n';
    nlohmann::json r = sim_report_to_json(reports[i]);
    r["start"] = start_json(p);
    out_json["reports"].push_back(std::move(r));
  }
  write_file(g.out_dir, "simulate.csv", csv.str());
  write_file(g.out_dir, "simulate.json", out_json.dump(2) + "\n");
  if (!g.quiet) std::cout << csv.str();
  return kExitOk;
}

int cmd_sweep(const GlobalOpts& g) {
  const RunConfig c = load_config(g);
  const ProblemConfig cfg = c.problem_config();
  const ControlSet P = c.control_set();
  const Dynamics dyn = c.dynamics();
  const CostFn cost = c.cost();
  const Strategy U = c.build_strategy();

  std::vector<std::vector<SimReport>> per_start(c.starts.size());
  parallel_for(c.starts.size(), [&](std::size_t s) {
    const double rho = value_closed_form_example(c.starts[s], cfg, c.g);
    per_start[s] = sweep_partitions(c.starts[s], cfg, dyn, P, cost, U, c.diameters,
                                    c.steps_per_piece, rho);
  });

  nlohmann::json out_json;
  out_json["sweeps"] = nlohmann::json::array();
  for (std::size_t s = 0; s < c.starts.size(); ++s) {
    const std::string csv = sweep_to_csv(per_start[s]);
    write_file(g.out_dir, "sweep-" + std::to_string(s) + ".csv", csv);
    nlohmann::json entry;
    entry["start"] = start_json(c.starts[s]);
    entry["reports"] = nlohmann::json::array();
    for (const SimReport& r : per_start[s])
      entry["reports"].push_back(sim_report_to_json(r));
    out_json["sweeps"].push_back(std::move(entry));
    if (!g.quiet) {
      std::cout << "# start " << start_label(c.starts[s]) << "\n" << csv;
    }
  }
  write_file(g.out_dir, "sweep.json", out_json.dump(2) + "\n");
  return kExitOk;
}

int cmd_dderiv(const GlobalOpts& g, std::vector<double> directions) {
  const RunConfig c = load_config(g);
  const ProblemConfig cfg = c.problem_config();
  const ControlSet P = c.control_set();
  const Dynamics dyn = c.dynamics();
  const CostFn cost = c.cost();
  const CandidateFamily fam = constant_dirac_family(P);
  if (directions.empty()) directions.push_back(0.0);

  for (const Position& p : c.starts)
    if (!(p.t < cfg.T)) throw ConfigError("dderiv: start at or past the horizon");

  nlohmann::json rows = nlohmann::json::array();
  for (const Position& p : c.starts) {
    for (double fv : directions) {
      Vec f(1);
      f[0] = fv;
      const double formula =
          dderiv_value(p, cfg, dyn, P, cost, fam, f, c.sensitivity_m, c.active_tol);

      const double delta_abs = c.delta * (cfg.T - p.t);
      const Position moved = shift_position(p, cfg, f, delta_abs);
      double base = std::numeric_limits<double>::infinity();
      double shifted = std::numeric_limits<double>::infinity();
      for (const RelaxedControl& nu : fam.members) {
        base = std::min(base, psi(p, cfg, dyn, P, cost, nu, c.steps));
        shifted = std::min(shifted, psi(moved, cfg, dyn, P, cost, nu, c.steps));
      }
      const double fd = (shifted - base) / delta_abs;
      const double gap = std::fabs(formula - fd);
      if (!g.quiet)
        std::cout << start_label(p) << " f=" << detail::fmt_g12(fv)
                  << " formula=" << detail::fmt_g12(formula)
                  << " fd=" << detail::fmt_g12(fd) << " gap=" << detail::fmt_g12(gap)
                  << "\n";
      nlohmann::json row;
      row["start"] = start_json(p);
      row["f"] = fv;
      row["formula"] = formula;
      row["fd"] = fd;
      row["gap"] = gap;
      rows.push_back(std::move(row));
    }
  }
  nlohmann::json out_json;
  out_json["dderiv"] = std::move(rows);
  write_file(g.out_dir, "dderiv.json", out_json.dump(2) + "\n");
  return kExitOk;
}

int cmd_value(const GlobalOpts& g) {
  const RunConfig c = load_config(g);
  const ProblemConfig cfg = c.problem_config();
  const ControlSet P = c.control_set();
  const Dynamics dyn = c.dynamics();
  const CostFn cost = c.cost();
  const CandidateFamily fam = constant_dirac_family(P);

  nlohmann::json rows = nlohmann::json::array();
  for (const Position& p : c.starts) {
    if (!(p.t < cfg.T)) throw ConfigError("value: start at or past the horizon");
    const double closed = value_closed_form_example(p, cfg, c.g);
    double family_min = std::numeric_limits<double>::infinity();
    for (const RelaxedControl& nu : fam.members)
      family_min = std::min(family_min, psi(p, cfg, dyn, P, cost, nu, c.steps));
    const double brute = value_bruteforce(p, cfg, dyn, P, cost, c.pieces, c.steps);
    if (!g.quiet)
      std::cout << start_label(p) << " closed_form=" << detail::fmt_g12(closed)
                << " family_min=" << detail::fmt_g12(family_min)
                << " brute_force=" << detail::fmt_g12(brute) << "\n";
    nlohmann::json row;
    row["start"] = start_json(p);
    row["closed_form"] = closed;
    row["family_min"] = family_min;
    row["brute_force"] = brute;
    rows.push_back(std::move(row));
  }
  nlohmann::json out_json;
  out_json["value"] = std::move(rows);
  write_file(g.out_dir, "value.json", out_json.dump(2) + "\n");
  return kExitOk;
}

int cmd_selftest(double perturb_gamma) {
  if (perturb_gamma != 1.0) fracfb::detail::gamma_scale = perturb_gamma;
  return acceptance::run_and_report(std::cout) == 0 ? kExitOk : kExitAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensitivity analysis and feedback synthesis for finite-horizon "
               "optimal control of Caputo fractional systems"};
  app.fallthrough();
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "JSON configuration path");
  app.add_option("--out", g.out_dir, "output directory (created if missing)");
  app.add_option("--steps", g.steps, "override solver steps from the config");
  app.add_option("--delta", g.delta, "override the finite-difference probe scale");
  app.add_flag("--quiet", g.quiet, "suppress stdout reports");

  CLI::App* sim = app.add_subcommand(
      "simulate", "feedback runs for every (start, diameter) pair");
  CLI::App* sweep = app.add_subcommand(
      "sweep", "partition sweeps with the optimality gap per diameter");
  CLI::App* dd = app.add_subcommand(
      "dderiv", "directional derivative of the value: formula vs finite difference");
  std::vector<double> directions;
  dd->add_option("--f", directions, "direction components, one scalar per case");
  CLI::App* val = app.add_subcommand(
      "value", "value candidates: closed form, family minimum, brute force");
  CLI::App* self = app.add_subcommand("selftest", "run the acceptance suite");
  double perturb_gamma = 1.0;
  self->add_option("--perturb-gamma", perturb_gamma, "test hook: scale Gamma(x)")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // help request
    app.exit(e);
    return kExitUsage;
  }

  if (self->parsed()) return cmd_selftest(perturb_gamma);

  if (g.config_path.empty()) {
    std::cerr << "error: --config is required for this subcommand\n"
              << app.help() << std::flush;
    return kExitUsage;
  }

  try {
    if (sim->parsed()) return cmd_simulate(g);
    if (sweep->parsed()) return cmd_sweep(g);
    if (dd->parsed()) return cmd_dderiv(g, directions);
    if (val->parsed()) return cmd_value(g);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  }
  return kExitUsage;
}
