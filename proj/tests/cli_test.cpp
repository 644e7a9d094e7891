#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "fracfb/config.hpp"

using namespace fracfb;
namespace fs = std::filesystem;

namespace {

const char* kHappyConfig = R"({
  "problem": "example-g",
  "g": "one",
  "alpha": 0.5,
  "T": 1.0,
  "control_grid": [-1, 0, 1],
  "starts": [{"t": 0.0, "w0": 0.5}, {"t": 0.0, "w0": -0.5}],
  "diameters": [0.0625, 0.015625],
  "steps": 256,
  "steps_per_piece": 4,
  "sensitivity_m": 128,
  "pieces": 3,
  "delta": 1e-3,
  "active_tol": 1e-2,
  "strategy": "example"
})";

struct CmdResult {
  int exit_code = -1;
  std::string output;
};

fs::path scratch_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() /
                 ("fracfb-cli-test-" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const fs::path& p, const std::string& body) {
  std::ofstream out(p);
  out << body;
}

// Runs the built binary through the shell, capturing stdout+stderr.
CmdResult run_cli(const std::string& args, const std::string& env_prefix = "") {
  static int counter = 0;
  const fs::path log = scratch_dir() / ("log-" + std::to_string(counter++) + ".txt");
  const std::string cmd =
      env_prefix + FRACFB_CLI_PATH " " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  CmdResult r;
  r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.output = slurp(log);
  return r;
}

// CSV body with the wall-time column removed, for determinism comparisons.
std::string strip_wall_time(const std::string& csv) {
  std::istringstream is(csv);
  std::ostringstream os;
  std::string line;
  while (std::getline(is, line)) {
    const auto cut = line.rfind(',');
    os << line.substr(0, cut) << '\n';
  }
  return os.str();
}

}  // namespace

TEST_CASE("config parses the full schema") {
  const RunConfig c = RunConfig::from_json(nlohmann::json::parse(kHappyConfig));
  CHECK(c.g == "one");
  CHECK(c.alpha == 0.5);
  CHECK(c.control_grid == std::vector<double>{-1.0, 0.0, 1.0});
  REQUIRE(c.starts.size() == 2);
  CHECK(c.starts[0].w0[0] == 0.5);
  CHECK(c.starts[1].w0[0] == -0.5);
  CHECK(c.diameters.size() == 2);
  CHECK(c.steps == 256);
  CHECK(c.strategy == "example");
  CHECK(c.problem_config().T == 1.0);
  CHECK(c.control_set().size() == 3);
  CHECK(c.build_strategy().name == "example-one");
}

TEST_CASE("config defaults and start histories") {
  const RunConfig c = RunConfig::from_json(nlohmann::json::parse(R"({
    "starts": [{"t": 0.25, "w0": [1.0], "step": 0.125, "caputo": [[0.3], [0.1]]}]
  })"));
  REQUIRE(c.starts.size() == 1);
  const Position& p = c.starts[0];
  CHECK(p.t == 0.25);
  REQUIRE(p.caputo.cells() == 2);
  CHECK(p.caputo.values[0][0] == 0.3);
  CHECK(p.caputo.values[1][0] == 0.1);
  CHECK(c.g == "one");
  CHECK(c.diameters.size() == 3);

  // An omitted starts list falls back to the origin.
  const RunConfig d = RunConfig::from_json(nlohmann::json::parse("{}"));
  REQUIRE(d.starts.size() == 1);
  CHECK(d.starts[0].t == 0.0);
  CHECK(d.starts[0].w0[0] == 0.0);
}

TEST_CASE("config rejects typos and bad ranges") {
  auto parse = [](const std::string& body) {
    return RunConfig::from_json(nlohmann::json::parse(body));
  };
  CHECK_THROWS_WITH(parse(R"({"alpa": 0.5})"),
                    Catch::Matchers::ContainsSubstring("unknown field 'alpa'"));
  CHECK_THROWS_WITH(parse(R"({"starts": [{"t": 0, "w0": 0, "weights": 1}]})"),
                    Catch::Matchers::ContainsSubstring("unknown field 'weights'"));
  CHECK_THROWS_WITH(parse(R"({"alpha": 1.5})"),
                    Catch::Matchers::ContainsSubstring("alpha out of (0,1)"));
  CHECK_THROWS_WITH(parse(R"({"g": "tan"})"),
                    Catch::Matchers::ContainsSubstring("expected one, cos, or poly"));
  CHECK_THROWS_WITH(parse(R"({"starts": [{"t": 1.0, "w0": 0}]})"),
                    Catch::Matchers::ContainsSubstring("below the horizon"));
  CHECK_THROWS_WITH(parse(R"({"starts": [{"t": 0.25, "w0": 0, "step": 0.1}]})"),
                    Catch::Matchers::ContainsSubstring("step without caputo"));
  CHECK_THROWS_WITH(
      parse(R"({"starts": [{"t": 0.25, "w0": 0, "step": 0.2, "caputo": [[0.1]]}]})"),
      Catch::Matchers::ContainsSubstring("tile [0, t]"));
  CHECK_THROWS_WITH(parse(R"({"strategy": "bang"})"),
                    Catch::Matchers::ContainsSubstring("expected example, smooth"));
  CHECK_THROWS_WITH(parse(R"({"diameters": [0.5, -0.1]})"),
                    Catch::Matchers::ContainsSubstring("must be positive"));
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("usage errors exit 64") {
  CHECK(run_cli("").exit_code == 64);
  CHECK(run_cli("frobnicate").exit_code == 64);
  CHECK(run_cli("simulate").exit_code == 64);  // missing --config
  const CmdResult help = run_cli("--help");
  CHECK(help.exit_code == 0);
  CHECK(help.output.find("simulate") != std::string::npos);
}

TEST_CASE("simulate writes re-readable artifacts") {
  const fs::path cfg = scratch_dir() / "happy.json";
  spit(cfg, kHappyConfig);
  const fs::path out = scratch_dir() / "nested" / "outdir";  // must be created

  const CmdResult r =
      run_cli("simulate --config " + cfg.string() + " --out " + out.string());
  INFO(r.output);
  REQUIRE(r.exit_code == 0);
  REQUIRE(fs::exists(out / "simulate.csv"));
  REQUIRE(fs::exists(out / "simulate.json"));

  const std::string csv = slurp(out / "simulate.csv");
  std::istringstream is(csv);
  std::string line;
  REQUIRE(std::getline(is, line));
  CHECK(line == "start_t,start_w0,diam,cost,rho,epsilon,k,wall_time_ms");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 4);  // 2 starts x 2 diameters, one row per run
  CHECK(csv.find(",-6.25,") != std::string::npos);

  const nlohmann::json j = nlohmann::json::parse(slurp(out / "simulate.json"));
  REQUIRE(j.at("reports").size() == 4);
  for (const auto& rep : j.at("reports")) {
    CHECK(rep.at("cost").get<double>() == Catch::Approx(-6.25).margin(1e-6));
    CHECK(rep.at("rho").get<double>() == -6.25);
    CHECK(rep.contains("start"));
  }
}

TEST_CASE("sweep emits the pinned column set") {
  const fs::path cfg = scratch_dir() / "happy2.json";
  spit(cfg, kHappyConfig);
  const fs::path out = scratch_dir() / "sweep_out";
  const CmdResult r =
      run_cli("sweep --config " + cfg.string() + " --out " + out.string() + " --quiet");
  INFO(r.output);
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.empty());  // --quiet suppresses the stdout report

  for (const char* name : {"sweep-0.csv", "sweep-1.csv"}) {
    const std::string csv = slurp(out / name);
    CHECK(csv.rfind("diam,cost,rho,epsilon,k,wall_time_ms\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 diameters
  }
  const nlohmann::json j = nlohmann::json::parse(slurp(out / "sweep.json"));
  REQUIRE(j.at("sweeps").size() == 2);
  const auto& first = j.at("sweeps")[0].at("reports");
  REQUIRE(first.size() == 2);
  CHECK(first[1].at("epsilon").get<double>() <= 0.05);
}

TEST_CASE("parallel fan-out is deterministic") {
  const fs::path cfg = scratch_dir() / "happy3.json";
  spit(cfg, kHappyConfig);
  const fs::path out1 = scratch_dir() / "threads1";
  const fs::path out2 = scratch_dir() / "threads4";
  REQUIRE(run_cli("simulate --quiet --config " + cfg.string() + " --out " + out1.string(),
                  "FRACFB_THREADS=1 ")
              .exit_code == 0);
  REQUIRE(run_cli("simulate --quiet --config " + cfg.string() + " --out " + out2.string(),
                  "FRACFB_THREADS=4 ")
              .exit_code == 0);
  CHECK(strip_wall_time(slurp(out1 / "simulate.csv")) ==
        strip_wall_time(slurp(out2 / "simulate.csv")));
}

TEST_CASE("dderiv prints formula, quotient, and gap") {
  const fs::path cfg = scratch_dir() / "happy4.json";
  spit(cfg, kHappyConfig);
  const fs::path out = scratch_dir() / "dd_out";
  const CmdResult r = run_cli("dderiv --config " + cfg.string() + " --f 0.0 --out " +
                              out.string());
  INFO(r.output);
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("formula=5") != std::string::npos);
  CHECK(r.output.find("fd=") != std::string::npos);

  const nlohmann::json j = nlohmann::json::parse(slurp(out / "dderiv.json"));
  REQUIRE(j.at("dderiv").size() == 2);  // one row per start
  for (const auto& row : j.at("dderiv")) {
    CHECK(row.at("formula").get<double>() == Catch::Approx(5.0).margin(5e-2));
    CHECK(row.at("gap").get<double>() <= 0.02 * (1.0 + 5.0));
  }
}

TEST_CASE("value prints agreeing candidates") {
  const fs::path cfg = scratch_dir() / "happy5.json";
  spit(cfg, kHappyConfig);
  const CmdResult r = run_cli("value --config " + cfg.string());
  INFO(r.output);
  REQUIRE(r.exit_code == 0);
  std::istringstream is(r.output);
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    CHECK(line.find("closed_form=-6.25") != std::string::npos);
    CHECK(line.find("brute_force=-6.25") != std::string::npos);
  }
  CHECK(rows == 2);
}

TEST_CASE("config errors exit 1") {
  const fs::path bad = scratch_dir() / "bad_alpha.json";
  spit(bad, R"({"alpha": 1.5})");
  const CmdResult r = run_cli("simulate --config " + bad.string());
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("alpha out of (0,1)") != std::string::npos);

  const fs::path typo = scratch_dir() / "typo.json";
  spit(typo, R"({"diametres": [0.1]})");
  CHECK(run_cli("sweep --config " + typo.string()).exit_code == 1);

  const fs::path garbled = scratch_dir() / "garbled.json";
  spit(garbled, "{not json");
  CHECK(run_cli("value --config " + garbled.string()).exit_code == 1);

  CHECK(run_cli("dderiv --config /does/not/exist.json").exit_code == 1);
}

TEST_CASE("induced acceptance failure exits 3") {
  const CmdResult r = run_cli("selftest --perturb-gamma 1.02");
  INFO(r.output);
  CHECK(r.exit_code == 3);
  CHECK(r.output.find("FAIL") != std::string::npos);
  CHECK(r.output.find("criterion-10") != std::string::npos);
}
