#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ccmpc/config.hpp"
#include "ccmpc/records.hpp"

using namespace ccmpc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ccmpc_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(CCMPC_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("default configuration values") {
  const RunConfig cfg = parse_config("");
  const MpcConfig& mpc = cfg.episode.mpc;
  CHECK(mpc.horizon == 10);
  CHECK(mpc.dt == 0.025);
  CHECK(mpc.Q_diag(idx::kPos + 2) == 500);
  CHECK(mpc.Q_diag(idx::kVel) == 20);
  CHECK(mpc.Q_diag(idx::kVel + 1) == 5);
  CHECK(mpc.R_diag(0) == 1e-6);
  CHECK(cfg.episode.gait.stepping_frequency == 2.5);
  CHECK(cfg.episode.footholds.foot_height == 0.08);
  CHECK(cfg.uncertainty.sigma_mass == 15.0);
  CHECK(cfg.uncertainty.sigma_contact(0) == 0.36);
}

TEST_CASE("config parsing and overrides") {
  const RunConfig cfg = parse_config(R"(
mpc:
  horizon: 8
  mode: hmpc
uncertainty:
  sigma_mass: 4
gait:
  name: stand
terrain:
  planks:
    - [0.4, 0.7, 0.02]
episode:
  payload_mass: 3.5
  seed: 17
montecarlo:
  modes: [ccmpc, lmpc]
)");
  CHECK(cfg.episode.mpc.horizon == 8);
  CHECK(cfg.episode.mpc.mode == ControllerMode::HMPC);
  CHECK(cfg.uncertainty.sigma_mass == 4.0);
  CHECK(cfg.episode.gait.duty_factor == 1.0);
  REQUIRE(cfg.episode.terrain.planks.size() == 1);
  CHECK(cfg.episode.terrain.planks[0].height == 0.02);
  CHECK(cfg.episode.payload_mass == 3.5);
  CHECK(cfg.episode.seed == 17);
  CHECK(cfg.montecarlo.modes.size() == 2);
  CHECK(cfg.resolved_episode().disturbance.sigma_delta(pidx::kMass) == doctest::Approx(4.0));
}

TEST_CASE("config errors name the key and line") {
  try {
    parse_config("mpc:\n  horizon: 10\n  horizn: 3\n");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "mpc.horizn");
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("horizn") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("bogus:\n  a: 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("mpc:\n  horizon: ten\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("mpc:\n  mode: mpc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("mpc: [1, 2\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/ccmpc.yaml"), ConfigError);
}

TEST_CASE("canonical yaml round trips with a stable hash") {
  const RunConfig a = parse_config("mpc:\n  epsilon: 0.9\nepisode:\n  payload_mass: 2.25\n");
  const std::string text = to_yaml(a);
  const RunConfig b = parse_config(text);
  CHECK(to_yaml(b) == text);
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) != config_hash(parse_config("")));
  CHECK(hash_hex(0xabcULL) == "0000000000000abc");
}

TEST_CASE("record formatting") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(2.0) == "2");
  const SolveTimeStats s = solve_time_stats({5, 1, 3, 2, 4});
  CHECK(s.min_us == 1);
  CHECK(s.median_us == 3);
  CHECK(s.max_us == 5);

  EpisodeRecord rec;
  rec.seed = 42;
  rec.gait = "trot";
  rec.metrics.success = true;
  std::ostringstream header, row;
  write_episode_header(header);
  write_episode_record(row, "abc", rec);
  const auto columns = [](const std::string& line) { return std::count(line.begin(), line.end(), ','); };
  CHECK(columns(header.str()) == columns(row.str()));
  CHECK(header.str().rfind("schema_version,", 0) == 0);
  CHECK(row.str().find(",42,") != std::string::npos);
}

TEST_CASE("run exits by outcome") {
  const fs::path dir = scratch("run");
  CHECK(cli("run --gait stand --out " + (dir / "stand").string(), dir / "stand.log") == 0);
  // Header plus 40 ticks per second over the default 10 s.
  CHECK(count_lines(slurp(dir / "stand" / "trace.csv")) == 401);
  CHECK(fs::exists(dir / "stand" / "episode.csv"));
  CHECK(fs::exists(dir / "stand" / "config.yaml"));

  CHECK(cli("run --mode lmpc --payload 6.0 --out " + (dir / "lmpc").string(), dir / "lmpc.log") == 1);
  CHECK(slurp(dir / "lmpc.log").find("failure_reason=") != std::string::npos);
  CHECK(cli("run --mode ccmpc --payload 6.0 --out " + (dir / "ccmpc").string(), dir / "ccmpc.log") == 0);
}

TEST_CASE("configuration problems exit with code 2") {
  const fs::path dir = scratch("config");
  std::ofstream(dir / "bad.yaml") << "mpc:\n  horizn: 3\n";
  CHECK(cli("run --config " + (dir / "bad.yaml").string(), dir / "bad.log") == 2);
  CHECK(slurp(dir / "bad.log").find("horizn") != std::string::npos);
  CHECK(cli("run --mode fast", dir / "mode.log") == 2);
  CHECK(cli("frobnicate", dir / "sub.log") == 2);

  // The environment variable supplies the default config path.
  const std::string env_cmd = "CCMPC_CONFIG=" + (dir / "bad.yaml").string() + " " + CCMPC_CLI_PATH +
                              " run > " + (dir / "env.log").string() + " 2>&1";
  const int status = std::system(env_cmd.c_str());
  CHECK(WEXITSTATUS(status) == 2);
}

TEST_CASE("montecarlo output does not depend on worker count") {
  const fs::path dir = scratch("mc");
  std::ofstream(dir / "short.yaml") << "episode:\n  duration: 1.0\n";
  const std::string common = "montecarlo --config " + (dir / "short.yaml").string() + " --n 4 --seed 5 --out ";
  REQUIRE(cli(common + (dir / "w1").string() + " --workers 1", dir / "w1.log") == 0);
  REQUIRE(cli(common + (dir / "w4").string() + " --workers 4", dir / "w4.log") == 0);
  for (const char* f : {"episodes.csv", "summary.csv", "config.yaml"}) {
    const std::string a = slurp(dir / "w1" / f);
    CHECK(!a.empty());
    CHECK(a == slurp(dir / "w4" / f));
  }
}

TEST_CASE("a standing campaign without payload or planks costs the same in every mode") {
  const fs::path dir = scratch("stand");
  std::ofstream(dir / "short.yaml") << "episode:\n  duration: 1.0\n"
                                       "montecarlo:\n  payload_range: [0, 0]\n  plank_height_max: 0\n";
  REQUIRE(cli("montecarlo --gait stand --n 1 --config " + (dir / "short.yaml").string() + " --out " +
                  (dir / "out").string(),
              dir / "log") == 0);
  std::istringstream summary(slurp(dir / "out" / "summary.csv"));
  std::string line;
  bool effort_checked = false;
  while (std::getline(summary, line)) {
    if (line.rfind("success_rate_pct,", 0) == 0) CHECK(line == "success_rate_pct,stand,100,100,100,1");
    if (line.rfind("normalized_effort_cost,stand,", 0) != 0) continue;
    std::istringstream cells(line.substr(std::string("normalized_effort_cost,stand,").size()));
    std::string cell;
    for (int k = 0; k < 3 && std::getline(cells, cell, ','); ++k) CHECK(std::stod(cell) == doctest::Approx(1.0).epsilon(1e-6));
    effort_checked = true;
  }
  CHECK(effort_checked);

  // Tracking error sits at the micrometre level in every mode, so its ratio carries no signal.
  std::istringstream episodes(slurp(dir / "out" / "episodes.csv"));
  std::getline(episodes, line);
  int rows = 0;
  while (std::getline(episodes, line)) {
    std::istringstream cells(line);
    std::string cell;
    for (int k = 0; k <= 12; ++k) std::getline(cells, cell, ',');
    CHECK(std::stod(cell) < 1e-6);
    ++rows;
  }
  CHECK(rows == 3);
}

TEST_CASE("bench reports a shorter horizon as cheaper") {
  const fs::path dir = scratch("bench");
  auto median = [&](const std::string& args, const std::string& name) {
    REQUIRE(cli("bench --ticks 200 " + args, dir / name) == 0);
    const std::string out = slurp(dir / name);
    const auto pos = out.find("median=");
    REQUIRE(pos != std::string::npos);
    return std::stod(out.substr(pos + 7));
  };
  CHECK(median("--horizon 1", "n1.log") < median("--horizon 10", "n10.log"));
}
