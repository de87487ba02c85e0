// ccmpc: single episodes, Monte Carlo campaigns and controller latency.
//
//   ccmpc run        [--config F] [--mode M] [--gait G] [--seed S] [--payload KG] [--out DIR]
//   ccmpc montecarlo [--config F] [--n N] [--workers W] [--mode M]... [--gait G]... [--seed S] [--out DIR]
//   ccmpc bench      [--config F] [--ticks T] [--mode M] [--gait G] [--horizon N]
//
// The config path defaults to $CCMPC_CONFIG. Exit codes: 0 success, 1 episode
// failure, 2 configuration or usage error.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "ccmpc/config.hpp"
#include "ccmpc/records.hpp"

namespace fs = std::filesystem;
using namespace ccmpc;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> modes;
  std::vector<std::string> gaits;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

RunConfig load(const CommonOptions& opts) {
  std::string path = opts.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("CCMPC_CONFIG")) path = env;
  }
  RunConfig cfg = path.empty() ? parse_config("") : load_config(path);
  try {
    if (!opts.modes.empty()) cfg.episode.mpc.mode = mode_from_string(opts.modes.front());
    if (!opts.gaits.empty()) cfg.episode.gait = GaitSchedule::by_name(opts.gaits.front());
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (opts.out) cfg.output_dir = *opts.out;
  return cfg;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

// Settings that change where or how fast results are produced, not what they are.
RunConfig reproducible(RunConfig cfg) {
  cfg.output_dir = RunConfig{}.output_dir;
  cfg.montecarlo.workers = 1;
  return cfg;
}

void write_config_copy(const RunConfig& cfg, const fs::path& dir) {
  auto out = open_output(dir / "config.yaml");
  out << to_yaml(cfg);
}

int cmd_run(const CommonOptions& opts, std::optional<double> payload) {
  RunConfig cfg = load(opts);
  if (opts.seed) cfg.episode.seed = *opts.seed;
  if (payload) cfg.episode.payload_mass = *payload;
  EpisodeConfig ep = cfg.resolved_episode();
  ep.record_trace = true;
  try {
    ep.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }

  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  EpisodeRecord rec;
  rec.seed = ep.seed;
  rec.gait = ep.gait.name;
  rec.mode = ep.mpc.mode;
  rec.payload = ep.payload_mass;
  for (const auto& p : ep.terrain.planks) rec.max_plank_height = std::max(rec.max_plank_height, p.height);
  rec.metrics = run_episode(ep);

  const RunConfig hashed = reproducible(cfg);
  const std::string hash = hash_hex(config_hash(hashed));
  write_config_copy(hashed, dir);
  {
    auto out = open_output(dir / "trace.csv");
    write_trace(out, rec.metrics.trace);
  }
  {
    auto out = open_output(dir / "episode.csv");
    write_episode_header(out);
    write_episode_record(out, hash, rec);
  }
  {
    auto out = open_output(dir / "timing.csv");
    write_timing_header(out);
    write_timing_record(out, rec);
  }

  const EpisodeMetrics& m = rec.metrics;
  const SolveTimeStats t = solve_time_stats(m.solve_times_us);
  std::cout << "mode=" << to_string(rec.mode) << " gait=" << rec.gait << " payload=" << rec.payload
            << " seed=" << rec.seed << "\n"
            << "success=" << (m.success ? "true" : "false") << " failure_reason=" << to_string(m.failure_reason);
  if (!m.success) std::cout << " at t=" << m.failure_time << " s";
  std::cout << "\nslippage_ratio=" << m.slippage_ratio << " slip_events=" << m.slip_events
            << " peak_height_error=" << m.peak_height_error << " m\n"
            << "tracking_cost=" << m.tracking_cost << " effort_cost=" << m.effort_cost << "\n"
            << "solve_us median=" << t.median_us << " p99=" << t.p99_us << "\n"
            << "records written to " << dir.string() << "\n";
  return m.success ? 0 : kExitFailure;
}

int cmd_montecarlo(const CommonOptions& opts, std::optional<int> n, std::optional<int> workers) {
  RunConfig cfg = load(opts);
  MonteCarloSettings& mc = cfg.montecarlo;
  if (n) mc.episodes = *n;
  if (workers) mc.workers = *workers;
  if (opts.seed) mc.seed = *opts.seed;
  try {
    if (!opts.modes.empty()) {
      mc.modes.clear();
      for (const auto& m : opts.modes) mc.modes.push_back(mode_from_string(m));
    }
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (!opts.gaits.empty()) mc.gaits = opts.gaits;
  if (mc.episodes < 1) throw ConfigError("--n must be at least 1");
  if (mc.workers < 1) throw ConfigError("--workers must be at least 1");

  EpisodeConfig base = cfg.resolved_episode();
  MonteCarloResult result;
  try {
    result = monte_carlo(base, mc);
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }

  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  const RunConfig hashed = reproducible(cfg);
  const std::string hash = hash_hex(config_hash(hashed));
  write_config_copy(hashed, dir);
  {
    auto out = open_output(dir / "episodes.csv");
    write_episode_header(out);
    for (const auto& r : result.records) write_episode_record(out, hash, r);
  }
  {
    auto out = open_output(dir / "timing.csv");
    write_timing_header(out);
    for (const auto& r : result.records) write_timing_record(out, r);
  }
  {
    auto out = open_output(dir / "summary.csv");
    write_summary(out, result.table, mc.gaits, mc.modes);
  }
  write_summary(std::cout, result.table, mc.gaits, mc.modes);
  std::cout << "records written to " << dir.string() << "\n";
  return 0;
}

int cmd_bench(const CommonOptions& opts, int ticks, std::optional<int> horizon) {
  RunConfig cfg = load(opts);
  if (opts.seed) cfg.episode.seed = *opts.seed;
  if (horizon) cfg.episode.mpc.horizon = *horizon;
  EpisodeConfig ep = cfg.resolved_episode();
  if (ticks < 1) throw ConfigError("--ticks must be at least 1");
  std::vector<double> times;
  try {
    times = bench_controller(ep, ticks);
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
  const SolveTimeStats s = solve_time_stats(times);
  std::cout << "mode=" << to_string(ep.mpc.mode) << " gait=" << ep.gait.name << " horizon=" << ep.mpc.horizon
            << " ticks=" << ticks << "\n"
            << "mpc_step_us min=" << s.min_us << " median=" << s.median_us << " p99=" << s.p99_us
            << " max=" << s.max_us << "\n";
  if (s.median_us > 2000.0) {
    std::cout << "WARNING: median exceeds the 2 ms budget\n";
  } else {
    std::cout << "median within the 2 ms budget\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chance-constrained MPC for quadruped locomotion"};
  app.require_subcommand(1);

  CommonOptions opts;
  auto add_common = [&opts](CLI::App* sub, bool multi) {
    sub->add_option("--config", opts.config_path, "YAML config file (default: $CCMPC_CONFIG)");
    if (multi) {
      sub->add_option("--mode", opts.modes, "controller mode(s): lmpc, hmpc, ccmpc");
      sub->add_option("--gait", opts.gaits, "gait(s): trot, flytrot, stand");
    } else {
      sub->add_option("--mode", opts.modes, "controller mode: lmpc, hmpc, ccmpc")->expected(1);
      sub->add_option("--gait", opts.gaits, "gait: trot, flytrot, stand")->expected(1);
    }
    sub->add_option("--seed", opts.seed, "random seed");
    sub->add_option("--out", opts.out, "output directory");
  };

  auto* run = app.add_subcommand("run", "run one episode and write its trace and record");
  add_common(run, false);
  std::optional<double> payload;
  run->add_option("--payload", payload, "unmodeled payload mass in kg");

  auto* mc = app.add_subcommand("montecarlo", "paired Monte Carlo comparison of controller modes");
  add_common(mc, true);
  std::optional<int> n, workers;
  mc->add_option("--n", n, "number of sampled scenarios");
  mc->add_option("--workers", workers, "worker threads");

  auto* bench = app.add_subcommand("bench", "time consecutive controller ticks");
  add_common(bench, false);
  int ticks = 1000;
  std::optional<int> horizon;
  bench->add_option("--ticks", ticks, "number of timed ticks");
  bench->add_option("--horizon", horizon, "override the planning horizon");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(opts, payload);
    if (*mc) return cmd_montecarlo(opts, n, workers);
    if (*bench) return cmd_bench(opts, ticks, horizon);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitConfig;
}
