#ifndef CCMPC_CONFIG_HPP
#define CCMPC_CONFIG_HPP

// YAML run configuration with sections mpc, uncertainty, gait, terrain,
// episode, montecarlo and output. Every key is optional; unknown keys are
// rejected with their line number.

#include <cstdint>
#include <stdexcept>
#include <string>

#include "ccmpc/simulator.hpp"

namespace ccmpc {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::string key = {}, int line = 0)
      : std::runtime_error(what), key_(std::move(key)), line_(line) {}
  const std::string& key() const { return key_; }
  int line() const { return line_; }

 private:
  std::string key_;
  int line_;
};

/// How the variance entries scale with the planning step.
enum class TimeBasis { PerStep, PerSecond };

std::string_view to_string(TimeBasis basis);

/// Variance parameters and the gain design used for covariance propagation.
struct UncertaintySettings {
  double sigma_mass = 15.0;
  Eigen::Vector3d sigma_inertia{0.02, 0.06, 0.06};
  Eigen::Matrix<double, 12, 1> sigma_contact = Eigen::Matrix<double, 12, 1>::Constant(0.36);
  Eigen::Vector3d sigma_angular_velocity{0.5, 0.2, 0.01};
  Eigen::Vector3d sigma_linear_velocity{0.5, 0.2, 0.01};
  TimeBasis time_basis = TimeBasis::PerStep;
  double dare_r = 3.0;
  double dare_q_floor = 1e-6;
  double gain_cache_tolerance = 0.02;

  /// Per-step covariances: PerSecond entries are multiplied by dt.
  DisturbanceModel<double> model(double dt, double epsilon) const;
  FeedbackDesign<double> feedback(const MpcConfig& mpc) const;
};

struct RunConfig {
  EpisodeConfig episode{};  // disturbance and feedback are derived from `uncertainty`
  UncertaintySettings uncertainty{};
  MonteCarloSettings montecarlo{};
  std::string output_dir = "ccmpc_out";

  /// Episode settings with the uncertainty section applied.
  EpisodeConfig resolved_episode() const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Canonical YAML of the effective configuration; loading it back reproduces the same text.
std::string to_yaml(const RunConfig& config);

/// FNV-1a over the canonical YAML.
std::uint64_t config_hash(const RunConfig& config);
std::string hash_hex(std::uint64_t hash);

}  // namespace ccmpc

#endif  // CCMPC_CONFIG_HPP
