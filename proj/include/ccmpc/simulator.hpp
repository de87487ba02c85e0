#ifndef CCMPC_SIMULATOR_HPP
#define CCMPC_SIMULATOR_HPP

// Ground-truth world for closed-loop episodes. The body is a single rigid body
// with an unmodeled point-mass payload; feet are massless points that follow
// swing splines kinematically and stick to the ground until the applied force
// leaves the true friction cone.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "ccmpc/gait.hpp"
#include "ccmpc/mpc.hpp"

namespace ccmpc {

struct PlankSegment {
  double x_start = 0;
  double x_end = 0;
  double height = 0;
};

struct TerrainProfile {
  std::vector<PlankSegment> planks;  // sorted by x_start
  double mu_true = 0.4;
  double slope = 0;  // rad, rising along +x

  void validate() const;
  double height_at(double x, double y) const;
  Eigen::Vector3d normal() const;

  /// Contiguous planks of equal length starting at x_start, heights uniform in [0, max_height].
  static TerrainProfile random_planks(std::mt19937_64& rng, double max_height, double x_start, double x_end,
                                      double plank_length, double mu_true);
};

enum class FailureReason { None, HeightDeviation, Tilt, QpInfeasible, NumericalError };

std::string_view to_string(FailureReason reason);

/// Non-idealities of the world that the controller does not model.
struct WorldSettings {
  double sim_dt = 0.001;
  double force_noise_std = 0.0;   // N, per stance-foot force component, redrawn every control tick
  Eigen::Vector3d disturbance_force_std = Eigen::Vector3d::Zero();   // N, body wrench noise per tick
  Eigen::Vector3d disturbance_torque_std = Eigen::Vector3d::Zero();  // N·m
};

struct EpisodeConfig {
  MpcConfig mpc{};
  DisturbanceModel<double> disturbance{};
  FeedbackDesign<double> feedback{};
  QpSettings<double> qp{};
  GaitSchedule gait = GaitSchedule::trot();
  BodyGeometry body{};
  FootholdPlannerSettings footholds{};
  WorldSettings world{};
  TerrainProfile terrain{};
  double payload_mass = 0;
  Eigen::Vector3d payload_offset{0.0, 0.0, 0.05};  // body frame
  Eigen::Vector3d velocity_command{0.25, 0.0, 0.0};  // body frame
  double yaw_rate_command = 0;
  double duration = 10.0;
  std::uint64_t seed = 1;
  bool record_trace = false;
  // Heuristic tightening recipe; explicit offsets replace it when set.
  double hmpc_max_payload = 10.0;
  double hmpc_max_accel = 0.2;
  std::optional<ConstraintVector<double>> hmpc_offsets;

  void validate() const;
  /// Controller settings with the heuristic offsets resolved for the gait.
  MpcConfig effective_mpc() const;
  /// Commands actually tracked; a gait that never swings a leg holds still.
  Eigen::Vector3d commanded_velocity() const;
  double commanded_yaw_rate() const;
};

struct TraceRow {
  double time = 0;
  RobotState<double> state{};
  GrfCommand<double> command{};
  ConstraintVector<double> tightening = ConstraintVector<double>::Zero();
  QpStatus status = QpStatus::Optimal;
  int iterations = 0;
  ContactFlags contacts{};
};

struct EpisodeMetrics {
  bool success = false;
  FailureReason failure_reason = FailureReason::None;
  double failure_time = 0;
  double slippage_ratio = 0;
  double tracking_cost = 0;
  double effort_cost = 0;
  long slip_events = 0;
  double peak_height_error = 0;
  int ticks = 0;
  std::vector<double> solve_times_us;  // wall clock, not part of the reproducible record
  std::vector<TraceRow> trace;
};

/// Height and tilt checks against the desired height and ground normal.
FailureReason detect_failure(const RobotState<double>& state, double desired_height,
                             const Eigen::Vector3d& ground_normal);

/// True rigid-body state at the body origin plus foot bookkeeping.
class World {
 public:
  explicit World(const EpisodeConfig& config);

  double time() const { return time_; }
  /// Ground-truth SRBD state: position and velocity of the true CoM.
  RobotState<double> state() const;
  /// Same attitude, but position and velocity of the body-frame origin (hip geometry).
  RobotState<double> body_state() const;
  const FootSnapshot& feet() const { return feet_; }
  long slip_events() const { return slip_events_; }
  double true_mass() const { return mass_; }
  const Eigen::Vector3d& true_inertia() const { return inertia_; }

  /// Applies contact transitions scheduled at the current time.
  void sync_contacts();

  /// Redraws the per-tick noise; call once per control tick.
  void sample_noise();

  /// One integration step holding the commanded forces.
  void step(const GrfCommand<double>& command);

  /// Forces applied on the last step after reach and friction limits.
  const GrfCommand<double>& applied_forces() const { return applied_; }

  /// Places the body at rest at the given height with feet under the hips.
  void reset(double height);

 private:
  EpisodeConfig config_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  long steps_ = 0;
  double time_ = 0;
  double mass_ = 0;
  Eigen::Vector3d inertia_ = Eigen::Vector3d::Zero();  // about the true CoM, body frame
  Eigen::Vector3d com_offset_ = Eigen::Vector3d::Zero();  // true CoM in the body frame
  Eigen::Vector3d com_ = Eigen::Vector3d::Zero();       // world
  Eigen::Vector3d com_velocity_ = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation_ = Eigen::Quaterniond::Identity();
  Eigen::Vector3d omega_ = Eigen::Vector3d::Zero();  // world
  FootSnapshot feet_{};
  std::array<SwingTrajectory, dims::kLegs> swings_{};
  std::array<bool, dims::kLegs> slipping_{};
  long slip_events_ = 0;
  GrfCommand<double> applied_{};
  ControlVector<double> force_noise_ = ControlVector<double>::Zero();
  Eigen::Vector3d wrench_force_ = Eigen::Vector3d::Zero();
  Eigen::Vector3d wrench_torque_ = Eigen::Vector3d::Zero();
};

EpisodeMetrics run_episode(const EpisodeConfig& config);

/// Times the planner plus the controller step over consecutive closed-loop
/// ticks. The world restarts if the robot fails before `ticks` is reached.
std::vector<double> bench_controller(const EpisodeConfig& config, int ticks);

struct MonteCarloSettings {
  int episodes = 100;
  std::uint64_t seed = 1;
  double payload_min = 1.0;
  double payload_max = 10.0;
  double plank_height_max = 0.05;
  double plank_length = 0.3;
  double plank_start = 0.4;
  std::vector<ControllerMode> modes{ControllerMode::CCMPC, ControllerMode::HMPC, ControllerMode::LMPC};
  std::vector<std::string> gaits{"trot"};
  int workers = 1;
};

struct EpisodeRecord {
  int sample = 0;
  std::uint64_t seed = 0;
  std::string gait;
  ControllerMode mode = ControllerMode::CCMPC;
  double payload = 0;
  double max_plank_height = 0;
  EpisodeMetrics metrics;
};

struct AggregateRow {
  std::string gait;
  ControllerMode mode = ControllerMode::CCMPC;
  int episodes = 0;
  int successes = 0;
  double success_rate = 0;          // percent
  double mean_slippage = 0;         // over successful episodes
  double normalized_tracking = 0;   // mean cost / CCMPC mean cost
  double normalized_effort = 0;
};

struct MonteCarloResult {
  std::vector<EpisodeRecord> records;  // ordered by (sample, gait, mode)
  std::vector<AggregateRow> table;
};

/// Seed for sample k of a campaign; identical across modes and gaits.
std::uint64_t sample_seed(std::uint64_t campaign_seed, int sample);

/// Sampled scenario (payload and terrain) for one Monte Carlo sample.
EpisodeConfig sample_scenario(const EpisodeConfig& base, const MonteCarloSettings& mc, int sample);

MonteCarloResult monte_carlo(const EpisodeConfig& base, const MonteCarloSettings& settings);

std::vector<AggregateRow> aggregate(const std::vector<EpisodeRecord>& records,
                                    const std::vector<std::string>& gaits,
                                    const std::vector<ControllerMode>& modes);

/// Heuristic offsets for the gait: the fewest stance feet the gait ever has (at least one).
ConstraintVector<double> heuristic_offsets_for_gait(const GaitSchedule& gait, double max_payload, double max_accel,
                                                    const ModelParams<double>& model);

}  // namespace ccmpc

#endif  // CCMPC_SIMULATOR_HPP
