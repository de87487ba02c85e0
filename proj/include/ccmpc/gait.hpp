#ifndef CCMPC_GAIT_HPP
#define CCMPC_GAIT_HPP

#include <array>
#include <string>
#include <vector>

#include "ccmpc/types.hpp"

namespace ccmpc {

/// Periodic contact schedule. Leg order is FR, FL, RR, RL.
struct GaitSchedule {
  std::string name = "trot";
  double stepping_frequency = 2.5;  // Hz
  double duty_factor = 0.5;
  std::array<double, dims::kLegs> phase_offsets{0.0, 0.5, 0.5, 0.0};

  static GaitSchedule trot();
  static GaitSchedule flytrot();
  static GaitSchedule stand();
  static GaitSchedule by_name(const std::string& name);

  void validate() const;

  double period() const { return 1.0 / stepping_frequency; }
  double stance_duration() const { return duty_factor * period(); }
  double swing_duration() const { return (1.0 - duty_factor) * period(); }

  /// Phase of the leg in [0, 1); stance occupies [0, duty_factor).
  double leg_phase(double t, int leg) const;
  bool in_stance(double t, int leg) const;
  ContactFlags contacts(double t) const;

  /// Time remaining in the current stance (or swing) interval of the leg.
  double time_to_phase_end(double t, int leg) const;
};

/// Flags at t, t + dt, ..., t + (N - 1) dt.
std::vector<ContactFlags> contact_sequence(double t, const GaitSchedule& gait, int horizon, double dt);

/// Footstep target: hip + (T_stance / 2) v + k_v (v - v_des), at the given ground height.
Eigen::Vector3d raibert_footstep(const Eigen::Vector3d& hip_position, const Eigen::Vector3d& velocity,
                                 const Eigen::Vector3d& desired_velocity, double stance_duration,
                                 double velocity_gain = 0.03, double ground_height = 0.0);

struct SwingTrajectory {
  Eigen::Vector3d start = Eigen::Vector3d::Zero();
  Eigen::Vector3d end = Eigen::Vector3d::Zero();
  double apex_height = 0.08;
  double duration = 0.2;
};

/// Cubic Hermite horizontally; two cubic segments through the apex at phase 0.5
/// vertically. Boundary and apex velocities are zero.
Eigen::Vector3d swing_position(const SwingTrajectory& traj, double phase);

/// Rotation from body to world for Z-Y-X Euler angles (roll, pitch, yaw).
Eigen::Matrix3d body_rotation(const Eigen::Vector3d& rpy);

/// Z-Y-X Euler angles of a rotation matrix.
Eigen::Vector3d euler_from_rotation(const Eigen::Matrix3d& R);

struct BodyGeometry {
  // Nominal foot locations under each hip, body frame, in FR, FL, RR, RL order.
  std::array<Eigen::Vector3d, dims::kLegs> hip_offsets{
      Eigen::Vector3d(0.19, -0.13, 0.0), Eigen::Vector3d(0.19, 0.13, 0.0), Eigen::Vector3d(-0.19, -0.13, 0.0),
      Eigen::Vector3d(-0.19, 0.13, 0.0)};
  double nominal_height = 0.3;
  double leg_length_max = 0.4;  // hip-to-foot reach

  Eigen::Vector3d hip_position(const RobotState<double>& state, int leg) const;
};

/// What the planner knows about the feet at the current tick.
struct FootSnapshot {
  std::array<Eigen::Vector3d, dims::kLegs> position{};       // world frame
  std::array<Eigen::Vector3d, dims::kLegs> swing_target{};   // touchdown targets of legs currently in swing
  ContactFlags stance{true, true, true, true};
};

struct FootholdPlannerSettings {
  double raibert_gain = 0.03;
  double foot_height = 0.08;
};

/// Predicts world-frame foot positions over the horizon: stance feet stay put,
/// swinging feet land on their stored targets, later footholds follow the
/// Raibert rule along the commanded motion.
std::vector<Eigen::Matrix<double, 3, dims::kLegs>> plan_horizon_feet(
    double t, const RobotState<double>& state, const Eigen::Vector3d& velocity_command_body, double yaw_rate,
    const GaitSchedule& gait, const BodyGeometry& body, const FootSnapshot& feet,
    const FootholdPlannerSettings& settings, int horizon, double dt);

}  // namespace ccmpc

#endif  // CCMPC_GAIT_HPP
