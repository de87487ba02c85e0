#include "ccmpc/gait.hpp"

#include <algorithm>
#include <cmath>

#include "ccmpc/srbd_model.hpp"

namespace ccmpc {

namespace {

// Keeps sample times that land on a phase boundary from flipping with rounding.
constexpr double kPhaseGuard = 1e-9;

double frac(double v) { return v - std::floor(v); }

double smoothstep(double s) { return s * s * (3.0 - 2.0 * s); }

}  // namespace

GaitSchedule GaitSchedule::trot() { return {"trot", 2.5, 0.5, {0.0, 0.5, 0.5, 0.0}}; }

GaitSchedule GaitSchedule::flytrot() { return {"flytrot", 3.3, 0.35, {0.0, 0.5, 0.5, 0.0}}; }

GaitSchedule GaitSchedule::stand() { return {"stand", 2.5, 1.0, {0.0, 0.0, 0.0, 0.0}}; }

GaitSchedule GaitSchedule::by_name(const std::string& name) {
  if (name == "trot") return trot();
  if (name == "flytrot") return flytrot();
  if (name == "stand") return stand();
  throw InvalidArgument("unknown gait '" + name + "' (expected trot, flytrot or stand)");
}

void GaitSchedule::validate() const {
  if (!(stepping_frequency > 0)) throw InvalidArgument("stepping frequency must be positive");
  if (!(duty_factor > 0 && duty_factor <= 1)) throw InvalidArgument("duty factor must lie in (0, 1]");
  for (double o : phase_offsets) {
    if (!(o >= 0 && o < 1)) throw InvalidArgument("phase offsets must lie in [0, 1)");
  }
}

double GaitSchedule::leg_phase(double t, int leg) const {
  return frac(t * stepping_frequency + phase_offsets[static_cast<std::size_t>(leg)] + kPhaseGuard);
}

bool GaitSchedule::in_stance(double t, int leg) const { return leg_phase(t, leg) < duty_factor; }

ContactFlags GaitSchedule::contacts(double t) const {
  ContactFlags c{};
  for (int leg = 0; leg < dims::kLegs; ++leg) c[static_cast<std::size_t>(leg)] = in_stance(t, leg);
  return c;
}

double GaitSchedule::time_to_phase_end(double t, int leg) const {
  const double phase = leg_phase(t, leg);
  const double end = phase < duty_factor ? duty_factor : 1.0;
  return std::max(0.0, (end - phase) * period());
}

std::vector<ContactFlags> contact_sequence(double t, const GaitSchedule& gait, int horizon, double dt) {
  if (!(dt > 0)) throw InvalidArgument("contact_sequence: dt must be positive");
  std::vector<ContactFlags> seq;
  seq.reserve(static_cast<std::size_t>(std::max(horizon, 0)));
  for (int i = 0; i < horizon; ++i) seq.push_back(gait.contacts(t + i * dt));
  return seq;
}

Eigen::Vector3d raibert_footstep(const Eigen::Vector3d& hip_position, const Eigen::Vector3d& velocity,
                                 const Eigen::Vector3d& desired_velocity, double stance_duration,
                                 double velocity_gain, double ground_height) {
  if (!(stance_duration > 0)) throw InvalidArgument("raibert_footstep: stance duration must be positive");
  Eigen::Vector3d target = hip_position + 0.5 * stance_duration * velocity + velocity_gain * (velocity - desired_velocity);
  target.z() = ground_height;
  return target;
}

Eigen::Vector3d swing_position(const SwingTrajectory& traj, double phase) {
  const double s = std::clamp(phase, 0.0, 1.0);
  if (s == 0.0) return traj.start;
  if (s == 1.0) return traj.end;
  Eigen::Vector3d p;
  p.head<2>() = traj.start.head<2>() + (traj.end.head<2>() - traj.start.head<2>()) * smoothstep(s);
  const double apex = std::max(traj.start.z(), traj.end.z()) + traj.apex_height;
  if (s <= 0.5) {
    p.z() = traj.start.z() + (apex - traj.start.z()) * smoothstep(2.0 * s);
  } else {
    p.z() = apex + (traj.end.z() - apex) * smoothstep(2.0 * s - 1.0);
  }
  return p;
}

Eigen::Matrix3d body_rotation(const Eigen::Vector3d& rpy) {
  return (Eigen::AngleAxisd(rpy.z(), Eigen::Vector3d::UnitZ()) * Eigen::AngleAxisd(rpy.y(), Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(rpy.x(), Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

Eigen::Vector3d euler_from_rotation(const Eigen::Matrix3d& R) {
  const double pitch = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
  const double roll = std::atan2(R(2, 1), R(2, 2));
  const double yaw = std::atan2(R(1, 0), R(0, 0));
  return {roll, pitch, yaw};
}

Eigen::Vector3d BodyGeometry::hip_position(const RobotState<double>& state, int leg) const {
  return state.position + body_rotation(state.orientation) * hip_offsets[static_cast<std::size_t>(leg)];
}

std::vector<Eigen::Matrix<double, 3, dims::kLegs>> plan_horizon_feet(
    double t, const RobotState<double>& state, const Eigen::Vector3d& velocity_command_body, double yaw_rate,
    const GaitSchedule& gait, const BodyGeometry& body, const FootSnapshot& feet,
    const FootholdPlannerSettings& settings, int horizon, double dt) {
  std::vector<Eigen::Matrix<double, 3, dims::kLegs>> out(static_cast<std::size_t>(std::max(horizon, 0)));
  const double T = gait.period();
  const double yaw0 = state.orientation.z();
  const Eigen::Vector3d v_des(velocity_command_body.x(), velocity_command_body.y(), 0.0);

  for (int leg = 0; leg < dims::kLegs; ++leg) {
    const auto l = static_cast<std::size_t>(leg);
    const double phase_end = t + gait.time_to_phase_end(t, leg);
    for (int i = 0; i < horizon; ++i) {
      const double tau = t + i * dt;
      Eigen::Vector3d p;
      if (gait.duty_factor >= 1.0 || (feet.stance[l] && tau < phase_end)) {
        p = feet.position[l];
      } else {
        const double phi = gait.leg_phase(tau, leg);
        const double touchdown = gait.in_stance(tau, leg) ? tau - phi * T : tau + (1.0 - phi) * T;
        if (!feet.stance[l] && std::abs(touchdown - phase_end) < 1e-6) {
          p = feet.swing_target[l];
        } else {
          const double ahead = touchdown - t;
          const double yaw = yaw0 + yaw_rate * ahead;
          const Eigen::Matrix3d Rz = yaw_rotation(yaw);
          const Eigen::Vector3d v_world = yaw_rotation(yaw0) * v_des;
          Eigen::Vector3d hip = state.position + v_world * ahead + Rz * body.hip_offsets[l];
          p = raibert_footstep(hip, Rz * v_des, Rz * v_des, gait.stance_duration(), settings.raibert_gain, 0.0);
        }
      }
      out[static_cast<std::size_t>(i)].col(leg) = p;
    }
  }
  return out;
}

}  // namespace ccmpc
