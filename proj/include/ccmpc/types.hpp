#ifndef CCMPC_TYPES_HPP
#define CCMPC_TYPES_HPP

#include <Eigen/Dense>

#include <array>
#include <stdexcept>
#include <string>

namespace ccmpc {

namespace dims {
constexpr int kState = 13;
constexpr int kControl = 12;
constexpr int kParams = 16;
constexpr int kLegs = 4;
constexpr int kRowsPerFoot = 5;
constexpr int kConstraintRows = kLegs * kRowsPerFoot;
}  // namespace dims

// Slices of the flattened state [Θ, p, ω, ṗ, g].
namespace idx {
constexpr int kTheta = 0;
constexpr int kPos = 3;
constexpr int kOmega = 6;
constexpr int kVel = 9;
constexpr int kGravity = 12;
}  // namespace idx

// Slices of the parameter vector [m, Ixx, Iyy, Izz, r1, r2, r3, r4].
namespace pidx {
constexpr int kMass = 0;
constexpr int kInertia = 1;
constexpr int kFeet = 4;
}  // namespace pidx

constexpr double kGravity = 9.81;

template <typename Scalar>
using StateVector = Eigen::Matrix<Scalar, dims::kState, 1>;
template <typename Scalar>
using ControlVector = Eigen::Matrix<Scalar, dims::kControl, 1>;
template <typename Scalar>
using ParamVector = Eigen::Matrix<Scalar, dims::kParams, 1>;
template <typename Scalar>
using StateMatrix = Eigen::Matrix<Scalar, dims::kState, dims::kState>;
template <typename Scalar>
using ControlMatrix = Eigen::Matrix<Scalar, dims::kState, dims::kControl>;
template <typename Scalar>
using ParamJacobian = Eigen::Matrix<Scalar, dims::kState, dims::kParams>;
template <typename Scalar>
using GainMatrix = Eigen::Matrix<Scalar, dims::kControl, dims::kState>;
template <typename Scalar>
using ControlCovariance = Eigen::Matrix<Scalar, dims::kControl, dims::kControl>;
template <typename Scalar>
using ConstraintMatrix = Eigen::Matrix<Scalar, dims::kConstraintRows, dims::kControl>;
template <typename Scalar>
using ConstraintVector = Eigen::Matrix<Scalar, dims::kConstraintRows, 1>;

using ContactFlags = std::array<bool, dims::kLegs>;

/// Raised when an input violates a documented precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Single rigid body state. Angular velocity is expressed in the world frame.
template <typename Scalar>
struct RobotState {
  Eigen::Matrix<Scalar, 3, 1> orientation = Eigen::Matrix<Scalar, 3, 1>::Zero();  // roll, pitch, yaw
  Eigen::Matrix<Scalar, 3, 1> position = Eigen::Matrix<Scalar, 3, 1>::Zero();
  Eigen::Matrix<Scalar, 3, 1> angular_velocity = Eigen::Matrix<Scalar, 3, 1>::Zero();
  Eigen::Matrix<Scalar, 3, 1> linear_velocity = Eigen::Matrix<Scalar, 3, 1>::Zero();
  Scalar gravity = Scalar(kGravity);

  StateVector<Scalar> flatten() const {
    StateVector<Scalar> x;
    x << orientation, position, angular_velocity, linear_velocity, gravity;
    return x;
  }

  static RobotState unflatten(const StateVector<Scalar>& x) {
    RobotState s;
    s.orientation = x.template segment<3>(idx::kTheta);
    s.position = x.template segment<3>(idx::kPos);
    s.angular_velocity = x.template segment<3>(idx::kOmega);
    s.linear_velocity = x.template segment<3>(idx::kVel);
    s.gravity = x(idx::kGravity);
    return s;
  }

  bool operator==(const RobotState&) const = default;
};

/// Stacked ground reaction forces [f1; f2; f3; f4], world frame.
template <typename Scalar>
struct GrfCommand {
  ControlVector<Scalar> forces = ControlVector<Scalar>::Zero();

  Eigen::Matrix<Scalar, 3, 1> foot(int leg) const { return forces.template segment<3>(3 * leg); }

  void zero_swing(const ContactFlags& contact) {
    for (int leg = 0; leg < dims::kLegs; ++leg) {
      if (!contact[leg]) forces.template segment<3>(3 * leg).setZero();
    }
  }
};

template <typename Scalar>
struct ModelParams {
  Scalar mass = Scalar(12.0);
  Eigen::Matrix<Scalar, 3, 1> inertia_diag{Scalar(0.08), Scalar(0.2), Scalar(0.22)};
  Scalar friction_mu = Scalar(0.4);
  Scalar fz_min = Scalar(0.0);
  Scalar fz_max = Scalar(1.5 * 12.0 * kGravity);
  Scalar dt = Scalar(0.025);

  void validate() const {
    if (!(mass > 0)) throw InvalidArgument("mass must be positive");
    if (!(inertia_diag.array() > 0).all()) throw InvalidArgument("inertia entries must be positive");
    if (!(friction_mu > 0 && friction_mu <= 1)) throw InvalidArgument("friction coefficient must lie in (0, 1]");
    if (!(fz_min >= 0 && fz_min < fz_max)) throw InvalidArgument("require 0 <= fz_min < fz_max");
    if (!(dt > 0)) throw InvalidArgument("dt must be positive");
  }
};

/// Packs mass, diagonal inertia and CoM-relative foot positions into the parameter vector.
template <typename Scalar>
ParamVector<Scalar> make_param_vector(Scalar mass, const Eigen::Matrix<Scalar, 3, 1>& inertia_diag,
                                      const Eigen::Matrix<Scalar, 3, dims::kLegs>& feet_rel) {
  ParamVector<Scalar> delta;
  delta(pidx::kMass) = mass;
  delta.template segment<3>(pidx::kInertia) = inertia_diag;
  for (int leg = 0; leg < dims::kLegs; ++leg) delta.template segment<3>(pidx::kFeet + 3 * leg) = feet_rel.col(leg);
  return delta;
}

enum class Leg : int { FR = 0, FL = 1, RR = 2, RL = 3 };

}  // namespace ccmpc

#endif  // CCMPC_TYPES_HPP
