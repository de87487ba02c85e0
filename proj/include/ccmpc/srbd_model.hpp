#ifndef CCMPC_SRBD_MODEL_HPP
#define CCMPC_SRBD_MODEL_HPP

// Discrete-time linearized single rigid body dynamics
//   x_{i+1} = A(yaw) x_i + B(delta, yaw) u_i + w_i
// with the state ordered [Θ, p, ω, ṗ, g]. Only yaw enters the linearization.

#include <cmath>

#include "ccmpc/types.hpp"

namespace ccmpc {

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> yaw_rotation(Scalar yaw) {
  using std::cos;
  using std::sin;
  Eigen::Matrix<Scalar, 3, 3> R;
  const Scalar c = cos(yaw), s = sin(yaw);
  R << c, -s, 0, s, c, 0, 0, 0, 1;
  return R;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 3, 3> skew(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, 3, 3> S;
  S << Scalar(0), -v(2), v(1), v(2), Scalar(0), -v(0), -v(1), v(0), Scalar(0);
  return S;
}

/// Inverse of the yaw-rotated diagonal inertia, Rz diag(I)^-1 Rzᵀ.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> world_inertia_inverse(const Eigen::Matrix<Scalar, 3, 1>& inertia_diag, Scalar yaw) {
  const Eigen::Matrix<Scalar, 3, 3> Rz = yaw_rotation(yaw);
  return Rz * inertia_diag.cwiseInverse().asDiagonal() * Rz.transpose();
}

template <typename Scalar>
StateMatrix<Scalar> build_state_matrix(Scalar yaw, Scalar dt) {
  StateMatrix<Scalar> A = StateMatrix<Scalar>::Identity();
  A.template block<3, 3>(idx::kTheta, idx::kOmega) = yaw_rotation(yaw).transpose() * dt;
  A.template block<3, 3>(idx::kPos, idx::kVel) = Eigen::Matrix<Scalar, 3, 3>::Identity() * dt;
  A(idx::kVel + 2, idx::kGravity) = -dt;
  return A;
}

template <typename Scalar>
void validate_params(const ParamVector<Scalar>& delta) {
  if (!(delta(pidx::kMass) > 0)) throw InvalidArgument("parameter vector mass must be positive");
  if (!(delta.template segment<3>(pidx::kInertia).array() > 0).all())
    throw InvalidArgument("parameter vector inertia entries must be positive");
}

template <typename Scalar>
ControlMatrix<Scalar> build_control_matrix(const ParamVector<Scalar>& delta, Scalar yaw, Scalar dt) {
  validate_params(delta);
  const Scalar mass = delta(pidx::kMass);
  const Eigen::Matrix<Scalar, 3, 3> Iinv =
      world_inertia_inverse<Scalar>(delta.template segment<3>(pidx::kInertia), yaw);
  ControlMatrix<Scalar> B = ControlMatrix<Scalar>::Zero();
  for (int leg = 0; leg < dims::kLegs; ++leg) {
    const auto r = delta.template segment<3>(pidx::kFeet + 3 * leg);
    B.template block<3, 3>(idx::kOmega, 3 * leg) = Iinv * skew(r) * dt;
    B.template block<3, 3>(idx::kVel, 3 * leg) = Eigen::Matrix<Scalar, 3, 3>::Identity() * (dt / mass);
  }
  return B;
}

template <typename Scalar>
RobotState<Scalar> discrete_step(const StateMatrix<Scalar>& A, const ControlMatrix<Scalar>& B,
                                 const RobotState<Scalar>& x, const GrfCommand<Scalar>& u,
                                 const StateVector<Scalar>& w) {
  StateVector<Scalar> next = A * x.flatten() + B * u.forces + w;
  next(idx::kGravity) = x.gravity;
  return RobotState<Scalar>::unflatten(next);
}

template <typename Scalar>
RobotState<Scalar> discrete_step(const StateMatrix<Scalar>& A, const ControlMatrix<Scalar>& B,
                                 const RobotState<Scalar>& x, const GrfCommand<Scalar>& u) {
  return discrete_step(A, B, x, u, StateVector<Scalar>::Zero().eval());
}

/// Net torque about the CoM produced by the stacked forces at the given relative foot positions.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> net_torque(const ParamVector<Scalar>& delta, const ControlVector<Scalar>& u) {
  Eigen::Matrix<Scalar, 3, 1> tau = Eigen::Matrix<Scalar, 3, 1>::Zero();
  for (int leg = 0; leg < dims::kLegs; ++leg) {
    const Eigen::Matrix<Scalar, 3, 1> r = delta.template segment<3>(pidx::kFeet + 3 * leg);
    const Eigen::Matrix<Scalar, 3, 1> f = u.template segment<3>(3 * leg);
    tau += r.cross(f);
  }
  return tau;
}

}  // namespace ccmpc

#endif  // CCMPC_SRBD_MODEL_HPP
