#ifndef CCMPC_UNCERTAINTY_HPP
#define CCMPC_UNCERTAINTY_HPP

// State and control covariance propagation along the horizon under the
// feedback policy u = v + K (x - x̄).

#include <Eigen/Eigenvalues>

#include <cmath>
#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccmpc/srbd_model.hpp"
#include "ccmpc/types.hpp"

namespace ccmpc {

template <typename Scalar>
struct DisturbanceModel {
  ParamVector<Scalar> sigma_delta = ParamVector<Scalar>::Zero();  // diagonal of Σ_δ
  StateVector<Scalar> sigma_w = StateVector<Scalar>::Zero();      // diagonal of Σ_w
  Scalar epsilon = Scalar(0.95);

  void validate() const {
    if (!(sigma_delta.array() >= 0).all() || !(sigma_w.array() >= 0).all())
      throw InvalidArgument("disturbance variances must be nonnegative");
    if (!(epsilon > 0 && epsilon < 1)) throw InvalidArgument("epsilon must lie in (0, 1)");
  }

  bool is_zero() const { return sigma_delta.isZero(0) && sigma_w.isZero(0); }
};

template <typename Scalar>
struct CovarianceTrajectory {
  std::vector<StateMatrix<Scalar>> sigma_x;       // N + 1
  std::vector<ControlCovariance<Scalar>> sigma_u;  // N
  std::vector<GainMatrix<Scalar>> gains;           // N
};

class DareError : public std::runtime_error {
 public:
  DareError(const std::string& what, double residual, int iterations)
      : std::runtime_error(what), residual_(residual), iterations_(iterations) {}
  double residual() const { return residual_; }
  int iterations() const { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

template <typename Scalar>
struct DareSolution {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> P;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> K;
  int iterations = 0;
  Scalar residual = 0;
};

template <typename Scalar>
struct DareSettings {
  int max_iterations = 200;
  Scalar tolerance = Scalar(1e-10);
};

/// Frobenius norm of P - (AᵀPA - AᵀPB(R + BᵀPB)⁻¹BᵀPA + Q).
template <typename Scalar>
Scalar dare_residual(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& A,
                     const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& B,
                     const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& Q,
                     const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& R,
                     const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& P) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Mat PA = P * A;
  const Mat BtPA = B.transpose() * PA;
  const Mat S = R + B.transpose() * P * B;
  const Mat rhs = A.transpose() * PA - BtPA.transpose() * S.ldlt().solve(BtPA) + Q;
  return (P - rhs).norm();
}

/// Stabilizing solution of the discrete algebraic Riccati equation by the
/// structure-preserving doubling iteration, followed by one Riccati sweep to
/// polish the fixed point. Returns K = -(R + BᵀPB)⁻¹BᵀPA.
template <typename Scalar>
DareSolution<Scalar> solve_dare(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& A,
                                const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& B,
                                const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& Q,
                                const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& R,
                                const DareSettings<Scalar>& settings = {}) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = A.rows();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != B.cols() ||
      R.cols() != B.cols())
    throw InvalidArgument("solve_dare: dimension mismatch");

  const Eigen::LDLT<Mat> R_ldlt(R);
  if (R_ldlt.info() != Eigen::Success || !R_ldlt.isPositive())
    throw InvalidArgument("solve_dare: R must be positive definite");

  const Mat I = Mat::Identity(n, n);
  Mat Ak = A;
  Mat Gk = B * R_ldlt.solve(B.transpose());
  Mat Hk = Q;
  Scalar change = std::numeric_limits<Scalar>::infinity();
  int it = 0;
  for (; it < settings.max_iterations; ++it) {
    const Eigen::PartialPivLU<Mat> W(I + Gk * Hk);
    const Mat WinvA = W.solve(Ak);
    const Mat WinvG = W.solve(Gk);
    Mat Hnext = Hk + Ak.transpose() * Hk * WinvA;
    Mat Gnext = Gk + Ak * WinvG * Ak.transpose();
    Ak = Ak * WinvA;
    Hnext = Scalar(0.5) * (Hnext + Hnext.transpose()).eval();
    Gnext = Scalar(0.5) * (Gnext + Gnext.transpose()).eval();
    change = (Hnext - Hk).norm();
    Hk = std::move(Hnext);
    Gk = std::move(Gnext);
    if (!Hk.allFinite()) break;
    if (change <= settings.tolerance * (Scalar(1) + Hk.norm())) {
      ++it;
      break;
    }
  }

  DareSolution<Scalar> sol;
  sol.iterations = it;
  if (!Hk.allFinite()) throw DareError("solve_dare: iteration diverged", std::numeric_limits<double>::infinity(), it);

  // One Riccati sweep from the doubling fixed point.
  Mat P = Hk;
  {
    const Mat BtPA = B.transpose() * P * A;
    const Mat S = R + B.transpose() * P * B;
    P = A.transpose() * P * A - BtPA.transpose() * S.ldlt().solve(BtPA) + Q;
    P = Scalar(0.5) * (P + P.transpose()).eval();
  }
  sol.residual = dare_residual<Scalar>(A, B, Q, R, P);
  if (change > settings.tolerance * (Scalar(1) + Hk.norm()) ||
      sol.residual >= Scalar(1e-8) * (Scalar(1) + P.norm())) {
    throw DareError("solve_dare: no convergence", static_cast<double>(sol.residual), it);
  }
  const Mat S = R + B.transpose() * P * B;
  sol.K = -S.ldlt().solve(B.transpose() * P * A);
  sol.P = std::move(P);
  return sol;
}

/// Jacobian of A x̄ + B(δ) v̄ with respect to δ at δ̄.
template <typename Scalar>
ParamJacobian<Scalar> param_jacobian(const RobotState<Scalar>& /*mean_state*/, const GrfCommand<Scalar>& mean_control,
                                     const ParamVector<Scalar>& delta, Scalar yaw, Scalar dt) {
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
  validate_params(delta);
  ParamJacobian<Scalar> P = ParamJacobian<Scalar>::Zero();
  const Scalar mass = delta(pidx::kMass);
  const Vec3 inertia = delta.template segment<3>(pidx::kInertia);
  const Mat3 Rz = yaw_rotation(yaw);
  const Mat3 Iinv = Rz * inertia.cwiseInverse().asDiagonal() * Rz.transpose();

  Vec3 force_sum = Vec3::Zero();
  Vec3 torque = Vec3::Zero();
  for (int leg = 0; leg < dims::kLegs; ++leg) {
    const Vec3 f = mean_control.foot(leg);
    const Vec3 r = delta.template segment<3>(pidx::kFeet + 3 * leg);
    force_sum += f;
    torque += r.cross(f);
    P.template block<3, 3>(idx::kOmega, pidx::kFeet + 3 * leg) = -Iinv * skew(f) * dt;
  }
  P.template block<3, 1>(idx::kVel, pidx::kMass) = -force_sum * (dt / (mass * mass));

  // d(Rz diag(1/I) Rzᵀ)/dI_k = -Rz e_k e_kᵀ Rzᵀ / I_k²
  const Vec3 torque_body = Rz.transpose() * torque;
  for (int k = 0; k < 3; ++k) {
    P.template block<3, 1>(idx::kOmega, pidx::kInertia + k) =
        -Rz.col(k) * (torque_body(k) * dt / (inertia(k) * inertia(k)));
  }
  return P;
}

/// Symmetrizes and clamps negative eigenvalues to zero. Returns the most
/// negative eigenvalue seen before clamping (0 when none).
template <typename Derived>
typename Derived::Scalar make_psd(Eigen::MatrixBase<Derived>& S) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Derived::RowsAtCompileTime, Derived::ColsAtCompileTime>;
  S = Scalar(0.5) * (S + S.transpose()).eval();
  const Eigen::LDLT<Mat> ldlt(S);
  if (ldlt.info() == Eigen::Success && (ldlt.vectorD().array() >= 0).all()) return Scalar(0);
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  Eigen::Matrix<Scalar, Derived::RowsAtCompileTime, 1> lambda = es.eigenvalues();
  const Scalar min_eig = lambda.minCoeff();
  if (min_eig >= 0) return Scalar(0);
  lambda = lambda.cwiseMax(Scalar(0));
  S = es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
  S = Scalar(0.5) * (S + S.transpose()).eval();
  return min_eig;
}

template <typename Scalar>
StateMatrix<Scalar> propagate_covariance(const StateMatrix<Scalar>& sigma_x, const StateMatrix<Scalar>& A_cl,
                                         const ParamJacobian<Scalar>& P, const ParamVector<Scalar>& sigma_delta,
                                         const StateVector<Scalar>& sigma_w) {
  StateMatrix<Scalar> next = A_cl * sigma_x * A_cl.transpose() + P * sigma_delta.asDiagonal() * P.transpose();
  next.diagonal() += sigma_w;
  make_psd(next);
  return next;
}

template <typename Scalar>
ControlCovariance<Scalar> control_covariance(const GainMatrix<Scalar>& K, const StateMatrix<Scalar>& sigma_x) {
  ControlCovariance<Scalar> sigma_u = K * sigma_x * K.transpose();
  make_psd(sigma_u);
  return sigma_u;
}

/// Weights and numerical settings for the feedback gains used in covariance propagation.
template <typename Scalar>
struct FeedbackDesign {
  StateVector<Scalar> Q_diag = StateVector<Scalar>::Zero();
  ControlVector<Scalar> R_diag = ControlVector<Scalar>::Constant(Scalar(1e-6));
  // Lower bound applied to the Q diagonal of the 12 controlled states so the
  // Riccati solution is stabilizing on every mode.
  Scalar q_floor = Scalar(1e-6);
  // Relative max-norm change in (A, B) below which a cached gain is reused.
  Scalar cache_tolerance = Scalar(0);
  // Gains kept across ticks; the horizon shifts one step per tick, so one slot per step.
  int cache_slots = 16;
  DareSettings<Scalar> dare{};
};

/// Computes feedback gains on the 12 controllable states (gravity excluded) and
/// reuses the previous gain while (A, B) stay within the cache tolerance.
template <typename Scalar>
class GainCache {
 public:
  explicit GainCache(FeedbackDesign<Scalar> design = {}) : design_(std::move(design)) {}

  const FeedbackDesign<Scalar>& design() const { return design_; }

  GainMatrix<Scalar> gain(const StateMatrix<Scalar>& A, const ControlMatrix<Scalar>& B) {
    ++clock_;
    for (Entry& e : entries_) {
      if (within_tolerance(e, A, B)) {
        e.used = clock_;
        ++hits_;
        return e.K;
      }
    }
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    constexpr int n = dims::kState - 1;
    const Mat a = A.template topLeftCorner<n, n>();
    const Mat b = B.template topRows<n>();
    Mat q = Mat::Zero(n, n);
    q.diagonal() = design_.Q_diag.template head<n>().cwiseMax(design_.q_floor);
    const Mat r = design_.R_diag.asDiagonal();
    const DareSolution<Scalar> sol = solve_dare<Scalar>(a, b, q, r, design_.dare);
    Entry fresh{A, B, GainMatrix<Scalar>::Zero(), clock_};
    fresh.K.template leftCols<n>() = sol.K;
    ++solves_;
    if (static_cast<int>(entries_.size()) < std::max(design_.cache_slots, 1)) {
      entries_.push_back(fresh);
    } else {
      auto oldest = std::min_element(entries_.begin(), entries_.end(),
                                     [](const Entry& l, const Entry& r) { return l.used < r.used; });
      *oldest = fresh;
    }
    return fresh.K;
  }

  void reset() {
    entries_.clear();
    clock_ = 0;
  }
  long solves() const { return solves_; }
  long hits() const { return hits_; }

 private:
  struct Entry {
    StateMatrix<Scalar> A;
    ControlMatrix<Scalar> B;
    GainMatrix<Scalar> K;
    long used;
  };

  bool within_tolerance(const Entry& e, const StateMatrix<Scalar>& A, const ControlMatrix<Scalar>& B) const {
    const Scalar tol = design_.cache_tolerance;
    if (tol <= 0) return A == e.A && B == e.B;
    const Scalar scale_b = std::max(e.B.cwiseAbs().maxCoeff(), Scalar(1e-12));
    return (A - e.A).cwiseAbs().maxCoeff() <= tol && (B - e.B).cwiseAbs().maxCoeff() <= tol * scale_b;
  }

  FeedbackDesign<Scalar> design_;
  std::vector<Entry> entries_;
  long clock_ = 0;
  long solves_ = 0;
  long hits_ = 0;
};

/// Constraint tightening loop: Σ_x[0] = 0, then per step gain, control
/// covariance and state covariance update.
template <typename Scalar>
CovarianceTrajectory<Scalar> build_covariance_trajectory(const std::vector<StateMatrix<Scalar>>& A_list,
                                                         const std::vector<ControlMatrix<Scalar>>& B_list,
                                                         const std::vector<ParamVector<Scalar>>& delta_list,
                                                         const std::vector<GrfCommand<Scalar>>& v_list,
                                                         const std::vector<RobotState<Scalar>>& x_list,
                                                         const std::vector<Scalar>& yaw_list,
                                                         const DisturbanceModel<Scalar>& model, Scalar dt,
                                                         GainCache<Scalar>& gains, int horizon) {
  const auto N = static_cast<std::size_t>(horizon);
  if (A_list.size() != N || B_list.size() != N || delta_list.size() != N || v_list.size() != N ||
      x_list.size() != N || yaw_list.size() != N)
    throw InvalidArgument("build_covariance_trajectory: list lengths must equal the horizon");

  CovarianceTrajectory<Scalar> traj;
  traj.sigma_x.reserve(N + 1);
  traj.sigma_u.reserve(N);
  traj.gains.reserve(N);
  traj.sigma_x.push_back(StateMatrix<Scalar>::Zero());
  for (std::size_t i = 0; i < N; ++i) {
    const GainMatrix<Scalar> K = gains.gain(A_list[i], B_list[i]);
    traj.gains.push_back(K);
    traj.sigma_u.push_back(control_covariance<Scalar>(K, traj.sigma_x[i]));
    const StateMatrix<Scalar> A_cl = A_list[i] + B_list[i] * K;
    const ParamJacobian<Scalar> P = param_jacobian<Scalar>(x_list[i], v_list[i], delta_list[i], yaw_list[i], dt);
    traj.sigma_x.push_back(propagate_covariance<Scalar>(traj.sigma_x[i], A_cl, P, model.sigma_delta, model.sigma_w));
  }
  return traj;
}

}  // namespace ccmpc

#endif  // CCMPC_UNCERTAINTY_HPP
