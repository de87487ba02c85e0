#ifndef CCMPC_MPC_HPP
#define CCMPC_MPC_HPP

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ccmpc/chance_constraints.hpp"
#include "ccmpc/qp_solver.hpp"
#include "ccmpc/srbd_model.hpp"
#include "ccmpc/types.hpp"
#include "ccmpc/uncertainty.hpp"

namespace ccmpc {

enum class ControllerMode { LMPC, HMPC, CCMPC };

std::string_view to_string(ControllerMode mode);
ControllerMode mode_from_string(std::string_view name);

/// Stage weights on [Θ, p, ω, ṗ, g]: roll/pitch 0.2, z 500, ω (0.2, 0.2, 1.0), ṗ (20, 5, 0).
StateVector<double> default_state_weights();

struct MpcConfig {
  int horizon = 10;
  double dt = 0.025;
  StateVector<double> Q_diag = default_state_weights();
  ControlVector<double> R_diag = ControlVector<double>::Constant(1e-6);
  ControllerMode mode = ControllerMode::CCMPC;
  double epsilon = 0.95;
  ConstraintVector<double> hmpc_offsets = ConstraintVector<double>::Zero();
  ModelParams<double> model{};

  void validate() const;
};

/// Single-shooting prediction x̄ = Φ x0 + Γ v, stacked over x̄_1 … x̄_N.
template <typename Scalar>
struct Prediction {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> Phi;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> Gamma;
  int horizon() const { return static_cast<int>(Phi.rows() / dims::kState); }
};

template <typename Scalar>
Prediction<Scalar> condense(const std::vector<StateMatrix<Scalar>>& A_list,
                            const std::vector<ControlMatrix<Scalar>>& B_list) {
  if (A_list.size() != B_list.size() || A_list.empty())
    throw InvalidArgument("condense: A and B lists must be non-empty and of equal length");
  constexpr int nx = dims::kState;
  constexpr int nu = dims::kControl;
  const auto N = static_cast<Eigen::Index>(A_list.size());
  Prediction<Scalar> pred;
  pred.Phi.resize(nx * N, nx);
  pred.Gamma.setZero(nx * N, nu * N);
  StateMatrix<Scalar> chain = StateMatrix<Scalar>::Identity();
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto& A = A_list[static_cast<std::size_t>(i)];
    chain = A * chain;
    pred.Phi.template block<nx, nx>(nx * i, 0) = chain;
    pred.Gamma.template block<nx, nu>(nx * i, nu * i) = B_list[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < i; ++j) {
      pred.Gamma.template block<nx, nu>(nx * i, nu * j) = A * pred.Gamma.template block<nx, nu>(nx * (i - 1), nu * j);
    }
  }
  return pred;
}

/// Kind of a QP inequality row, used for diagnostics and tests.
enum class RowKind { PyramidPlusX, PyramidMinusX, PyramidPlusY, PyramidMinusY, Unilateral, UpperBound };

struct RowTag {
  int step = 0;
  int leg = 0;
  RowKind kind = RowKind::Unilateral;
};

struct MpcProblem {
  QuadProgram<double> qp;
  int horizon = 0;
  // Offset of each stance foot's 3 variables in the decision vector, -1 for swing feet.
  std::vector<std::array<int, dims::kLegs>> var_index;
  std::vector<RowTag> row_tags;
  Eigen::VectorXd free_response;  // Φ x0
  Eigen::MatrixXd Gamma;          // full Γ (all 12N inputs)
  std::vector<StateVector<double>> x_ref;
  StateVector<double> x0 = StateVector<double>::Zero();

  Eigen::Index num_variables() const { return qp.num_variables(); }
  /// Expands a reduced decision vector into N stacked 12-vectors with exact zeros on swing feet.
  Eigen::VectorXd expand(const Eigen::VectorXd& reduced) const;
};

struct QpBuildInputs {
  const Prediction<double>* prediction = nullptr;
  StateVector<double> x0 = StateVector<double>::Zero();
  std::vector<StateVector<double>> x_ref;  // references for x̄_1 … x̄_N
  StateVector<double> Q_diag = StateVector<double>::Zero();
  ControlVector<double> R_diag = ControlVector<double>::Zero();
  FrictionConstraintSet<double> constraints{};
  std::vector<ConstraintVector<double>> offsets;  // c_i per step (nonpositive)
  std::vector<ContactFlags> contacts;
  double fz_max = 0;
};

MpcProblem build_qp(const QpBuildInputs& in);

struct MpcSolution {
  std::vector<GrfCommand<double>> v_star;
  std::vector<RobotState<double>> predicted_means;  // x̄_1 … x̄_N
  QpStatus status = QpStatus::MaxIterations;
  double kkt_residual = 0;
  int iterations = 0;
  QpResult<double> raw;
};

MpcSolution solve_qp(const MpcProblem& problem, const ActiveSetSolver<double>& solver,
                     const QpWarmStart<double>* warm = nullptr);

/// Constant tightening: unilateral rows by the payload weight shared over the
/// stance feet, pyramid rows by the tangential force needed to accelerate the
/// loaded body at max_accel, shared over the stance feet.
ConstraintVector<double> heuristic_tightening(double max_payload, double max_accel, double mu, int n_stance,
                                              double nominal_mass);

/// Integrates commanded planar velocity and yaw rate from the current pose at
/// constant height; roll and pitch references are zero.
std::vector<StateVector<double>> reference_trajectory(const RobotState<double>& state,
                                                      const Eigen::Vector3d& velocity_command, double yaw_rate,
                                                      double height, int horizon, double dt);

/// Everything the controller needs for one tick.
struct MpcInput {
  RobotState<double> state{};
  std::vector<StateVector<double>> x_ref;              // N references for x̄_1 … x̄_N
  std::vector<ContactFlags> contacts;                  // N
  std::vector<Eigen::Matrix<double, 3, 4>> feet_world;  // N, world-frame foot positions per step
};

struct MpcDiagnostics {
  double solve_time_us = 0;      // whole tick, including tightening
  double qp_time_us = 0;
  int iterations = 0;
  QpStatus status = QpStatus::MaxIterations;
  KktResiduals<double> kkt{};
  ConstraintVector<double> tightening = ConstraintVector<double>::Zero();  // factors used on step 0
  double max_tightening = 0;     // largest |c| over the horizon
  bool dare_failed = false;
  bool used_fallback = false;
};

struct MpcStepResult {
  GrfCommand<double> command{};
  MpcDiagnostics diagnostics{};
  MpcSolution solution{};
};

/// Receding-horizon controller. One instance per episode: it owns the warm
/// start and the tightening cache carried between ticks.
class MpcController {
 public:
  MpcController(MpcConfig config, DisturbanceModel<double> disturbance = {}, FeedbackDesign<double> feedback = {},
                QpSettings<double> qp_settings = {});

  MpcStepResult step(const MpcInput& input);
  void reset();

  const MpcConfig& config() const { return config_; }
  const DisturbanceModel<double>& disturbance() const { return disturbance_; }
  const std::vector<ControlCovariance<double>>& cached_control_covariance() const { return sigma_u_cache_; }
  const GainCache<double>& gain_cache() const { return gains_; }

 private:
  ConstraintVector<double> offsets_for_step(int step, const FrictionConstraintSet<double>& set) const;

  MpcConfig config_;
  DisturbanceModel<double> disturbance_;
  GainCache<double> gains_;
  ActiveSetSolver<double> solver_;
  FrictionConstraintSet<double> constraints_;
  double alpha_ = 0;
  std::vector<ControlCovariance<double>> sigma_u_cache_;
  std::vector<GrfCommand<double>> previous_plan_;
};

}  // namespace ccmpc

#endif  // CCMPC_MPC_HPP
