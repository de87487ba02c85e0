#include "ccmpc/mpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace ccmpc {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_us(Clock::time_point since) {
  return std::chrono::duration<double, std::micro>(Clock::now() - since).count();
}

int stance_count(const ContactFlags& c) { return static_cast<int>(std::count(c.begin(), c.end(), true)); }

constexpr std::array<RowKind, dims::kRowsPerFoot> kFootRows{RowKind::PyramidPlusX, RowKind::PyramidMinusX,
                                                            RowKind::PyramidPlusY, RowKind::PyramidMinusY,
                                                            RowKind::Unilateral};

}  // namespace

std::string_view to_string(ControllerMode mode) {
  switch (mode) {
    case ControllerMode::LMPC: return "lmpc";
    case ControllerMode::HMPC: return "hmpc";
    case ControllerMode::CCMPC: return "ccmpc";
  }
  return "unknown";
}

ControllerMode mode_from_string(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (lower == "lmpc") return ControllerMode::LMPC;
  if (lower == "hmpc") return ControllerMode::HMPC;
  if (lower == "ccmpc") return ControllerMode::CCMPC;
  throw InvalidArgument("unknown controller mode '" + std::string(name) + "' (expected lmpc, hmpc or ccmpc)");
}

StateVector<double> default_state_weights() {
  StateVector<double> q;
  //   roll pitch yaw  x    y    z      ωx   ωy   ωz   vx    vy   vz   g
  q << 0.2, 0.2, 0.0, 0.0, 0.0, 500.0, 0.2, 0.2, 1.0, 20.0, 5.0, 0.0, 0.0;
  return q;
}

void MpcConfig::validate() const {
  if (horizon < 1) throw InvalidArgument("horizon must be at least 1");
  if (!(dt > 0)) throw InvalidArgument("dt must be positive");
  if (!(Q_diag.array() >= 0).all()) throw InvalidArgument("state weights must be nonnegative");
  if (!(R_diag.array() > 0).all()) throw InvalidArgument("control weights must be positive");
  if (!(epsilon > 0 && epsilon < 1)) throw InvalidArgument("epsilon must lie in (0, 1)");
  if (!(hmpc_offsets.array() <= 0).all()) throw InvalidArgument("heuristic offsets must be nonpositive");
  model.validate();
}

Eigen::VectorXd MpcProblem::expand(const Eigen::VectorXd& reduced) const {
  Eigen::VectorXd full = Eigen::VectorXd::Zero(dims::kControl * horizon);
  for (int i = 0; i < horizon; ++i) {
    for (int leg = 0; leg < dims::kLegs; ++leg) {
      const int o = var_index[static_cast<std::size_t>(i)][static_cast<std::size_t>(leg)];
      if (o >= 0) full.segment<3>(dims::kControl * i + 3 * leg) = reduced.segment<3>(o);
    }
  }
  return full;
}

MpcProblem build_qp(const QpBuildInputs& in) {
  if (!in.prediction) throw InvalidArgument("build_qp: missing prediction operators");
  const Prediction<double>& pred = *in.prediction;
  const int N = pred.horizon();
  constexpr int nx = dims::kState;
  constexpr int nu = dims::kControl;
  if (pred.Phi.cols() != nx || pred.Gamma.rows() != nx * N || pred.Gamma.cols() != nu * N)
    throw InvalidArgument("build_qp: prediction operators have inconsistent dimensions");
  if (static_cast<int>(in.x_ref.size()) != N || static_cast<int>(in.offsets.size()) != N ||
      static_cast<int>(in.contacts.size()) != N)
    throw InvalidArgument("build_qp: reference, offsets and contacts must have one entry per horizon step");

  MpcProblem prob;
  prob.horizon = N;
  prob.x0 = in.x0;
  prob.x_ref = in.x_ref;
  prob.var_index.assign(static_cast<std::size_t>(N), {-1, -1, -1, -1});

  std::vector<Eigen::Index> columns;
  for (int i = 0; i < N; ++i) {
    for (int leg = 0; leg < dims::kLegs; ++leg) {
      if (!in.contacts[static_cast<std::size_t>(i)][static_cast<std::size_t>(leg)]) continue;
      prob.var_index[static_cast<std::size_t>(i)][static_cast<std::size_t>(leg)] = static_cast<int>(columns.size());
      for (int k = 0; k < 3; ++k) columns.push_back(nu * i + 3 * leg + k);
    }
  }
  const auto nv = static_cast<Eigen::Index>(columns.size());

  prob.free_response = pred.Phi * in.x0;
  prob.Gamma = pred.Gamma;

  Eigen::MatrixXd G(nx * N, nv);
  for (Eigen::Index c = 0; c < nv; ++c) G.col(c) = pred.Gamma.col(columns[static_cast<std::size_t>(c)]);

  Eigen::VectorXd q_bar(nx * N);
  Eigen::VectorXd ref(nx * N);
  for (int i = 0; i < N; ++i) {
    q_bar.segment<nx>(nx * i) = in.Q_diag;
    ref.segment<nx>(nx * i) = in.x_ref[static_cast<std::size_t>(i)];
  }
  // H = 2 (Gᵀ Q̄ G + R̄), accumulated on the lower triangle and mirrored.
  const Eigen::MatrixXd WG = q_bar.cwiseSqrt().asDiagonal() * G;
  prob.qp.H = Eigen::MatrixXd::Zero(nv, nv);
  prob.qp.H.selfadjointView<Eigen::Lower>().rankUpdate(WG.transpose(), 2.0);
  prob.qp.H.triangularView<Eigen::StrictlyUpper>() = prob.qp.H.transpose();
  for (Eigen::Index c = 0; c < nv; ++c) prob.qp.H(c, c) += 2.0 * in.R_diag(columns[static_cast<std::size_t>(c)] % nu);
  prob.qp.g = 2.0 * (G.transpose() * (q_bar.asDiagonal() * (prob.free_response - ref)));

  // Five friction rows plus an upper bound on f_z per stance foot and step.
  const Eigen::Index m = (nv / 3) * (dims::kRowsPerFoot + 1);
  prob.qp.A = Eigen::MatrixXd::Zero(m, nv);
  prob.qp.b = Eigen::VectorXd::Zero(m);
  prob.row_tags.reserve(static_cast<std::size_t>(m));
  Eigen::Index r = 0;
  for (int i = 0; i < N; ++i) {
    const ConstraintVector<double>& c = in.offsets[static_cast<std::size_t>(i)];
    for (int leg = 0; leg < dims::kLegs; ++leg) {
      const int o = prob.var_index[static_cast<std::size_t>(i)][static_cast<std::size_t>(leg)];
      if (o < 0) continue;
      const int r0 = dims::kRowsPerFoot * leg;
      for (int k = 0; k < dims::kRowsPerFoot; ++k, ++r) {
        prob.qp.A.block<1, 3>(r, o) = in.constraints.C.block<1, 3>(r0 + k, 3 * leg);
        prob.qp.b(r) = in.constraints.b(r0 + k) + c(r0 + k);
        prob.row_tags.push_back({i, leg, kFootRows[static_cast<std::size_t>(k)]});
      }
      prob.qp.A(r, o + 2) = 1.0;
      prob.qp.b(r) = in.fz_max;
      prob.row_tags.push_back({i, leg, RowKind::UpperBound});
      ++r;
    }
  }
  return prob;
}

MpcSolution solve_qp(const MpcProblem& problem, const ActiveSetSolver<double>& solver,
                     const QpWarmStart<double>* warm) {
  MpcSolution sol;
  sol.raw = solver.solve(problem.qp, warm);
  sol.status = sol.raw.status;
  sol.iterations = sol.raw.iterations;
  sol.kkt_residual = sol.raw.kkt.max();

  const Eigen::VectorXd full = problem.expand(sol.raw.x);
  const Eigen::VectorXd means = problem.free_response + problem.Gamma * full;
  sol.v_star.resize(static_cast<std::size_t>(problem.horizon));
  sol.predicted_means.reserve(static_cast<std::size_t>(problem.horizon));
  for (int i = 0; i < problem.horizon; ++i) {
    sol.v_star[static_cast<std::size_t>(i)].forces = full.segment<dims::kControl>(dims::kControl * i);
    StateVector<double> x = means.segment<dims::kState>(dims::kState * i);
    x(idx::kGravity) = problem.x0(idx::kGravity);
    sol.predicted_means.push_back(RobotState<double>::unflatten(x));
  }
  return sol;
}

ConstraintVector<double> heuristic_tightening(double max_payload, double max_accel, double mu, int n_stance,
                                              double nominal_mass) {
  if (max_payload < 0 || max_accel < 0) throw InvalidArgument("heuristic_tightening: payload and acceleration must be nonnegative");
  if (!(mu > 0)) throw InvalidArgument("heuristic_tightening: friction coefficient must be positive");
  if (n_stance < 1) throw InvalidArgument("heuristic_tightening: need at least one stance foot");
  if (!(nominal_mass > 0)) throw InvalidArgument("heuristic_tightening: mass must be positive");
  const double vertical = max_payload * kGravity / n_stance;
  const double tangential = (nominal_mass + max_payload) * max_accel / n_stance;
  ConstraintVector<double> c;
  for (int leg = 0; leg < dims::kLegs; ++leg) {
    const int r0 = dims::kRowsPerFoot * leg;
    for (int k = 0; k < 4; ++k) c(r0 + k) = -tangential;
    c(r0 + row::kUnilateral) = -vertical;
  }
  return c;
}

std::vector<StateVector<double>> reference_trajectory(const RobotState<double>& state,
                                                      const Eigen::Vector3d& velocity_command, double yaw_rate,
                                                      double height, int horizon, double dt) {
  std::vector<StateVector<double>> ref;
  ref.reserve(static_cast<std::size_t>(std::max(horizon, 0)));
  Eigen::Vector3d p = state.position;
  double yaw = state.orientation.z();
  for (int k = 1; k <= horizon; ++k) {
    const Eigen::Vector3d v = yaw_rotation(yaw) * Eigen::Vector3d(velocity_command.x(), velocity_command.y(), 0.0);
    p += v * dt;
    yaw += yaw_rate * dt;
    RobotState<double> r;
    r.orientation = Eigen::Vector3d(0.0, 0.0, yaw);
    r.position = Eigen::Vector3d(p.x(), p.y(), height);
    r.angular_velocity = Eigen::Vector3d(0.0, 0.0, yaw_rate);
    r.linear_velocity = yaw_rotation(yaw) * Eigen::Vector3d(velocity_command.x(), velocity_command.y(), 0.0);
    r.gravity = state.gravity;
    ref.push_back(r.flatten());
  }
  return ref;
}

MpcController::MpcController(MpcConfig config, DisturbanceModel<double> disturbance, FeedbackDesign<double> feedback,
                             QpSettings<double> qp_settings)
    : config_(std::move(config)),
      disturbance_(std::move(disturbance)),
      gains_(std::move(feedback)),
      solver_(qp_settings) {
  config_.validate();
  disturbance_.validate();
  constraints_ = build_friction_matrix(config_.model.friction_mu, config_.model.fz_min);
  alpha_ = uniform_risk(config_.epsilon, dims::kLegs);
}

void MpcController::reset() {
  sigma_u_cache_.clear();
  previous_plan_.clear();
  gains_.reset();
}

ConstraintVector<double> MpcController::offsets_for_step(int step, const FrictionConstraintSet<double>& set) const {
  switch (config_.mode) {
    case ControllerMode::LMPC: return ConstraintVector<double>::Zero();
    case ControllerMode::HMPC: return config_.hmpc_offsets;
    case ControllerMode::CCMPC: {
      if (sigma_u_cache_.empty()) return ConstraintVector<double>::Zero();
      // The cached trajectory was computed one tick earlier, so step i now lines up with step i + 1 there.
      const auto last = static_cast<int>(sigma_u_cache_.size()) - 1;
      const int j = std::min(step + 1, last);
      return tightening_factors(set, sigma_u_cache_[static_cast<std::size_t>(j)], alpha_);
    }
  }
  return ConstraintVector<double>::Zero();
}

MpcStepResult MpcController::step(const MpcInput& input) {
  const auto t_start = Clock::now();
  const int N = config_.horizon;
  const double dt = config_.dt;
  if (static_cast<int>(input.x_ref.size()) != N || static_cast<int>(input.contacts.size()) != N ||
      static_cast<int>(input.feet_world.size()) != N)
    throw InvalidArgument("mpc step: reference, contacts and foot positions must cover the horizon");

  const ModelParams<double>& model = config_.model;
  const StateVector<double> x0 = input.state.flatten();

  std::vector<StateMatrix<double>> A_list(static_cast<std::size_t>(N));
  std::vector<ControlMatrix<double>> B_list(static_cast<std::size_t>(N));
  std::vector<ParamVector<double>> delta_list(static_cast<std::size_t>(N));
  std::vector<double> yaw_list(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    const auto si = static_cast<std::size_t>(i);
    const StateVector<double>& anchor = i == 0 ? x0 : input.x_ref[si - 1];
    const double yaw = anchor(idx::kTheta + 2);
    // Lever arms at the interval midpoint; the body keeps moving while the force is held.
    const Eigen::Vector3d com = anchor.segment<3>(idx::kPos) + 0.5 * dt * anchor.segment<3>(idx::kVel);
    Eigen::Matrix<double, 3, 4> rel = input.feet_world[si].colwise() - com;
    delta_list[si] = make_param_vector(model.mass, model.inertia_diag, rel);
    yaw_list[si] = yaw;
    A_list[si] = build_state_matrix(yaw, dt);
    B_list[si] = build_control_matrix(delta_list[si], yaw, dt);
  }
  const Prediction<double> pred = condense(A_list, B_list);

  QpBuildInputs in;
  in.prediction = &pred;
  in.x0 = x0;
  in.x_ref = input.x_ref;
  in.Q_diag = config_.Q_diag;
  in.R_diag = config_.R_diag;
  in.constraints = constraints_;
  in.contacts = input.contacts;
  in.fz_max = model.fz_max;
  in.offsets.reserve(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) in.offsets.push_back(offsets_for_step(i, constraints_));
  const MpcProblem problem = build_qp(in);

  MpcStepResult out;
  out.diagnostics.tightening = in.offsets.front();
  for (const auto& c : in.offsets) out.diagnostics.max_tightening = std::max(out.diagnostics.max_tightening, -c.minCoeff());

  // Warm start: previous plan shifted by one step, then pushed into the current bounds.
  QpWarmStart<double> warm;
  const Eigen::Index nv = problem.num_variables();
  warm.x = Eigen::VectorXd::Zero(nv);
  for (int i = 0; i < N; ++i) {
    const int n_stance = stance_count(input.contacts[static_cast<std::size_t>(i)]);
    for (int leg = 0; leg < dims::kLegs; ++leg) {
      const int o = problem.var_index[static_cast<std::size_t>(i)][static_cast<std::size_t>(leg)];
      if (o < 0) continue;
      Eigen::Vector3d f(0.0, 0.0, model.mass * kGravity / n_stance);
      if (!previous_plan_.empty()) {
        const auto j = static_cast<std::size_t>(std::min(i + 1, N - 1));
        const Eigen::Vector3d prev = previous_plan_[std::min(j, previous_plan_.size() - 1)].foot(leg);
        if (prev.z() > 0) f = prev;
      }
      const ConstraintVector<double>& c = in.offsets[static_cast<std::size_t>(i)];
      const int r0 = dims::kRowsPerFoot * leg;
      const double mu = constraints_.mu;
      auto fz_floor = [&](const Eigen::Vector3d& g) {
        double lo = constraints_.b(r0 + row::kUnilateral) * -1.0 - c(r0 + row::kUnilateral);
        lo = std::max(lo, (g.x() - c(r0 + row::kPlusX)) / mu);
        lo = std::max(lo, (-g.x() - c(r0 + row::kMinusX)) / mu);
        lo = std::max(lo, (g.y() - c(r0 + row::kPlusY)) / mu);
        lo = std::max(lo, (-g.y() - c(r0 + row::kMinusY)) / mu);
        return lo;
      };
      double lo = fz_floor(f);
      if (lo > model.fz_max) {
        f.head<2>().setZero();
        lo = fz_floor(f);
      }
      f.z() = std::clamp(f.z(), std::min(lo, model.fz_max), model.fz_max);
      warm.x.segment<3>(o) = f;
    }
  }
  warm.active_set.resize(static_cast<std::size_t>(problem.qp.num_constraints()));
  for (std::size_t k = 0; k < warm.active_set.size(); ++k) warm.active_set[k] = static_cast<int>(k);

  const auto t_qp = Clock::now();
  out.solution = solve_qp(problem, solver_, &warm);
  out.diagnostics.qp_time_us = elapsed_us(t_qp);
  out.diagnostics.status = out.solution.status;
  out.diagnostics.iterations = out.solution.iterations;
  out.diagnostics.kkt = out.solution.raw.kkt;
  out.diagnostics.used_fallback = out.solution.raw.used_fallback;

  if (out.solution.status == QpStatus::Infeasible) {
    previous_plan_.clear();
    out.diagnostics.solve_time_us = elapsed_us(t_start);
    return out;
  }
  out.command = out.solution.v_star.front();
  out.command.zero_swing(input.contacts.front());
  previous_plan_ = out.solution.v_star;

  if (config_.mode == ControllerMode::CCMPC) {
    std::vector<RobotState<double>> x_list;
    x_list.reserve(static_cast<std::size_t>(N));
    x_list.push_back(input.state);
    for (int i = 0; i + 1 < N; ++i) x_list.push_back(out.solution.predicted_means[static_cast<std::size_t>(i)]);
    try {
      CovarianceTrajectory<double> traj = build_covariance_trajectory(
          A_list, B_list, delta_list, out.solution.v_star, x_list, yaw_list, disturbance_, dt, gains_, N);
      sigma_u_cache_ = std::move(traj.sigma_u);
    } catch (const DareError&) {
      out.diagnostics.dare_failed = true;  // keep the previous tightening
    }
  }
  out.diagnostics.solve_time_us = elapsed_us(t_start);
  return out;
}

}  // namespace ccmpc
