// Acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "ccmpc/chance_constraints.hpp"
#include "ccmpc/config.hpp"
#include "ccmpc/records.hpp"
#include "ccmpc/simulator.hpp"
#include "ccmpc/uncertainty.hpp"
#include "oracles.hpp"

using namespace ccmpc;
using Mat = Eigen::MatrixXd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double min_eigenvalue(const Mat& S) { return Eigen::SelfAdjointEigenSolver<Mat>(S).eigenvalues().minCoeff(); }

const RunConfig& defaults() {
  static const RunConfig cfg = parse_config("");
  return cfg;
}

// ---------------------------------------------------------------- 1

Outcome collapse() {
  EpisodeConfig cfg = defaults().resolved_episode();
  cfg.duration = 2.0;
  cfg.record_trace = true;
  cfg.disturbance = DisturbanceModel<double>{};
  cfg.mpc.mode = ControllerMode::CCMPC;
  const EpisodeMetrics cc = run_episode(cfg);
  cfg.mpc.mode = ControllerMode::LMPC;
  const EpisodeMetrics lm = run_episode(cfg);
  if (cc.trace.size() != lm.trace.size() || cc.trace.empty()) return {false, "trace lengths differ"};
  double worst = 0;
  for (std::size_t k = 0; k < cc.trace.size(); ++k)
    worst = std::max(worst, (cc.trace[k].command.forces - lm.trace[k].command.forces).cwiseAbs().maxCoeff());
  return {worst < 1e-9 && cc.ticks == 80, fmt("%zu ticks, max |Δf| = %.3g N", cc.trace.size(), worst)};
}

// ---------------------------------------------------------------- 2

Outcome jacobian() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.5, 2.0);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const RobotState<double> x =
        RobotState<double>::unflatten(StateVector<double>::NullaryExpr([&] { return normal(rng); }));
    GrfCommand<double> v;
    v.forces = 30.0 * ControlVector<double>::NullaryExpr([&] { return normal(rng); });
    ParamVector<double> delta = ParamVector<double>::NullaryExpr([&] { return 0.3 * normal(rng); });
    delta(pidx::kMass) = 12.0 * uniform(rng);
    for (int k = 0; k < 3; ++k) delta(pidx::kInertia + k) = 0.1 * uniform(rng);
    const double yaw = 3.0 * normal(rng);
    const ParamJacobian<double> J = param_jacobian(x, v, delta, yaw, 0.025);
    const ParamJacobian<double> F = oracle::finite_difference_jacobian(x, v, delta, yaw, 0.025);
    worst = std::max(worst, (J - F).cwiseAbs().maxCoeff() / std::max(F.cwiseAbs().maxCoeff(), 1e-12));
  }
  return {worst < 1e-5, fmt("100 samples, max relative error %.3g", worst)};
}

// ---------------------------------------------------------------- 3

Outcome covariance() {
  const RunConfig& cfg = defaults();
  const MpcConfig& mpc = cfg.episode.mpc;
  const double dt = mpc.dt;
  const int N = 10;
  const DisturbanceModel<double> table = cfg.uncertainty.model(dt, mpc.epsilon);
  std::mt19937_64 rng(33);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  double worst_x = 0, worst_u = 0, first_u = 0;
  for (int trial = 0; trial < 100; ++trial) {
    GainCache<double> gains(cfg.uncertainty.feedback(mpc));
    std::vector<StateMatrix<double>> A;
    std::vector<ControlMatrix<double>> B;
    std::vector<ParamVector<double>> delta;
    std::vector<GrfCommand<double>> v;
    std::vector<RobotState<double>> x;
    std::vector<double> yaw;
    double psi = M_PI * (2 * uniform(rng) - 1);
    for (int i = 0; i < N; ++i) {
      RobotState<double> s;
      s.orientation = {0.1 * normal(rng), 0.1 * normal(rng), psi};
      s.position = {normal(rng), normal(rng), 0.3 + 0.02 * normal(rng)};
      s.angular_velocity = 0.5 * Eigen::Vector3d::NullaryExpr([&] { return normal(rng); });
      s.linear_velocity = 0.3 * Eigen::Vector3d::NullaryExpr([&] { return normal(rng); });
      Eigen::Matrix<double, 3, 4> rel;
      rel << 0.19, 0.19, -0.19, -0.19, -0.13, 0.13, -0.13, 0.13, -0.3, -0.3, -0.3, -0.3;
      rel += 0.05 * Eigen::Matrix<double, 3, 4>::NullaryExpr([&] { return normal(rng); });
      GrfCommand<double> u;
      for (int leg = 0; leg < 4; ++leg) {
        if (uniform(rng) < 0.3) continue;  // swing
        u.forces.segment<3>(3 * leg) << 10 * normal(rng), 10 * normal(rng), 80 * uniform(rng);
      }
      const ParamVector<double> d = make_param_vector(mpc.model.mass, mpc.model.inertia_diag, rel);
      A.push_back(build_state_matrix(psi, dt));
      B.push_back(build_control_matrix(d, psi, dt));
      delta.push_back(d);
      v.push_back(u);
      x.push_back(s);
      yaw.push_back(psi);
      psi += 0.05 * normal(rng);
    }
    const auto traj = build_covariance_trajectory(A, B, delta, v, x, yaw, table, dt, gains, N);
    for (const auto& S : traj.sigma_x) worst_x = std::min(worst_x, min_eigenvalue(S));
    for (const auto& S : traj.sigma_u) worst_u = std::min(worst_u, min_eigenvalue(S));
    first_u = std::max(first_u, traj.sigma_u.front().cwiseAbs().maxCoeff());
  }
  return {worst_x >= -1e-10 && worst_u >= -1e-10 && first_u == 0.0,
          fmt("min eig Σx %.3g, Σu %.3g, max |Σu[0]| %.3g", worst_x, worst_u, first_u)};
}

// ---------------------------------------------------------------- 4

Outcome quantile() {
  double worst = 0;
  const int points = 10000;
  for (int k = 0; k < points; ++k) {
    // Half the points log-spaced into each tail, half uniform over the interior.
    double p;
    const double s = (k + 0.5) / points;
    if (k % 2 == 0) {
      p = std::pow(10.0, -6.0 + 5.7 * s);
      if (k % 4 == 0) p = 1.0 - p;
    } else {
      p = 1e-6 + (1 - 2e-6) * s;
    }
    worst = std::max(worst, std::abs(inverse_normal_cdf(p) - oracle::bisect_quantile(p)));
  }
  const double z = inverse_normal_cdf(0.9975);
  return {worst < 1e-7 && std::abs(z - 2.8070) < 5e-5, fmt("max |Δz| %.3g on %d points, φ⁻¹(0.9975) = %.6f", worst, points, z)};
}

// ---------------------------------------------------------------- 5

Outcome calibration() {
  const MpcConfig& mpc = defaults().episode.mpc;
  const FrictionConstraintSet<double> set = build_friction_matrix(mpc.model.friction_mu, mpc.model.fz_min);
  const double alpha = uniform_risk(mpc.epsilon, dims::kLegs);
  std::mt19937_64 rng(55);
  std::normal_distribution<double> normal;
  const Eigen::Matrix<double, 12, 12> L =
      2.0 * Eigen::Matrix<double, 12, 12>::NullaryExpr([&] { return normal(rng); }) / std::sqrt(12.0);
  const ControlCovariance<double> S = L * L.transpose();
  const ConstraintVector<double> c = tightening_factors(set, S, alpha);

  // Each foot puts one opposing pair of pyramid rows on its tightened boundary;
  // the other pair and the unilateral row hold with margin.
  ControlVector<double> mean = ControlVector<double>::Zero();
  for (int leg = 0; leg < 4; ++leg) {
    const int r = dims::kRowsPerFoot * leg;
    const double fz_x = -(c(r + row::kPlusX) + c(r + row::kMinusX)) / (2 * mpc.model.friction_mu);
    const double fz_y = -(c(r + row::kPlusY) + c(r + row::kMinusY)) / (2 * mpc.model.friction_mu);
    const double fz = std::max(fz_x, fz_y);
    mean(3 * leg + 2) = fz;
    if (fz == fz_x) {
      mean(3 * leg) = 0.5 * (c(r + row::kPlusX) - c(r + row::kMinusX));
    } else {
      mean(3 * leg + 1) = 0.5 * (c(r + row::kPlusY) - c(r + row::kMinusY));
    }
  }
  const ConstraintVector<double> slack = set.C * mean - set.b - c;
  if (slack.maxCoeff() > 1e-9) return {false, "synthetic mean violates the tightened constraints"};
  int tight_row = 0;
  slack.maxCoeff(&tight_row);

  const long samples = 1000000;
  long single = 0, joint = 0;
  for (long s = 0; s < samples; ++s) {
    const ControlVector<double> z = ControlVector<double>::NullaryExpr([&] { return normal(rng); });
    const ConstraintVector<double> g = set.C * (mean + L * z) - set.b;
    single += g(tight_row) > 0;
    joint += g.maxCoeff() > 0;
  }
  const double rate = static_cast<double>(single) / samples;
  const double se = std::sqrt(alpha * (1 - alpha) / samples);
  const double joint_rate = static_cast<double>(joint) / samples;
  const double bound = 1 - mpc.epsilon;
  const double joint_se = std::sqrt(bound * (1 - bound) / samples);
  return {std::abs(rate - alpha) < 3 * se && joint_rate <= bound + 3 * joint_se,
          fmt("row %d: %.5f vs α %.4f (3 SE %.5f); joint %.5f ≤ %.3f + %.5f", tight_row, rate, alpha, 3 * se,
              joint_rate, bound, 3 * joint_se)};
}

// ---------------------------------------------------------------- 6

Outcome qp_oracle() {
  std::mt19937_64 rng(66);
  std::uniform_int_distribution<int> vars(2, 24), rows(1, 40);
  const ActiveSetSolver<double> solver;
  double worst_obj = 0, worst_x = 0, worst_kkt = 0;
  int mismatches = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = vars(rng), m = rows(rng);
    const int active = std::uniform_int_distribution<int>(0, std::min({n, m, 5}))(rng);
    const oracle::PlantedQp planted = oracle::planted_qp(rng, n, m, active);
    const QpResult<double> r = solver.solve(planted.qp);
    const oracle::BruteForceQp ref = oracle::brute_force_qp(planted.qp, std::min(n, m));
    if (r.status != QpStatus::Optimal || !ref.found) {
      ++mismatches;
      continue;
    }
    worst_obj = std::max(worst_obj, std::abs(r.objective - ref.objective) / (1 + std::abs(ref.objective)));
    worst_x = std::max(worst_x, (r.x - ref.x).norm());
    worst_kkt = std::max(worst_kkt, r.kkt.max());
  }
  return {mismatches == 0 && worst_obj < 1e-6 && worst_x < 1e-6 && worst_kkt < 1e-6,
          fmt("50 QPs, %d unsolved, max Δobj %.3g, max ‖Δx‖ %.3g, max KKT %.3g", mismatches, worst_obj, worst_x,
              worst_kkt)};
}

// ---------------------------------------------------------------- 7

Outcome dare() {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> states(1, 8);
  double worst_res = 0, worst_rho = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = states(rng);
    const int m = std::uniform_int_distribution<int>(1, n)(rng);
    const Mat A = Mat::NullaryExpr(n, n, [&] { return 1.2 * normal(rng) / std::sqrt(n); });
    const Mat B = Mat::NullaryExpr(n, m, [&] { return normal(rng); });
    Mat Lq = Mat::NullaryExpr(n, n, [&] { return normal(rng); });
    const Mat Q = Lq * Lq.transpose() + 0.1 * Mat::Identity(n, n);
    const Mat R = Mat::Identity(m, m) * (0.1 + std::abs(normal(rng)));
    const DareSolution<double> sol = solve_dare<double>(A, B, Q, R);
    worst_res = std::max(worst_res, sol.residual);
    worst_rho = std::max(worst_rho, oracle::spectral_radius(A + B * sol.K));
  }

  const RunConfig& cfg = defaults();
  const MpcConfig& mpc = cfg.episode.mpc;
  const FeedbackDesign<double> design = cfg.uncertainty.feedback(mpc);
  Eigen::Matrix<double, 3, 4> feet;
  feet << 0.19, 0.19, -0.19, -0.19, -0.13, 0.13, -0.13, 0.13, -0.3, -0.3, -0.3, -0.3;
  const ParamVector<double> delta = make_param_vector(mpc.model.mass, mpc.model.inertia_diag, feet);
  constexpr int n = dims::kState - 1;
  const Mat A = build_state_matrix(0.0, mpc.dt).topLeftCorner<n, n>();
  const Mat B = build_control_matrix(delta, 0.0, mpc.dt).topRows<n>();
  Mat Q = Mat::Zero(n, n);
  Q.diagonal() = design.Q_diag.head<n>().cwiseMax(design.q_floor);
  const Mat R = design.R_diag.asDiagonal();
  const DareSolution<double> hover = solve_dare<double>(A, B, Q, R, design.dare);
  const double hover_rho = oracle::spectral_radius(A + B * hover.K);
  return {worst_res < 1e-8 && worst_rho < 1 && hover.residual < 1e-8 && hover_rho < 1,
          fmt("random: max residual %.3g, max ρ %.4f; hover: residual %.3g, ρ %.8f", worst_res, worst_rho,
              hover.residual, hover_rho)};
}

// ---------------------------------------------------------------- 8

Outcome table_direction() {
  const RunConfig& cfg = defaults();
  MonteCarloSettings mc = cfg.montecarlo;
  mc.episodes = 100;
  mc.gaits = {"trot"};
  mc.modes = {ControllerMode::CCMPC, ControllerMode::HMPC, ControllerMode::LMPC};
  const MonteCarloResult result = monte_carlo(cfg.resolved_episode(), mc);
  double success[3] = {0, 0, 0};
  for (const AggregateRow& row : result.table) {
    for (int k = 0; k < 3; ++k)
      if (row.mode == mc.modes[static_cast<std::size_t>(k)]) success[k] = row.success_rate;
  }
  // Slippage on pairs where both CCMPC and LMPC succeed.
  double slip_cc = 0, slip_lm = 0;
  int pairs = 0;
  for (std::size_t i = 0; i + 2 < result.records.size(); i += 3) {
    const EpisodeRecord& cc = result.records[i];
    const EpisodeRecord& lm = result.records[i + 2];
    if (!cc.metrics.success || !lm.metrics.success) continue;
    slip_cc += cc.metrics.slippage_ratio;
    slip_lm += lm.metrics.slippage_ratio;
    ++pairs;
  }
  if (pairs > 0) {
    slip_cc /= pairs;
    slip_lm /= pairs;
  }
  const bool order = success[0] >= success[1] && success[1] >= success[2];
  return {order && success[0] >= 90.0 && pairs > 0 && slip_cc < slip_lm,
          fmt("success ccmpc/hmpc/lmpc %.0f/%.0f/%.0f %%; slippage on %d paired successes %.4f vs %.4f", success[0],
              success[1], success[2], pairs, slip_cc, slip_lm)};
}

// ---------------------------------------------------------------- 9

Outcome payload_tracking() {
  EpisodeConfig cfg = defaults().resolved_episode();
  cfg.payload_mass = 6.0;
  cfg.terrain.planks.clear();
  cfg.duration = 10.0;
  cfg.mpc.mode = ControllerMode::CCMPC;
  const EpisodeMetrics cc = run_episode(cfg);
  cfg.mpc.mode = ControllerMode::LMPC;
  const EpisodeMetrics lm = run_episode(cfg);
  const double limit = 0.3 * cfg.body.nominal_height;
  const bool cc_ok = cc.success && cc.ticks == 400 && cc.peak_height_error <= limit;
  const bool lm_worse = !lm.success || lm.peak_height_error >= 2 * cc.peak_height_error;
  return {cc_ok && lm_worse, fmt("ccmpc peak %.4f m (limit %.3f, %s); lmpc peak %.4f m, %s", cc.peak_height_error,
                                 limit, cc.success ? "success" : "failed", lm.peak_height_error,
                                 lm.success ? "success" : to_string(lm.failure_reason).data())};
}

// ---------------------------------------------------------------- 10

Outcome budget() {
  const EpisodeConfig cfg = defaults().resolved_episode();
  const SolveTimeStats s = solve_time_stats(bench_controller(cfg, 1000));
  return {s.median_us <= 2000.0, fmt("median %.0f us, p99 %.0f us over 1000 ticks", s.median_us, s.p99_us)};
}

// ---------------------------------------------------------------- 11

std::string records_text(const MonteCarloResult& r) {
  std::ostringstream out;
  for (const EpisodeRecord& rec : r.records) write_episode_record(out, "-", rec);
  return out.str();
}

Outcome determinism() {
  EpisodeConfig base = defaults().resolved_episode();
  base.duration = 2.0;
  base.world.force_noise_std = 1.0;
  MonteCarloSettings mc = defaults().montecarlo;
  mc.episodes = 6;
  mc.seed = 1234;
  mc.workers = 1;
  const std::string a = records_text(monte_carlo(base, mc));
  const std::string b = records_text(monte_carlo(base, mc));
  mc.workers = 4;
  const std::string c = records_text(monte_carlo(base, mc));

  base.seed = 99;
  base.payload_mass = 5.0;
  const EpisodeMetrics e1 = run_episode(base), e2 = run_episode(base);
  const bool single = e1.tracking_cost == e2.tracking_cost && e1.effort_cost == e2.effort_cost &&
                      e1.slippage_ratio == e2.slippage_ratio && e1.peak_height_error == e2.peak_height_error;
  return {!a.empty() && a == b && a == c && single,
          fmt("%zu record bytes; repeat %s, 4 workers %s, single episode %s", a.size(), a == b ? "equal" : "differs",
              a == c ? "equal" : "differs", single ? "equal" : "differs")};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> check;
  };
  const Criterion criteria[] = {
      {"collapse equivalence", collapse},       {"parameter jacobian", jacobian},
      {"covariance validity", covariance},      {"quantile accuracy", quantile},
      {"chance-constraint calibration", calibration}, {"qp oracle equivalence", qp_oracle},
      {"dare correctness", dare},               {"monte carlo ordering", table_direction},
      {"payload height tracking", payload_tracking}, {"real-time budget", budget},
      {"determinism", determinism},
  };
  int failed = 0;
  int index = 0;
  for (const Criterion& c : criteria) {
    ++index;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", index, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
