#include "ccmpc/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <thread>

namespace ccmpc {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

bool finite(const RobotState<double>& s) { return s.flatten().allFinite(); }

}  // namespace

// ---------------------------------------------------------------- terrain

void TerrainProfile::validate() const {
  if (!(mu_true > 0)) throw InvalidArgument("terrain friction must be positive");
  if (!(std::abs(slope) < 0.5 * M_PI)) throw InvalidArgument("terrain slope must lie in (-pi/2, pi/2)");
  for (std::size_t i = 0; i < planks.size(); ++i) {
    const PlankSegment& p = planks[i];
    if (!(p.height >= 0)) throw InvalidArgument("plank heights must be nonnegative");
    if (!(p.x_end > p.x_start)) throw InvalidArgument("plank segments must have positive length");
    if (i > 0 && p.x_start < planks[i - 1].x_end) throw InvalidArgument("plank segments must not overlap");
  }
}

double TerrainProfile::height_at(double x, double /*y*/) const {
  double h = std::tan(slope) * x;
  // Planks are sorted; the last segment starting at or before x decides.
  auto it = std::upper_bound(planks.begin(), planks.end(), x,
                             [](double v, const PlankSegment& p) { return v < p.x_start; });
  if (it != planks.begin()) {
    const PlankSegment& p = *std::prev(it);
    if (x < p.x_end) h += p.height;
  }
  return h;
}

Eigen::Vector3d TerrainProfile::normal() const { return {-std::sin(slope), 0.0, std::cos(slope)}; }

TerrainProfile TerrainProfile::random_planks(std::mt19937_64& rng, double max_height, double x_start, double x_end,
                                             double plank_length, double mu_true) {
  if (!(plank_length > 0)) throw InvalidArgument("plank length must be positive");
  TerrainProfile t;
  t.mu_true = mu_true;
  std::uniform_real_distribution<double> height(0.0, std::max(max_height, 0.0));
  for (double x = x_start; x < x_end; x += plank_length) {
    t.planks.push_back({x, x + plank_length, max_height > 0 ? height(rng) : 0.0});
  }
  return t;
}

// ---------------------------------------------------------------- failure

std::string_view to_string(FailureReason reason) {
  switch (reason) {
    case FailureReason::None: return "none";
    case FailureReason::HeightDeviation: return "height_deviation";
    case FailureReason::Tilt: return "tilt";
    case FailureReason::QpInfeasible: return "qp_infeasible";
    case FailureReason::NumericalError: return "numerical_error";
  }
  return "unknown";
}

FailureReason detect_failure(const RobotState<double>& state, double desired_height,
                             const Eigen::Vector3d& ground_normal) {
  if (!finite(state)) return FailureReason::NumericalError;
  if (std::abs(state.position.z() - desired_height) > 0.3 * desired_height) return FailureReason::HeightDeviation;
  const Eigen::Vector3d up = body_rotation(state.orientation).col(2);
  if (up.dot(ground_normal.normalized()) < 0.8) return FailureReason::Tilt;
  return FailureReason::None;
}

// ---------------------------------------------------------------- episode config

void EpisodeConfig::validate() const {
  mpc.validate();
  disturbance.validate();
  gait.validate();
  terrain.validate();
  if (!(duration > 0)) throw InvalidArgument("episode duration must be positive");
  if (!(payload_mass >= 0)) throw InvalidArgument("payload mass must be nonnegative");
  if (!(world.sim_dt > 0 && world.sim_dt <= mpc.dt)) throw InvalidArgument("world step must lie in (0, controller dt]");
  const double ratio = mpc.dt / world.sim_dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9) throw InvalidArgument("controller dt must be a multiple of the world step");
  if (!(world.force_noise_std >= 0) || !(world.disturbance_force_std.array() >= 0).all() ||
      !(world.disturbance_torque_std.array() >= 0).all())
    throw InvalidArgument("noise levels must be nonnegative");
  if (!(body.nominal_height > 0 && body.leg_length_max > body.nominal_height))
    throw InvalidArgument("leg reach must exceed the nominal height");
  if (!(hmpc_max_payload >= 0 && hmpc_max_accel >= 0)) throw InvalidArgument("heuristic tightening inputs must be nonnegative");
}

ConstraintVector<double> heuristic_offsets_for_gait(const GaitSchedule& gait, double max_payload, double max_accel,
                                                    const ModelParams<double>& model) {
  int fewest = dims::kLegs;
  constexpr int kSamples = 1000;
  for (int k = 0; k < kSamples; ++k) {
    const ContactFlags c = gait.contacts(gait.period() * k / kSamples);
    const int n = static_cast<int>(std::count(c.begin(), c.end(), true));
    if (n > 0) fewest = std::min(fewest, n);
  }
  return heuristic_tightening(max_payload, max_accel, model.friction_mu, fewest, model.mass);
}

MpcConfig EpisodeConfig::effective_mpc() const {
  MpcConfig cfg = mpc;
  cfg.hmpc_offsets = hmpc_offsets ? *hmpc_offsets
                                  : heuristic_offsets_for_gait(gait, hmpc_max_payload, hmpc_max_accel, mpc.model);
  return cfg;
}

Eigen::Vector3d EpisodeConfig::commanded_velocity() const {
  return gait.duty_factor >= 1.0 ? Eigen::Vector3d::Zero() : velocity_command;
}

double EpisodeConfig::commanded_yaw_rate() const { return gait.duty_factor >= 1.0 ? 0.0 : yaw_rate_command; }

// ---------------------------------------------------------------- world

World::World(const EpisodeConfig& config) : config_(config), rng_(config.seed) {
  const ModelParams<double>& model = config_.mpc.model;
  const double mp = config_.payload_mass;
  mass_ = model.mass + mp;
  com_offset_ = mp * config_.payload_offset / mass_;
  // Diagonal inertia about the shifted CoM: body and payload by parallel axis.
  auto point_inertia = [](double m, const Eigen::Vector3d& d) {
    return Eigen::Vector3d(m * (d.y() * d.y() + d.z() * d.z()), m * (d.x() * d.x() + d.z() * d.z()),
                           m * (d.x() * d.x() + d.y() * d.y()));
  };
  inertia_ = model.inertia_diag + point_inertia(model.mass, -com_offset_) +
             point_inertia(mp, config_.payload_offset - com_offset_);
  slipping_.fill(false);
  reset(config_.body.nominal_height);
}

void World::reset(double height) {
  steps_ = 0;
  time_ = 0;
  orientation_ = Eigen::Quaterniond::Identity();
  omega_.setZero();
  com_velocity_.setZero();
  com_ = Eigen::Vector3d(0.0, 0.0, height);
  slip_events_ = 0;
  applied_ = {};
  const RobotState<double> s = body_state();
  for (int leg = 0; leg < dims::kLegs; ++leg) {
    const auto l = static_cast<std::size_t>(leg);
    Eigen::Vector3d foot = config_.body.hip_position(s, leg);
    foot.z() = config_.terrain.height_at(foot.x(), foot.y());
    feet_.position[l] = foot;
    feet_.swing_target[l] = foot;
    feet_.stance[l] = true;
    slipping_[l] = false;
  }
}

RobotState<double> World::state() const {
  RobotState<double> s;
  s.position = com_;
  s.linear_velocity = com_velocity_;
  s.orientation = euler_from_rotation(orientation_.toRotationMatrix());
  s.angular_velocity = omega_;
  s.gravity = kGravity;
  return s;
}

RobotState<double> World::body_state() const {
  const Eigen::Matrix3d R = orientation_.toRotationMatrix();
  RobotState<double> s = state();
  const Eigen::Vector3d arm = R * com_offset_;
  s.position = com_ - arm;
  s.linear_velocity = com_velocity_ - omega_.cross(arm);
  return s;
}

void World::sync_contacts() {
  const GaitSchedule& gait = config_.gait;
  const RobotState<double> s = body_state();
  const Eigen::Vector3d v_des = yaw_rotation(s.orientation.z()) * config_.commanded_velocity();
  for (int leg = 0; leg < dims::kLegs; ++leg) {
    const auto l = static_cast<std::size_t>(leg);
    const bool scheduled = gait.in_stance(time_, leg);
    if (feet_.stance[l] && !scheduled) {
      // Liftoff: aim the swing with the measured velocity; the target assumes flat ground.
      Eigen::Vector3d v = state().linear_velocity;
      v.z() = 0;
      const double remaining = gait.time_to_phase_end(time_, leg);
      const Eigen::Vector3d hip = config_.body.hip_position(s, leg) + v * remaining;
      Eigen::Vector3d target =
          raibert_footstep(hip, v, Eigen::Vector3d(v_des.x(), v_des.y(), 0.0), gait.stance_duration(),
                           config_.footholds.raibert_gain, 0.0);
      SwingTrajectory& sw = swings_[l];
      sw.start = feet_.position[l];
      sw.end = target;
      sw.apex_height = config_.footholds.foot_height;
      sw.duration = gait.swing_duration();
      feet_.swing_target[l] = target;
      feet_.stance[l] = false;
      slipping_[l] = false;
    } else if (!feet_.stance[l] && scheduled) {
      Eigen::Vector3d foot = swings_[l].end;
      foot.z() = config_.terrain.height_at(foot.x(), foot.y());
      feet_.position[l] = foot;
      feet_.stance[l] = true;
    } else if (!feet_.stance[l]) {
      const double phase = (gait.leg_phase(time_, leg) - gait.duty_factor) / (1.0 - gait.duty_factor);
      Eigen::Vector3d foot = swing_position(swings_[l], phase);
      foot.z() = std::max(foot.z(), config_.terrain.height_at(foot.x(), foot.y()));
      feet_.position[l] = foot;
    }
  }
}

void World::sample_noise() {
  for (int k = 0; k < dims::kControl; ++k) force_noise_(k) = config_.world.force_noise_std * normal_(rng_);
  for (int k = 0; k < 3; ++k) wrench_force_(k) = config_.world.disturbance_force_std(k) * normal_(rng_);
  for (int k = 0; k < 3; ++k) wrench_torque_(k) = config_.world.disturbance_torque_std(k) * normal_(rng_);
}

void World::step(const GrfCommand<double>& command) {
  sync_contacts();
  const double h = config_.world.sim_dt;
  const TerrainProfile& terrain = config_.terrain;
  const Eigen::Vector3d n = terrain.normal();
  const RobotState<double> s = body_state();

  Eigen::Vector3d force = Eigen::Vector3d(0.0, 0.0, -mass_ * kGravity) + wrench_force_;
  Eigen::Vector3d torque = wrench_torque_;
  applied_ = {};
  for (int leg = 0; leg < dims::kLegs; ++leg) {
    const auto l = static_cast<std::size_t>(leg);
    if (!feet_.stance[l]) continue;
    Eigen::Vector3d f = command.foot(leg);
    if (f.z() > 0) f += force_noise_.segment<3>(3 * leg);
    const double reach = (config_.body.hip_position(s, leg) - feet_.position[l]).norm();
    const double fn = f.dot(n);
    if (reach > config_.body.leg_length_max || !(fn > 0)) {
      slipping_[l] = false;
      continue;
    }
    const Eigen::Vector3d ft = f - fn * n;
    const double ft_norm = ft.norm();
    const double limit = terrain.mu_true * fn;
    // Forces the controller places exactly on the cone edge are not slips.
    if (ft_norm > limit * (1.0 + 1e-9) + 1e-9) {
      // Clipped to the cone; the surplus is lost. One event per run of clipped steps.
      f = fn * n + (limit / ft_norm) * ft;
      if (!slipping_[l]) ++slip_events_;
      slipping_[l] = true;
    } else {
      slipping_[l] = false;
    }
    applied_.forces.segment<3>(3 * leg) = f;
    force += f;
    torque += (feet_.position[l] - com_).cross(f);
  }

  // Semi-implicit Euler on the true rigid body.
  com_velocity_ += force / mass_ * h;
  com_ += com_velocity_ * h;
  const Eigen::Matrix3d R = orientation_.toRotationMatrix();
  const Eigen::Matrix3d I_world = R * inertia_.asDiagonal() * R.transpose();
  omega_ += I_world.ldlt().solve(torque - omega_.cross(I_world * omega_)) * h;
  const double angle = omega_.norm() * h;
  if (angle > 0) orientation_ = Eigen::Quaterniond(Eigen::AngleAxisd(angle, omega_.normalized())) * orientation_;
  orientation_.normalize();

  ++steps_;
  time_ = static_cast<double>(steps_) * h;
}

// ---------------------------------------------------------------- episode

EpisodeMetrics run_episode(const EpisodeConfig& config) {
  config.validate();
  const MpcConfig mpc_config = config.effective_mpc();
  MpcController controller(mpc_config, config.disturbance, config.feedback, config.qp);
  World world(config);

  const int N = mpc_config.horizon;
  const double dt = mpc_config.dt;
  const double height = config.body.nominal_height;
  const int steps_per_tick = static_cast<int>(std::lround(dt / config.world.sim_dt));
  const int ticks = static_cast<int>(std::lround(config.duration / dt));
  const Eigen::Vector3d normal = config.terrain.normal();
  const Eigen::Vector3d v_cmd = config.commanded_velocity();
  const double yaw_rate = config.commanded_yaw_rate();

  EpisodeMetrics metrics;
  metrics.solve_times_us.reserve(static_cast<std::size_t>(ticks));
  double slip_sum = 0;
  long slip_samples = 0;
  double yaw_des = 0;

  auto fail = [&](FailureReason reason, double t) {
    metrics.success = false;
    metrics.failure_reason = reason;
    metrics.failure_time = t;
  };

  metrics.success = true;
  for (int tick = 0; tick < ticks && metrics.success; ++tick) {
    world.sync_contacts();
    const double t = world.time();
    const RobotState<double> state = world.state();

    MpcInput input;
    input.state = state;
    input.x_ref = reference_trajectory(state, v_cmd, yaw_rate, height, N, dt);
    input.contacts = contact_sequence(t, config.gait, N, dt);
    input.feet_world = plan_horizon_feet(t, state, v_cmd, yaw_rate, config.gait,
                                         config.body, world.feet(), config.footholds, N, dt);
    const MpcStepResult out = controller.step(input);
    metrics.solve_times_us.push_back(out.diagnostics.solve_time_us);
    ++metrics.ticks;

    if (config.record_trace) {
      metrics.trace.push_back({t, state, out.command, out.diagnostics.tightening, out.diagnostics.status,
                               out.diagnostics.iterations, input.contacts.front()});
    }
    if (out.diagnostics.status == QpStatus::Infeasible) {
      fail(FailureReason::QpInfeasible, t);
      break;
    }

    // Costs against the desired state at this instant.
    StateVector<double> x_des = StateVector<double>::Zero();
    x_des(idx::kTheta + 2) = yaw_des;
    x_des(idx::kPos + 2) = height;
    x_des.segment<3>(idx::kOmega) = Eigen::Vector3d(0.0, 0.0, yaw_rate);
    x_des.segment<3>(idx::kVel) = yaw_rotation(yaw_des) * v_cmd;
    x_des(idx::kGravity) = kGravity;
    StateVector<double> e = state.flatten() - x_des;
    e.segment<2>(idx::kPos).setZero();  // planar position has no reference to track
    metrics.tracking_cost += e.dot(mpc_config.Q_diag.asDiagonal() * e);
    metrics.effort_cost += out.command.forces.dot(mpc_config.R_diag.asDiagonal() * out.command.forces);
    for (int leg = 0; leg < dims::kLegs; ++leg) {
      const Eigen::Vector3d f = out.command.foot(leg);
      if (!input.contacts.front()[static_cast<std::size_t>(leg)] || !(f.z() > 1e-9)) continue;
      slip_sum += (f.x() * f.x() + f.y() * f.y()) / (f.z() * f.z());
      ++slip_samples;
    }
    yaw_des += yaw_rate * dt;

    world.sample_noise();
    for (int k = 0; k < steps_per_tick; ++k) {
      world.step(out.command);
      const RobotState<double> s = world.state();
      if (finite(s)) metrics.peak_height_error = std::max(metrics.peak_height_error, std::abs(s.position.z() - height));
      const FailureReason reason = detect_failure(s, height, normal);
      if (reason != FailureReason::None) {
        fail(reason, world.time());
        break;
      }
    }
  }
  metrics.slip_events = world.slip_events();
  metrics.slippage_ratio = slip_samples > 0 ? slip_sum / static_cast<double>(slip_samples) : 0.0;
  return metrics;
}

std::vector<double> bench_controller(const EpisodeConfig& config, int ticks) {
  config.validate();
  const MpcConfig mpc_config = config.effective_mpc();
  MpcController controller(mpc_config, config.disturbance, config.feedback, config.qp);
  World world(config);
  const int N = mpc_config.horizon;
  const double dt = mpc_config.dt;
  const double height = config.body.nominal_height;
  const int steps_per_tick = static_cast<int>(std::lround(dt / config.world.sim_dt));

  const Eigen::Vector3d v_cmd = config.commanded_velocity();
  const double yaw_rate = config.commanded_yaw_rate();

  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(std::max(ticks, 0)));
  while (static_cast<int>(times.size()) < ticks) {
    world.sync_contacts();
    const auto start = std::chrono::steady_clock::now();
    const double t = world.time();
    const RobotState<double> state = world.state();
    MpcInput input;
    input.state = state;
    input.x_ref = reference_trajectory(state, v_cmd, yaw_rate, height, N, dt);
    input.contacts = contact_sequence(t, config.gait, N, dt);
    input.feet_world = plan_horizon_feet(t, state, v_cmd, yaw_rate, config.gait,
                                         config.body, world.feet(), config.footholds, N, dt);
    const MpcStepResult out = controller.step(input);
    times.push_back(std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start).count());

    bool failed = out.diagnostics.status == QpStatus::Infeasible;
    world.sample_noise();
    for (int k = 0; k < steps_per_tick && !failed; ++k) {
      world.step(out.command);
      failed = detect_failure(world.state(), height, config.terrain.normal()) != FailureReason::None;
    }
    if (failed) {
      world.reset(height);
      controller.reset();
    }
  }
  return times;
}

// ---------------------------------------------------------------- Monte Carlo

std::uint64_t sample_seed(std::uint64_t campaign_seed, int sample) {
  return splitmix64(campaign_seed ^ splitmix64(static_cast<std::uint64_t>(sample) + 1));
}

EpisodeConfig sample_scenario(const EpisodeConfig& base, const MonteCarloSettings& mc, int sample) {
  EpisodeConfig cfg = base;
  cfg.seed = sample_seed(mc.seed, sample);
  std::mt19937_64 rng(cfg.seed ^ 0x5ca1ab1eULL);
  std::uniform_real_distribution<double> payload(mc.payload_min, mc.payload_max);
  cfg.payload_mass = mc.payload_max > mc.payload_min ? payload(rng) : mc.payload_min;
  const double travel = std::abs(base.velocity_command.x()) * base.duration;
  cfg.terrain = TerrainProfile::random_planks(rng, mc.plank_height_max, mc.plank_start, mc.plank_start + travel + 1.0,
                                              mc.plank_length, base.terrain.mu_true);
  cfg.terrain.slope = base.terrain.slope;
  return cfg;
}

std::vector<AggregateRow> aggregate(const std::vector<EpisodeRecord>& records, const std::vector<std::string>& gaits,
                                    const std::vector<ControllerMode>& modes) {
  std::vector<AggregateRow> rows;
  for (const std::string& gait : gaits) {
    std::map<ControllerMode, std::pair<double, double>> mean_costs;
    const std::size_t first = rows.size();
    for (ControllerMode mode : modes) {
      AggregateRow row;
      row.gait = gait;
      row.mode = mode;
      double slip = 0, tracking = 0, effort = 0;
      for (const EpisodeRecord& r : records) {
        if (r.gait != gait || r.mode != mode) continue;
        ++row.episodes;
        if (!r.metrics.success) continue;
        ++row.successes;
        slip += r.metrics.slippage_ratio;
        tracking += r.metrics.tracking_cost;
        effort += r.metrics.effort_cost;
      }
      const double nan = std::numeric_limits<double>::quiet_NaN();
      row.success_rate = row.episodes ? 100.0 * row.successes / row.episodes : nan;
      row.mean_slippage = row.successes ? slip / row.successes : nan;
      mean_costs[mode] = row.successes ? std::make_pair(tracking / row.successes, effort / row.successes)
                                       : std::make_pair(nan, nan);
      rows.push_back(row);
    }
    const auto base = mean_costs.find(ControllerMode::CCMPC);
    for (std::size_t k = first; k < rows.size(); ++k) {
      const auto& own = mean_costs[rows[k].mode];
      if (base == mean_costs.end()) {
        rows[k].normalized_tracking = rows[k].normalized_effort = std::numeric_limits<double>::quiet_NaN();
      } else {
        rows[k].normalized_tracking = own.first / base->second.first;
        rows[k].normalized_effort = own.second / base->second.second;
      }
    }
  }
  return rows;
}

MonteCarloResult monte_carlo(const EpisodeConfig& base, const MonteCarloSettings& settings) {
  if (settings.episodes < 1) throw InvalidArgument("monte carlo needs at least one episode");
  if (settings.modes.empty() || settings.gaits.empty()) throw InvalidArgument("monte carlo needs modes and gaits");
  base.validate();
  for (const std::string& gait : settings.gaits) {
    if (gait != base.gait.name) GaitSchedule::by_name(gait);
  }
  const std::size_t per_sample = settings.gaits.size() * settings.modes.size();
  const std::size_t jobs = static_cast<std::size_t>(settings.episodes) * per_sample;

  MonteCarloResult result;
  result.records.resize(jobs);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t j = next.fetch_add(1); j < jobs; j = next.fetch_add(1)) {
      const int sample = static_cast<int>(j / per_sample);
      const std::size_t rest = j % per_sample;
      const std::string& gait = settings.gaits[rest / settings.modes.size()];
      const ControllerMode mode = settings.modes[rest % settings.modes.size()];
      EpisodeConfig base_gait = base;
      if (gait != base.gait.name) base_gait.gait = GaitSchedule::by_name(gait);
      EpisodeConfig cfg = sample_scenario(base_gait, settings, sample);
      cfg.mpc.mode = mode;
      cfg.record_trace = false;
      EpisodeRecord& rec = result.records[j];
      rec.sample = sample;
      rec.seed = cfg.seed;
      rec.gait = gait;
      rec.mode = mode;
      rec.payload = cfg.payload_mass;
      for (const PlankSegment& p : cfg.terrain.planks) rec.max_plank_height = std::max(rec.max_plank_height, p.height);
      rec.metrics = run_episode(cfg);
    }
  };
  const int workers = std::max(1, settings.workers);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  result.table = aggregate(result.records, settings.gaits, settings.modes);
  return result;
}

}  // namespace ccmpc
