#include <doctest.h>

#include <random>

#include "ccmpc/gait.hpp"
#include "ccmpc/srbd_model.hpp"

using namespace ccmpc;

TEST_CASE("stand keeps every foot down") {
  const GaitSchedule stand = GaitSchedule::stand();
  for (double t : {0.0, 0.013, 0.2, 1.7, 123.4}) {
    const ContactFlags c = stand.contacts(t);
    CHECK(c == ContactFlags{true, true, true, true});
  }
}

TEST_CASE("trot pairs diagonal legs and flips every half period") {
  const GaitSchedule trot = GaitSchedule::trot();
  CHECK(trot.contacts(0.0) == ContactFlags{true, false, false, true});
  CHECK(trot.contacts(0.19) == ContactFlags{true, false, false, true});
  CHECK(trot.contacts(0.2) == ContactFlags{false, true, true, false});
  CHECK(trot.contacts(0.4) == ContactFlags{true, false, false, true});
  // Boundary samples reached by accumulating dt stay on the right side.
  double t = 0;
  for (int k = 0; k < 8; ++k) t += 0.025;
  CHECK(trot.contacts(t) == ContactFlags{false, true, true, false});
}

TEST_CASE("one transition per diagonal pair within the horizon") {
  const GaitSchedule trot = GaitSchedule::trot();
  for (double t0 : {0.0, 0.05, 0.125, 0.3, 1.275}) {
    const auto seq = contact_sequence(t0, trot, 10, 0.025);
    REQUIRE(seq.size() == 10);
    for (int leg : {0, 1}) {
      int transitions = 0;
      for (std::size_t i = 1; i < seq.size(); ++i)
        transitions += seq[i][static_cast<std::size_t>(leg)] != seq[i - 1][static_cast<std::size_t>(leg)];
      CHECK(transitions == 1);
    }
    for (const ContactFlags& c : seq) {
      CHECK(c[0] == c[3]);
      CHECK(c[1] == c[2]);
      CHECK(c[0] != c[1]);
    }
  }
  CHECK_THROWS_AS(contact_sequence(0.0, trot, 10, 0.0), InvalidArgument);
}

TEST_CASE("contact flags are periodic and match the duty factor") {
  for (const GaitSchedule& gait : {GaitSchedule::trot(), GaitSchedule::flytrot()}) {
    const double T = gait.period();
    const int samples = 1000;
    for (int leg = 0; leg < 4; ++leg) {
      int stance = 0;
      for (int k = 0; k < samples; ++k) {
        const double t = T * k / samples;
        CHECK(gait.in_stance(t, leg) == gait.in_stance(t + 3 * T, leg));
        stance += gait.in_stance(t, leg);
      }
      CHECK(std::abs(stance - gait.duty_factor * samples) <= 1.0);
    }
  }
}

TEST_CASE("flytrot has a flight phase") {
  const GaitSchedule fly = GaitSchedule::flytrot();
  bool flight = false;
  for (int k = 0; k < 300; ++k) {
    const ContactFlags c = fly.contacts(k * fly.period() / 300);
    flight = flight || c == ContactFlags{false, false, false, false};
  }
  CHECK(flight);
  CHECK_THROWS_AS(GaitSchedule::by_name("gallop"), InvalidArgument);
  GaitSchedule bad = GaitSchedule::trot();
  bad.duty_factor = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("raibert footstep") {
  const Eigen::Vector3d hip(1.0, -0.13, 0.3);
  const Eigen::Vector3d v(0.25, 0, 0);
  CHECK(raibert_footstep(hip, Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero(), 0.2).isApprox(Eigen::Vector3d(1.0, -0.13, 0.0)));
  const Eigen::Vector3d nominal = raibert_footstep(hip, v, v, 0.2);
  CHECK(nominal.x() - hip.x() == doctest::Approx(0.025));
  CHECK(nominal.z() == 0.0);
  const Eigen::Vector3d fast = raibert_footstep(hip, Eigen::Vector3d(0.5, 0, 0), v, 0.2);
  CHECK(fast.x() - hip.x() - 0.1 * 0.5 == doctest::Approx(0.0075));
  CHECK(raibert_footstep(hip, v, v, 0.2, 0.03, 0.04).z() == 0.04);
  CHECK_THROWS_AS(raibert_footstep(hip, v, v, 0.0), InvalidArgument);
}

TEST_CASE("footstep targets rotate with yaw") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Vector3d hip(u(rng), u(rng), 0.3), v(u(rng), u(rng), 0), vd(u(rng), u(rng), 0);
    const Eigen::Matrix3d Rz = yaw_rotation(3 * u(rng));
    const Eigen::Vector3d a = Rz * raibert_footstep(hip, v, vd, 0.2);
    const Eigen::Vector3d b = raibert_footstep(Rz * hip, Rz * v, Rz * vd, 0.2);
    CHECK((a - b).norm() < 1e-12);
  }
}

TEST_CASE("swing trajectory") {
  SwingTrajectory traj;
  traj.start = Eigen::Vector3d(0.0, 0.1, 0.0);
  traj.end = Eigen::Vector3d(0.2, 0.1, 0.0);
  CHECK(swing_position(traj, 0.0) == traj.start);
  CHECK(swing_position(traj, 1.0) == traj.end);
  CHECK(swing_position(traj, -0.5) == traj.start);
  const Eigen::Vector3d mid = swing_position(traj, 0.5);
  CHECK(mid.z() == doctest::Approx(0.08));
  CHECK(mid.x() == doctest::Approx(0.1));

  traj.end.z() = 0.05;
  double top = 0;
  for (int k = 0; k <= 10000; ++k) top = std::max(top, swing_position(traj, k / 10000.0).z());
  CHECK(std::abs(top - 0.13) < 1e-9);

  // C¹ at the apex junction and at the boundaries.
  const double h = 1e-7;
  const Eigen::Vector3d left = (swing_position(traj, 0.5) - swing_position(traj, 0.5 - h)) / h;
  const Eigen::Vector3d right = (swing_position(traj, 0.5 + h) - swing_position(traj, 0.5)) / h;
  CHECK((left - right).norm() < 1e-6);
  CHECK(((swing_position(traj, h) - traj.start) / h).norm() < 1e-6);
  CHECK(((traj.end - swing_position(traj, 1 - h)) / h).norm() < 1e-6);
}

TEST_CASE("euler angles round trip through the rotation matrix") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Vector3d rpy(u(rng), u(rng), 2.5 * u(rng));
    CHECK((euler_from_rotation(body_rotation(rpy)) - rpy).norm() < 1e-12);
  }
}

TEST_CASE("horizon footholds") {
  const GaitSchedule trot = GaitSchedule::trot();
  const BodyGeometry body;
  RobotState<double> state;
  state.position = {0.0, 0.0, 0.3};
  FootSnapshot feet;
  feet.stance = trot.contacts(0.1);
  for (int leg = 0; leg < 4; ++leg) {
    feet.position[static_cast<std::size_t>(leg)] = body.hip_position(state, leg);
    feet.position[static_cast<std::size_t>(leg)].z() = 0;
    feet.swing_target[static_cast<std::size_t>(leg)] = feet.position[static_cast<std::size_t>(leg)] + Eigen::Vector3d(0.05, 0, 0);
  }
  const Eigen::Vector3d v_cmd(0.25, 0, 0);
  const auto plan = plan_horizon_feet(0.1, state, v_cmd, 0.0, trot, body, feet, {}, 10, 0.025);
  REQUIRE(plan.size() == 10);
  // Stance feet hold until lift-off; the swinging pair lands on its stored target.
  for (int i = 0; i < 4; ++i) {
    CHECK(plan[static_cast<std::size_t>(i)].col(0) == feet.position[0]);
    CHECK(plan[static_cast<std::size_t>(i)].col(3) == feet.position[3]);
  }
  CHECK(plan[4].col(1) == feet.swing_target[1]);
  CHECK(plan[9].col(2) == feet.swing_target[2]);
  // The lifted pair's next footholds lie ahead of where they started.
  CHECK(plan[9].col(0).x() > feet.position[0].x());
  CHECK(plan[9].col(0).z() == 0.0);

  const auto still = plan_horizon_feet(0.1, state, Eigen::Vector3d::Zero(), 0.0, GaitSchedule::stand(), body, feet, {}, 10, 0.025);
  for (const auto& m : still)
    for (int leg = 0; leg < 4; ++leg) CHECK(m.col(leg) == feet.position[static_cast<std::size_t>(leg)]);
}
