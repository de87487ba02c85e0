#include <doctest.h>

#include <random>

#include "ccmpc/chance_constraints.hpp"
#include "oracles.hpp"

using namespace ccmpc;

TEST_CASE("friction matrix rows") {
  const FrictionConstraintSet<double> set = build_friction_matrix(0.4, 0.0);
  for (int r = 0; r < dims::kConstraintRows; ++r) {
    const int nonzeros = static_cast<int>((set.C.row(r).array() != 0).count());
    CHECK(nonzeros == (r % 5 == row::kUnilateral ? 1 : 2));
  }
  ControlVector<double> u = ControlVector<double>::Zero();
  for (int leg = 0; leg < 4; ++leg) u(3 * leg + 2) = 10;
  CHECK(set.evaluate(u).maxCoeff() <= 0);

  u(0) = 5;
  CHECK(set.evaluate(u)(row::kPlusX) == doctest::Approx(1.0));
  u(0) = 4;
  CHECK(set.evaluate(u)(row::kPlusX) == doctest::Approx(0.0));

  const FrictionConstraintSet<double> raised = build_friction_matrix(0.4, 3.0);
  CHECK(raised.b(row::kUnilateral) == -3.0);
  CHECK(raised.b(row::kPlusX) == 0.0);
  CHECK_THROWS_AS(build_friction_matrix(0.0, 0.0), InvalidArgument);
}

TEST_CASE("uniform risk allocation") {
  CHECK(uniform_risk(0.95, 4) == doctest::Approx(0.0025));
  CHECK(uniform_risk(0.8, 4) == doctest::Approx(0.01));
  CHECK(uniform_risk(0.999999, 4) < 1e-7);
  CHECK_THROWS_AS(uniform_risk(1.0, 4), InvalidArgument);
  CHECK_THROWS_AS(uniform_risk(0.9, 0), InvalidArgument);
}

TEST_CASE("normal quantile") {
  CHECK(inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(inverse_normal_cdf(0.9975) == doctest::Approx(2.8070).epsilon(1e-4));
  CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.9600).epsilon(1e-4));
  CHECK_THROWS_AS(inverse_normal_cdf(0.0), InvalidArgument);
  CHECK_THROWS_AS(inverse_normal_cdf(1.0), InvalidArgument);
  for (double p : {1e-6, 1e-3, 0.02425, 0.1, 0.7, 0.97575, 0.999, 1 - 1e-6}) {
    CHECK(std::abs(inverse_normal_cdf(p) - oracle::bisect_quantile(p)) < 1e-9);
    CHECK(std::abs(normal_cdf(inverse_normal_cdf(p)) - p) < 1e-9);
  }
  // The quantile explodes as the allocated risk vanishes.
  CHECK(inverse_normal_cdf(1 - uniform_risk(1 - 1e-9, 4)) > 6.0);
}

TEST_CASE("tightening factors") {
  const FrictionConstraintSet<double> set = build_friction_matrix(0.4, 0.0);
  const double alpha = 0.0025;
  CHECK(tightening_factors(set, ControlCovariance<double>::Zero().eval(), alpha).isZero(0));

  const ConstraintVector<double> c = tightening_factors(set, ControlCovariance<double>::Identity().eval(), alpha);
  CHECK(c(row::kPlusX) == doctest::Approx(-2.8070 * std::sqrt(1.16)).epsilon(1e-4));
  CHECK(c(row::kUnilateral) == doctest::Approx(-2.8070).epsilon(1e-4));
  CHECK(c.maxCoeff() <= 0);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  const Eigen::Matrix<double, 12, 12> L = Eigen::Matrix<double, 12, 12>::NullaryExpr([&] { return normal(rng); });
  const ControlCovariance<double> S = L * L.transpose();
  const ConstraintVector<double> c1 = tightening_factors(set, S, alpha);
  const ConstraintVector<double> c2 = tightening_factors(set, (2.0 * S).eval(), alpha);
  CHECK((c2 - std::sqrt(2.0) * c1).cwiseAbs().maxCoeff() < 1e-10);

  // Scaling one row scales its factor.
  Eigen::Matrix<double, 20, 12> C = set.C;
  C.row(3) *= 2.5;
  const auto scaled = tightening_factors<double, 20>(C, S, alpha);
  CHECK(scaled(3) == doctest::Approx(2.5 * c1(3)));

  CHECK_THROWS_AS(tightening_factors(set, S, 0.5), InvalidArgument);
}

TEST_CASE("tightening is monotone in the Loewner order") {
  const FrictionConstraintSet<double> set = build_friction_matrix(0.4, 0.0);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> uniform(0.0, 4.0);
  for (int trial = 0; trial < 50; ++trial) {
    const ControlVector<double> a = ControlVector<double>::NullaryExpr([&] { return uniform(rng); });
    const ControlVector<double> extra = ControlVector<double>::NullaryExpr([&] { return uniform(rng); });
    const ConstraintVector<double> ca = tightening_factors(set, ControlCovariance<double>(a.asDiagonal()), 0.0025);
    const ConstraintVector<double> cb =
        tightening_factors(set, ControlCovariance<double>((a + extra).asDiagonal()), 0.0025);
    CHECK((ca - cb).minCoeff() >= -1e-12);
  }
}

TEST_CASE("empirical violation of a tightened row is near alpha") {
  const FrictionConstraintSet<double> set = build_friction_matrix(0.4, 0.0);
  const double alpha = 0.01;
  ControlCovariance<double> S = ControlCovariance<double>::Identity() * 4.0;
  const ConstraintVector<double> c = tightening_factors(set, S, alpha);
  // Mean on the tightened boundary of the first row: C₀ v = c₀.
  ControlVector<double> mean = ControlVector<double>::Zero();
  mean(2) = 50;
  mean(0) = 0.4 * 50 + c(0);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  const int samples = 100000;
  int violations = 0;
  for (int s = 0; s < samples; ++s) {
    ControlVector<double> u = mean;
    for (int k = 0; k < 12; ++k) u(k) += 2.0 * normal(rng);
    if (set.C.row(0).dot(u) > 0) ++violations;
  }
  const double rate = static_cast<double>(violations) / samples;
  const double se = std::sqrt(alpha * (1 - alpha) / samples);
  CHECK(std::abs(rate - alpha) < 3 * se);
}
