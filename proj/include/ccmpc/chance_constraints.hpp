#ifndef CCMPC_CHANCE_CONSTRAINTS_HPP
#define CCMPC_CHANCE_CONSTRAINTS_HPP

// Friction pyramid / unilateral constraint rows and their deterministic
// tightening under Gaussian control uncertainty.

#include <cmath>
#include <numbers>

#include "ccmpc/types.hpp"

namespace ccmpc {

/// Row layout inside each foot's block of five constraints.
namespace row {
constexpr int kPlusX = 0;
constexpr int kMinusX = 1;
constexpr int kPlusY = 2;
constexpr int kMinusY = 3;
constexpr int kUnilateral = 4;
}  // namespace row

/// C u <= b with 5 rows per foot. Swing feet keep their rows; their forces are
/// pinned to zero elsewhere.
template <typename Scalar>
struct FrictionConstraintSet {
  ConstraintMatrix<Scalar> C = ConstraintMatrix<Scalar>::Zero();
  ConstraintVector<Scalar> b = ConstraintVector<Scalar>::Zero();
  Scalar mu = Scalar(0.4);
  ContactFlags contact_flags{true, true, true, true};

  /// C u - b; nonpositive entries are satisfied rows.
  ConstraintVector<Scalar> evaluate(const ControlVector<Scalar>& u) const { return C * u - b; }
};

template <typename Scalar>
FrictionConstraintSet<Scalar> build_friction_matrix(Scalar mu, Scalar fz_min,
                                                    const ContactFlags& contact = {true, true, true, true}) {
  if (!(mu > 0)) throw InvalidArgument("friction coefficient must be positive");
  FrictionConstraintSet<Scalar> set;
  set.mu = mu;
  set.contact_flags = contact;
  for (int leg = 0; leg < dims::kLegs; ++leg) {
    const int r0 = dims::kRowsPerFoot * leg;
    const int c0 = 3 * leg;
    set.C(r0 + row::kPlusX, c0 + 0) = Scalar(1);
    set.C(r0 + row::kMinusX, c0 + 0) = Scalar(-1);
    set.C(r0 + row::kPlusY, c0 + 1) = Scalar(1);
    set.C(r0 + row::kMinusY, c0 + 1) = Scalar(-1);
    for (int k = 0; k < 4; ++k) set.C(r0 + k, c0 + 2) = -mu;
    set.C(r0 + row::kUnilateral, c0 + 2) = Scalar(-1);
    set.b(r0 + row::kUnilateral) = -fz_min;
  }
  return set;
}

/// Per-row risk from splitting the joint violation budget 1 - ε uniformly over 5 rows per foot.
template <typename Scalar>
Scalar uniform_risk(Scalar epsilon, int n_feet) {
  if (!(epsilon > 0 && epsilon < 1)) throw InvalidArgument("epsilon must lie in (0, 1)");
  if (n_feet < 1) throw InvalidArgument("n_feet must be at least 1");
  return (Scalar(1) - epsilon) / Scalar(dims::kRowsPerFoot * n_feet);
}

template <typename Scalar>
Scalar normal_cdf(Scalar z) {
  using std::erfc;
  return Scalar(0.5) * erfc(-z / std::numbers::sqrt2_v<Scalar>);
}

template <typename Scalar>
Scalar normal_pdf(Scalar z) {
  using std::exp;
  return exp(Scalar(-0.5) * z * z) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>);
}

/// Standard normal quantile. Acklam's rational approximation (relative error
/// ~1e-9) refined by Halley steps on Φ(z) - p.
template <typename Scalar>
Scalar inverse_normal_cdf(Scalar p) {
  using std::log;
  using std::sqrt;
  if (!(p > 0 && p < 1)) throw InvalidArgument("inverse_normal_cdf: probability must lie in (0, 1)");

  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr Scalar p_low = Scalar(0.02425);

  Scalar z;
  if (p < p_low) {
    const Scalar q = sqrt(Scalar(-2) * log(p));
    z = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 1 - p_low) {
    const Scalar q = p - Scalar(0.5);
    const Scalar r = q * q;
    z = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const Scalar q = sqrt(Scalar(-2) * log1p(-p));
    z = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }

  for (int it = 0; it < 2; ++it) {
    // Evaluate the residual on the tail closest to z for accuracy.
    const Scalar e = z < 0 ? normal_cdf(z) - p : (Scalar(1) - p) - normal_cdf(-z);
    const Scalar u = e / normal_pdf(z);
    z = z - u / (Scalar(1) + z * u / Scalar(2));
  }
  return z;
}

/// c^k = -Φ⁻¹(1 - α) sqrt(C^k Σ_u C^kᵀ), one entry per constraint row.
template <typename Scalar, int Rows>
Eigen::Matrix<Scalar, Rows, 1> tightening_factors(const Eigen::Matrix<Scalar, Rows, dims::kControl>& C,
                                                  const ControlCovariance<Scalar>& sigma_u, Scalar alpha) {
  using std::sqrt;
  if (!(alpha > 0 && alpha < Scalar(0.5))) throw InvalidArgument("tightening_factors: alpha must lie in (0, 0.5)");
  const Scalar z = inverse_normal_cdf(Scalar(1) - alpha);
  const Eigen::Matrix<Scalar, Rows, 1> quad = (C * sigma_u).cwiseProduct(C).rowwise().sum();
  Eigen::Matrix<Scalar, Rows, 1> c(C.rows());
  for (Eigen::Index k = 0; k < C.rows(); ++k) c(k) = quad(k) > 0 ? -z * sqrt(quad(k)) : Scalar(0);
  return c;
}

template <typename Scalar>
ConstraintVector<Scalar> tightening_factors(const FrictionConstraintSet<Scalar>& set,
                                            const ControlCovariance<Scalar>& sigma_u, Scalar alpha) {
  return tightening_factors<Scalar, dims::kConstraintRows>(set.C, sigma_u, alpha);
}

}  // namespace ccmpc

#endif  // CCMPC_CHANCE_CONSTRAINTS_HPP
