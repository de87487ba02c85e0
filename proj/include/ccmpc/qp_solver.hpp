#ifndef CCMPC_QP_SOLVER_HPP
#define CCMPC_QP_SOLVER_HPP

// Dense primal active-set solver for strictly convex QPs
//
//   minimize   ½ xᵀ H x + gᵀ x
//   subject to A x <= b
//
// Equality-constrained subproblems are solved in the range space of H using a
// single Cholesky factorization, so each iteration only factors the small
// Schur complement of the working set. An elastic projection finds a feasible
// start when the warm start is infeasible. If the primal iteration stalls, a dual
// projected-gradient pass recovers the active set.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

namespace ccmpc {

template <typename Scalar>
struct QuadProgram {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Mat H;
  Vec g;
  Mat A;
  Vec b;

  Eigen::Index num_variables() const { return H.rows(); }
  Eigen::Index num_constraints() const { return A.rows(); }
  Scalar objective(const Vec& x) const { return Scalar(0.5) * x.dot(H * x) + g.dot(x); }
};

enum class QpStatus { Optimal, Infeasible, MaxIterations, NotConvex };

inline std::string_view to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::MaxIterations: return "max_iterations";
    case QpStatus::NotConvex: return "not_convex";
  }
  return "unknown";
}

template <typename Scalar>
struct KktResiduals {
  Scalar stationarity = 0;     // ‖Hx + g + Aᵀλ‖∞
  Scalar primal = 0;           // max(0, max(Ax - b))
  Scalar dual = 0;             // max(0, -min λ)
  Scalar complementarity = 0;  // max |λ_i (A x - b)_i|

  Scalar max() const { return std::max({stationarity, primal, dual, complementarity}); }
};

template <typename Scalar>
struct QpResult {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> lambda;
  QpStatus status = QpStatus::MaxIterations;
  int iterations = 0;
  bool used_fallback = false;
  std::vector<int> active_set;
  KktResiduals<Scalar> kkt;
  Scalar objective = 0;
};

template <typename Scalar>
struct QpWarmStart {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x;
  std::vector<int> active_set;
};

template <typename Scalar>
struct QpSettings {
  int max_iterations = 1000;
  Scalar feasibility_tolerance = Scalar(1e-9);
  Scalar multiplier_tolerance = Scalar(1e-10);
  Scalar infeasibility_tolerance = Scalar(1e-7);
  int zero_steps_before_bland = 8;
  int zero_steps_before_perturbation = 40;
  int fallback_iterations = 20000;
};

template <typename Scalar>
KktResiduals<Scalar> kkt_residuals(const QuadProgram<Scalar>& qp, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x,
                                   const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& lambda) {
  KktResiduals<Scalar> r;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> grad = qp.H * x + qp.g;
  if (qp.A.rows() > 0) grad += qp.A.transpose() * lambda;
  r.stationarity = grad.size() ? grad.cwiseAbs().maxCoeff() : Scalar(0);
  if (qp.A.rows() > 0) {
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> slack = qp.A * x - qp.b;
    r.primal = std::max(Scalar(0), slack.maxCoeff());
    r.dual = std::max(Scalar(0), -lambda.minCoeff());
    r.complementarity = lambda.cwiseProduct(slack).cwiseAbs().maxCoeff();
  }
  return r;
}

template <typename Scalar>
class ActiveSetSolver {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  explicit ActiveSetSolver(QpSettings<Scalar> settings = {}) : settings_(settings) {}

  const QpSettings<Scalar>& settings() const { return settings_; }

  QpResult<Scalar> solve(const QuadProgram<Scalar>& qp, const QpWarmStart<Scalar>* warm = nullptr) const {
    const Eigen::Index n = qp.num_variables();
    const Eigen::Index m = qp.num_constraints();
    QpResult<Scalar> result;
    result.lambda = Vec::Zero(m);
    if (n == 0) {
      result.x = Vec::Zero(0);
      const bool feasible = m == 0 || qp.b.minCoeff() >= -settings_.feasibility_tolerance;
      result.status = feasible ? QpStatus::Optimal : QpStatus::Infeasible;
      return result;
    }

    const Eigen::LLT<Mat> llt(qp.H);
    if (llt.info() != Eigen::Success) {
      result.x = Vec::Zero(n);
      result.status = QpStatus::NotConvex;
      return result;
    }

    Vec x0 = Vec::Zero(n);
    if (warm && warm->x.size() == n) x0 = warm->x;

    std::vector<int> working;
    if (m > 0 && max_violation(qp, x0) > settings_.feasibility_tolerance) {
      int phase1_iterations = 0;
      std::optional<Vec> feasible = find_feasible_point(qp, x0, phase1_iterations);
      result.iterations += phase1_iterations;
      if (!feasible) {
        result.x = x0;
        result.status = QpStatus::Infeasible;
        result.kkt = kkt_residuals(qp, result.x, result.lambda);
        result.objective = qp.objective(result.x);
        return result;
      }
      x0 = *feasible;
    } else if (warm) {
      working = warm->active_set;
    }

    Phase phase = primal_active_set(qp, llt, x0, working, settings_.max_iterations);
    result.iterations += phase.iterations;
    result.x = phase.x;
    if (phase.cycling && resolve_perturbed(qp, llt, phase, result)) {
      result.status = QpStatus::Optimal;
    } else if (phase.converged) {
      result.status = QpStatus::Optimal;
      result.active_set = phase.working;
      for (std::size_t k = 0; k < phase.working.size(); ++k) result.lambda(phase.working[k]) = phase.lambda_w(k);
    } else {
      result.used_fallback = true;
      dual_projected_gradient(qp, llt, result);
    }
    result.kkt = kkt_residuals(qp, result.x, result.lambda);
    result.objective = qp.objective(result.x);
    return result;
  }

 private:
  struct Phase {
    Vec x;
    Vec lambda_w;
    std::vector<int> working;
    int iterations = 0;
    bool converged = false;
    bool cycling = false;
  };

  static Scalar max_violation(const QuadProgram<Scalar>& qp, const Vec& x) {
    if (qp.A.rows() == 0) return Scalar(0);
    return (qp.A * x - qp.b).maxCoeff();
  }

  // Working-set rows in the H⁻¹ metric: columns z_i = L⁻¹ a_i (computed on
  // demand) and a Cholesky factor of their Gram matrix, updated one row at a
  // time.
  class WorkingFactor {
   public:
    WorkingFactor(const QuadProgram<Scalar>& qp, const Eigen::LLT<Mat>& llt)
        : qp_(qp), llt_(llt), n_(qp.num_variables()), Z_(n_, qp.num_constraints()),
          cached_(static_cast<std::size_t>(qp.num_constraints()), 0), Zw_(n_, n_), L_(n_, n_) {}

    Eigen::Index size() const { return static_cast<Eigen::Index>(rows_.size()); }
    const std::vector<int>& rows() const { return rows_; }

    // Appends row i unless it is numerically dependent on the working set.
    bool add(int i) {
      const Eigen::Index w = size();
      if (w >= n_) return false;
      const auto z = column(i);
      Vec l = Zw_.leftCols(w).transpose() * z;
      if (w > 0) L_.topLeftCorner(w, w).template triangularView<Eigen::Lower>().solveInPlace(l);
      const Scalar zz = z.squaredNorm();
      const Scalar d2 = zz - l.squaredNorm();
      if (!(d2 > Scalar(1e-16) * zz)) return false;
      Zw_.col(w) = z;
      L_.row(w).head(w) = l.transpose();
      L_(w, w) = std::sqrt(d2);
      rows_.push_back(i);
      return true;
    }

    void remove(Eigen::Index k) {
      const Eigen::Index w = size();
      const Eigen::Index tail = w - k - 1;
      Vec x = L_.col(k).segment(k + 1, tail);
      if (tail > 0) {
        Zw_.middleCols(k, tail) = Zw_.middleCols(k + 1, tail).eval();
        L_.block(k, 0, tail, k) = L_.block(k + 1, 0, tail, k).eval();
        L_.block(k, k, tail, tail) = L_.block(k + 1, k + 1, tail, tail).eval();
        // L33 L33ᵀ + x xᵀ, refactored in place.
        for (Eigen::Index j = 0; j < tail; ++j) {
          const Eigen::Index jj = k + j;
          const Scalar ljj = L_(jj, jj);
          const Scalar r = std::hypot(ljj, x(j));
          const Scalar c = r / ljj;
          const Scalar sn = x(j) / ljj;
          L_(jj, jj) = r;
          for (Eigen::Index i = j + 1; i < tail; ++i) {
            const Eigen::Index ii = k + i;
            L_(ii, jj) = (L_(ii, jj) + sn * x(i)) / c;
            x(i) = c * x(i) - sn * L_(ii, jj);
          }
        }
      }
      rows_.erase(rows_.begin() + k);
    }

    // Multipliers of the equality subproblem and the projected residual u, for y = L⁻¹ ∇f.
    void project(const Vec& y, Vec& lambda_w, Vec& u) const {
      const Eigen::Index w = size();
      u = y;
      lambda_w.resize(w);
      if (w == 0) return;
      lambda_w = -(Zw_.leftCols(w).transpose() * y);
      const auto Lw = L_.topLeftCorner(w, w).template triangularView<Eigen::Lower>();
      Lw.solveInPlace(lambda_w);
      Lw.transpose().solveInPlace(lambda_w);
      u.noalias() += Zw_.leftCols(w) * lambda_w;
    }

   private:
    auto column(int i) {
      const auto si = static_cast<std::size_t>(i);
      if (!cached_[si]) {
        Z_.col(i) = qp_.A.row(i).transpose();
        llt_.matrixL().solveInPlace(Z_.col(i));
        cached_[si] = 1;
      }
      return Z_.col(i);
    }

    const QuadProgram<Scalar>& qp_;
    const Eigen::LLT<Mat>& llt_;
    Eigen::Index n_;
    Mat Z_;
    std::vector<char> cached_;
    Mat Zw_;
    Mat L_;
    std::vector<int> rows_;
  };

  Phase primal_active_set(const QuadProgram<Scalar>& qp, const Eigen::LLT<Mat>& llt, const Vec& x_start,
                          const std::vector<int>& initial_working, int max_iterations) const {
    const Eigen::Index n = qp.num_variables();
    const Eigen::Index m = qp.num_constraints();

    Phase out;
    out.x = x_start;
    WorkingFactor factor(qp, llt);
    std::vector<char> in_working(static_cast<std::size_t>(m), 0);
    for (int i : initial_working) {
      if (i < 0 || i >= m || in_working[static_cast<std::size_t>(i)]) continue;
      const Scalar slack = qp.b(i) - qp.A.row(i).dot(out.x);
      if (std::abs(slack) > settings_.feasibility_tolerance * (Scalar(1) + std::abs(qp.b(i)))) continue;
      if (factor.add(i)) in_working[static_cast<std::size_t>(i)] = 1;
      if (factor.size() >= n) break;
    }

    bool at_subproblem_optimum = false;
    int zero_steps = 0;
    const Scalar scale_b = m > 0 ? Scalar(1) + qp.b.cwiseAbs().maxCoeff() : Scalar(1);
    Vec y(n), u(n), p(n), lambda_w;

    auto finish = [&] {
      out.working = factor.rows();
      out.lambda_w = lambda_w;
    };

    for (int it = 0; it < max_iterations; ++it) {
      out.iterations = it + 1;
      y.noalias() = qp.H * out.x;
      y += qp.g;
      llt.matrixL().solveInPlace(y);
      factor.project(y, lambda_w, u);
      p = -u;
      llt.matrixU().solveInPlace(p);
      const Eigen::Index w = factor.size();

      const Scalar x_scale = Scalar(1) + out.x.cwiseAbs().maxCoeff();
      // A full working set pins x; any nonzero p there is rounding noise.
      if (at_subproblem_optimum || w == n || p.cwiseAbs().maxCoeff() <= Scalar(1e-11) * x_scale) {
        at_subproblem_optimum = false;
        Eigen::Index drop = -1;
        Scalar most_negative = -settings_.multiplier_tolerance * (Scalar(1) + (w ? lambda_w.cwiseAbs().maxCoeff() : Scalar(0)));
        const bool bland = zero_steps >= settings_.zero_steps_before_bland;
        for (Eigen::Index k = 0; k < w; ++k) {
          if (lambda_w(k) < most_negative) {
            if (bland) {
              if (drop < 0 || factor.rows()[static_cast<std::size_t>(k)] < factor.rows()[static_cast<std::size_t>(drop)])
                drop = k;
            } else {
              most_negative = lambda_w(k);
              drop = k;
            }
          }
        }
        if (drop < 0) {
          finish();
          out.converged = true;
          return out;
        }
        in_working[static_cast<std::size_t>(factor.rows()[static_cast<std::size_t>(drop)])] = 0;
        factor.remove(drop);
        continue;
      }

      Scalar alpha = Scalar(1);
      int blocking = -1;
      if (m > 0) {
        const Vec Ap = qp.A * p;
        const Vec slack = qp.b - qp.A * out.x;
        const bool bland = zero_steps >= settings_.zero_steps_before_bland;
        for (Eigen::Index i = 0; i < m; ++i) {
          if (in_working[static_cast<std::size_t>(i)]) continue;
          if (Ap(i) <= Scalar(1e-14) * scale_b) continue;
          const Scalar t = std::max(Scalar(0), slack(i)) / Ap(i);
          if (t < alpha || (bland && t == alpha && blocking >= 0 && i < blocking)) {
            alpha = t;
            blocking = static_cast<int>(i);
          }
        }
      }
      out.x += alpha * p;
      if (blocking >= 0) {
        zero_steps = alpha <= Scalar(0) ? zero_steps + 1 : 0;
        if (zero_steps >= settings_.zero_steps_before_perturbation) {
          out.cycling = true;
          finish();
          return out;
        }
        if (factor.add(blocking)) in_working[static_cast<std::size_t>(blocking)] = 1;
      } else {
        zero_steps = 0;
        at_subproblem_optimum = true;
      }
    }
    finish();
    return out;
  }

  // Degenerate vertices: relax each row by a distinct tiny amount so no two
  // rows tie, solve from the current (still feasible) iterate, then recover
  // the exact solution on that working set.
  bool resolve_perturbed(const QuadProgram<Scalar>& qp, const Eigen::LLT<Mat>& llt, const Phase& stalled,
                         QpResult<Scalar>& result) const {
    const Eigen::Index m = qp.num_constraints();
    const Scalar scale_b = Scalar(1) + qp.b.cwiseAbs().maxCoeff();
    QuadProgram<Scalar> relaxed = qp;
    for (Eigen::Index i = 0; i < m; ++i) {
      const Scalar golden = Scalar(0.6180339887498949) * static_cast<Scalar>(i + 1);
      relaxed.b(i) += Scalar(1e-9) * scale_b * (Scalar(1) + golden - std::floor(golden));
    }
    const int budget = std::max(settings_.max_iterations - stalled.iterations, settings_.max_iterations / 2);
    const Phase phase = primal_active_set(relaxed, llt, stalled.x, {}, budget);
    result.iterations += phase.iterations;
    if (!phase.converged) return false;

    Mat Z = qp.A.transpose();
    llt.matrixL().solveInPlace(Z);
    Vec x, lambda_w;
    equality_solve(qp, llt, Z, phase.working, x, lambda_w);
    Vec lambda = Vec::Zero(m);
    for (std::size_t k = 0; k < phase.working.size(); ++k) lambda(phase.working[k]) = lambda_w(static_cast<Eigen::Index>(k));
    const auto kkt = kkt_residuals(qp, x, lambda);
    if (kkt.primal > settings_.feasibility_tolerance * scale_b || kkt.max() > Scalar(1e-6)) return false;
    result.x = x;
    result.lambda = lambda;
    result.active_set = phase.working;
    return true;
  }

  // Minimizer of the objective with the rows in `working` held as equalities.
  static void equality_solve(const QuadProgram<Scalar>& qp, const Eigen::LLT<Mat>& llt, const Mat& Z,
                             const std::vector<int>& working, Vec& x, Vec& lambda_w) {
    const auto w = static_cast<Eigen::Index>(working.size());
    lambda_w = Vec::Zero(w);
    Vec rhs = -qp.g;
    if (w > 0) {
      Mat Zw(qp.num_variables(), w);
      Vec bw(w);
      for (Eigen::Index k = 0; k < w; ++k) {
        Zw.col(k) = Z.col(working[static_cast<std::size_t>(k)]);
        bw(k) = qp.b(working[static_cast<std::size_t>(k)]);
      }
      Vec y = qp.g;
      llt.matrixL().solveInPlace(y);
      lambda_w = (Zw.transpose() * Zw).ldlt().solve(-(Zw.transpose() * y) - bw);
      for (Eigen::Index k = 0; k < w; ++k) rhs -= qp.A.row(working[static_cast<std::size_t>(k)]).transpose() * lambda_w(k);
    }
    x = llt.solve(rhs);
  }

  // Elastic projection of x0: minimizes ½‖x − x0‖² + ½s² + M·s subject to
  // Ax − s <= b, s >= 0. The penalty M grows until s vanishes; a residual
  // slack at the largest M means the rows are inconsistent.
  std::optional<Vec> find_feasible_point(const QuadProgram<Scalar>& qp, const Vec& x0, int& iterations) const {
    const Eigen::Index n = qp.num_variables();
    const Eigen::Index m = qp.num_constraints();
    QuadProgram<Scalar> elastic;
    elastic.H = Mat::Identity(n + 1, n + 1);
    elastic.g = Vec::Zero(n + 1);
    elastic.g.head(n) = -x0;
    elastic.A = Mat::Zero(m + 1, n + 1);
    elastic.A.topLeftCorner(m, n) = qp.A;
    elastic.A.col(n).head(m).setConstant(Scalar(-1));
    elastic.A(m, n) = Scalar(-1);
    elastic.b = Vec::Zero(m + 1);
    elastic.b.head(m) = qp.b;

    Vec start(n + 1);
    start.head(n) = x0;
    start(n) = std::max(Scalar(0), max_violation(qp, x0));
    std::vector<int> working;
    const Eigen::LLT<Mat> llt(elastic.H);
    const Scalar scale_b = Scalar(1) + qp.b.cwiseAbs().maxCoeff();
    const Scalar row_scale = Scalar(1) + qp.A.cwiseAbs().maxCoeff();
    iterations = 0;
    for (Scalar penalty = scale_b * row_scale;; penalty *= Scalar(1e3)) {
      elastic.g(n) = penalty;
      const Phase phase = primal_active_set(elastic, llt, start, working, settings_.max_iterations);
      iterations += phase.iterations;
      const Vec x = phase.x.head(n);
      if (max_violation(qp, x) <= settings_.feasibility_tolerance * scale_b) return x;
      if (penalty > Scalar(1e12) * scale_b * row_scale) {
        if (max_violation(qp, x) <= settings_.infeasibility_tolerance * scale_b) return x;
        return std::nullopt;
      }
      start = phase.x;
      working = phase.working;
    }
  }

  // Accelerated projected gradient ascent on the dual, then an equality solve
  // on the identified active set.
  void dual_projected_gradient(const QuadProgram<Scalar>& qp, const Eigen::LLT<Mat>& llt,
                               QpResult<Scalar>& result) const {
    const Eigen::Index m = qp.num_constraints();
    auto primal_of = [&](const Vec& lambda) {
      Vec rhs = -qp.g;
      if (m > 0) rhs -= qp.A.transpose() * lambda;
      return Vec(llt.solve(rhs));
    };
    if (m == 0) {
      result.x = primal_of(Vec::Zero(0));
      result.status = QpStatus::Optimal;
      return;
    }
    Mat Z = qp.A.transpose();
    llt.matrixL().solveInPlace(Z);
    const Scalar lipschitz = std::max((Z.transpose() * Z).eval().template selfadjointView<Eigen::Lower>().eigenvalues().maxCoeff(),
                                      Scalar(1e-300));
    Vec lambda = Vec::Zero(m);
    Vec lambda_prev = lambda;
    Vec momentum = lambda;
    Scalar t = 1;
    Vec x = primal_of(lambda);
    for (int it = 0; it < settings_.fallback_iterations; ++it) {
      const Vec x_m = primal_of(momentum);
      const Vec grad = qp.A * x_m - qp.b;
      lambda_prev = lambda;
      lambda = (momentum + grad / lipschitz).cwiseMax(Scalar(0));
      const Scalar t_next = (Scalar(1) + std::sqrt(Scalar(1) + Scalar(4) * t * t)) / Scalar(2);
      momentum = lambda + ((t - Scalar(1)) / t_next) * (lambda - lambda_prev);
      t = t_next;
      x = primal_of(lambda);
      ++result.iterations;
      if (kkt_residuals(qp, x, lambda).max() < Scalar(1e-9)) break;
    }

    // Polish on the identified active set.
    std::vector<int> active;
    const Scalar lambda_scale = Scalar(1) + lambda.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < m; ++i) {
      if (lambda(i) > Scalar(1e-8) * lambda_scale) active.push_back(static_cast<int>(i));
    }
    Vec polished_x = x;
    Vec polished_lambda = lambda;
    if (!active.empty()) {
      const auto w = static_cast<Eigen::Index>(active.size());
      Mat Zw(qp.num_variables(), w);
      for (Eigen::Index k = 0; k < w; ++k) Zw.col(k) = Z.col(active[static_cast<std::size_t>(k)]);
      Vec y = qp.g;
      llt.matrixL().solveInPlace(y);
      // Equality-constrained solve with A_w x = b_w.
      Vec bw(w);
      for (Eigen::Index k = 0; k < w; ++k) bw(k) = qp.b(active[static_cast<std::size_t>(k)]);
      const Mat S = Zw.transpose() * Zw;
      const Vec lw = S.ldlt().solve(-(Zw.transpose() * y) - bw);
      polished_lambda.setZero();
      for (Eigen::Index k = 0; k < w; ++k) polished_lambda(active[static_cast<std::size_t>(k)]) = lw(k);
      polished_x = primal_of(polished_lambda);
    }
    const auto polished = kkt_residuals(qp, polished_x, polished_lambda);
    const auto raw = kkt_residuals(qp, x, lambda);
    if (polished.max() <= raw.max()) {
      result.x = polished_x;
      result.lambda = polished_lambda;
      result.active_set = active;
    } else {
      result.x = x;
      result.lambda = lambda;
    }
    const auto final_kkt = kkt_residuals(qp, result.x, result.lambda);
    result.status = final_kkt.max() < Scalar(1e-6) ? QpStatus::Optimal : QpStatus::MaxIterations;
  }

  QpSettings<Scalar> settings_;
};

}  // namespace ccmpc

#endif  // CCMPC_QP_SOLVER_HPP
