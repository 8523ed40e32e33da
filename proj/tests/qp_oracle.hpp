#pragma once

// Reference QP solver used only in tests: enumerate active sets of the
// inequality constraints and solve the resulting equality-constrained KKT
// system densely.  Exponential in the number of inequalities, so keep m
// small.  For strictly convex problems the optimum is unique, giving an
// independent oracle for the interior-point solver.

#include <Eigen/Dense>

#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "rfmpc/qp.hpp"
#include "test_util.hpp"

namespace rfmpc::test {

struct OracleSolution {
  Eigen::VectorXd z;
  Eigen::VectorXd lambda;  // full-length, zero on inactive rows
};

inline std::optional<OracleSolution> solve_qp_by_enumeration(
    const QpProblem& qp, double tol = 1e-9) {
  const Eigen::Index n = qp.num_vars();
  const Eigen::Index p = qp.num_eq();
  const Eigen::Index m = qp.num_ineq();
  const Eigen::MatrixXd P = Eigen::MatrixXd(qp.P);
  const Eigen::MatrixXd Aeq = Eigen::MatrixXd(qp.A_eq);
  const Eigen::MatrixXd Ain = Eigen::MatrixXd(qp.A_ineq);

  std::optional<OracleSolution> best;
  double best_obj = std::numeric_limits<double>::infinity();

  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    std::vector<int> active;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (mask & (1u << i)) active.push_back(static_cast<int>(i));
    }
    const Eigen::Index a = static_cast<Eigen::Index>(active.size());
    const Eigen::Index dim = n + p + a;

    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd rhs(dim);
    kkt.topLeftCorner(n, n) = P;
    rhs.head(n) = -qp.c;
    if (p > 0) {
      kkt.block(n, 0, p, n) = Aeq;
      kkt.block(0, n, n, p) = Aeq.transpose();
      rhs.segment(n, p) = qp.b_eq;
    }
    for (Eigen::Index j = 0; j < a; ++j) {
      kkt.row(n + p + j).head(n) = Ain.row(active[j]);
      kkt.col(n + p + j).head(n) = Ain.row(active[j]).transpose();
      rhs[n + p + j] = qp.b_ineq[active[j]];
    }

    const Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd sol = lu.solve(rhs);
    const Eigen::VectorXd z = sol.head(n);

    bool ok = true;
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
    for (Eigen::Index j = 0; j < a; ++j) {
      const double lam = sol[n + p + j];
      if (lam < -tol) {
        ok = false;
        break;
      }
      lambda[active[j]] = std::max(0.0, lam);
    }
    if (!ok) continue;
    if (m > 0 && ((Ain * z - qp.b_ineq).array() > tol).any()) continue;
    if (p > 0 && (Aeq * z - qp.b_eq).cwiseAbs().maxCoeff() > 1e-7) continue;

    const double obj = qp.objective(z);
    if (obj < best_obj) {
      best_obj = obj;
      best = OracleSolution{z, lambda};
    }
  }
  return best;
}

// Random strictly convex QP that is feasible by construction: constraints
// are anchored at an interior point, and a fraction of the inequality
// bounds are pulled tight so the active set is nontrivial.
inline QpProblem random_feasible_qp(std::mt19937& rng, int n_max = 8,
                                    int m_max = 8, int p_max = 2) {
  std::uniform_int_distribution<int> ndist(2, n_max);
  std::uniform_int_distribution<int> mdist(0, m_max);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const int n = ndist(rng);
  const int m = mdist(rng);
  std::uniform_int_distribution<int> pdist(0, std::min(p_max, n - 1));
  const int p = pdist(rng);

  QpProblem qp;
  qp.P = random_spd(rng, n, 0.1).sparseView();
  qp.c.resize(n);
  for (int i = 0; i < n; ++i) qp.c[i] = 2.0 * gauss(rng);

  Eigen::VectorXd z0(n);
  for (int i = 0; i < n; ++i) z0[i] = gauss(rng);

  Eigen::MatrixXd Aeq(p, n), Ain(m, n);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < n; ++j) Aeq(i, j) = gauss(rng);
  }
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) Ain(i, j) = gauss(rng);
  }
  qp.A_eq = Aeq.sparseView();
  qp.b_eq = Aeq * z0;
  qp.A_ineq = Ain.sparseView();
  qp.b_ineq.resize(m);
  for (int i = 0; i < m; ++i) {
    const double slack = (unif(rng) < 0.4) ? 1e-3 * unif(rng) : unif(rng);
    qp.b_ineq[i] = Ain.row(i).dot(z0) + slack;
  }
  return qp;
}

}  // namespace rfmpc::test
