#pragma once

// Convex QP solver: Mehrotra predictor-corrector primal-dual interior
// point method.  The KKT system is kept in the sparse 3x3 quasi-definite
// form and factored with a no-pivot LDL^T under static regularization, so
// the symbolic analysis is reused across iterations and solves of the same
// problem shape.
//
//   minimize    1/2 z' P z + c' z
//   subject to  A_eq z  = b_eq
//               A_ineq z <= b_ineq

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "rfmpc/errors.hpp"

namespace rfmpc {

using SpMat = Eigen::SparseMatrix<double>;

struct QpProblem {
  SpMat P;
  Eigen::VectorXd c;
  SpMat A_ineq;
  Eigen::VectorXd b_ineq;
  SpMat A_eq;
  Eigen::VectorXd b_eq;

  Eigen::Index num_vars() const { return c.size(); }
  Eigen::Index num_eq() const { return b_eq.size(); }
  Eigen::Index num_ineq() const { return b_ineq.size(); }

  double objective(const Eigen::VectorXd& z) const {
    return 0.5 * z.dot(P * z) + c.dot(z);
  }
};

struct SolverSettings {
  int max_iters = 50;
  double abs_tol = 1e-7;
  double rel_gap = 1e-8;
  double regularization = 1e-9;
};

enum class SolveStatus { kOptimal, kMaxIters, kInfeasible };

struct SolverResult {
  Eigen::VectorXd z;
  Eigen::VectorXd y;       // equality multipliers
  Eigen::VectorXd lambda;  // inequality multipliers (>= 0)
  SolveStatus status = SolveStatus::kMaxIters;
  int iterations = 0;
  double primal_eq_residual = 0.0;
  double primal_ineq_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  double solve_time_s = 0.0;
};

// Regularized KKT matrix
//   [ P + eI   A_eq'    A_ineq' ]
//   [ A_eq     -eI      0       ]
//   [ A_ineq   0        -W - eI ]
// with W = diag(s ./ lambda).  Symbolic analysis happens once per pattern.
class KktFactorization {
 public:
  void assemble(const QpProblem& qp, double eps) {
    n_ = qp.num_vars();
    p_ = qp.num_eq();
    m_ = qp.num_ineq();
    const Eigen::Index dim = n_ + p_ + m_;

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(qp.P.nonZeros() + 2 * qp.A_eq.nonZeros() +
                                     2 * qp.A_ineq.nonZeros() + dim));
    for (int k = 0; k < qp.P.outerSize(); ++k) {
      for (SpMat::InnerIterator it(qp.P, k); it; ++it) {
        trip.emplace_back(it.row(), it.col(), it.value());
      }
    }
    for (int k = 0; k < qp.A_eq.outerSize(); ++k) {
      for (SpMat::InnerIterator it(qp.A_eq, k); it; ++it) {
        trip.emplace_back(n_ + it.row(), it.col(), it.value());
        trip.emplace_back(it.col(), n_ + it.row(), it.value());
      }
    }
    for (int k = 0; k < qp.A_ineq.outerSize(); ++k) {
      for (SpMat::InnerIterator it(qp.A_ineq, k); it; ++it) {
        trip.emplace_back(n_ + p_ + it.row(), it.col(), it.value());
        trip.emplace_back(it.col(), n_ + p_ + it.row(), it.value());
      }
    }
    // explicit diagonal so regularization and W updates stay structural
    for (Eigen::Index i = 0; i < n_; ++i) trip.emplace_back(i, i, eps);
    for (Eigen::Index i = 0; i < p_; ++i) {
      trip.emplace_back(n_ + i, n_ + i, -eps);
    }
    for (Eigen::Index i = 0; i < m_; ++i) {
      trip.emplace_back(n_ + p_ + i, n_ + p_ + i, -1.0 - eps);
    }
    kkt_.resize(dim, dim);
    kkt_.setFromTriplets(trip.begin(), trip.end());
    kkt_.makeCompressed();
    ldlt_.analyzePattern(kkt_);
    analyzed_ = true;
    eps_ = eps;
  }

  // Update W = diag(w) and refactorize numerically.
  void factorize(const Eigen::VectorXd& w) {
    for (Eigen::Index i = 0; i < m_; ++i) {
      kkt_.coeffRef(n_ + p_ + i, n_ + p_ + i) = -w[i] - eps_;
    }
    ldlt_.factorize(kkt_);
    if (ldlt_.info() != Eigen::Success) {
      throw FactorizationFailure("KKT LDL^T factorization failed");
    }
  }

  // Solve with one step of iterative refinement against the assembled
  // (regularized) matrix.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd x = ldlt_.solve(rhs);
    const Eigen::VectorXd r = rhs - kkt_ * x;
    x += ldlt_.solve(r);
    return x;
  }

  std::uint64_t pattern_hash() const {
    std::uint64_t h = 1469598103934665603ull;
    const auto mix = [&h](std::uint64_t v) {
      h ^= v;
      h *= 1099511628211ull;
    };
    mix(static_cast<std::uint64_t>(kkt_.rows()));
    for (Eigen::Index k = 0; k <= kkt_.outerSize(); ++k) {
      mix(static_cast<std::uint64_t>(kkt_.outerIndexPtr()[k]));
    }
    for (Eigen::Index k = 0; k < kkt_.nonZeros(); ++k) {
      mix(static_cast<std::uint64_t>(kkt_.innerIndexPtr()[k]));
    }
    return h;
  }

  bool analyzed() const { return analyzed_; }
  Eigen::Index dim() const { return n_ + p_ + m_; }

 private:
  Eigen::Index n_ = 0, p_ = 0, m_ = 0;
  double eps_ = 0.0;
  bool analyzed_ = false;
  SpMat kkt_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldlt_;
};

class QpSolver {
 public:
  explicit QpSolver(SolverSettings settings = {}) : settings_(settings) {}

  SolverResult solve(const QpProblem& qp) {
    const auto t0 = std::chrono::steady_clock::now();
    const Eigen::Index n = qp.num_vars();
    const Eigen::Index p = qp.num_eq();
    const Eigen::Index m = qp.num_ineq();
    if (qp.P.rows() != n || qp.P.cols() != n ||
        (p > 0 && qp.A_eq.cols() != n) || (m > 0 && qp.A_ineq.cols() != n)) {
      throw DimensionMismatch("QpSolver::solve: inconsistent dimensions");
    }

    kkt_.assemble(qp, settings_.regularization);

    SolverResult res;
    res.z.resize(n);
    res.y.resize(p);
    res.lambda.resize(m);

    // ---- initial point: one KKT solve with W = I, then shift into the cone
    Eigen::VectorXd rhs(n + p + m);
    rhs.segment(0, n) = -qp.c;
    rhs.segment(n, p) = qp.b_eq;
    rhs.segment(n + p, m) = qp.b_ineq;
    kkt_.factorize(Eigen::VectorXd::Ones(m));
    Eigen::VectorXd sol = kkt_.solve(rhs);

    Eigen::VectorXd z = sol.segment(0, n);
    Eigen::VectorXd y = sol.segment(n, p);
    Eigen::VectorXd lam = sol.segment(n + p, m);
    Eigen::VectorXd s = -lam;
    if (m > 0) {
      const double ap = -s.minCoeff();
      if (ap >= 0) s.array() += 1.0 + ap;
      const double ad = -lam.minCoeff();
      if (ad >= 0) lam.array() += 1.0 + ad;
    }

    Eigen::VectorXd r_dual(n), r_eq(p), r_ineq(m);
    double prev_primal = std::numeric_limits<double>::infinity();
    int stalls = 0;

    for (int iter = 0; iter <= settings_.max_iters; ++iter) {
      r_dual = qp.P * z + qp.c;
      if (p > 0) r_dual += qp.A_eq.transpose() * y;
      if (m > 0) r_dual += qp.A_ineq.transpose() * lam;
      r_eq = (p > 0) ? Eigen::VectorXd(qp.A_eq * z - qp.b_eq)
                     : Eigen::VectorXd(0);
      r_ineq = (m > 0) ? Eigen::VectorXd(qp.A_ineq * z + s - qp.b_ineq)
                       : Eigen::VectorXd(0);
      const double gap = (m > 0) ? s.dot(lam) : 0.0;

      res.iterations = iter;
      res.dual_residual = inf_norm(r_dual);
      res.primal_eq_residual = inf_norm(r_eq);
      res.primal_ineq_residual = inf_norm(r_ineq);
      res.gap = gap;

      const double obj = qp.objective(z);
      const bool converged =
          res.dual_residual <= settings_.abs_tol &&
          res.primal_eq_residual <= settings_.abs_tol &&
          res.primal_ineq_residual <= settings_.abs_tol &&
          gap <= std::max(settings_.abs_tol,
                          settings_.rel_gap * (1.0 + std::abs(obj)));
      if (converged) {
        res.status = SolveStatus::kOptimal;
        break;
      }
      if (iter == settings_.max_iters) {
        res.status = diverging(y, lam) ? SolveStatus::kInfeasible
                                       : SolveStatus::kMaxIters;
        break;
      }

      const double primal_now =
          std::max(res.primal_eq_residual, res.primal_ineq_residual);
      if (primal_now > 0.9 * prev_primal && primal_now > settings_.abs_tol) {
        ++stalls;
      } else {
        stalls = 0;
      }
      prev_primal = primal_now;
      if (stalls >= 8 && diverging(y, lam)) {
        res.status = SolveStatus::kInfeasible;
        break;
      }

      if (m == 0) {
        // equality-constrained QP: the Newton step is exact
        kkt_.factorize(Eigen::VectorXd(0));
        rhs.segment(0, n) = -r_dual;
        rhs.segment(n, p) = -r_eq;
        sol = kkt_.solve(rhs);
        z += sol.segment(0, n);
        y += sol.segment(n, p);
        continue;
      }

      const double mu = gap / static_cast<double>(m);
      kkt_.factorize(Eigen::VectorXd(s.array() / lam.array()));

      // predictor
      rhs.segment(0, n) = -r_dual;
      rhs.segment(n, p) = -r_eq;
      rhs.segment(n + p, m) = -r_ineq + s;
      sol = kkt_.solve(rhs);
      Eigen::VectorXd dlam_a = sol.segment(n + p, m);
      Eigen::VectorXd ds_a =
          (-(lam.array() * s.array()) - s.array() * dlam_a.array()) /
          lam.array();

      const double alpha_aff =
          std::min(max_step(s, ds_a), max_step(lam, dlam_a));
      const double mu_aff = (s + alpha_aff * ds_a).dot(lam + alpha_aff * dlam_a) /
                            static_cast<double>(m);
      const double sigma = std::pow(std::max(0.0, mu_aff / mu), 3);

      // corrector (reuses the factorization)
      Eigen::VectorXd r_s = lam.array() * s.array() +
                            dlam_a.array() * ds_a.array() - sigma * mu;
      rhs.segment(n + p, m) = -r_ineq + Eigen::VectorXd(r_s.array() / lam.array());
      sol = kkt_.solve(rhs);
      const Eigen::VectorXd dz = sol.segment(0, n);
      const Eigen::VectorXd dy = sol.segment(n, p);
      const Eigen::VectorXd dlam = sol.segment(n + p, m);
      const Eigen::VectorXd ds =
          Eigen::VectorXd((-r_s.array() - s.array() * dlam.array()) /
                          lam.array());

      const double alpha =
          0.99 * std::min(max_step(s, ds), max_step(lam, dlam));
      z += alpha * dz;
      y += alpha * dy;
      lam += alpha * dlam;
      s += alpha * ds;
    }

    res.z = z;
    res.y = y;
    res.lambda = lam;
    res.solve_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return res;
  }

  std::uint64_t last_pattern_hash() const { return kkt_.pattern_hash(); }

 private:
  static double inf_norm(const Eigen::VectorXd& v) {
    return v.size() > 0 ? v.cwiseAbs().maxCoeff() : 0.0;
  }

  // largest alpha in (0, 1] with v + alpha dv >= 0
  static double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
    double alpha = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (dv[i] < 0) alpha = std::min(alpha, -v[i] / dv[i]);
    }
    return alpha;
  }

  static bool diverging(const Eigen::VectorXd& y, const Eigen::VectorXd& lam) {
    const double ny = y.size() ? y.cwiseAbs().maxCoeff() : 0.0;
    const double nl = lam.size() ? lam.cwiseAbs().maxCoeff() : 0.0;
    return std::max(ny, nl) > 1e9;
  }

  SolverSettings settings_;
  KktFactorization kkt_;
};

// Plain-text dump of a QP (one "name rows cols" header per matrix followed
// by row col value triplets) for offline comparison.
inline void write_qp(const QpProblem& qp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_qp: cannot open " + path);
  out.precision(17);
  const auto dump_mat = [&out](const char* name, const SpMat& m) {
    out << name << " " << m.rows() << " " << m.cols() << " " << m.nonZeros()
        << "\n";
    for (int k = 0; k < m.outerSize(); ++k) {
      for (SpMat::InnerIterator it(m, k); it; ++it) {
        out << it.row() << " " << it.col() << " " << it.value() << "\n";
      }
    }
  };
  const auto dump_vec = [&out](const char* name, const Eigen::VectorXd& v) {
    out << name << " " << v.size() << "\n";
    for (Eigen::Index i = 0; i < v.size(); ++i) out << v[i] << "\n";
  };
  dump_mat("P", qp.P);
  dump_vec("c", qp.c);
  dump_mat("A_eq", qp.A_eq);
  dump_vec("b_eq", qp.b_eq);
  dump_mat("A_ineq", qp.A_ineq);
  dump_vec("b_ineq", qp.b_ineq);
}

}  // namespace rfmpc
