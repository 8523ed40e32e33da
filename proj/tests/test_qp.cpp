#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "qp_oracle.hpp"
#include "rfmpc/qp.hpp"

using namespace rfmpc;

namespace {

SpMat identity_sparse(int n) {
  SpMat m(n, n);
  m.setIdentity();
  return m;
}

}  // namespace

TEST_CASE("single box constraint with analytic solution") {
  // min 1/2 |z|^2 - z_1  s.t.  z_1 <= 0.5
  // unconstrained optimum (1,0,0) violates; KKT gives z = (0.5,0,0),
  // lambda = 0.5
  QpProblem qp;
  qp.P = identity_sparse(3);
  qp.c = Eigen::Vector3d(-1, 0, 0);
  qp.A_ineq.resize(1, 3);
  qp.A_ineq.insert(0, 0) = 1.0;
  qp.b_ineq = Eigen::VectorXd::Constant(1, 0.5);

  const SolverResult res = QpSolver().solve(qp);
  REQUIRE(res.status == SolveStatus::kOptimal);
  CHECK((res.z - Eigen::Vector3d(0.5, 0, 0)).norm() < 1e-7);
  CHECK(res.lambda[0] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("inactive constraint leaves the unconstrained optimum") {
  QpProblem qp;
  qp.P = identity_sparse(2);
  qp.c = Eigen::Vector2d(-1, 0);
  qp.A_ineq.resize(1, 2);
  qp.A_ineq.insert(0, 0) = 1.0;
  qp.b_ineq = Eigen::VectorXd::Constant(1, 5.0);

  const SolverResult res = QpSolver().solve(qp);
  REQUIRE(res.status == SolveStatus::kOptimal);
  CHECK((res.z - Eigen::Vector2d(1, 0)).norm() < 1e-7);
  CHECK(res.lambda[0] < 1e-6);
}

TEST_CASE("equality constrained problem is solved in one Newton step") {
  // min 1/2 |z|^2  s.t.  z_1 + z_2 = -1   ->  z = (-1/2, -1/2), y = 1/2
  QpProblem qp;
  qp.P = identity_sparse(2);
  qp.c = Eigen::Vector2d::Zero();
  qp.A_eq.resize(1, 2);
  qp.A_eq.insert(0, 0) = 1.0;
  qp.A_eq.insert(0, 1) = 1.0;
  qp.b_eq = Eigen::VectorXd::Constant(1, -1.0);

  const SolverResult res = QpSolver().solve(qp);
  REQUIRE(res.status == SolveStatus::kOptimal);
  CHECK((res.z - Eigen::Vector2d(-0.5, -0.5)).norm() < 1e-9);
  CHECK(res.y[0] == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(res.iterations <= 2);
}

TEST_CASE("random feasible problems match the active-set oracle") {
  std::mt19937 rng(1234);
  int solved = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const QpProblem qp = test::random_feasible_qp(rng);
    const auto oracle = test::solve_qp_by_enumeration(qp);
    REQUIRE(oracle.has_value());

    const SolverResult res = QpSolver().solve(qp);
    REQUIRE(res.status == SolveStatus::kOptimal);
    CHECK((res.z - oracle->z).norm() < 1e-6 * (1.0 + oracle->z.norm()));

    // KKT conditions hold independently of the oracle
    if (qp.num_ineq() > 0) {
      CHECK(res.lambda.minCoeff() > -1e-8);
      const Eigen::VectorXd slack = qp.b_ineq - qp.A_ineq * res.z;
      CHECK(slack.minCoeff() > -1e-6);
      CHECK(std::abs(res.lambda.dot(slack)) < 1e-5);
    }
    ++solved;
  }
  CHECK(solved == 100);
}

TEST_CASE("duplicate constraint rows are handled by regularization") {
  QpProblem qp;
  qp.P = identity_sparse(2);
  qp.c = Eigen::Vector2d(-2, 0);
  qp.A_ineq.resize(2, 2);
  qp.A_ineq.insert(0, 0) = 1.0;
  qp.A_ineq.insert(1, 0) = 1.0;  // identical row
  qp.b_ineq = Eigen::VectorXd::Constant(2, 0.5);

  const SolverResult res = QpSolver().solve(qp);
  REQUIRE(res.status == SolveStatus::kOptimal);
  CHECK((res.z - Eigen::Vector2d(0.5, 0)).norm() < 1e-6);
}

TEST_CASE("infeasible problem is flagged") {
  // z <= -1 and -z <= -1 cannot both hold
  QpProblem qp;
  qp.P = identity_sparse(1);
  qp.c = Eigen::VectorXd::Zero(1);
  qp.A_ineq.resize(2, 1);
  qp.A_ineq.insert(0, 0) = 1.0;
  qp.A_ineq.insert(1, 0) = -1.0;
  qp.b_ineq.resize(2);
  qp.b_ineq << -1.0, -1.0;

  const SolverResult res = QpSolver().solve(qp);
  CHECK(res.status != SolveStatus::kOptimal);
}

TEST_CASE("dimension mismatch throws") {
  QpProblem qp;
  qp.P = identity_sparse(3);
  qp.c = Eigen::Vector2d::Zero();  // wrong length
  CHECK_THROWS_AS(QpSolver().solve(qp), DimensionMismatch);
}

TEST_CASE("KKT factorization refinement residual") {
  std::mt19937 rng(99);
  const QpProblem qp = test::random_feasible_qp(rng, 10, 6, 2);
  KktFactorization kkt;
  kkt.assemble(qp, 1e-9);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(qp.num_ineq());
  kkt.factorize(w);
  Eigen::VectorXd rhs(kkt.dim());
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Eigen::Index i = 0; i < rhs.size(); ++i) rhs[i] = gauss(rng);
  const Eigen::VectorXd x = kkt.solve(rhs);

  // rebuild the regularized matrix densely and check the residual
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(kkt.dim(), kkt.dim());
  const Eigen::Index n = qp.num_vars(), p = qp.num_eq(), m = qp.num_ineq();
  K.topLeftCorner(n, n) = Eigen::MatrixXd(qp.P) +
                          1e-9 * Eigen::MatrixXd::Identity(n, n);
  K.block(n, 0, p, n) = Eigen::MatrixXd(qp.A_eq);
  K.block(0, n, n, p) = Eigen::MatrixXd(qp.A_eq).transpose();
  K.block(n + p, 0, m, n) = Eigen::MatrixXd(qp.A_ineq);
  K.block(0, n + p, n, m) = Eigen::MatrixXd(qp.A_ineq).transpose();
  K.block(n, n, p, p) = -1e-9 * Eigen::MatrixXd::Identity(p, p);
  K.block(n + p, n + p, m, m) =
      -(w.array() + 1e-9).matrix().asDiagonal().toDenseMatrix();
  CHECK((K * x - rhs).cwiseAbs().maxCoeff() < 1e-9 * (1.0 + rhs.norm()));
}

TEST_CASE("pattern hash is stable across same-shaped problems") {
  std::mt19937 rng(7);
  QpSolver solver;
  // identical sparsity pattern, different values
  std::uint64_t first = 0;
  for (int i = 0; i < 3; ++i) {
    QpProblem qp;
    Eigen::MatrixXd Pd = test::random_spd(rng, 4, 0.5);
    qp.P = Pd.sparseView(0.0, -1.0);  // keep all entries -> fixed pattern
    qp.c = Eigen::VectorXd::Zero(4);
    Eigen::MatrixXd Ad(2, 4);
    Ad.setOnes();
    qp.A_ineq = Ad.sparseView(0.0, -1.0);
    qp.b_ineq = Eigen::VectorXd::Ones(2);
    const SolverResult res = solver.solve(qp);
    REQUIRE(res.status == SolveStatus::kOptimal);
    if (i == 0) {
      first = solver.last_pattern_hash();
    } else {
      CHECK(solver.last_pattern_hash() == first);
    }
  }
}

TEST_CASE("qp dump round trips through the text format") {
  std::mt19937 rng(11);
  const QpProblem qp = test::random_feasible_qp(rng, 5, 4, 1);
  const std::string path =
      (std::filesystem::temp_directory_path() / "qp_dump_test.txt").string();
  write_qp(qp, path);

  std::ifstream in(path);
  REQUIRE(in.good());
  std::string name;
  long rows, cols, nnz;
  in >> name >> rows >> cols >> nnz;
  CHECK(name == "P");
  CHECK(rows == qp.num_vars());
  CHECK(cols == qp.num_vars());
  CHECK(nnz == qp.P.nonZeros());
  in.close();
  std::filesystem::remove(path);
}
