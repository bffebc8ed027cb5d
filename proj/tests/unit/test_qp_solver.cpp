#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "deeplcc/qp_solver.hpp"
#include "oracles.hpp"

using namespace deeplcc;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct RandomQp {
  Eigen::MatrixXd P, A, C;
  Eigen::VectorXd q, b, l, u;
};

RandomQp random_box_qp(int nx, int neq, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  auto randn = [&](int r, int c) {
    Eigen::MatrixXd M(r, c);
    for (int j = 0; j < c; ++j)
      for (int i = 0; i < r; ++i) M(i, j) = normal(rng);
    return M;
  };
  RandomQp qp;
  const Eigen::MatrixXd M = randn(nx, nx);
  qp.P = M.transpose() * M / nx + 0.1 * Eigen::MatrixXd::Identity(nx, nx);
  qp.q = 3.0 * randn(nx, 1);
  qp.A = randn(neq, nx);
  const Eigen::VectorXd x_feasible = 0.5 * Eigen::VectorXd::Random(nx);
  qp.b = qp.A * x_feasible;
  qp.C = Eigen::MatrixXd::Identity(nx, nx);
  qp.l = Eigen::VectorXd::Constant(nx, -1.0);
  qp.u = Eigen::VectorXd::Constant(nx, 1.0);
  return qp;
}

double kkt_stationarity(const RandomQp& qp, const QpSolution& s) {
  return (qp.P * s.x + qp.q + qp.A.transpose() * s.eq_multiplier +
          qp.C.transpose() * s.ineq_multiplier)
      .lpNorm<Eigen::Infinity>();
}

}  // namespace

TEST(QpSolver, ToyEqualityProblem) {
  DenseQpSolver solver(2.0 * Eigen::MatrixXd::Identity(2, 2),
                       Eigen::RowVector2d(1.0, 0.0), Eigen::MatrixXd(0, 2));
  const auto s = solver.solve(Eigen::Vector2d::Zero(), Eigen::VectorXd::Ones(1),
                              Eigen::VectorXd(0), Eigen::VectorXd(0));
  ASSERT_EQ(s.status, QpStatus::kOptimal);
  EXPECT_NEAR(s.x(0), 1.0, 1e-8);
  EXPECT_NEAR(s.x(1), 0.0, 1e-8);
  EXPECT_NEAR(s.objective, 1.0, 1e-8);
}

TEST(QpSolver, MatchesFirstOrderOracleOnRandomBoxQps) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto qp = random_box_qp(50, 10, seed);
    DenseQpSolver solver(qp.P, qp.A, qp.C);
    const auto s = solver.solve(qp.q, qp.b, qp.l, qp.u);
    ASSERT_EQ(s.status, QpStatus::kOptimal) << s.message;
    const auto ref = oracle::first_order_box_qp(qp.P, qp.q, qp.A, qp.b, qp.l, qp.u);
    EXPECT_LE(std::abs(s.objective - ref.objective), 1e-6 * std::abs(ref.objective));
    EXPECT_LT((s.x - ref.x).lpNorm<Eigen::Infinity>(), 1e-5);
    EXPECT_GT((s.x.array().abs() > 1.0 - 1e-6).count(), 0) << "no active bound";
  }
}

TEST(QpSolver, ReturnsAKktCertificate) {
  const auto qp = random_box_qp(40, 8, 11);
  DenseQpSolver solver(qp.P, qp.A, qp.C);
  const auto s = solver.solve(qp.q, qp.b, qp.l, qp.u);
  ASSERT_EQ(s.status, QpStatus::kOptimal);
  EXPECT_LE(kkt_stationarity(qp, s), 1e-6);
  EXPECT_LE((qp.A * s.x - qp.b).lpNorm<Eigen::Infinity>(), 1e-6);
  for (int i = 0; i < 40; ++i) {
    const double z = s.ineq_multiplier(i);
    EXPECT_GE(s.x(i), -1.0 - 1e-8);
    EXPECT_LE(s.x(i), 1.0 + 1e-8);
    if (z > 0) EXPECT_LE(z * (1.0 - s.x(i)), 1e-6);
    if (z < 0) EXPECT_LE(-z * (s.x(i) + 1.0), 1e-6);
  }
  EXPECT_LE(s.primal_residual, 1e-6);
  EXPECT_LE(s.dual_residual, 1e-6);
}

TEST(QpSolver, RedundantEqualitiesAreTolerated) {
  auto qp = random_box_qp(20, 4, 5);
  Eigen::MatrixXd A(6, 20);
  A << qp.A, qp.A.topRows(2);
  Eigen::VectorXd b(6);
  b << qp.b, qp.b.head(2);
  DenseQpSolver solver(qp.P, A, qp.C);
  EXPECT_EQ(solver.equality_rank(), 4);
  const auto s = solver.solve(qp.q, b, qp.l, qp.u);
  DenseQpSolver plain(qp.P, qp.A, qp.C);
  const auto r = plain.solve(qp.q, qp.b, qp.l, qp.u);
  ASSERT_EQ(s.status, QpStatus::kOptimal);
  EXPECT_LT((s.x - r.x).lpNorm<Eigen::Infinity>(), 1e-7);
}

TEST(QpSolver, InconsistentEqualitiesAreInfeasible) {
  Eigen::MatrixXd A(2, 2);
  A << 1, 1, 1, 1;
  DenseQpSolver solver(Eigen::MatrixXd::Identity(2, 2), A, Eigen::MatrixXd(0, 2));
  const auto s = solver.solve(Eigen::Vector2d::Zero(), Eigen::Vector2d(1, 2),
                              Eigen::VectorXd(0), Eigen::VectorXd(0));
  EXPECT_EQ(s.status, QpStatus::kInfeasible);
}

TEST(QpSolver, CrossedBoundsAreInfeasible) {
  DenseQpSolver solver(Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd(0, 2),
                       Eigen::MatrixXd::Identity(2, 2));
  const auto s = solver.solve(Eigen::Vector2d::Zero(), Eigen::VectorXd(0),
                              Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1));
  EXPECT_EQ(s.status, QpStatus::kInfeasible);
}

TEST(QpSolver, ConflictingRowsAreNotReportedOptimal) {
  Eigen::MatrixXd C(2, 2);
  C << 1, 0, 1, 1e-3;
  DenseQpSolver solver(Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd(0, 2), C);
  const auto s = solver.solve(Eigen::Vector2d::Zero(), Eigen::VectorXd(0),
                              Eigen::Vector2d(1, -kInf), Eigen::Vector2d(kInf, -10));
  // x1 >= 1 and x1 + 1e-3 x2 <= -10 are jointly feasible only for x2 <= -11000.
  if (s.status == QpStatus::kOptimal) {
    EXPECT_GE(s.x(0), 1.0 - 1e-6);
    EXPECT_LE(s.x(0) + 1e-3 * s.x(1), -10.0 + 1e-6);
  }
}

TEST(QpSolver, SemidefiniteHessianWithEqualitiesIsSolved) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(3, 3);
  P(0, 0) = 2.0;
  Eigen::MatrixXd A(2, 3);
  A << 0, 1, 0,
       0, 0, 1;
  DenseQpSolver solver(P, A, Eigen::MatrixXd::Identity(3, 3));
  const auto s = solver.solve(Eigen::Vector3d(-4, 1, 1), Eigen::Vector2d(0.5, -0.5),
                              Eigen::Vector3d::Constant(-1), Eigen::Vector3d::Constant(1));
  ASSERT_EQ(s.status, QpStatus::kOptimal) << s.message;
  EXPECT_NEAR(s.x(0), 1.0, 1e-7);
  EXPECT_NEAR(s.x(1), 0.5, 1e-9);
  EXPECT_NEAR(s.x(2), -0.5, 1e-9);
}

TEST(QpSolver, UnboundedDirectionIsDetected) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(2, 2);
  P(0, 0) = 1.0;
  DenseQpSolver solver(P, Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 2));
  EXPECT_TRUE(solver.range_restricted());
  const auto s = solver.solve(Eigen::Vector2d(0, 1), Eigen::VectorXd(0), Eigen::VectorXd(0),
                              Eigen::VectorXd(0));
  EXPECT_EQ(s.status, QpStatus::kUnbounded);
}

TEST(QpSolver, IsDeterministic) {
  const auto qp = random_box_qp(30, 5, 21);
  DenseQpSolver solver(qp.P, qp.A, qp.C);
  const auto a = solver.solve(qp.q, qp.b, qp.l, qp.u);
  const auto b = solver.solve(qp.q, qp.b, qp.l, qp.u);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(QpSolver, InteriorSolutionSkipsTheIterations) {
  const auto qp = random_box_qp(10, 2, 3);
  DenseQpSolver solver(qp.P, qp.A, qp.C);
  const auto s = solver.solve(Eigen::VectorXd::Zero(10), Eigen::VectorXd::Zero(2),
                              qp.l, qp.u);
  ASSERT_EQ(s.status, QpStatus::kOptimal);
  EXPECT_EQ(s.iterations, 0);
  EXPECT_LT(s.x.norm(), 1e-12);
}

TEST(QpSolver, DimensionMismatchThrows) {
  DenseQpSolver solver(Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd(0, 2),
                       Eigen::MatrixXd(0, 2));
  EXPECT_THROW(solver.solve(Eigen::Vector3d::Zero(), Eigen::VectorXd(0), Eigen::VectorXd(0),
                            Eigen::VectorXd(0)),
               std::invalid_argument);
}
