#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace deeplcc {

enum class QpStatus { kOptimal, kMaxIterations, kInfeasible, kUnbounded };

std::string to_string(QpStatus status);

struct QpSettings {
  int max_iterations = 80;
  double tolerance = 1e-9;
};

struct QpSolution {
  QpStatus status = QpStatus::kMaxIterations;
  Eigen::VectorXd x;
  double objective = 0.0;
  int iterations = 0;
  /// Residuals of the KKT conditions of the original problem, infinity norm.
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double complementarity = 0.0;
  Eigen::VectorXd eq_multiplier;
  Eigen::VectorXd ineq_multiplier;  // z_upper - z_lower
  std::string message;
};

/// Dense convex QP
///
///   min 1/2 x'Px + q'x   s.t.   Ax = b,   l <= Cx <= u
///
/// with constant (P, A, C) and per-solve (q, b, l, u). Bounds may be
/// infinite. The constant part is factorized once: redundant equality rows
/// are removed, P is augmented with the equality Gram matrix, and the
/// interior-point iterations then run in the space of constraint
/// multipliers. A positive semidefinite P is handled by restricting x to the
/// range of the augmented Hessian; directions it leaves free must not
/// influence C.
class DenseQpSolver {
 public:
  DenseQpSolver(const Eigen::MatrixXd& P, const Eigen::MatrixXd& A,
                const Eigen::MatrixXd& C, QpSettings settings = {});

  QpSolution solve(const Eigen::VectorXd& q, const Eigen::VectorXd& b,
                   const Eigen::VectorXd& l, const Eigen::VectorXd& u) const;

  int variables() const { return static_cast<int>(P_.rows()); }
  int equalities() const { return static_cast<int>(A_.rows()); }
  int inequalities() const { return static_cast<int>(C_.rows()); }
  int equality_rank() const { return static_cast<int>(Ahat_.rows()); }
  /// True when P + rho A'A was singular and x is restricted to its range.
  bool range_restricted() const { return range_restricted_; }

 private:
  Eigen::VectorXd apply_inverse(const Eigen::VectorXd& v) const;
  QpSolution finish(QpSolution sol, const Eigen::VectorXd& q,
                    const Eigen::VectorXd& b, const Eigen::VectorXd& l,
                    const Eigen::VectorXd& u, const Eigen::VectorXd& yhat,
                    const Eigen::VectorXd& lambda_rows) const;

  QpSettings settings_;
  Eigen::MatrixXd P_, A_, C_;
  Eigen::MatrixXd Ur_;     // orthonormal basis of range(A)
  Eigen::MatrixXd Ahat_;   // Ur' A
  double rho_ = 0.0;
  std::vector<int> nonzero_rows_;  // rows of C that are not identically zero
  bool range_restricted_ = false;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd range_basis_;     // used when range_restricted_
  Eigen::VectorXd range_inv_eigs_;
  Eigen::MatrixXd null_basis_;
  Eigen::MatrixXd WKt_;  // W K', K = [Ahat; C(nonzero_rows)]
  Eigen::MatrixXd S_;    // K W K'
};

}  // namespace deeplcc
