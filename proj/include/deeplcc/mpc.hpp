#pragma once

#include <memory>

#include <Eigen/Dense>

#include "deeplcc/controller.hpp"
#include "deeplcc/linear_model.hpp"
#include "deeplcc/qp_solver.hpp"

namespace deeplcc {

struct MpcParams {
  int Tini = 20;
  int N = 50;
  double wv = 1.0;
  double ws = 0.5;
  double wu = 0.1;
  double s_tilde_min = -15.0;
  double s_tilde_max = 20.0;
  double a_min = -5.0;
  double a_max = 2.0;
  double qp_tol = 1e-6;
  int qp_max_iter = 100;
  double ridge = 1e-8;  // added to the normal matrix when it is ill-conditioned

  /// Horizons, weights, bounds and solver settings of a data-driven setup.
  static MpcParams from(const ControllerParams& p);
  void validate() const;
};

/// Least-squares estimate of the state at the start of the window from
/// the stacked outputs, propagated through the window inputs to the state
/// at the current instant. Throws std::runtime_error when the stacked
/// observability matrix is rank deficient.
Eigen::VectorXd reconstruct_state(const DiscreteModel& model,
                                  const OnlineWindow& window,
                                  double ridge = 1e-8);

/// Output-feedback MPC on the known discrete model, with the head velocity
/// error predicted as zero over the horizon.
class MpcPlanner : public Planner {
 public:
  MpcPlanner(DiscreteModel model, MpcParams params, int n, int m);

  PlanResult plan(const OnlineWindow& window) const override;
  PlanResult plan_from_state(const Eigen::VectorXd& x) const;

  int Tini() const override { return params_.Tini; }
  int n() const override { return n_; }
  int m() const override { return m_; }
  double a_min() const override { return params_.a_min; }
  double a_max() const override { return params_.a_max; }

  const DiscreteModel& model() const { return model_; }
  /// Stacked predicted outputs Y = Phi x + Gamma U.
  const Eigen::MatrixXd& Phi() const { return Phi_; }
  const Eigen::MatrixXd& Gamma() const { return Gamma_; }
  /// sum_k |y(k)|^2_Q + |u(k)|^2_R of a plan.
  double cost(const Eigen::VectorXd& x, const Eigen::VectorXd& U) const;

 private:
  DiscreteModel model_;
  MpcParams params_;
  int n_ = 0;
  int m_ = 0;
  Eigen::VectorXd qbar_;
  Eigen::MatrixXd Phi_, Gamma_;
  std::vector<int> spacing_rows_;
  std::unique_ptr<DenseQpSolver> solver_;
};

}  // namespace deeplcc
