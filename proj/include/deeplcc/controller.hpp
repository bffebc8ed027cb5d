#pragma once

#include <deque>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "deeplcc/qp_solver.hpp"
#include "deeplcc/trajectory_data.hpp"
#include "deeplcc/vehicle_dynamics.hpp"

namespace deeplcc {

struct ControllerParams {
  int Tini = 20;
  int N = 50;
  double wv = 1.0;
  double ws = 0.5;
  double wu = 0.1;
  double lambda_g = 100.0;
  double lambda_y = 1e4;
  double s_tilde_min = -15.0;
  double s_tilde_max = 20.0;
  double a_min = -5.0;
  double a_max = 2.0;
  double qp_tol = 1e-6;
  int qp_max_iter = 100;
  /// Replace the slack penalty by the hard constraint Yp g = y_ini.
  bool hard_output_constraint = false;

  void validate() const;
  /// Non-fatal advice, e.g. Tini below 2n.
  std::vector<std::string> warnings(int n) const;
};

/// Most recent Tini samples, oldest first.
struct OnlineWindow {
  Eigen::MatrixXd u_ini;    // m x Tini
  Eigen::MatrixXd eps_ini;  // 1 x Tini
  Eigen::MatrixXd y_ini;    // (n+m) x Tini

  static OnlineWindow zeros(int n, int m, int Tini);
};

/// Stacked column of a p x T block, sample-major.
Eigen::VectorXd stack_columns(const Eigen::MatrixXd& block);

/// QP in the Hankel coefficient g:
///   min 1/2 g'Pg + q'g + constant  s.t.  Aeq g = beq,  lower <= Cin g <= upper
struct CondensedQp {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  double constant = 0.0;
  Eigen::MatrixXd Aeq;
  Eigen::VectorXd beq;
  Eigen::MatrixXd Cin;
  Eigen::VectorXd lower, upper;

  int L() const { return static_cast<int>(P.rows()); }
  int equalities() const { return static_cast<int>(Aeq.rows()); }
  int inequalities() const { return static_cast<int>(Cin.rows()); }
};

CondensedQp build_condensed_qp(const HankelBlocks& blocks,
                               const ControllerParams& params,
                               const OnlineWindow& window);

/// Outcome of one horizon optimization.
struct PlanResult {
  QpStatus status = QpStatus::kMaxIterations;
  Eigen::MatrixXd u_star;  // m x N
  Eigen::MatrixXd y_star;  // (n+m) x N
  Eigen::VectorXd g;       // empty for model-based plans
  Eigen::VectorXd sigma_y; // empty for model-based plans
  double objective = 0.0;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  std::string message;
};

/// Solves a condensed QP built for `blocks` from scratch.
PlanResult solve_qp(const CondensedQp& qp, const HankelBlocks& blocks,
                    const ControllerParams& params,
                    const OnlineWindow& window);

/// Horizon optimizer driven by the past-data window.
class Planner {
 public:
  virtual ~Planner() = default;
  virtual PlanResult plan(const OnlineWindow& window) const = 0;
  virtual int Tini() const = 0;
  virtual int n() const = 0;
  virtual int m() const = 0;
  virtual double a_min() const = 0;
  virtual double a_max() const = 0;
};

/// Data-driven planner. Everything that depends only on the Hankel blocks
/// and the parameters is condensed and factorized at construction; plan()
/// only forms the window-dependent vectors. Immutable after construction and
/// safe to share between threads.
class DeepLccPlanner : public Planner {
 public:
  DeepLccPlanner(HankelBlocks blocks, ControllerParams params, int n);

  PlanResult plan(const OnlineWindow& window) const override;
  int Tini() const override { return params_.Tini; }
  int n() const override { return n_; }
  int m() const override { return blocks_.m(); }
  double a_min() const override { return params_.a_min; }
  double a_max() const override { return params_.a_max; }

  const HankelBlocks& blocks() const { return blocks_; }
  const ControllerParams& params() const { return params_; }
  CondensedQp condensed(const OnlineWindow& window) const;

 private:
  HankelBlocks blocks_;
  ControllerParams params_;
  int n_ = 0;
  CondensedQp base_;  // window-independent parts
  std::unique_ptr<DenseQpSolver> solver_;
};

/// Mean of the last Tini head velocities.
double estimate_equilibrium_velocity(std::span<const double> head_velocity,
                                     int Tini);

/// Applies the first planned input, clamped to the acceleration bounds.
/// Returns the plan alongside; a non-optimal plan yields an empty input.
struct StepDecision {
  Eigen::VectorXd applied;
  PlanResult plan;
  bool solved = false;
};
StepDecision deep_lcc_step(const Planner& planner, const OnlineWindow& window);

enum class EquilibriumReference { kCurrent, kCollection };

struct RecedingHorizonOptions {
  EquilibriumReference reference = EquilibriumReference::kCurrent;
  double collection_v_star = 15.0;
  double cav_spacing = 20.0;
};

/// Per-solve metadata.
struct StepRecord {
  double t = 0.0;
  std::string status;
  int iterations = 0;
  double objective = 0.0;
  double norm_g = 0.0;
  double norm_sigma_y = 0.0;
  bool fallback = false;
};

std::string step_record_json(const StepRecord& r);

/// Closed-loop wrapper around a planner: keeps the past-data ring buffer,
/// re-estimates the equilibrium every step, applies zero input while the
/// window fills, and on solver failure holds the previous input for one
/// step and then applies zero.
class RecedingHorizonPolicy : public ControlPolicy {
 public:
  RecedingHorizonPolicy(const PlatoonConfig& cfg,
                        std::shared_ptr<const Planner> planner,
                        RecedingHorizonOptions options = {});

  Eigen::VectorXd control(const Measurement& measurement) override;

  const std::vector<StepRecord>& records() const { return records_; }
  int failures() const { return failures_; }
  /// Window the planner would see at the next step.
  OnlineWindow current_window(double* v_hat = nullptr) const;

 private:
  struct Sample {
    Eigen::VectorXd velocity;  // 0..n
    Eigen::VectorXd cav_spacing;
    Eigen::VectorXd input;
  };

  PlatoonConfig cfg_;
  std::shared_ptr<const Planner> planner_;
  RecedingHorizonOptions options_;
  std::deque<Sample> history_;
  Eigen::VectorXd last_input_;
  bool last_was_fallback_ = false;
  int failures_ = 0;
  std::vector<StepRecord> records_;
};

}  // namespace deeplcc
