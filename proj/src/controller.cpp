#include "deeplcc/controller.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "deeplcc/kernels.hpp"

namespace deeplcc {

void ControllerParams::validate() const {
  if (Tini < 1 || N < 1) throw std::invalid_argument("Tini and N must be positive");
  if (wv < 0 || ws < 0 || wu <= 0) {
    throw std::invalid_argument("weights must be nonnegative and wu positive");
  }
  if (!hard_output_constraint && !(lambda_y > 0)) {
    throw std::invalid_argument("lambda_y must be positive");
  }
  if (lambda_g < 0) throw std::invalid_argument("lambda_g must be nonnegative");
  if (!(s_tilde_min < s_tilde_max)) {
    throw std::invalid_argument("s_tilde_min must be below s_tilde_max");
  }
  if (!(a_min < a_max)) throw std::invalid_argument("a_min must be below a_max");
  if (!(qp_tol > 0) || qp_max_iter < 1) {
    throw std::invalid_argument("QP tolerance and iteration limit must be positive");
  }
}

std::vector<std::string> ControllerParams::warnings(int n) const {
  std::vector<std::string> w;
  if (Tini < 2 * n) {
    w.push_back("Tini=" + std::to_string(Tini) + " is below 2n=" +
                std::to_string(2 * n) +
                "; the initial trajectory may not fix the state uniquely");
  }
  return w;
}

OnlineWindow OnlineWindow::zeros(int n, int m, int Tini) {
  return {Eigen::MatrixXd::Zero(m, Tini), Eigen::MatrixXd::Zero(1, Tini),
          Eigen::MatrixXd::Zero(n + m, Tini)};
}

Eigen::VectorXd stack_columns(const Eigen::MatrixXd& block) {
  return Eigen::Map<const Eigen::VectorXd>(block.data(), block.size());
}

namespace {

void check_dims(const HankelBlocks& b, const ControllerParams& p, int n,
                const OnlineWindow* w) {
  const int m = static_cast<int>(b.Up.rows()) / std::max(b.Tini, 1);
  const int outputs = n + m;
  if (b.Tini != p.Tini || b.N != p.N) {
    throw std::invalid_argument("Hankel horizons differ from controller horizons");
  }
  const Eigen::Index L = b.Up.cols();
  if (b.Up.rows() != m * p.Tini || b.Uf.rows() != m * p.N ||
      b.Ep.rows() != p.Tini || b.Ef.rows() != p.N ||
      b.Yp.rows() != outputs * p.Tini || b.Yf.rows() != outputs * p.N ||
      b.Uf.cols() != L || b.Ep.cols() != L || b.Ef.cols() != L ||
      b.Yp.cols() != L || b.Yf.cols() != L) {
    throw std::invalid_argument("Hankel block dimensions are inconsistent");
  }
  if (w && (w->u_ini.rows() != m || w->u_ini.cols() != p.Tini ||
            w->eps_ini.rows() != 1 || w->eps_ini.cols() != p.Tini ||
            w->y_ini.rows() != outputs || w->y_ini.cols() != p.Tini)) {
    throw std::invalid_argument("online window dimensions do not match");
  }
}

int outputs_of(const HankelBlocks& b) { return static_cast<int>(b.Yp.rows()) / b.Tini; }

// Window-independent part of the condensed problem.
CondensedQp condense_base(const HankelBlocks& b, const ControllerParams& p,
                          int n) {
  const int m = b.m();
  const int p_out = n + m;
  const int N = p.N;
  const int Tini = p.Tini;
  const Eigen::Index L = b.columns();
  CondensedQp qp;

  const bool soft = !p.hard_output_constraint;
  const Eigen::Index rows = b.Yf.rows() + b.Uf.rows() + (soft ? b.Yp.rows() : 0);
  Eigen::MatrixXd X(rows, L);
  Eigen::VectorXd w(rows);
  X.topRows(b.Yf.rows()) = b.Yf;
  for (int k = 0; k < N; ++k) {
    w.segment(k * p_out, n).setConstant(p.wv);
    w.segment(k * p_out + n, m).setConstant(p.ws);
  }
  X.middleRows(b.Yf.rows(), b.Uf.rows()) = b.Uf;
  w.segment(b.Yf.rows(), b.Uf.rows()).setConstant(p.wu);
  if (soft) {
    X.bottomRows(b.Yp.rows()) = b.Yp;
    w.tail(b.Yp.rows()).setConstant(p.lambda_y);
  }
  qp.P = 2.0 * kernels::weighted_gram_parallel(X, w);
  qp.P.diagonal().array() += 2.0 * p.lambda_g;
  qp.q = Eigen::VectorXd::Zero(L);

  const Eigen::Index neq = m * Tini + Tini + (soft ? 0 : p_out * Tini) + N;
  qp.Aeq.resize(neq, L);
  Eigen::Index r = 0;
  qp.Aeq.middleRows(r, b.Up.rows()) = b.Up;
  r += b.Up.rows();
  qp.Aeq.middleRows(r, b.Ep.rows()) = b.Ep;
  r += b.Ep.rows();
  if (!soft) {
    qp.Aeq.middleRows(r, b.Yp.rows()) = b.Yp;
    r += b.Yp.rows();
  }
  qp.Aeq.middleRows(r, b.Ef.rows()) = b.Ef;
  qp.beq = Eigen::VectorXd::Zero(neq);

  qp.Cin.resize(m * N + m * N, L);
  qp.lower.resize(2 * m * N);
  qp.upper.resize(2 * m * N);
  qp.Cin.topRows(m * N) = b.Uf;
  qp.lower.head(m * N).setConstant(p.a_min);
  qp.upper.head(m * N).setConstant(p.a_max);
  for (int k = 0; k < N; ++k) {
    for (int j = 0; j < m; ++j) {
      qp.Cin.row(m * N + k * m + j) = b.Yf.row(k * p_out + n + j);
    }
  }
  qp.lower.tail(m * N).setConstant(p.s_tilde_min);
  qp.upper.tail(m * N).setConstant(p.s_tilde_max);
  return qp;
}

void fill_window(CondensedQp& qp, const HankelBlocks& b,
                 const ControllerParams& p, const OnlineWindow& w) {
  const Eigen::VectorXd u_ini = stack_columns(w.u_ini);
  const Eigen::VectorXd eps_ini = stack_columns(w.eps_ini);
  const Eigen::VectorXd y_ini = stack_columns(w.y_ini);
  Eigen::Index r = 0;
  qp.beq.segment(r, u_ini.size()) = u_ini;
  r += u_ini.size();
  qp.beq.segment(r, eps_ini.size()) = eps_ini;
  r += eps_ini.size();
  if (p.hard_output_constraint) {
    qp.beq.segment(r, y_ini.size()) = y_ini;
    r += y_ini.size();
    qp.q.setZero(b.columns());
    qp.constant = 0.0;
  } else {
    qp.q = -2.0 * p.lambda_y * (b.Yp.transpose() * y_ini);
    qp.constant = p.lambda_y * y_ini.squaredNorm();
  }
  qp.beq.tail(b.N).setZero();
}

PlanResult to_plan(const QpSolution& s, const CondensedQp& qp,
                   const HankelBlocks& b, const ControllerParams& p,
                   const OnlineWindow& w) {
  PlanResult plan;
  plan.status = s.status;
  plan.iterations = s.iterations;
  plan.message = s.message;
  plan.primal_residual = s.primal_residual;
  plan.dual_residual = s.dual_residual;
  plan.gap = s.complementarity;
  plan.objective = s.objective + qp.constant;
  plan.g = s.x;
  const int m = b.m();
  const int p_out = outputs_of(b);
  const Eigen::VectorXd u = b.Uf * s.x;
  const Eigen::VectorXd y = b.Yf * s.x;
  plan.u_star = Eigen::Map<const Eigen::MatrixXd>(u.data(), m, p.N);
  plan.y_star = Eigen::Map<const Eigen::MatrixXd>(y.data(), p_out, p.N);
  plan.sigma_y = b.Yp * s.x - stack_columns(w.y_ini);
  return plan;
}

}  // namespace

CondensedQp build_condensed_qp(const HankelBlocks& blocks,
                               const ControllerParams& params,
                               const OnlineWindow& window) {
  params.validate();
  const int n = outputs_of(blocks) - blocks.m();
  check_dims(blocks, params, n, &window);
  CondensedQp qp = condense_base(blocks, params, n);
  fill_window(qp, blocks, params, window);
  return qp;
}

PlanResult solve_qp(const CondensedQp& qp, const HankelBlocks& blocks,
                    const ControllerParams& params,
                    const OnlineWindow& window) {
  DenseQpSolver solver(qp.P, qp.Aeq, qp.Cin,
                       {params.qp_max_iter, params.qp_tol});
  const QpSolution s = solver.solve(qp.q, qp.beq, qp.lower, qp.upper);
  return to_plan(s, qp, blocks, params, window);
}

DeepLccPlanner::DeepLccPlanner(HankelBlocks blocks, ControllerParams params,
                               int n)
    : blocks_(std::move(blocks)), params_(params), n_(n) {
  params_.validate();
  check_dims(blocks_, params_, n_, nullptr);
  base_ = condense_base(blocks_, params_, n_);
  solver_ = std::make_unique<DenseQpSolver>(
      base_.P, base_.Aeq, base_.Cin,
      QpSettings{params_.qp_max_iter, params_.qp_tol});
}

CondensedQp DeepLccPlanner::condensed(const OnlineWindow& window) const {
  check_dims(blocks_, params_, n_, &window);
  CondensedQp qp = base_;
  fill_window(qp, blocks_, params_, window);
  return qp;
}

PlanResult DeepLccPlanner::plan(const OnlineWindow& window) const {
  check_dims(blocks_, params_, n_, &window);
  CondensedQp qp;
  qp.beq = base_.beq;
  fill_window(qp, blocks_, params_, window);
  const QpSolution s = solver_->solve(qp.q, qp.beq, base_.lower, base_.upper);
  return to_plan(s, qp, blocks_, params_, window);
}

double estimate_equilibrium_velocity(std::span<const double> head_velocity,
                                     int Tini) {
  if (Tini < 1) throw std::invalid_argument("Tini must be positive");
  if (static_cast<int>(head_velocity.size()) < Tini) {
    throw std::invalid_argument("insufficient head velocity history: need " +
                                std::to_string(Tini) + " samples, have " +
                                std::to_string(head_velocity.size()));
  }
  const auto last = head_velocity.last(static_cast<std::size_t>(Tini));
  return std::accumulate(last.begin(), last.end(), 0.0) / Tini;
}

StepDecision deep_lcc_step(const Planner& planner, const OnlineWindow& window) {
  StepDecision d;
  d.plan = planner.plan(window);
  d.solved = d.plan.status == QpStatus::kOptimal;
  if (d.solved) {
    d.applied = d.plan.u_star.col(0).cwiseMax(planner.a_min()).cwiseMin(planner.a_max());
  }
  return d;
}

std::string step_record_json(const StepRecord& r) {
  nlohmann::json j;
  j["t"] = r.t;
  j["status"] = r.status;
  j["iterations"] = r.iterations;
  j["objective"] = r.objective;
  j["norm_g"] = r.norm_g;
  j["norm_sigma_y"] = r.norm_sigma_y;
  j["fallback"] = r.fallback;
  return j.dump();
}

RecedingHorizonPolicy::RecedingHorizonPolicy(
    const PlatoonConfig& cfg, std::shared_ptr<const Planner> planner,
    RecedingHorizonOptions options)
    : cfg_(cfg), planner_(std::move(planner)), options_(options) {
  if (!planner_) throw std::invalid_argument("planner is required");
  if (planner_->n() != cfg_.n || planner_->m() != cfg_.m()) {
    throw std::invalid_argument("planner was built for a different platoon");
  }
  last_input_ = Eigen::VectorXd::Zero(cfg_.m());
}

OnlineWindow RecedingHorizonPolicy::current_window(double* v_hat) const {
  const int Tini = planner_->Tini();
  const int n = cfg_.n;
  const int m = cfg_.m();
  if (static_cast<int>(history_.size()) < Tini) {
    throw std::logic_error("online window is not full yet");
  }
  std::vector<double> head(history_.size());
  for (std::size_t k = 0; k < history_.size(); ++k) head[k] = history_[k].velocity(0);
  const double v_ref = options_.reference == EquilibriumReference::kCurrent
                           ? estimate_equilibrium_velocity(head, Tini)
                           : options_.collection_v_star;
  if (v_hat) *v_hat = v_ref;

  OnlineWindow w = OnlineWindow::zeros(n, m, Tini);
  const std::size_t first = history_.size() - static_cast<std::size_t>(Tini);
  for (int k = 0; k < Tini; ++k) {
    const Sample& s = history_[first + k];
    w.u_ini.col(k) = s.input;
    w.eps_ini(0, k) = s.velocity(0) - v_ref;
    w.y_ini.col(k).head(n) = s.velocity.tail(n).array() - v_ref;
    w.y_ini.col(k).tail(m) = s.cav_spacing.array() - options_.cav_spacing;
  }
  return w;
}

Eigen::VectorXd RecedingHorizonPolicy::control(const Measurement& measurement) {
  const SimState& state = *measurement.state;
  const int m = cfg_.m();
  Eigen::VectorXd u = Eigen::VectorXd::Zero(m);

  if (static_cast<int>(history_.size()) >= planner_->Tini()) {
    StepRecord rec;
    rec.t = measurement.time;
    const StepDecision d = deep_lcc_step(*planner_, current_window());
    rec.status = to_string(d.plan.status);
    rec.iterations = d.plan.iterations;
    rec.objective = d.plan.objective;
    rec.norm_g = d.plan.g.size() ? d.plan.g.norm() : 0.0;
    rec.norm_sigma_y = d.plan.sigma_y.size() ? d.plan.sigma_y.norm() : 0.0;
    if (d.solved) {
      u = d.applied;
      last_was_fallback_ = false;
    } else {
      ++failures_;
      rec.fallback = true;
      if (!last_was_fallback_) u = last_input_;
      last_was_fallback_ = true;
    }
    records_.push_back(std::move(rec));
  }

  Sample s;
  s.velocity = state.velocity;
  s.cav_spacing.resize(m);
  for (int j = 0; j < m; ++j) s.cav_spacing(j) = state.spacing(cfg_.cav_set[j]);
  s.input = u;
  history_.push_back(std::move(s));
  while (static_cast<int>(history_.size()) > planner_->Tini()) history_.pop_front();
  last_input_ = u;
  return u;
}

}  // namespace deeplcc
