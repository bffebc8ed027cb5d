#include "deeplcc/mpc.hpp"

#include <stdexcept>

#include <Eigen/SVD>

namespace deeplcc {

MpcParams MpcParams::from(const ControllerParams& p) {
  MpcParams m;
  m.Tini = p.Tini;
  m.N = p.N;
  m.wv = p.wv;
  m.ws = p.ws;
  m.wu = p.wu;
  m.s_tilde_min = p.s_tilde_min;
  m.s_tilde_max = p.s_tilde_max;
  m.a_min = p.a_min;
  m.a_max = p.a_max;
  m.qp_tol = p.qp_tol;
  m.qp_max_iter = p.qp_max_iter;
  return m;
}

void MpcParams::validate() const {
  if (Tini < 1 || N < 1) throw std::invalid_argument("Tini and N must be positive");
  if (wv < 0 || ws < 0 || wu <= 0) {
    throw std::invalid_argument("weights must be nonnegative and wu positive");
  }
  if (!(s_tilde_min < s_tilde_max)) {
    throw std::invalid_argument("s_tilde_min must be below s_tilde_max");
  }
  if (!(a_min < a_max)) throw std::invalid_argument("a_min must be below a_max");
  if (ridge < 0) throw std::invalid_argument("ridge must be nonnegative");
  if (!(qp_tol > 0) || qp_max_iter < 1) {
    throw std::invalid_argument("QP tolerance and iteration limit must be positive");
  }
}

namespace {

Eigen::MatrixXd observability_stack(const DiscreteModel& model, int steps) {
  const Eigen::Index nx = model.Ad.rows();
  const Eigen::Index p = model.Cd.rows();
  Eigen::MatrixXd O(p * steps, nx);
  Eigen::MatrixXd CA = model.Cd;
  for (int k = 0; k < steps; ++k) {
    O.middleRows(k * p, p) = CA;
    CA = CA * model.Ad;
  }
  return O;
}

}  // namespace

Eigen::VectorXd reconstruct_state(const DiscreteModel& model,
                                  const OnlineWindow& window, double ridge) {
  const Eigen::Index nx = model.Ad.rows();
  const Eigen::Index p = model.Cd.rows();
  const int Tini = static_cast<int>(window.y_ini.cols());
  if (window.y_ini.rows() != p || window.u_ini.rows() != model.Bd.cols() ||
      window.u_ini.cols() != Tini || window.eps_ini.cols() != Tini) {
    throw std::invalid_argument("window does not match the model dimensions");
  }

  // Output response to the window inputs from a zero initial state.
  Eigen::VectorXd rhs(p * Tini);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(nx);
  for (int k = 0; k < Tini; ++k) {
    rhs.segment(k * p, p) = window.y_ini.col(k) - model.Cd * z;
    z = model.Ad * z + model.Bd * window.u_ini.col(k) +
        model.Hd * window.eps_ini(0, k);
  }

  const Eigen::MatrixXd O = observability_stack(model, Tini);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(O, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const int rank = numerical_rank(s, O.rows(), O.cols());
  if (rank < nx) {
    throw std::runtime_error(
        "stacked observability matrix has rank " + std::to_string(rank) +
        " < " + std::to_string(nx) +
        "; a human driver violates alpha1 - alpha2*alpha3 + alpha3^2 != 0 or "
        "the window is shorter than the state dimension");
  }
  Eigen::VectorXd x;
  if (s(0) > 1e8 * s(s.size() - 1)) {
    Eigen::MatrixXd normal = O.transpose() * O;
    normal.diagonal().array() += ridge;
    x = normal.ldlt().solve(O.transpose() * rhs);
  } else {
    x = svd.solve(rhs);
  }
  for (int k = 0; k < Tini; ++k) {
    x = model.Ad * x + model.Bd * window.u_ini.col(k) +
        model.Hd * window.eps_ini(0, k);
  }
  return x;
}

MpcPlanner::MpcPlanner(DiscreteModel model, MpcParams params, int n, int m)
    : model_(std::move(model)), params_(params), n_(n), m_(m) {
  params_.validate();
  const Eigen::Index nx = model_.Ad.rows();
  const int p = n + m;
  const int N = params_.N;
  if (nx != 2 * n || model_.Bd.cols() != m || model_.Cd.rows() != p) {
    throw std::invalid_argument("model dimensions do not match (n, m)");
  }
  const Eigen::MatrixXd O = observability_stack(model_, params_.Tini);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(O);
  const int rank = numerical_rank(svd.singularValues(), O.rows(), O.cols());
  if (rank < nx) {
    throw std::invalid_argument(
        "model is not observable over Tini=" + std::to_string(params_.Tini) +
        " steps (rank " + std::to_string(rank) + " < " + std::to_string(nx) +
        "); check alpha1 - alpha2*alpha3 + alpha3^2 != 0 for every human driver");
  }

  Phi_ = observability_stack(model_, N);
  Gamma_ = Eigen::MatrixXd::Zero(p * N, m * N);
  // Markov parameters Cd Ad^i Bd.
  std::vector<Eigen::MatrixXd> markov;
  Eigen::MatrixXd AB = model_.Bd;
  for (int i = 0; i + 1 < N; ++i) {
    markov.push_back(model_.Cd * AB);
    AB = model_.Ad * AB;
  }
  for (int k = 1; k < N; ++k) {
    for (int j = 0; j < k; ++j) {
      Gamma_.block(k * p, j * m, p, m) = markov[k - 1 - j];
    }
  }

  qbar_.resize(p * N);
  for (int k = 0; k < N; ++k) {
    qbar_.segment(k * p, n).setConstant(params_.wv);
    qbar_.segment(k * p + n, m).setConstant(params_.ws);
    for (int j = 0; j < m; ++j) spacing_rows_.push_back(k * p + n + j);
  }

  Eigen::MatrixXd P = 2.0 * Gamma_.transpose() * qbar_.asDiagonal() * Gamma_;
  P.diagonal().array() += 2.0 * params_.wu;
  Eigen::MatrixXd C(2 * m * N, m * N);
  C.topRows(m * N).setIdentity();
  for (std::size_t r = 0; r < spacing_rows_.size(); ++r) {
    C.row(m * N + static_cast<Eigen::Index>(r)) = Gamma_.row(spacing_rows_[r]);
  }
  solver_ = std::make_unique<DenseQpSolver>(
      P, Eigen::MatrixXd(0, m * N), C,
      QpSettings{params_.qp_max_iter, params_.qp_tol});
}

double MpcPlanner::cost(const Eigen::VectorXd& x, const Eigen::VectorXd& U) const {
  const Eigen::VectorXd Y = Phi_ * x + Gamma_ * U;
  return Y.dot(qbar_.asDiagonal() * Y) + params_.wu * U.squaredNorm();
}

PlanResult MpcPlanner::plan_from_state(const Eigen::VectorXd& x) const {
  const int p = n_ + m_;
  const int N = params_.N;
  const int mN = m_ * N;
  const Eigen::VectorXd yfree = Phi_ * x;
  const Eigen::VectorXd q = 2.0 * Gamma_.transpose() * qbar_.cwiseProduct(yfree);
  Eigen::VectorXd lo(2 * mN), hi(2 * mN);
  lo.head(mN).setConstant(params_.a_min);
  hi.head(mN).setConstant(params_.a_max);
  for (int r = 0; r < mN; ++r) {
    lo(mN + r) = params_.s_tilde_min - yfree(spacing_rows_[r]);
    hi(mN + r) = params_.s_tilde_max - yfree(spacing_rows_[r]);
  }
  const QpSolution s = solver_->solve(q, Eigen::VectorXd(0), lo, hi);

  PlanResult plan;
  plan.status = s.status;
  plan.iterations = s.iterations;
  plan.message = s.message;
  plan.primal_residual = s.primal_residual;
  plan.dual_residual = s.dual_residual;
  plan.gap = s.complementarity;
  plan.objective = s.objective + yfree.dot(qbar_.cwiseProduct(yfree));
  plan.u_star = Eigen::Map<const Eigen::MatrixXd>(s.x.data(), m_, N);
  const Eigen::VectorXd Y = yfree + Gamma_ * s.x;
  plan.y_star = Eigen::Map<const Eigen::MatrixXd>(Y.data(), p, N);
  return plan;
}

PlanResult MpcPlanner::plan(const OnlineWindow& window) const {
  return plan_from_state(reconstruct_state(model_, window, params_.ridge));
}

}  // namespace deeplcc
