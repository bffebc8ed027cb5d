#include "deeplcc/linear_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

namespace deeplcc {

LinearizationCoeffs linearize_hdv(const OvmParams& p, double v_star) {
  if (!(v_star > 0.0)) {
    throw std::domain_error("linearization needs 0 < v* < v_max");
  }
  const double s_star = equilibrium_spacing(v_star, p);  // throws for v* >= v_max
  LinearizationCoeffs c;
  c.alpha1 = p.alpha * desired_velocity_slope(s_star, p);
  c.alpha2 = p.alpha + p.beta;
  c.alpha3 = p.beta;
  return c;
}

bool satisfies_rank_condition(const LinearizationCoeffs& c, double tol) {
  return std::abs(c.alpha1 - c.alpha2 * c.alpha3 + c.alpha3 * c.alpha3) > tol;
}

Eigen::MatrixXd LinearTrafficModel::B_hat() const {
  Eigen::MatrixXd out(A.rows(), B.cols() + 1);
  out << H, B;
  return out;
}

bool LinearTrafficModel::heterogeneous() const {
  if (coeffs.empty()) return false;
  const auto& first = coeffs.begin()->second;
  for (const auto& [i, c] : coeffs) {
    if (c.alpha1 != first.alpha1 || c.alpha2 != first.alpha2 ||
        c.alpha3 != first.alpha3) {
      return true;
    }
  }
  return false;
}

LinearTrafficModel build_model(const PlatoonConfig& cfg,
                               const std::map<int, LinearizationCoeffs>& coeffs) {
  const int n = cfg.n;
  const int m = cfg.m();
  LinearTrafficModel model;
  model.n = n;
  model.cav_set = cfg.cav_set;
  model.A = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  model.B = Eigen::MatrixXd::Zero(2 * n, m);
  model.H = Eigen::MatrixXd::Zero(2 * n, 1);
  model.C = Eigen::MatrixXd::Zero(n + m, 2 * n);

  for (int i = 1; i <= n; ++i) {
    const int r = 2 * (i - 1);
    if (cfg.is_cav(i)) {
      // S1 = [0 -1; 0 0], S2 = [0 1; 0 0]
      model.A(r, r + 1) = -1.0;
      if (i > 1) model.A(r, r - 1) = 1.0;
      continue;
    }
    auto it = coeffs.find(i);
    if (it == coeffs.end()) {
      throw std::invalid_argument("missing linearization for human vehicle " +
                                  std::to_string(i));
    }
    const LinearizationCoeffs& c = it->second;
    model.coeffs[i] = c;
    // P1 = [0 -1; a1 -a2], P2 = [0 1; 0 a3]
    model.A(r, r + 1) = -1.0;
    model.A(r + 1, r) = c.alpha1;
    model.A(r + 1, r + 1) = -c.alpha2;
    if (i > 1) {
      model.A(r, r - 1) = 1.0;
      model.A(r + 1, r - 1) = c.alpha3;
    }
  }

  model.H(0, 0) = 1.0;
  if (!cfg.is_cav(1)) model.H(1, 0) = model.coeffs.at(1).alpha3;

  for (int k = 0; k < m; ++k) {
    const int i = cfg.cav_set[k];
    model.B(2 * i - 1, k) = 1.0;
    model.C(n + k, 2 * i - 2) = 1.0;
  }
  for (int i = 1; i <= n; ++i) model.C(i - 1, 2 * i - 1) = 1.0;
  return model;
}

LinearTrafficModel linearize_platoon(const PlatoonConfig& cfg, double v_star,
                                     double cav_spacing) {
  std::map<int, LinearizationCoeffs> coeffs;
  Eigen::VectorXd s_star(cfg.n);
  for (int i = 1; i <= cfg.n; ++i) {
    if (cfg.is_cav(i)) {
      s_star(i - 1) = cav_spacing;
      continue;
    }
    const OvmParams& p = cfg.hdv_params.at(i);
    coeffs[i] = linearize_hdv(p, v_star);
    s_star(i - 1) = equilibrium_spacing(v_star, p);
  }
  LinearTrafficModel model = build_model(cfg, coeffs);
  model.v_star = v_star;
  model.s_star = s_star;
  return model;
}

Eigen::MatrixXd matrix_exponential(const Eigen::MatrixXd& M) {
  return M.exp();
}

DiscreteModel discretize(const LinearTrafficModel& model, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const Eigen::Index nx = model.A.rows();
  const Eigen::MatrixXd b_hat = model.B_hat();
  const Eigen::Index nu = b_hat.cols();

  // exp([[A, B_hat], [0, 0]] dt) = [[Ad, [Hd, Bd]], [0, I]]
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(nx + nu, nx + nu);
  aug.topLeftCorner(nx, nx) = model.A * dt;
  aug.topRightCorner(nx, nu) = b_hat * dt;
  const Eigen::MatrixXd phi = matrix_exponential(aug);

  DiscreteModel d;
  d.dt = dt;
  d.Ad = phi.topLeftCorner(nx, nx);
  d.Hd = phi.block(0, nx, nx, 1);
  d.Bd = phi.block(0, nx + 1, nx, nu - 1);
  d.Cd = model.C;
  return d;
}

int numerical_rank(const Eigen::VectorXd& singular_values, Eigen::Index rows,
                   Eigen::Index cols, double rel_tol) {
  if (singular_values.size() == 0 || singular_values(0) <= 0.0) return 0;
  const double tol = static_cast<double>(std::max(rows, cols)) *
                     singular_values(0) * rel_tol;
  int rank = 0;
  for (Eigen::Index k = 0; k < singular_values.size(); ++k) {
    if (singular_values(k) > tol) ++rank;
  }
  return rank;
}

namespace {

struct RankInfo {
  int rank = 0;
  double gap = std::numeric_limits<double>::infinity();
};

RankInfo column_normalized_rank(Eigen::MatrixXd M) {
  for (Eigen::Index j = 0; j < M.cols(); ++j) {
    const double norm = M.col(j).norm();
    if (norm > 0.0) M.col(j) /= norm;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(M);
  const Eigen::VectorXd& s = svd.singularValues();
  RankInfo info;
  info.rank = numerical_rank(s, M.rows(), M.cols());
  if (info.rank > 0 && info.rank < s.size()) {
    info.gap = s(info.rank) > 0.0 ? s(info.rank - 1) / s(info.rank)
                                  : std::numeric_limits<double>::infinity();
  }
  return info;
}

Eigen::MatrixXd kalman_controllability(const Eigen::MatrixXd& A,
                                       const Eigen::MatrixXd& B) {
  const Eigen::Index nx = A.rows();
  Eigen::MatrixXd K(nx, nx * B.cols());
  Eigen::MatrixXd block = B;
  for (Eigen::Index k = 0; k < nx; ++k) {
    K.middleCols(k * B.cols(), B.cols()) = block;
    block = A * block;
  }
  return K;
}

// Eigenvalues grouped by proximity; the group mean is well conditioned even
// when the individual eigenvalues of a defective cluster are not.
std::vector<std::pair<std::complex<double>, int>> clustered_eigenvalues(
    const Eigen::MatrixXd& A) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, /*computeEigenvectors=*/false);
  std::vector<std::complex<double>> ev(es.eigenvalues().begin(),
                                       es.eigenvalues().end());
  const double tol = 1e-3 * std::max(1.0, A.norm());
  std::vector<bool> used(ev.size(), false);
  std::vector<std::pair<std::complex<double>, int>> out;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    if (used[i]) continue;
    std::complex<double> sum = ev[i];
    int count = 1;
    used[i] = true;
    for (std::size_t j = i + 1; j < ev.size(); ++j) {
      if (!used[j] && std::abs(ev[j] - ev[i]) < tol) {
        used[j] = true;
        sum += ev[j];
        ++count;
      }
    }
    out.emplace_back(sum / static_cast<double>(count), count);
  }
  return out;
}

std::vector<PbhEntry> pbh_test(const Eigen::MatrixXd& A,
                               const Eigen::MatrixXd& B) {
  using Complex = std::complex<double>;
  const Eigen::Index nx = A.rows();
  Eigen::MatrixXd AB(nx, nx + B.cols());
  AB << A, B;
  const double scale = std::max(1.0, AB.norm());
  std::vector<PbhEntry> out;
  for (const auto& [lambda, mult] : clustered_eigenvalues(A)) {
    Eigen::MatrixXcd M(nx, nx + B.cols());
    M.leftCols(nx) = A.cast<Complex>();
    M.leftCols(nx).diagonal().array() -= lambda;
    M.rightCols(B.cols()) = B.cast<Complex>();
    Eigen::BDCSVD<Eigen::MatrixXcd> svd(M);
    const Eigen::VectorXd s = svd.singularValues();
    const double tol = 1e-8 * scale * static_cast<double>(nx);
    int rank = 0;
    for (Eigen::Index k = 0; k < s.size(); ++k) {
      if (s(k) > tol) ++rank;
    }
    PbhEntry e;
    e.eigenvalue = lambda;
    e.multiplicity = mult;
    e.rank = rank;
    e.full_rank = rank == nx;
    out.push_back(e);
  }
  return out;
}

bool all_rank_conditions(const LinearTrafficModel& model) {
  for (const auto& [i, c] : model.coeffs) {
    if (!satisfies_rank_condition(c)) return false;
  }
  return true;
}

}  // namespace

StaircaseResult controllability_staircase(const Eigen::MatrixXd& A,
                                          const Eigen::MatrixXd& B,
                                          double rel_tol) {
  const Eigen::Index nx = A.rows();
  Eigen::MatrixXd AB(nx, nx + B.cols());
  AB << A, B;
  const double tol = static_cast<double>(std::max(nx, B.cols())) *
                     std::max(1.0, AB.norm()) * rel_tol;

  StaircaseResult out;
  Eigen::MatrixXd Ak = A;
  Eigen::MatrixXd Bk = B;
  Eigen::Index remaining = nx;
  while (remaining > 0 && Bk.cols() > 0) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Bk, Eigen::ComputeFullU);
    const Eigen::VectorXd& s = svd.singularValues();
    Eigen::Index rho = 0;
    for (Eigen::Index k = 0; k < s.size(); ++k) {
      if (s(k) > tol) ++rho;
    }
    if (rho == 0) break;
    out.controllable_dim += static_cast<int>(rho);
    if (rho == remaining) {
      remaining = 0;
      break;
    }
    const Eigen::MatrixXd& U = svd.matrixU();
    const Eigen::MatrixXd At = U.transpose() * Ak * U;
    const Eigen::Index rest = remaining - rho;
    Bk = At.bottomLeftCorner(rest, rho);
    Ak = At.bottomRightCorner(rest, rest);
    remaining = rest;
  }
  if (remaining > 0) out.uncontrollable_block = Ak;
  return out;
}

ControllabilityReport analyze_controllability(const LinearTrafficModel& model,
                                              InputChoice input_choice) {
  const Eigen::MatrixXd B =
      input_choice == InputChoice::kCombined ? model.B_hat() : model.B;
  const int nx = static_cast<int>(model.A.rows());

  ControllabilityReport r;
  r.state_dim = nx;
  const RankInfo kalman = column_normalized_rank(kalman_controllability(model.A, B));
  r.kalman_rank = kalman.rank;
  r.sigma_gap = kalman.gap;

  const StaircaseResult stair = controllability_staircase(model.A, B);
  r.controllable_dim = stair.controllable_dim;
  r.dim_uncontrollable = nx - stair.controllable_dim;
  r.controllable = r.dim_uncontrollable == 0;
  r.stabilizable = true;
  if (stair.uncontrollable_block.size() > 0) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(stair.uncontrollable_block, false);
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
      const auto lambda = es.eigenvalues()(k);
      r.uncontrollable_modes.push_back(lambda);
      if (lambda.real() >= 1e-9) r.stabilizable = false;
    }
  }

  r.pbh = pbh_test(model.A, B);
  const bool pbh_all = std::all_of(r.pbh.begin(), r.pbh.end(),
                                   [](const PbhEntry& e) { return e.full_rank; });
  r.pbh_consistent = pbh_all == r.controllable;

  r.rank_condition = all_rank_conditions(model);
  r.heterogeneous = model.heterogeneous();
  const bool head_is_cav = !model.cav_set.empty() && model.cav_set.front() == 1;
  if (input_choice == InputChoice::kCombined) {
    r.predicted_controllable = r.rank_condition;
  } else {
    r.predicted_controllable = r.rank_condition && head_is_cav;
  }
  r.predicted_stabilizable = r.rank_condition;
  return r;
}

ObservabilityReport analyze_observability(const LinearTrafficModel& model) {
  const Eigen::MatrixXd At = model.A.transpose();
  const Eigen::MatrixXd Ct = model.C.transpose();
  const int nx = static_cast<int>(model.A.rows());

  ObservabilityReport r;
  r.state_dim = nx;
  const RankInfo kalman = column_normalized_rank(kalman_controllability(At, Ct));
  r.rank = kalman.rank;
  r.sigma_gap = kalman.gap;
  r.observable_dim = controllability_staircase(At, Ct).controllable_dim;
  r.observable = r.observable_dim == nx;
  r.pbh = pbh_test(At, Ct);
  const bool pbh_all = std::all_of(r.pbh.begin(), r.pbh.end(),
                                   [](const PbhEntry& e) { return e.full_rank; });
  r.pbh_consistent = pbh_all == r.observable;
  r.rank_condition = all_rank_conditions(model);
  r.predicted_observable = r.rank_condition;
  return r;
}

}  // namespace deeplcc
