#include "deeplcc/qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "deeplcc/linear_model.hpp"

namespace deeplcc {

std::string to_string(QpStatus status) {
  switch (status) {
    case QpStatus::kOptimal: return "optimal";
    case QpStatus::kMaxIterations: return "max_iter";
    case QpStatus::kInfeasible: return "infeasible";
    case QpStatus::kUnbounded: return "unbounded";
  }
  return "unknown";
}

namespace {

double inf_norm(const Eigen::VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
}

// Largest step in (0, 1] keeping v + a dv >= 0.
double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
  }
  return a;
}

}  // namespace

DenseQpSolver::DenseQpSolver(const Eigen::MatrixXd& P, const Eigen::MatrixXd& A,
                             const Eigen::MatrixXd& C, QpSettings settings)
    : settings_(settings), P_(0.5 * (P + P.transpose())), A_(A), C_(C) {
  const Eigen::Index nx = P.rows();
  if (P.cols() != nx) throw std::invalid_argument("P must be square");
  if (A.cols() != nx && A.rows() > 0) {
    throw std::invalid_argument("A column count differs from P");
  }
  if (C.cols() != nx && C.rows() > 0) {
    throw std::invalid_argument("C column count differs from P");
  }
  if (A_.rows() == 0) A_.resize(0, nx);
  if (C_.rows() == 0) C_.resize(0, nx);

  const double p_scale = std::max(1.0, P_.diagonal().cwiseAbs().maxCoeff());

  if (A_.rows() > 0) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(A_, Eigen::ComputeThinU);
    const Eigen::VectorXd& s = svd.singularValues();
    const int r = numerical_rank(s, A_.rows(), A_.cols());
    Ur_ = svd.matrixU().leftCols(r);
    Ahat_ = Ur_.transpose() * A_;
    if (r > 0) rho_ = p_scale / (s(0) * s(0));
  } else {
    Ur_.resize(0, 0);
    Ahat_.resize(0, nx);
  }

  for (Eigen::Index i = 0; i < C_.rows(); ++i) {
    if (C_.row(i).cwiseAbs().maxCoeff() > 0.0) {
      nonzero_rows_.push_back(static_cast<int>(i));
    }
  }

  Eigen::MatrixXd Phat = P_;
  if (Ahat_.rows() > 0) Phat.noalias() += rho_ * Ahat_.transpose() * Ahat_;

  llt_.compute(Phat);
  bool ok = llt_.info() == Eigen::Success;
  if (ok && nx > 0) {
    const Eigen::VectorXd d = llt_.matrixLLT().diagonal().cwiseAbs2();
    ok = d.minCoeff() > 1e-12 * d.maxCoeff();
  }

  const Eigen::Index ra = Ahat_.rows();
  const Eigen::Index nc = static_cast<Eigen::Index>(nonzero_rows_.size());
  Eigen::MatrixXd Kt(nx, ra + nc);
  if (ra > 0) Kt.leftCols(ra) = Ahat_.transpose();
  for (Eigen::Index j = 0; j < nc; ++j) {
    Kt.col(ra + j) = C_.row(nonzero_rows_[j]).transpose();
  }

  if (ok) {
    WKt_ = llt_.solve(Kt);
  } else {
    range_restricted_ = true;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Phat);
    const Eigen::VectorXd& ev = eig.eigenvalues();
    const double cutoff = 1e-13 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    std::vector<Eigen::Index> keep, drop;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      (ev(i) > cutoff ? keep : drop).push_back(i);
    }
    range_basis_.resize(nx, static_cast<Eigen::Index>(keep.size()));
    range_inv_eigs_.resize(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
      range_basis_.col(j) = eig.eigenvectors().col(keep[j]);
      range_inv_eigs_(j) = 1.0 / ev(keep[j]);
    }
    null_basis_.resize(nx, static_cast<Eigen::Index>(drop.size()));
    for (std::size_t j = 0; j < drop.size(); ++j) {
      null_basis_.col(j) = eig.eigenvectors().col(drop[j]);
    }
    if (nc > 0 && null_basis_.cols() > 0) {
      const double leak = (Kt.rightCols(nc).transpose() * null_basis_)
                              .cwiseAbs()
                              .maxCoeff();
      const double scale = std::max(1.0, Kt.rightCols(nc).cwiseAbs().maxCoeff());
      if (leak > 1e-7 * scale) {
        throw std::invalid_argument(
            "QP Hessian is singular along directions that move the "
            "inequality rows");
      }
    }
    WKt_ = range_basis_ *
           (range_inv_eigs_.asDiagonal() * (range_basis_.transpose() * Kt));
  }
  S_ = Kt.transpose() * WKt_;
  S_ = 0.5 * (S_ + S_.transpose());
}

Eigen::VectorXd DenseQpSolver::apply_inverse(const Eigen::VectorXd& v) const {
  if (!range_restricted_) return llt_.solve(v);
  return range_basis_ *
         (range_inv_eigs_.asDiagonal() * (range_basis_.transpose() * v));
}

QpSolution DenseQpSolver::solve(const Eigen::VectorXd& q,
                                const Eigen::VectorXd& b,
                                const Eigen::VectorXd& l,
                                const Eigen::VectorXd& u) const {
  const Eigen::Index nx = P_.rows();
  if (q.size() != nx || b.size() != A_.rows() || l.size() != C_.rows() ||
      u.size() != C_.rows()) {
    throw std::invalid_argument("QP data dimensions do not match the solver");
  }
  const double tol = settings_.tolerance;
  QpSolution sol;
  sol.x = Eigen::VectorXd::Zero(nx);
  sol.eq_multiplier = Eigen::VectorXd::Zero(A_.rows());
  sol.ineq_multiplier = Eigen::VectorXd::Zero(C_.rows());

  // Equalities: consistency with the retained range of A.
  const Eigen::Index ra = Ahat_.rows();
  Eigen::VectorXd bhat(ra);
  if (A_.rows() > 0) {
    bhat = Ur_.transpose() * b;
    const double miss = inf_norm(b - Ur_ * bhat);
    if (miss > 1e-8 * std::max(1.0, inf_norm(b))) {
      sol.status = QpStatus::kInfeasible;
      sol.message = "equality constraints are inconsistent";
      return sol;
    }
  }

  // Inequalities: trivial rows, crossed bounds, active row selection.
  std::vector<int> zero_row(C_.rows(), 1);
  for (int i : nonzero_rows_) zero_row[i] = 0;
  double bound_scale = 1.0;
  for (Eigen::Index i = 0; i < C_.rows(); ++i) {
    if (l(i) > u(i)) {
      sol.status = QpStatus::kInfeasible;
      sol.message = "lower bound exceeds upper bound in row " + std::to_string(i);
      return sol;
    }
    if (zero_row[i] && (l(i) > tol || u(i) < -tol)) {
      sol.status = QpStatus::kInfeasible;
      sol.message = "zero constraint row " + std::to_string(i) +
                    " excludes the origin";
      return sol;
    }
    if (std::isfinite(l(i))) bound_scale = std::max(bound_scale, std::abs(l(i)));
    if (std::isfinite(u(i))) bound_scale = std::max(bound_scale, std::abs(u(i)));
  }
  std::vector<int> act;  // positions in nonzero_rows_
  for (std::size_t j = 0; j < nonzero_rows_.size(); ++j) {
    const int r = nonzero_rows_[j];
    if (std::isfinite(l(r)) || std::isfinite(u(r))) act.push_back(static_cast<int>(j));
  }

  Eigen::VectorXd qhat = q;
  if (ra > 0) qhat.noalias() -= rho_ * (Ahat_.transpose() * bhat);
  if (range_restricted_ && null_basis_.cols() > 0) {
    const double leak = inf_norm(null_basis_.transpose() * qhat);
    if (leak > 1e-8 * std::max(1.0, inf_norm(qhat))) {
      sol.status = QpStatus::kUnbounded;
      sol.message = "objective decreases without bound along a free direction";
      return sol;
    }
  }
  const Eigen::VectorXd x0 = -apply_inverse(qhat);
  const Eigen::Index nc = static_cast<Eigen::Index>(nonzero_rows_.size());
  Eigen::VectorXd hK(ra + nc);
  if (ra > 0) hK.head(ra) = Ahat_ * x0;
  for (Eigen::Index j = 0; j < nc; ++j) hK(ra + j) = C_.row(nonzero_rows_[j]).dot(x0);

  const Eigen::Index na = static_cast<Eigen::Index>(act.size());
  Eigen::VectorXd lambda_rows = Eigen::VectorXd::Zero(nc);

  // Equality-constrained minimizer; accepted when it meets every bound.
  Eigen::VectorXd y = Eigen::VectorXd::Zero(ra);
  Eigen::LDLT<Eigen::MatrixXd> eq_ldlt;
  if (ra > 0) {
    eq_ldlt.compute(S_.topLeftCorner(ra, ra));
    y = eq_ldlt.solve(hK.head(ra) - bhat);
  }
  {
    bool inside = true;
    for (Eigen::Index k = 0; k < na && inside; ++k) {
      const int j = act[k];
      const int r = nonzero_rows_[j];
      double cx = hK(ra + j);
      if (ra > 0) cx -= S_.row(ra + j).head(ra).dot(y);
      const double slack = tol * bound_scale;
      inside = cx >= l(r) - slack && cx <= u(r) + slack;
    }
    if (inside) {
      sol.status = QpStatus::kOptimal;
      sol.iterations = 0;
      return finish(std::move(sol), q, b, l, u, y, lambda_rows);
    }
  }

  // Primal-dual interior point over (y, lambda) with x eliminated.
  std::vector<int> idx(ra + na);
  for (Eigen::Index i = 0; i < ra; ++i) idx[i] = static_cast<int>(i);
  for (Eigen::Index k = 0; k < na; ++k) idx[ra + k] = static_cast<int>(ra + act[k]);
  const Eigen::Index dim = ra + na;
  Eigen::MatrixXd Sred(dim, dim);
  Eigen::VectorXd hred(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    hred(i) = hK(idx[i]);
    for (Eigen::Index j = 0; j < dim; ++j) Sred(i, j) = S_(idx[i], idx[j]);
  }

  Eigen::VectorXd lo(na), hi(na);
  Eigen::Array<bool, Eigen::Dynamic, 1> has_l(na), has_u(na);
  for (Eigen::Index k = 0; k < na; ++k) {
    const int r = nonzero_rows_[act[k]];
    lo(k) = l(r);
    hi(k) = u(r);
    has_l(k) = std::isfinite(l(r));
    has_u(k) = std::isfinite(u(r));
  }
  const double ncomp = static_cast<double>(has_l.count() + has_u.count());

  Eigen::VectorXd lam = Eigen::VectorXd::Zero(na);
  y.setZero();
  Eigen::VectorXd cx = hred.tail(na);
  Eigen::VectorXd sl = Eigen::VectorXd::Zero(na), su = Eigen::VectorXd::Zero(na);
  Eigen::VectorXd zl = Eigen::VectorXd::Zero(na), zu = Eigen::VectorXd::Zero(na);
  for (Eigen::Index k = 0; k < na; ++k) {
    if (has_l(k)) { sl(k) = std::max(cx(k) - lo(k), 1.0); zl(k) = 1.0; }
    if (has_u(k)) { su(k) = std::max(hi(k) - cx(k), 1.0); zu(k) = 1.0; }
  }

  const double eq_scale = 1.0 + inf_norm(bhat);
  Eigen::VectorXd v(dim), rhs(dim), step(dim), w(na);
  Eigen::VectorXd rl(na), ru(na), rd(na), rcl(na), rcu(na), e(na), dinv(na);
  Eigen::VectorXd dsl(na), dsu(na), dzl(na), dzu(na);
  Eigen::VectorXd dsl_aff(na), dsu_aff(na), dzl_aff(na), dzu_aff(na);
  Eigen::LDLT<Eigen::MatrixXd> kkt;

  auto masked = [&](Eigen::VectorXd& vec, const Eigen::Array<bool, Eigen::Dynamic, 1>& mask) {
    for (Eigen::Index k = 0; k < vec.size(); ++k) if (!mask(k)) vec(k) = 0.0;
  };

  // Solves for the search direction given complementarity targets rcl, rcu.
  auto direction = [&]() {
    for (Eigen::Index k = 0; k < na; ++k) {
      double ek = 0.0;
      if (has_u(k)) ek += (rcu(k) + zu(k) * ru(k)) / su(k);
      if (has_l(k)) ek -= (rcl(k) - zl(k) * rl(k)) / sl(k);
      e(k) = ek;
    }
    rhs.head(ra) = v.head(ra) - bhat;
    rhs.tail(na) = dinv.cwiseProduct(e - rd);
    step = kkt.solve(rhs);
    w = -Sred.bottomRows(na) * step;
    // Each side takes its slack step from w when the slack dominates its
    // multiplier and its multiplier step from the change in lambda otherwise.
    for (Eigen::Index k = 0; k < na; ++k) {
      const double dlam = step(ra + k);
      dsl(k) = dzl(k) = dsu(k) = dzu(k) = 0.0;
      const bool lower_first = !has_u(k) || (has_l(k) && sl(k) >= su(k));
      const bool use_l = has_l(k), use_u = has_u(k);
      auto lower_from_w = [&] {
        dsl(k) = w(k) + rl(k);
        dzl(k) = (rcl(k) - zl(k) * dsl(k)) / sl(k);
      };
      auto upper_from_w = [&] {
        dsu(k) = -w(k) - ru(k);
        dzu(k) = (rcu(k) - zu(k) * dsu(k)) / su(k);
      };
      if (lower_first) {
        if (use_u) upper_from_w();
        if (use_l) {
          if (sl(k) >= zl(k)) {
            lower_from_w();
          } else {
            dzl(k) = dzu(k) - dlam - rd(k);
            dsl(k) = (rcl(k) - sl(k) * dzl(k)) / zl(k);
          }
        }
      } else {
        if (use_l) lower_from_w();
        if (su(k) >= zu(k)) {
          upper_from_w();
        } else {
          dzu(k) = dlam + rd(k) + dzl(k);
          dsu(k) = (rcu(k) - su(k) * dzu(k)) / zu(k);
        }
      }
    }
  };

  auto step_length = [&]() {
    double a = 1.0;
    a = std::min(a, max_step(sl, dsl));
    a = std::min(a, max_step(su, dsu));
    a = std::min(a, max_step(zl, dzl));
    a = std::min(a, max_step(zu, dzu));
    return a;
  };

  Eigen::VectorXd mult(dim);
  sol.status = QpStatus::kMaxIterations;
  int it = 0;
  for (; it <= settings_.max_iterations; ++it) {
    mult.head(ra) = y;
    mult.tail(na) = lam;
    v = hred - Sred * mult;  // [A^x; Cx] at the current multipliers
    cx = v.tail(na);
    rl = cx - lo - sl;
    ru = cx + su - hi;
    masked(rl, has_l);
    masked(ru, has_u);
    rd = lam - zu + zl;
    const double mu =
        ncomp > 0 ? (sl.dot(zl) + su.dot(zu)) / ncomp : 0.0;
    const double rp = std::max(ra > 0 ? inf_norm(v.head(ra) - bhat) / eq_scale : 0.0,
                               std::max(inf_norm(rl), inf_norm(ru)) / bound_scale);
    // Complementarity of lambda itself with the row values; the z split is
    // only an internal device and may drift once mu is far below tol.
    double gap = 0.0;
    for (Eigen::Index k = 0; k < na; ++k) {
      if (lam(k) > 0.0) {
        gap = std::max(gap, has_u(k) ? lam(k) * std::abs(hi(k) - cx(k)) : lam(k));
      } else if (lam(k) < 0.0) {
        gap = std::max(gap, has_l(k) ? -lam(k) * std::abs(cx(k) - lo(k)) : -lam(k));
      }
    }
    if (rp <= tol && gap <= tol * bound_scale) {
      sol.status = QpStatus::kOptimal;
      break;
    }
    if (it == settings_.max_iterations) break;
    const double zmax = std::max(inf_norm(zl), inf_norm(zu));
    if (zmax > 1e12 && rp > 1e3 * tol) {
      sol.status = QpStatus::kInfeasible;
      sol.message = "constraint multipliers diverge; bounds cannot be met";
      break;
    }

    for (Eigen::Index k = 0; k < na; ++k) {
      double d = 0.0;
      if (has_l(k)) d += zl(k) / sl(k);
      if (has_u(k)) d += zu(k) / su(k);
      dinv(k) = 1.0 / std::max(d, 1e-30);
    }
    Eigen::MatrixXd M = Sred;
    M.diagonal().tail(na) += dinv;
    kkt.compute(M);
    if (kkt.info() != Eigen::Success) {
      sol.message = "KKT factorization failed";
      break;
    }

    rcl = -sl.cwiseProduct(zl);
    rcu = -su.cwiseProduct(zu);
    direction();
    const double a_aff = step_length();
    dsl_aff = dsl; dsu_aff = dsu; dzl_aff = dzl; dzu_aff = dzu;
    double mu_aff = 0.0;
    if (ncomp > 0) {
      mu_aff = ((sl + a_aff * dsl).dot(zl + a_aff * dzl) +
                (su + a_aff * dsu).dot(zu + a_aff * dzu)) / ncomp;
    }
    const double sigma = mu > 0 ? std::pow(std::max(mu_aff, 0.0) / mu, 3) : 0.0;

    rcl = Eigen::VectorXd::Constant(na, sigma * mu) - sl.cwiseProduct(zl) -
          dsl_aff.cwiseProduct(dzl_aff);
    rcu = Eigen::VectorXd::Constant(na, sigma * mu) - su.cwiseProduct(zu) -
          dsu_aff.cwiseProduct(dzu_aff);
    masked(rcl, has_l);
    masked(rcu, has_u);
    direction();
    const double a = std::min(1.0, 0.995 * step_length());

    y += a * step.head(ra);
    lam += a * step.tail(na);
    sl += a * dsl;
    su += a * dsu;
    zl += a * dzl;
    zu += a * dzu;
  }
  sol.iterations = it;

  for (Eigen::Index k = 0; k < na; ++k) lambda_rows(act[k]) = lam(k);
  return finish(std::move(sol), q, b, l, u, y, lambda_rows);
}

QpSolution DenseQpSolver::finish(QpSolution sol, const Eigen::VectorXd& q,
                                 const Eigen::VectorXd& b,
                                 const Eigen::VectorXd& l,
                                 const Eigen::VectorXd& u,
                                 const Eigen::VectorXd& yhat,
                                 const Eigen::VectorXd& lambda_rows) const {
  const Eigen::Index ra = Ahat_.rows();
  const Eigen::Index nc = static_cast<Eigen::Index>(nonzero_rows_.size());
  Eigen::VectorXd qhat = q;
  Eigen::VectorXd bhat(ra);
  if (ra > 0) {
    bhat = Ur_.transpose() * b;
    qhat.noalias() -= rho_ * (Ahat_.transpose() * bhat);
  }
  Eigen::VectorXd mult(ra + nc);
  mult.head(ra) = yhat;
  mult.tail(nc) = lambda_rows;
  sol.x = -apply_inverse(qhat) - WKt_ * mult;

  Eigen::VectorXd lambda_full = Eigen::VectorXd::Zero(C_.rows());
  for (Eigen::Index j = 0; j < nc; ++j) lambda_full(nonzero_rows_[j]) = lambda_rows(j);
  sol.ineq_multiplier = lambda_full;
  if (ra > 0) {
    sol.eq_multiplier = Ur_ * (yhat + rho_ * (Ahat_ * sol.x - bhat));
  }

  const Eigen::VectorXd Px = P_ * sol.x;
  sol.objective = 0.5 * sol.x.dot(Px) + q.dot(sol.x);
  Eigen::VectorXd grad = Px + q;
  if (A_.rows() > 0) grad.noalias() += A_.transpose() * sol.eq_multiplier;
  if (C_.rows() > 0) grad.noalias() += C_.transpose() * lambda_full;
  sol.dual_residual = inf_norm(grad);

  double primal = A_.rows() > 0 ? inf_norm(A_ * sol.x - b) : 0.0;
  double comp = 0.0;
  if (C_.rows() > 0) {
    const Eigen::VectorXd cx = C_ * sol.x;
    for (Eigen::Index i = 0; i < C_.rows(); ++i) {
      primal = std::max(primal, std::max(l(i) - cx(i), cx(i) - u(i)));
      if (lambda_full(i) > 0 && std::isfinite(u(i))) {
        comp = std::max(comp, lambda_full(i) * std::abs(u(i) - cx(i)));
      } else if (lambda_full(i) < 0 && std::isfinite(l(i))) {
        comp = std::max(comp, -lambda_full(i) * std::abs(cx(i) - l(i)));
      }
    }
  }
  sol.primal_residual = std::max(primal, 0.0);
  sol.complementarity = comp;
  return sol;
}

}  // namespace deeplcc
