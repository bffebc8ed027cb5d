#include "deeplcc/kernels.hpp"

#include <algorithm>
#include <stdexcept>

#include <omp.h>

namespace deeplcc::kernels {

namespace {

void check_hankel_args(const Eigen::MatrixXd& signal, int order) {
  if (order < 1) throw std::invalid_argument("Hankel order must be positive");
  if (order > signal.cols()) {
    throw std::invalid_argument("Hankel order exceeds signal length");
  }
}

}  // namespace

Eigen::MatrixXd hankel_parallel(const Eigen::MatrixXd& signal, int order) {
  check_hankel_args(signal, order);
  const Eigen::Index q = signal.rows();
  const Eigen::Index cols = signal.cols() - order + 1;
  Eigen::MatrixXd H(q * order, cols);
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (int r = 0; r < order; ++r) {
      H.col(j).segment(r * q, q) = signal.col(r + j);
    }
  }
  return H;
}

Eigen::MatrixXd hankel_serial(const Eigen::MatrixXd& signal, int order) {
  check_hankel_args(signal, order);
  const Eigen::Index q = signal.rows();
  const Eigen::Index cols = signal.cols() - order + 1;
  Eigen::MatrixXd H(q * order, cols);
  for (int r = 0; r < order; ++r) {
    for (Eigen::Index c = 0; c < q; ++c) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        H(r * q + c, j) = signal(c, r + j);
      }
    }
  }
  return H;
}

Eigen::MatrixXd weighted_gram_parallel(const Eigen::MatrixXd& X,
                                       const Eigen::VectorXd& w) {
  if (w.size() != X.rows()) throw std::invalid_argument("weight size mismatch");
  const Eigen::Index n = X.cols();
  const Eigen::MatrixXd WX = w.asDiagonal() * X;
  Eigen::MatrixXd G(n, n);
  constexpr Eigen::Index kPanel = 128;
  const Eigen::Index panels = (n + kPanel - 1) / kPanel;
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index p = 0; p < panels; ++p) {
    const Eigen::Index c0 = p * kPanel;
    const Eigen::Index width = std::min(kPanel, n - c0);
    G.middleCols(c0, width).noalias() = X.transpose() * WX.middleCols(c0, width);
  }
  G.triangularView<Eigen::StrictlyLower>() = G.transpose();
  return G;
}

Eigen::MatrixXd weighted_gram_serial(const Eigen::MatrixXd& X,
                                     const Eigen::VectorXd& w) {
  if (w.size() != X.rows()) throw std::invalid_argument("weight size mismatch");
  const Eigen::Index n = X.cols();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < X.rows(); ++k) {
        acc += X(k, i) * w(k) * X(k, j);
      }
      G(i, j) = acc;
      G(j, i) = acc;
    }
  }
  return G;
}

void run_batch_parallel(std::size_t count,
                        const std::function<void(std::size_t)>& task) {
  std::vector<std::exception_ptr> errors(count);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(count); ++i) {
    try {
      task(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void run_batch_serial(std::size_t count,
                      const std::function<void(std::size_t)>& task) {
  std::vector<std::exception_ptr> errors(count);
  for (std::size_t i = 0; i < count; ++i) {
    try {
      task(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace deeplcc::kernels
