#pragma once

// Data-parallel kernels. Each OpenMP kernel has a plain serial counterpart
// with the same contract; the serial versions are the test oracles and the
// benchmark baselines.

#include <cstddef>
#include <exception>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace deeplcc::kernels {

/// Block Hankel matrix of a q x T signal with `order` block rows:
/// H(r*q + c, j) = signal(c, r + j).
Eigen::MatrixXd hankel_parallel(const Eigen::MatrixXd& signal, int order);
Eigen::MatrixXd hankel_serial(const Eigen::MatrixXd& signal, int order);

/// X^T diag(w) X, computed on column panels of the result.
Eigen::MatrixXd weighted_gram_parallel(const Eigen::MatrixXd& X,
                                       const Eigen::VectorXd& w);
Eigen::MatrixXd weighted_gram_serial(const Eigen::MatrixXd& X,
                                     const Eigen::VectorXd& w);

/// Runs task(i) for i in [0, count). Tasks must be independent; the first
/// exception (lowest index) is rethrown after all tasks finish.
void run_batch_parallel(std::size_t count,
                        const std::function<void(std::size_t)>& task);
void run_batch_serial(std::size_t count,
                      const std::function<void(std::size_t)>& task);

int max_threads();

}  // namespace deeplcc::kernels
