#include <gtest/gtest.h>

#include <atomic>
#include <random>
#include <stdexcept>

#include "deeplcc/kernels.hpp"
#include "oracles.hpp"

using namespace deeplcc;

TEST(Kernels, HankelVariantsAgreeExactly) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Random(4, 333);
  for (int order : {1, 7, 90, 333}) {
    const auto par = kernels::hankel_parallel(s, order);
    EXPECT_EQ(par, kernels::hankel_serial(s, order));
    EXPECT_EQ(par, oracle::hankel_by_index(s, order));
  }
}

TEST(Kernels, HankelRejectsBadOrder) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Random(2, 10);
  EXPECT_THROW(kernels::hankel_parallel(s, 0), std::invalid_argument);
  EXPECT_THROW(kernels::hankel_serial(s, 11), std::invalid_argument);
}

TEST(Kernels, WeightedGramMatchesDirectProduct) {
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(300, 123);
  Eigen::VectorXd w = Eigen::VectorXd::Random(300).cwiseAbs();
  const Eigen::MatrixXd ref = X.transpose() * w.asDiagonal() * X;
  const auto par = kernels::weighted_gram_parallel(X, w);
  const auto ser = kernels::weighted_gram_serial(X, w);
  EXPECT_LT((par - ref).cwiseAbs().maxCoeff(), 1e-11 * ref.cwiseAbs().maxCoeff());
  EXPECT_LT((ser - ref).cwiseAbs().maxCoeff(), 1e-11 * ref.cwiseAbs().maxCoeff());
  EXPECT_EQ(par, par.transpose());
}

TEST(Kernels, BatchRunsEveryTaskOnce) {
  std::vector<int> hits(64, 0);
  kernels::run_batch_parallel(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  std::atomic<int> total{0};
  kernels::run_batch_serial(10, [&](std::size_t) { ++total; });
  EXPECT_EQ(total.load(), 10);
}

TEST(Kernels, BatchRethrowsLowestIndexFailure) {
  std::vector<int> hits(8, 0);
  try {
    kernels::run_batch_parallel(8, [&](std::size_t i) {
      hits[i] = 1;
      if (i == 5) throw std::runtime_error("five");
      if (i == 2) throw std::runtime_error("two");
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "two");
  }
  for (int h : hits) EXPECT_EQ(h, 1);
}
