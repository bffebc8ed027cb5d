#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>

#include "deeplcc/config.hpp"
#include "deeplcc/controller.hpp"
#include "deeplcc/linear_model.hpp"
#include "deeplcc/scenarios.hpp"
#include "oracles.hpp"

using namespace deeplcc;

namespace {

// Small noise-free linear setup: n = 4, one CAV at position 2.
struct LtiSetup {
  DiscreteModel model = oracle::nominal_discrete_model(4, {2});
  TrajectoryDataset ds = oracle::linear_dataset(model, {2}, 300, 7);
  int Tini = 10, N = 20;

  ControllerParams params(double lambda_g, double lambda_y, bool hard) const {
    ControllerParams p;
    p.Tini = Tini;
    p.N = N;
    p.lambda_g = lambda_g;
    p.lambda_y = lambda_y;
    p.hard_output_constraint = hard;
    p.qp_tol = 1e-10;
    p.qp_max_iter = 200;
    return p;
  }

  // Window of a fresh trajectory from a random state; also returns the state
  // at the current instant.
  OnlineWindow window(std::uint64_t seed, Eigen::VectorXd* x_now, double scale = 1.0) const {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-scale, scale);
    Eigen::MatrixXd u(1, Tini), eps(1, Tini);
    for (int k = 0; k < Tini; ++k) {
      u(0, k) = dist(rng);
      eps(0, k) = dist(rng);
    }
    Eigen::VectorXd x0(8);
    for (int k = 0; k < 8; ++k) x0(k) = dist(rng);
    const auto run = oracle::simulate_linear(model, x0, u, eps);
    if (x_now) *x_now = run.x.col(Tini);
    return {u, eps, run.y};
  }
};

const RunConfig& default_config() {
  static const RunConfig cfg = load_config(std::string(DEEPLCC_SOURCE_DIR) + "/configs/default.json");
  return cfg;
}

std::shared_ptr<const DeepLccPlanner> default_planner() {
  static const auto planner = [] {
    const auto& cfg = default_config();
    auto opt = cfg.collection_options();
    const auto ds = collect_dataset(cfg.platoon_config(), cfg.collection.v_star, opt);
    return make_deep_lcc_planner(cfg, ds);
  }();
  return planner;
}

class StubPlanner : public Planner {
 public:
  explicit StubPlanner(std::vector<bool> succeed) : succeed_(std::move(succeed)) {}
  PlanResult plan(const OnlineWindow&) const override {
    PlanResult r;
    const bool ok = calls_ < succeed_.size() && succeed_[calls_];
    ++calls_;
    r.status = ok ? QpStatus::kOptimal : QpStatus::kInfeasible;
    r.u_star = Eigen::MatrixXd::Constant(1, 5, 0.5);
    r.y_star = Eigen::MatrixXd::Zero(3, 5);
    return r;
  }
  int Tini() const override { return 3; }
  int n() const override { return 2; }
  int m() const override { return 1; }
  double a_min() const override { return -5.0; }
  double a_max() const override { return 2.0; }

 private:
  std::vector<bool> succeed_;
  mutable std::size_t calls_ = 0;
};

}  // namespace

TEST(EquilibriumEstimate, Examples) {
  const std::vector<double> flat(20, 15.0);
  EXPECT_DOUBLE_EQ(estimate_equilibrium_velocity(flat, 20), 15.0);
  const std::vector<double> pair = {14.0, 16.0};
  EXPECT_DOUBLE_EQ(estimate_equilibrium_velocity(pair, 2), 15.0);
  EXPECT_THROW(estimate_equilibrium_velocity(pair, 3), std::invalid_argument);
}

TEST(EquilibriumEstimate, TracksTheMidpointOfARamp) {
  const auto profile = eudc_like_profile();
  const auto v = profile.profile.sample(0.05);
  // 20 samples ending inside the first deceleration ramp.
  const std::size_t end = static_cast<std::size_t>(7.0 / 0.05);
  std::span<const double> window(v.data() + end - 20, 20);
  double expected = 0.0;
  for (double x : window) expected += x;
  expected /= 20.0;
  EXPECT_NEAR(estimate_equilibrium_velocity(window, 20), expected, 1e-12);
  EXPECT_NEAR(expected, 0.5 * (window.front() + window.back()), 1e-9);
}

TEST(Params, ValidationAndWarnings) {
  ControllerParams p;
  EXPECT_NO_THROW(p.validate());
  EXPECT_TRUE(p.warnings(8).empty());
  p.Tini = 10;
  EXPECT_FALSE(p.warnings(8).empty());
  p.a_min = 3.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(CondensedQp, DefaultDimensions) {
  const auto planner = default_planner();
  const auto qp = planner->condensed(OnlineWindow::zeros(8, 2, 20));
  EXPECT_EQ(qp.L(), 1931);
  EXPECT_EQ(qp.equalities(), 110);
  EXPECT_EQ(qp.inequalities(), 200);
}

TEST(CondensedQp, ObjectiveMatchesTheUncondensedCost) {
  const LtiSetup lti;
  const auto blocks = partition(lti.ds, lti.Tini, lti.N);
  const auto params = lti.params(3.0, 50.0, false);
  const auto window = lti.window(2, nullptr);
  const auto qp = build_condensed_qp(blocks, params, window);
  const Eigen::VectorXd g = Eigen::VectorXd::Random(qp.L());
  const Eigen::VectorXd y = blocks.Yf * g, u = blocks.Uf * g;
  const Eigen::VectorXd sigma = blocks.Yp * g - stack_columns(window.y_ini);
  double direct = params.lambda_g * g.squaredNorm() + params.lambda_y * sigma.squaredNorm() +
                  params.wu * u.squaredNorm();
  for (Eigen::Index r = 0; r < y.size(); ++r) {
    direct += (r % 5 < 4 ? params.wv : params.ws) * y(r) * y(r);
  }
  const double condensed = 0.5 * g.dot(qp.P * g) + qp.q.dot(g) + qp.constant;
  EXPECT_NEAR(condensed, direct, 1e-9 * std::abs(direct));
}

TEST(Plan, ZeroWindowGivesZeroPlan) {
  const auto r = default_planner()->plan(OnlineWindow::zeros(8, 2, 20));
  ASSERT_EQ(r.status, QpStatus::kOptimal);
  EXPECT_LT(r.g.norm(), 1e-9);
  EXPECT_LT(r.u_star.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(r.objective, 0.0, 1e-9);
  const auto d = deep_lcc_step(*default_planner(), OnlineWindow::zeros(8, 2, 20));
  EXPECT_TRUE(d.solved);
  EXPECT_LT(d.applied.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Plan, HardConstraintPlanMatchesModelRollout) {
  const LtiSetup lti;
  DeepLccPlanner planner(partition(lti.ds, lti.Tini, lti.N), lti.params(0.0, 1.0, true), 4);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Eigen::VectorXd x;
    const auto r = planner.plan(lti.window(seed, &x, 0.3));
    ASSERT_EQ(r.status, QpStatus::kOptimal) << r.message;
    for (int k = 0; k < lti.N; ++k) {
      EXPECT_LT((r.y_star.col(k) - lti.model.Cd * x).cwiseAbs().maxCoeff(), 1e-6) << k;
      x = lti.model.Ad * x + lti.model.Bd * r.u_star.col(k);
    }
  }
}

TEST(Plan, LargeSlackPenaltyReproducesTheHardSolution) {
  const LtiSetup lti;
  const auto blocks = partition(lti.ds, lti.Tini, lti.N);
  DeepLccPlanner hard(blocks, lti.params(1e-2, 1.0, true), 4);
  DeepLccPlanner soft(blocks, lti.params(1e-2, 1e8, false), 4);
  const auto window = lti.window(4, nullptr, 0.3);
  const auto a = hard.plan(window);
  const auto b = soft.plan(window);
  ASSERT_EQ(a.status, QpStatus::kOptimal);
  ASSERT_EQ(b.status, QpStatus::kOptimal);
  EXPECT_LT((a.u_star - b.u_star).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_LE(b.sigma_y.lpNorm<Eigen::Infinity>(), 1e-5);
}

TEST(Plan, LargerRegularizerShrinksG) {
  const LtiSetup lti;
  const auto blocks = partition(lti.ds, lti.Tini, lti.N);
  const auto window = lti.window(5, nullptr, 0.3);
  double previous = std::numeric_limits<double>::infinity();
  for (double lambda_g : {1.0, 10.0, 100.0, 1000.0}) {
    DeepLccPlanner planner(blocks, lti.params(lambda_g, 1e4, false), 4);
    const auto r = planner.plan(window);
    ASSERT_EQ(r.status, QpStatus::kOptimal);
    EXPECT_LE(r.g.norm(), previous * (1.0 + 1e-9)) << lambda_g;
    previous = r.g.norm();
  }
}

TEST(Plan, OptimalityCertificateAgainstFeasiblePerturbations) {
  const LtiSetup lti;
  const auto blocks = partition(lti.ds, lti.Tini, lti.N);
  const auto params = lti.params(10.0, 1e4, false);
  DeepLccPlanner planner(blocks, params, 4);
  const auto window = lti.window(6, nullptr, 2.0);
  const auto r = planner.plan(window);
  ASSERT_EQ(r.status, QpStatus::kOptimal);
  const auto qp = planner.condensed(window);
  auto objective = [&](const Eigen::VectorXd& g) { return 0.5 * g.dot(qp.P * g) + qp.q.dot(g); };
  const double best = objective(r.g);

  Eigen::FullPivLU<Eigen::MatrixXd> lu(qp.Aeq);
  const Eigen::MatrixXd Z = lu.kernel();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  int tried = 0;
  for (int attempt = 0; attempt < 1000 && tried < 10; ++attempt) {
    Eigen::VectorXd w(Z.cols());
    for (Eigen::Index k = 0; k < w.size(); ++k) w(k) = normal(rng);
    const Eigen::VectorXd g = r.g + 1e-3 * Z * w / (Z * w).norm();
    const Eigen::VectorXd c = qp.Cin * g;
    if ((c.array() < qp.lower.array()).any() || (c.array() > qp.upper.array()).any()) continue;
    ++tried;
    EXPECT_GE(objective(g), best - params.qp_tol);
  }
  EXPECT_EQ(tried, 10);
}

TEST(Plan, PlannedInputsRespectBounds) {
  const LtiSetup lti;
  auto params = lti.params(10.0, 1e4, false);
  params.a_max = 0.3;
  params.a_min = -0.3;
  DeepLccPlanner planner(partition(lti.ds, lti.Tini, lti.N), params, 4);
  const auto r = planner.plan(lti.window(8, nullptr, 3.0));
  ASSERT_EQ(r.status, QpStatus::kOptimal);
  EXPECT_LE(r.u_star.maxCoeff(), 0.3 + params.qp_tol);
  EXPECT_GE(r.u_star.minCoeff(), -0.3 - params.qp_tol);
  EXPECT_LE(r.y_star.row(4).maxCoeff(), params.s_tilde_max + params.qp_tol);
  EXPECT_GE(r.y_star.row(4).minCoeff(), params.s_tilde_min - params.qp_tol);
}

TEST(Step, IdenticalWindowsGiveIdenticalInputs) {
  const LtiSetup lti;
  DeepLccPlanner planner(partition(lti.ds, lti.Tini, lti.N), lti.params(10.0, 1e4, false), 4);
  const auto window = lti.window(9, nullptr);
  const auto a = deep_lcc_step(planner, window);
  const auto b = deep_lcc_step(planner, window);
  ASSERT_TRUE(a.solved);
  EXPECT_EQ(a.applied, b.applied);
}

TEST(Policy, WarmUpThenFallbackHoldsOnceThenZero) {
  auto cfg = make_platoon(2, {1}, OvmParams{}, 0.0, 1);
  auto stub = std::make_shared<StubPlanner>(std::vector<bool>{true, false, false, true});
  RecedingHorizonPolicy policy(cfg, stub);
  SimState s = equilibrium_state(cfg, 15.0, 20.0);
  std::vector<double> applied;
  for (int k = 0; k < 7; ++k) applied.push_back(policy.control({k, k * 0.05, &s})(0));
  EXPECT_EQ(applied, (std::vector<double>{0, 0, 0, 0.5, 0.5, 0.0, 0.5}));
  EXPECT_EQ(policy.failures(), 2);
  ASSERT_EQ(policy.records().size(), 4u);
  EXPECT_TRUE(policy.records()[1].fallback);
  EXPECT_EQ(policy.records()[1].status, "infeasible");
  const auto json = step_record_json(policy.records()[0]);
  for (const char* key : {"\"t\"", "\"status\"", "\"iterations\"", "\"objective\"", "\"norm_g\"",
                          "\"norm_sigma_y\""}) {
    EXPECT_NE(json.find(key), std::string::npos) << key;
  }
}

TEST(ClosedLoop, RegulatesAroundEquilibriumWithNoise) {
  const auto& cfg = default_config();
  RecedingHorizonPolicy policy(cfg.platoon_config(), default_planner(), cfg.policy_options());
  const std::vector<double> head(401, 15.0);
  const auto log = simulate_closed_loop(cfg.platoon_config(), &policy, head, 20.0);
  ASSERT_FALSE(log.collided);
  EXPECT_LE(log.applied_input.cwiseAbs().maxCoeff(), 0.5);
  EXPECT_EQ(policy.failures(), 0);
}

TEST(ClosedLoop, BrakeResponseAndSpacingBounds) {
  const auto& cfg = default_config();
  const auto profile = cfg.profile("brake");
  const auto head = profile.profile.sample(cfg.platoon.dt_control);
  auto run = [&] {
    RecedingHorizonPolicy policy(cfg.platoon_config(), default_planner(), cfg.policy_options());
    return simulate_closed_loop(cfg.platoon_config(), &policy, head,
                                profile.profile.duration(), {cfg.scenario.seed, 20.0});
  };
  const auto log = run();
  ASSERT_FALSE(log.collided);
  ASSERT_TRUE(log.failure.empty()) << log.failure;

  // First control instant whose window contains a braking sample.
  const int k = static_cast<int>(std::lround(cfg.scenario.brake.brake_start / 0.05)) + 2;
  EXPECT_LT(log.applied_input(k, 0), 0.0);
  EXPECT_LT(log.applied_input(k, 1), 0.0);

  for (int s = 0; s < log.samples(); ++s) {
    for (int i : log.cav_set) {
      const double err = log.spacing(s, i) - 20.0;
      EXPECT_GE(err, cfg.controller.s_tilde_min - 1e-6);
      EXPECT_LE(err, cfg.controller.s_tilde_max + 1e-6);
    }
  }
  const auto again = run();
  EXPECT_EQ(log.applied_input, again.applied_input);
  EXPECT_EQ(log.velocity, again.velocity);
}
