#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "deeplcc/vehicle_dynamics.hpp"
#include "oracles.hpp"

using namespace deeplcc;

namespace {

PlatoonConfig nominal_platoon(int n, std::vector<int> cavs, double noise = 0.0) {
  auto cfg = make_platoon(n, std::move(cavs), OvmParams{}, 0.0, 1);
  cfg.noise_amplitude = noise;
  return cfg;
}

class ConstantPolicy : public ControlPolicy {
 public:
  explicit ConstantPolicy(Eigen::VectorXd u) : u_(std::move(u)) {}
  Eigen::VectorXd control(const Measurement&) override { return u_; }

 private:
  Eigen::VectorXd u_;
};

class FailingPolicy : public ControlPolicy {
 public:
  explicit FailingPolicy(int fail_at) : fail_at_(fail_at) {}
  Eigen::VectorXd control(const Measurement& m) override {
    if (m.step == fail_at_) throw ControllerFailure("no plan");
    return Eigen::VectorXd::Zero(1);
  }

 private:
  int fail_at_;
};

}  // namespace

TEST(Ovm, MidpointEquilibriumHasZeroAcceleration) {
  EXPECT_NEAR(ovm_acceleration(20.0, 0.0, 15.0, OvmParams{}), 0.0, 1e-12);
}

TEST(Ovm, SaturatedFreeFlowHasZeroAcceleration) {
  EXPECT_DOUBLE_EQ(ovm_acceleration(40.0, 0.0, 30.0, OvmParams{}), 0.0);
}

TEST(Ovm, MatchesFormulaOracleOnRandomPoints) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> s(-5.0, 50.0), ds(-5.0, 5.0), v(0.0, 35.0);
  OvmParams p;
  p.alpha = 0.7;
  p.beta = 1.1;
  for (int k = 0; k < 500; ++k) {
    const double a = s(rng), b = ds(rng), c = v(rng);
    EXPECT_NEAR(ovm_acceleration(a, b, c, p),
                oracle::ovm_formula(a, b, c, p.alpha, p.beta, p.s_st, p.s_go, p.v_max),
                1e-12);
  }
}

TEST(Ovm, DesiredVelocityIsContinuousAtBreakpoints) {
  OvmParams p;
  EXPECT_NEAR(desired_velocity(p.s_st + 1e-9, p), 0.0, 1e-9);
  EXPECT_NEAR(desired_velocity(p.s_go - 1e-9, p), p.v_max, 1e-9);
  EXPECT_EQ(desired_velocity(-3.0, p), 0.0);
}

TEST(Ovm, SlopeMatchesCentralDifference) {
  OvmParams p;
  for (double s = 6.0; s < 34.0; s += 1.7) {
    const double h = 1e-5;
    const double fd = (desired_velocity(s + h, p) - desired_velocity(s - h, p)) / (2 * h);
    EXPECT_NEAR(desired_velocity_slope(s, p), fd, 1e-6);
  }
}

TEST(Ovm, ValidateRejectsBadParameters) {
  OvmParams p;
  p.alpha = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = OvmParams{};
  p.s_go = 4.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(EquilibriumSpacing, ClosedFormExamples) {
  OvmParams p;
  EXPECT_NEAR(equilibrium_spacing(15.0, p), 20.0, 1e-12);
  EXPECT_NEAR(equilibrium_spacing(0.0, p), 5.0, 1e-12);
  EXPECT_THROW(equilibrium_spacing(30.0, p), std::domain_error);
  EXPECT_THROW(equilibrium_spacing(-1.0, p), std::domain_error);
}

TEST(EquilibriumSpacing, IsAFixedPointOfTheOvm) {
  OvmParams p;
  p.alpha = 0.5;
  p.beta = 0.8;
  for (double v = 0.5; v < 30.0; v += 0.5) {
    EXPECT_NEAR(ovm_acceleration(equilibrium_spacing(v, p), 0.0, v, p), 0.0, 1e-10) << v;
  }
}

TEST(Platoon, ValidateRejectsInconsistentTopology) {
  auto cfg = nominal_platoon(4, {3, 2});
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = nominal_platoon(4, {5});
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = nominal_platoon(4, {2});
  cfg.dt_sim = 0.03;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = nominal_platoon(4, {2});
  cfg.hdv_params.erase(3);
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = nominal_platoon(4, {});
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_NO_THROW(cfg.validate(true));
}

TEST(Platoon, HeterogeneousDrawsStayInRangeAndAreSeeded) {
  OvmParams nominal;
  auto a = make_platoon(8, {3, 6}, nominal, 0.2, 11);
  auto b = make_platoon(8, {3, 6}, nominal, 0.2, 11);
  auto c = make_platoon(8, {3, 6}, nominal, 0.2, 12);
  bool differs = false;
  for (int i = 1; i <= 8; ++i) {
    EXPECT_GE(a.hdv_params[i].alpha, 0.8 * nominal.alpha);
    EXPECT_LE(a.hdv_params[i].alpha, 1.2 * nominal.alpha);
    EXPECT_GE(a.hdv_params[i].beta, 0.8 * nominal.beta);
    EXPECT_LE(a.hdv_params[i].beta, 1.2 * nominal.beta);
    EXPECT_EQ(a.hdv_params[i].alpha, b.hdv_params[i].alpha);
    differs = differs || a.hdv_params[i].alpha != c.hdv_params[i].alpha;
  }
  EXPECT_TRUE(differs);
}

TEST(Step, EquilibriumIsAFixedPointOverManySubsteps) {
  for (double v : {5.0, 15.0, 22.0}) {
    auto cfg = make_platoon(6, {2, 5}, OvmParams{}, 0.2, 3);
    cfg.noise_amplitude = 0.0;
    SimState s = equilibrium_state(cfg, v, 20.0);
    const SimState s0 = s;
    NoiseSource noise(1);
    const std::vector<double> u(2, 0.0);
    for (int k = 0; k < 1000; ++k) s = step(s, u, 0.0, cfg, noise).state;
    for (int i = 0; i <= 6; ++i) {
      EXPECT_NEAR(s.velocity(i), v, 1e-9);
      if (i > 0) EXPECT_NEAR(s.spacing(i), s0.spacing(i), 1e-9);
    }
  }
}

TEST(Step, MatchesHandSteppedSemiImplicitEuler) {
  auto cfg = make_platoon(4, {2}, OvmParams{}, 0.2, 5);
  cfg.noise_amplitude = 0.1;
  SimState s;
  s.position = Eigen::Vector<double, 5>(0.0, -18.0, -41.0, -60.5, -80.0);
  s.velocity = Eigen::Vector<double, 5>(15.0, 14.2, 16.1, 15.5, 13.0);
  const double u = 0.7, a0 = -1.3;
  NoiseSource noise(99);
  const auto r = step(s, std::vector<double>{u}, a0, cfg, noise);

  std::mt19937_64 engine(99);
  std::uniform_real_distribution<double> eta(-0.1, 0.1);
  const double dt = cfg.dt_sim;
  for (int i = 0; i <= 4; ++i) {
    double a;
    if (i == 0) {
      a = a0;
    } else if (i == 2) {
      a = u;
    } else {
      const auto& p = cfg.hdv_params.at(i);
      a = oracle::ovm_formula(s.position(i - 1) - s.position(i),
                              s.velocity(i - 1) - s.velocity(i), s.velocity(i),
                              p.alpha, p.beta, p.s_st, p.s_go, p.v_max) +
          eta(engine);
    }
    const double v1 = s.velocity(i) + a * dt;
    EXPECT_NEAR(r.state.velocity(i), v1, 1e-12) << i;
    EXPECT_NEAR(r.state.position(i), s.position(i) + v1 * dt, 1e-12) << i;
  }
  EXPECT_FALSE(r.collision);
}

TEST(Step, HeadBrakeDecreasesVelocityAndClampsAtZero) {
  auto cfg = nominal_platoon(2, {1});
  SimState s = equilibrium_state(cfg, 0.2, 20.0);
  NoiseSource noise(1);
  auto r = step(s, std::vector<double>{0.0}, -5.0, cfg, noise);
  EXPECT_NEAR(r.state.velocity(0), 0.15, 1e-12);
  for (int k = 0; k < 10; ++k) r = step(r.state, std::vector<double>{0.0}, -5.0, cfg, noise);
  EXPECT_EQ(r.state.velocity(0), 0.0);
}

TEST(Step, NoiseStaysWithinAmplitude) {
  auto cfg = nominal_platoon(3, {3}, 0.1);
  SimState s = equilibrium_state(cfg, 15.0, 20.0);
  NoiseSource noise(4);
  for (int k = 0; k < 2000; ++k) {
    const auto r = step(s, std::vector<double>{0.0}, 0.0, cfg, noise);
    for (int i = 1; i <= 2; ++i) {
      const auto& p = cfg.hdv_params.at(i);
      const double f = ovm_acceleration(s.spacing(i), s.velocity(i - 1) - s.velocity(i),
                                        s.velocity(i), p);
      EXPECT_LE(std::abs(r.acceleration(i) - f), 0.1 + 1e-9);
    }
    s = r.state;
  }
}

TEST(Step, ReportsCollision) {
  auto cfg = nominal_platoon(1, {1});
  SimState s;
  s.position = Eigen::Vector2d(0.0, -0.05);
  s.velocity = Eigen::Vector2d(0.0, 10.0);
  NoiseSource noise(1);
  EXPECT_TRUE(step(s, std::vector<double>{0.0}, 0.0, cfg, noise).collision);
}

TEST(ClosedLoop, ZeroPerturbationWithoutNoiseStaysAtEquilibrium) {
  auto cfg = nominal_platoon(4, {2});
  std::vector<double> head(201, 15.0);
  ConstantPolicy policy(Eigen::VectorXd::Zero(1));
  const auto log = simulate_closed_loop(cfg, &policy, head, 10.0);
  ASSERT_EQ(log.samples(), 200);
  EXPECT_LT((log.velocity.array() - 15.0).abs().maxCoeff(), 1e-9);
  for (int i = 1; i <= 4; ++i) EXPECT_NEAR(log.spacing(199, i), 20.0, 1e-9);
}

TEST(ClosedLoop, IsBitwiseDeterministicForASeed) {
  auto cfg = make_platoon(5, {2, 4}, OvmParams{}, 0.2, 8);
  std::vector<double> head(401, 15.0);
  for (int k = 100; k <= 140; ++k) head[k] = 15.0 - 0.25 * (k - 100);
  for (int k = 141; k < 401; ++k) head[k] = 5.0;
  ConstantPolicy p1(Eigen::Vector2d(0.1, -0.1)), p2(Eigen::Vector2d(0.1, -0.1));
  const auto a = simulate_closed_loop(cfg, &p1, head, 20.0, {3, 20.0});
  const auto b = simulate_closed_loop(cfg, &p2, head, 20.0, {3, 20.0});
  std::ostringstream ca, cb;
  a.write_csv(ca);
  b.write_csv(cb);
  EXPECT_EQ(ca.str(), cb.str());
  const auto c = simulate_closed_loop(cfg, &p1, head, 20.0, {4, 20.0});
  EXPECT_NE(a.velocity, c.velocity);
}

TEST(ClosedLoop, AllHumanPlatoonAmplifiesABrakeUpstream) {
  auto cfg = nominal_platoon(6, {});
  std::vector<double> head(601, 15.0);
  for (int k = 40; k <= 60; ++k) head[k] = 15.0 - 0.25 * (k - 40);
  for (int k = 61; k <= 120; ++k) head[k] = 10.0;
  for (int k = 121; k <= 221; ++k) head[k] = 10.0 + 0.05 * (k - 121);
  for (int k = 222; k < 601; ++k) head[k] = 15.0;
  const auto log = simulate_closed_loop(cfg, nullptr, head, 30.0);
  ASSERT_FALSE(log.collided);
  double prev_dip = 0.0;
  for (int i = 1; i <= 6; ++i) {
    const double dip = 15.0 - log.velocity.col(i).minCoeff();
    EXPECT_GT(dip, prev_dip) << "vehicle " << i;
    prev_dip = dip;
  }
}

TEST(ClosedLoop, ControllerFailureIsAnnotatedWithTheStep) {
  auto cfg = nominal_platoon(2, {1});
  std::vector<double> head(101, 15.0);
  FailingPolicy policy(7);
  const auto log = simulate_closed_loop(cfg, &policy, head, 5.0);
  EXPECT_EQ(log.samples(), 8);
  EXPECT_NE(log.failure.find("step 7"), std::string::npos);
}

TEST(ClosedLoop, CsvHasOneRowPerSampleAndVehicle) {
  auto cfg = nominal_platoon(2, {2});
  std::vector<double> head(21, 15.0);
  ConstantPolicy policy(Eigen::VectorXd::Zero(1));
  const auto log = simulate_closed_loop(cfg, &policy, head, 1.0);
  std::ostringstream out;
  log.write_csv(out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line,
            "t,vehicle_id,position_m,velocity_mps,spacing_m,accel_mps2,is_cav,"
            "applied_input_mps2");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 20 * 3);
}
