#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace deeplcc {

/// Cosine-shaped optimal velocity model parameters.
struct OvmParams {
  double alpha = 0.6;   // 1/s
  double beta = 0.9;    // 1/s
  double s_st = 5.0;    // standstill spacing, m
  double s_go = 35.0;   // free-flow spacing, m
  double v_max = 30.0;  // m/s

  /// Throws std::invalid_argument when any invariant is broken.
  void validate() const;
};

/// Desired velocity V(s) of the optimal velocity model.
double desired_velocity(double spacing, const OvmParams& p);

/// dV/ds.
double desired_velocity_slope(double spacing, const OvmParams& p);

/// F(s, s_dot, v) = alpha (V(s) - v) + beta s_dot. Total; s <= 0 gives V = 0.
double ovm_acceleration(double spacing, double relative_velocity,
                        double velocity, const OvmParams& p);

/// Closed-form inverse of the cosine branch of V. Returns s_st for v_star = 0.
double equilibrium_spacing(double v_star, const OvmParams& p);

/// Topology, per-vehicle behaviour and timing of a mixed platoon.
///
/// Vehicles are indexed 0..n with 0 the head vehicle. `cav_set` holds the
/// 1-based indices of automated vehicles in increasing order. An empty
/// `cav_set` denotes an all-human platoon, which is only valid for
/// simulation (see `validate(allow_no_cav)`).
struct PlatoonConfig {
  int n = 0;
  std::vector<int> cav_set;
  std::map<int, OvmParams> hdv_params;
  double dt_control = 0.05;
  double dt_sim = 0.01;
  double noise_amplitude = 0.1;

  int m() const { return static_cast<int>(cav_set.size()); }
  bool is_cav(int vehicle) const;
  int substeps() const;
  /// Position of `vehicle` inside cav_set, or -1.
  int cav_slot(int vehicle) const;

  /// Same platoon with every vehicle driven by its OVM parameters.
  PlatoonConfig without_cavs() const;

  void validate(bool allow_no_cav = false) const;
};

/// Builds a platoon whose human drivers share the nominal OVM shape and have
/// alpha, beta scaled by independent draws from [1 - spread, 1 + spread].
/// Parameters are drawn for every vehicle 1..n so the same platoon can also
/// be simulated as all-human.
PlatoonConfig make_platoon(int n, std::vector<int> cav_set,
                           const OvmParams& nominal, double spread,
                           std::uint64_t seed);

struct SimState {
  Eigen::VectorXd position;  // 0..n
  Eigen::VectorXd velocity;  // 0..n
  double time = 0.0;

  int n() const { return static_cast<int>(position.size()) - 1; }
  double spacing(int vehicle) const {
    return position(vehicle - 1) - position(vehicle);
  }
};

/// All vehicles at velocity v_star. Human drivers sit at their OVM
/// equilibrium spacing, automated vehicles at `cav_spacing`.
SimState equilibrium_state(const PlatoonConfig& cfg, double v_star,
                           double cav_spacing);

/// Uniform acceleration noise stream. One instance per run.
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed) : engine_(seed) {}
  /// Uniform draw on [-amplitude, amplitude]; no engine advance when the
  /// amplitude is zero.
  double draw(double amplitude);
  double uniform(double lo, double hi);

 private:
  std::mt19937_64 engine_;
};

struct StepResult {
  SimState state;
  Eigen::VectorXd acceleration;  // effective, 0..n
  bool collision = false;
};

/// Advances the platoon by one integrator substep of cfg.dt_sim using
/// semi-implicit Euler. Human drivers follow the OVM plus uniform noise,
/// automated vehicles apply `cav_inputs` (slot order of cav_set), the head
/// vehicle applies `head_accel`. Velocities are clamped at zero.
StepResult step(const SimState& state, std::span<const double> cav_inputs,
                double head_accel, const PlatoonConfig& cfg,
                NoiseSource& noise);

/// Per-control-step record of a closed-loop run.
struct TrajectoryLog {
  int n = 0;
  std::vector<int> cav_set;
  double dt = 0.0;
  std::vector<double> time;
  Eigen::MatrixXd position;      // samples x (n+1)
  Eigen::MatrixXd velocity;      // samples x (n+1)
  Eigen::MatrixXd acceleration;  // samples x (n+1)
  Eigen::MatrixXd applied_input; // samples x m
  bool collided = false;
  std::optional<double> collision_time;
  std::string failure;

  int samples() const { return static_cast<int>(time.size()); }
  double spacing(int sample, int vehicle) const {
    return position(sample, vehicle - 1) - position(sample, vehicle);
  }
  bool is_cav(int vehicle) const;

  /// Tidy CSV, one row per (sample, vehicle).
  void write_csv(std::ostream& out) const;
};

struct Measurement {
  int step = 0;
  double time = 0.0;
  const SimState* state = nullptr;
};

/// Receives the measured platoon at each control instant and returns the m
/// automated-vehicle accelerations for the next control interval.
class ControlPolicy {
 public:
  virtual ~ControlPolicy() = default;
  virtual Eigen::VectorXd control(const Measurement& measurement) = 0;
};

/// Thrown by a policy that cannot produce an input; the closed loop records
/// it with the failing step.
class ControllerFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ClosedLoopOptions {
  std::uint64_t seed = 1;
  double cav_spacing = 20.0;
};

/// Runs the nonlinear platoon behind a head vehicle tracking
/// `head_velocity` (one sample per control step, the first sample being the
/// initial velocity). With a null policy every vehicle is a human driver.
/// Starts from equilibrium at head_velocity[0]; stops at `duration` or at the
/// first collision.
TrajectoryLog simulate_closed_loop(const PlatoonConfig& cfg,
                                   ControlPolicy* policy,
                                   std::span<const double> head_velocity,
                                   double duration,
                                   const ClosedLoopOptions& options = {});

}  // namespace deeplcc
