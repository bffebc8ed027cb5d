#pragma once

#include <memory>
#include <string>
#include <vector>

#include "deeplcc/controller.hpp"
#include "deeplcc/vehicle_dynamics.hpp"

namespace deeplcc {

enum class SegmentKind { kHold, kRamp, kBrake };

struct ProfileSegment {
  double start = 0.0;
  double end = 0.0;
  SegmentKind kind = SegmentKind::kHold;
  double v_start = 0.0;
  double v_end = 0.0;

  double slope() const { return end > start ? (v_end - v_start) / (end - start) : 0.0; }
};

/// Scoring interval of a profile.
struct Phase {
  std::string name;
  double t0 = 0.0;
  double t1 = 0.0;
  bool braking = false;
};

/// Piecewise-linear head-vehicle velocity.
class VelocityProfile {
 public:
  explicit VelocityProfile(double v0 = 0.0) : v0_(v0) {}

  VelocityProfile& hold(double seconds);
  /// Constant acceleration to `target`; the sign of `accel` is ignored.
  VelocityProfile& ramp_to(double target, double accel);
  /// Emergency brake at `decel` (negative) down to `target`.
  VelocityProfile& brake_to(double target, double decel);

  double duration() const { return segments_.empty() ? 0.0 : segments_.back().end; }
  double initial_velocity() const { return v0_; }
  double final_velocity() const;
  double velocity(double t) const;
  const std::vector<ProfileSegment>& segments() const { return segments_; }
  /// One sample per control step over [0, duration], padded to at least
  /// `min_samples` by holding the final velocity.
  std::vector<double> sample(double dt, std::size_t min_samples = 0) const;
  /// Largest |dv/dt| over ramp segments (brake segments excluded).
  double max_ramp_acceleration() const;
  /// Throws if velocities go negative or ramps leave [a_min, a_max].
  void validate(double a_min, double a_max) const;

 private:
  double v0_;
  std::vector<ProfileSegment> segments_;
};

struct EudcPhaseSpec {
  std::string name;
  double target = 15.0;
  double accel = 1.0;   // magnitude, m/s^2
  double hold = 5.0;    // s after reaching the target
};

struct EudcOptions {
  double initial_velocity = 15.0;
  double initial_hold = 5.0;
  std::vector<EudcPhaseSpec> phases = {
      {"phase 1", 8.0, 1.0, 8.0},
      {"phase 2", 15.0, 0.6, 8.0},
      {"phase 3", 25.0, 0.6, 8.0},
      {"phase 4", 15.0, 1.0, 10.0},
  };
};

struct ProfileWithPhases {
  VelocityProfile profile;
  std::vector<Phase> phases;
};

/// Four-phase driving cycle: braking, two accelerations, braking. Phase k
/// runs from the start of its ramp to the start of the next ramp; the
/// first phase also contains the initial hold, so the phases partition the
/// whole duration.
ProfileWithPhases eudc_like_profile(const EudcOptions& options = {});

struct BrakeOptions {
  double cruise = 15.0;
  double brake_start = 4.0;
  double decel = -5.0;
  double low = 5.0;
  double low_hold = 3.0;
  double accel = 2.0;
  double duration = 30.0;
};

/// Cruise, emergency brake, low-speed hold, recovery, cruise.
ProfileWithPhases brake_profile(const BrakeOptions& options = {});

struct FuelModel {
  double idle = 0.444;
  double b1 = 0.090;
  double b2 = 0.054;
  double c0 = 0.333;
  double c1 = 0.00108;
  double c2 = 1.200;
};

/// Instantaneous fuel rate in mL/s.
double fuel_rate(double v, double a, const FuelModel& model = {});

/// Integral of the fuel rate of `vehicles` over [t0, t1], with the rate
/// linearly interpolated between control samples.
double total_fuel(const TrajectoryLog& log, const std::vector<int>& vehicles,
                  double t0, double t1, const FuelModel& model = {});
double total_fuel(const TrajectoryLog& log, const std::vector<int>& vehicles,
                  const FuelModel& model = {});

struct StrategyFuel {
  std::string name;
  std::vector<double> phase_fuel;   // mL
  double total = 0.0;               // mL
  std::vector<double> phase_reduction;  // % vs baseline
  double total_reduction = 0.0;     // % vs baseline
  bool completed = false;
  std::string failure;
  int solver_failures = 0;
};

struct FuelReport {
  std::vector<int> vehicles;
  std::vector<Phase> phases;
  std::vector<StrategyFuel> strategies;  // baseline first

  const StrategyFuel& strategy(const std::string& name) const;
  std::string to_json() const;
  std::string to_table() const;
};

/// Percentage reduction (baseline - value) / baseline * 100.
double reduction_percent(double baseline, double value);

struct ComparisonInputs {
  PlatoonConfig platoon;
  std::shared_ptr<const Planner> deep_lcc;
  std::shared_ptr<const Planner> mpc;
  RecedingHorizonOptions policy;
  ProfileWithPhases profile;
  std::vector<int> vehicles = {3, 4, 5, 6, 7, 8};
  FuelModel fuel;
  std::uint64_t seed = 1;
};

struct ComparisonResult {
  FuelReport report;
  std::vector<std::string> names;  // all-HDV, MPC, DeeP-LCC
  std::vector<TrajectoryLog> logs;
  std::vector<std::vector<StepRecord>> records;
};

/// Runs the all-human baseline, MPC and DeeP-LCC on the same profile and
/// seed, in parallel. A failing strategy is reported, not rethrown. A null
/// planner skips that strategy.
ComparisonResult run_comparison(const ComparisonInputs& inputs);

}  // namespace deeplcc
