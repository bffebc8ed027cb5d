#include "deeplcc/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "deeplcc/kernels.hpp"

namespace deeplcc {

VelocityProfile& VelocityProfile::hold(double seconds) {
  if (!(seconds >= 0)) throw std::invalid_argument("hold duration must be nonnegative");
  if (seconds == 0) return *this;
  const double t = duration();
  const double v = final_velocity();
  segments_.push_back({t, t + seconds, SegmentKind::kHold, v, v});
  return *this;
}

VelocityProfile& VelocityProfile::ramp_to(double target, double accel) {
  if (!(std::abs(accel) > 0)) throw std::invalid_argument("ramp acceleration must be nonzero");
  const double t = duration();
  const double v = final_velocity();
  const double span = std::abs(target - v) / std::abs(accel);
  if (span > 0) segments_.push_back({t, t + span, SegmentKind::kRamp, v, target});
  return *this;
}

VelocityProfile& VelocityProfile::brake_to(double target, double decel) {
  if (!(decel < 0)) throw std::invalid_argument("brake deceleration must be negative");
  const double t = duration();
  const double v = final_velocity();
  if (target > v) throw std::invalid_argument("brake target above current velocity");
  const double span = (v - target) / -decel;
  if (span > 0) segments_.push_back({t, t + span, SegmentKind::kBrake, v, target});
  return *this;
}

double VelocityProfile::final_velocity() const {
  return segments_.empty() ? v0_ : segments_.back().v_end;
}

double VelocityProfile::velocity(double t) const {
  if (segments_.empty() || t <= 0) return v0_;
  for (const auto& s : segments_) {
    if (t <= s.end) return s.v_start + s.slope() * (t - s.start);
  }
  return final_velocity();
}

std::vector<double> VelocityProfile::sample(double dt, std::size_t min_samples) const {
  if (!(dt > 0)) throw std::invalid_argument("sample period must be positive");
  const auto count = static_cast<std::size_t>(std::floor(duration() / dt + 0.5)) + 1;
  std::vector<double> out(std::max(count, min_samples));
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = velocity(static_cast<double>(k) * dt);
  }
  return out;
}

double VelocityProfile::max_ramp_acceleration() const {
  double a = 0.0;
  for (const auto& s : segments_) {
    if (s.kind == SegmentKind::kRamp) a = std::max(a, std::abs(s.slope()));
  }
  return a;
}

void VelocityProfile::validate(double a_min, double a_max) const {
  if (v0_ < 0) throw std::invalid_argument("profile velocity is negative");
  for (const auto& s : segments_) {
    if (s.v_end < 0) throw std::invalid_argument("profile velocity is negative");
    if (s.kind == SegmentKind::kRamp &&
        (s.slope() < a_min - 1e-12 || s.slope() > a_max + 1e-12)) {
      throw std::invalid_argument("profile ramp acceleration outside [a_min, a_max]");
    }
  }
}

ProfileWithPhases eudc_like_profile(const EudcOptions& options) {
  if (options.phases.empty()) throw std::invalid_argument("profile needs at least one phase");
  ProfileWithPhases out{VelocityProfile(options.initial_velocity), {}};
  out.profile.hold(options.initial_hold);
  std::vector<double> starts;
  double v = options.initial_velocity;
  for (const auto& p : options.phases) {
    starts.push_back(out.profile.duration());
    out.phases.push_back({p.name, 0.0, 0.0, p.target < v});
    out.profile.ramp_to(p.target, p.accel).hold(p.hold);
    v = p.target;
  }
  for (std::size_t k = 0; k < out.phases.size(); ++k) {
    out.phases[k].t0 = k == 0 ? 0.0 : starts[k];
    out.phases[k].t1 = k + 1 < starts.size() ? starts[k + 1] : out.profile.duration();
  }
  return out;
}

ProfileWithPhases brake_profile(const BrakeOptions& o) {
  ProfileWithPhases out{VelocityProfile(o.cruise), {}};
  out.profile.hold(o.brake_start).brake_to(o.low, o.decel).hold(o.low_hold).ramp_to(
      o.cruise, o.accel);
  const double rest = o.duration - out.profile.duration();
  if (rest < 0) throw std::invalid_argument("brake profile does not fit in its duration");
  out.profile.hold(rest);
  out.phases.push_back({"brake", 0.0, out.profile.duration(), true});
  return out;
}

double fuel_rate(double v, double a, const FuelModel& m) {
  if (v < 0) throw std::invalid_argument("velocity must be nonnegative");
  const double R = m.c0 + m.c1 * v * v + m.c2 * a;
  if (R <= 0) return m.idle;
  return m.idle + m.b1 * R * v + (a > 0 ? m.b2 * a * a * v : 0.0);
}

double total_fuel(const TrajectoryLog& log, const std::vector<int>& vehicles,
                  double t0, double t1, const FuelModel& model) {
  for (int i : vehicles) {
    if (i < 0 || i > log.n) {
      throw std::invalid_argument("vehicle " + std::to_string(i) + " is not in the log");
    }
  }
  double total = 0.0;
  const int K = log.samples();
  for (int i : vehicles) {
    for (int k = 0; k + 1 < K; ++k) {
      const double ta = log.time[k];
      const double tb = log.time[k + 1];
      const double a = std::max(ta, t0);
      const double b = std::min(tb, t1);
      if (b <= a) continue;
      const double ra = fuel_rate(log.velocity(k, i), log.acceleration(k, i), model);
      const double rb = fuel_rate(log.velocity(k + 1, i), log.acceleration(k + 1, i), model);
      const double slope = (rb - ra) / (tb - ta);
      const double fa = ra + slope * (a - ta);
      const double fb = ra + slope * (b - ta);
      total += 0.5 * (fa + fb) * (b - a);
    }
  }
  return total;
}

double total_fuel(const TrajectoryLog& log, const std::vector<int>& vehicles,
                  const FuelModel& model) {
  if (log.samples() == 0) return 0.0;
  return total_fuel(log, vehicles, log.time.front(), log.time.back(), model);
}

double reduction_percent(double baseline, double value) {
  if (!(baseline > 0)) return 0.0;
  return (baseline - value) / baseline * 100.0;
}

const StrategyFuel& FuelReport::strategy(const std::string& name) const {
  for (const auto& s : strategies) {
    if (s.name == name) return s;
  }
  throw std::out_of_range("no strategy named " + name);
}

std::string FuelReport::to_json() const {
  nlohmann::json j;
  j["vehicles"] = vehicles;
  j["phases"] = nlohmann::json::array();
  for (const auto& p : phases) {
    j["phases"].push_back({{"name", p.name}, {"t0", p.t0}, {"t1", p.t1},
                           {"braking", p.braking}});
  }
  j["strategies"] = nlohmann::json::array();
  for (const auto& s : strategies) {
    j["strategies"].push_back({{"name", s.name},
                               {"total_mL", s.total},
                               {"phase_mL", s.phase_fuel},
                               {"total_reduction_pct", s.total_reduction},
                               {"phase_reduction_pct", s.phase_reduction},
                               {"completed", s.completed},
                               {"failure", s.failure},
                               {"solver_failures", s.solver_failures}});
  }
  return j.dump(2) + "\n";
}

std::string FuelReport::to_table() const {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-14s", "fuel [mL]");
  out << buf;
  for (const auto& s : strategies) {
    std::snprintf(buf, sizeof buf, " %22s", s.name.c_str());
    out << buf;
  }
  out << '\n';
  auto row = [&](const std::string& label, auto value, auto reduction) {
    std::snprintf(buf, sizeof buf, "%-14s", label.c_str());
    out << buf;
    for (std::size_t k = 0; k < strategies.size(); ++k) {
      if (k == 0) {
        std::snprintf(buf, sizeof buf, " %22.2f", value(strategies[k]));
      } else {
        std::snprintf(buf, sizeof buf, " %13.2f (%+6.2f%%)", value(strategies[k]),
                      -reduction(strategies[k]));
      }
      out << buf;
    }
    out << '\n';
  };
  for (std::size_t p = 0; p < phases.size(); ++p) {
    row(phases[p].name, [p](const StrategyFuel& s) { return s.phase_fuel[p]; },
        [p](const StrategyFuel& s) { return s.phase_reduction[p]; });
  }
  row("total", [](const StrategyFuel& s) { return s.total; },
      [](const StrategyFuel& s) { return s.total_reduction; });
  for (const auto& s : strategies) {
    if (!s.completed) out << s.name << ": " << s.failure << '\n';
  }
  return out.str();
}

ComparisonResult run_comparison(const ComparisonInputs& in) {
  ComparisonResult result;
  result.names = {"all-HDV", "MPC", "DeeP-LCC"};
  const std::vector<std::shared_ptr<const Planner>> planners = {nullptr, in.mpc,
                                                                in.deep_lcc};
  const double duration = in.profile.profile.duration();
  const std::size_t steps =
      static_cast<std::size_t>(std::floor(duration / in.platoon.dt_control + 0.5));
  const std::vector<double> head = in.profile.profile.sample(in.platoon.dt_control, steps + 1);

  result.logs.resize(3);
  result.records.resize(3);
  std::vector<std::string> failures(3);
  std::vector<int> solver_failures(3, 0);
  std::vector<char> ran(3, 0);

  kernels::run_batch_parallel(3, [&](std::size_t s) {
    if (s > 0 && !planners[s]) return;
    ran[s] = 1;
    try {
      std::unique_ptr<RecedingHorizonPolicy> policy;
      if (s > 0) {
        policy = std::make_unique<RecedingHorizonPolicy>(in.platoon, planners[s], in.policy);
      }
      ClosedLoopOptions opts;
      opts.seed = in.seed;
      opts.cav_spacing = in.policy.cav_spacing;
      result.logs[s] = simulate_closed_loop(in.platoon, policy.get(), head, duration, opts);
      if (policy) {
        result.records[s] = policy->records();
        solver_failures[s] = policy->failures();
      }
      if (result.logs[s].collided) {
        failures[s] = "collision at t=" + std::to_string(*result.logs[s].collision_time);
      } else if (!result.logs[s].failure.empty()) {
        failures[s] = result.logs[s].failure;
      }
    } catch (const std::exception& e) {
      failures[s] = e.what();
    }
  });

  FuelReport& rep = result.report;
  rep.vehicles = in.vehicles;
  rep.phases = in.profile.phases;
  for (std::size_t s = 0; s < 3; ++s) {
    if (!ran[s]) continue;
    StrategyFuel f;
    f.name = result.names[s];
    f.failure = failures[s];
    f.completed = failures[s].empty();
    f.solver_failures = solver_failures[s];
    const TrajectoryLog& log = result.logs[s];
    for (const auto& p : rep.phases) {
      f.phase_fuel.push_back(log.samples() > 1
                                 ? total_fuel(log, in.vehicles, p.t0, p.t1, in.fuel)
                                 : 0.0);
    }
    for (double v : f.phase_fuel) f.total += v;
    rep.strategies.push_back(std::move(f));
  }
  const StrategyFuel& base = rep.strategies.front();
  for (auto& f : rep.strategies) {
    f.total_reduction = reduction_percent(base.total, f.total);
    for (std::size_t p = 0; p < f.phase_fuel.size(); ++p) {
      f.phase_reduction.push_back(reduction_percent(base.phase_fuel[p], f.phase_fuel[p]));
    }
  }
  return result;
}

}  // namespace deeplcc
