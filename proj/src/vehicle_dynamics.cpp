#include "deeplcc/vehicle_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include "deeplcc/io.hpp"

namespace deeplcc {

void OvmParams::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0) || !(v_max > 0.0)) {
    throw std::invalid_argument("OVM gains and v_max must be positive");
  }
  if (!(s_st > 0.0) || !(s_st < s_go)) {
    throw std::invalid_argument("OVM spacings must satisfy 0 < s_st < s_go");
  }
}

double desired_velocity(double spacing, const OvmParams& p) {
  if (spacing <= p.s_st) return 0.0;
  if (spacing >= p.s_go) return p.v_max;
  const double phase = std::numbers::pi * (spacing - p.s_st) / (p.s_go - p.s_st);
  return 0.5 * p.v_max * (1.0 - std::cos(phase));
}

double desired_velocity_slope(double spacing, const OvmParams& p) {
  if (spacing <= p.s_st || spacing >= p.s_go) return 0.0;
  const double width = p.s_go - p.s_st;
  const double phase = std::numbers::pi * (spacing - p.s_st) / width;
  return 0.5 * p.v_max * std::numbers::pi / width * std::sin(phase);
}

double ovm_acceleration(double spacing, double relative_velocity,
                        double velocity, const OvmParams& p) {
  return p.alpha * (desired_velocity(spacing, p) - velocity) +
         p.beta * relative_velocity;
}

double equilibrium_spacing(double v_star, const OvmParams& p) {
  if (!(v_star >= 0.0)) {
    throw std::domain_error("equilibrium velocity must be non-negative");
  }
  if (v_star >= p.v_max) {
    throw std::domain_error("no finite equilibrium spacing for v* >= v_max");
  }
  const double ratio = std::clamp(1.0 - 2.0 * v_star / p.v_max, -1.0, 1.0);
  return p.s_st + (p.s_go - p.s_st) / std::numbers::pi * std::acos(ratio);
}

bool PlatoonConfig::is_cav(int vehicle) const {
  return std::binary_search(cav_set.begin(), cav_set.end(), vehicle);
}

int PlatoonConfig::cav_slot(int vehicle) const {
  auto it = std::lower_bound(cav_set.begin(), cav_set.end(), vehicle);
  if (it == cav_set.end() || *it != vehicle) return -1;
  return static_cast<int>(it - cav_set.begin());
}

int PlatoonConfig::substeps() const {
  return static_cast<int>(std::lround(dt_control / dt_sim));
}

PlatoonConfig PlatoonConfig::without_cavs() const {
  PlatoonConfig out = *this;
  out.cav_set.clear();
  return out;
}

void PlatoonConfig::validate(bool allow_no_cav) const {
  if (n < 1) throw std::invalid_argument("platoon needs at least one follower");
  if (!allow_no_cav && cav_set.empty()) {
    throw std::invalid_argument("platoon needs at least one automated vehicle");
  }
  for (std::size_t k = 0; k < cav_set.size(); ++k) {
    if (cav_set[k] < 1 || cav_set[k] > n) {
      throw std::invalid_argument("automated vehicle index outside 1..n");
    }
    if (k > 0 && cav_set[k] <= cav_set[k - 1]) {
      throw std::invalid_argument("cav_set must be strictly increasing");
    }
  }
  for (int i = 1; i <= n; ++i) {
    if (is_cav(i)) continue;
    auto it = hdv_params.find(i);
    if (it == hdv_params.end()) {
      throw std::invalid_argument("missing OVM parameters for human vehicle " +
                                  std::to_string(i));
    }
    it->second.validate();
  }
  if (!(dt_sim > 0.0) || !(dt_control > 0.0)) {
    throw std::invalid_argument("time steps must be positive");
  }
  const double ratio = dt_control / dt_sim;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio || ratio < 0.5) {
    throw std::invalid_argument("dt_sim must divide dt_control exactly");
  }
  if (!(noise_amplitude >= 0.0)) {
    throw std::invalid_argument("noise amplitude must be non-negative");
  }
}

PlatoonConfig make_platoon(int n, std::vector<int> cav_set,
                           const OvmParams& nominal, double spread,
                           std::uint64_t seed) {
  PlatoonConfig cfg;
  cfg.n = n;
  cfg.cav_set = std::move(cav_set);
  NoiseSource rng(seed);
  for (int i = 1; i <= n; ++i) {
    OvmParams p = nominal;
    p.alpha *= rng.uniform(1.0 - spread, 1.0 + spread);
    p.beta *= rng.uniform(1.0 - spread, 1.0 + spread);
    cfg.hdv_params[i] = p;
  }
  return cfg;
}

SimState equilibrium_state(const PlatoonConfig& cfg, double v_star,
                           double cav_spacing) {
  SimState s;
  s.position = Eigen::VectorXd::Zero(cfg.n + 1);
  s.velocity = Eigen::VectorXd::Constant(cfg.n + 1, v_star);
  for (int i = 1; i <= cfg.n; ++i) {
    const double gap = cfg.is_cav(i)
                           ? cav_spacing
                           : equilibrium_spacing(v_star, cfg.hdv_params.at(i));
    s.position(i) = s.position(i - 1) - gap;
  }
  return s;
}

double NoiseSource::draw(double amplitude) {
  if (amplitude == 0.0) return 0.0;
  return uniform(-amplitude, amplitude);
}

double NoiseSource::uniform(double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(engine_);
}

StepResult step(const SimState& state, std::span<const double> cav_inputs,
                double head_accel, const PlatoonConfig& cfg,
                NoiseSource& noise) {
  const int n = state.n();
  if (static_cast<int>(cav_inputs.size()) != cfg.m()) {
    throw std::invalid_argument("expected one input per automated vehicle");
  }
  const double dt = cfg.dt_sim;

  Eigen::VectorXd accel(n + 1);
  accel(0) = head_accel;
  for (int i = 1; i <= n; ++i) {
    const int slot = cfg.cav_slot(i);
    if (slot >= 0) {
      accel(i) = cav_inputs[slot];
    } else {
      accel(i) = ovm_acceleration(state.spacing(i),
                                  state.velocity(i - 1) - state.velocity(i),
                                  state.velocity(i), cfg.hdv_params.at(i)) +
                 noise.draw(cfg.noise_amplitude);
    }
  }

  StepResult out;
  out.state.position.resize(n + 1);
  out.state.velocity.resize(n + 1);
  out.acceleration.resize(n + 1);
  for (int i = 0; i <= n; ++i) {
    const double v_next = std::max(0.0, state.velocity(i) + accel(i) * dt);
    out.acceleration(i) = (v_next - state.velocity(i)) / dt;
    out.state.velocity(i) = v_next;
    out.state.position(i) = state.position(i) + v_next * dt;
  }
  out.state.time = state.time + dt;
  for (int i = 1; i <= n; ++i) {
    if (out.state.spacing(i) <= 0.0) out.collision = true;
  }
  return out;
}

bool TrajectoryLog::is_cav(int vehicle) const {
  return std::find(cav_set.begin(), cav_set.end(), vehicle) != cav_set.end();
}

void TrajectoryLog::write_csv(std::ostream& out) const {
  out << "t,vehicle_id,position_m,velocity_mps,spacing_m,accel_mps2,is_cav,"
         "applied_input_mps2\n";
  for (int k = 0; k < samples(); ++k) {
    for (int i = 0; i <= n; ++i) {
      out << format_number(time[k]) << ',' << i << ','
          << format_number(position(k, i)) << ','
          << format_number(velocity(k, i)) << ',';
      if (i > 0) out << format_number(spacing(k, i));
      out << ',' << format_number(acceleration(k, i)) << ','
          << (is_cav(i) ? 1 : 0) << ',';
      if (i > 0 && is_cav(i)) {
        const auto slot = std::find(cav_set.begin(), cav_set.end(), i) -
                          cav_set.begin();
        out << format_number(applied_input(k, slot));
      }
      out << '\n';
    }
  }
}

TrajectoryLog simulate_closed_loop(const PlatoonConfig& cfg,
                                   ControlPolicy* policy,
                                   std::span<const double> head_velocity,
                                   double duration,
                                   const ClosedLoopOptions& options) {
  const PlatoonConfig plant = policy ? cfg : cfg.without_cavs();
  plant.validate(/*allow_no_cav=*/policy == nullptr);

  const int steps = static_cast<int>(std::lround(duration / plant.dt_control));
  if (steps < 1) throw std::invalid_argument("duration shorter than one step");
  if (static_cast<int>(head_velocity.size()) < steps + 1) {
    throw std::invalid_argument("head velocity profile shorter than duration");
  }

  const int n = plant.n;
  const int m = plant.m();
  TrajectoryLog log;
  log.n = n;
  log.cav_set = plant.cav_set;
  log.dt = plant.dt_control;
  log.time.reserve(steps);
  log.position.resize(steps, n + 1);
  log.velocity.resize(steps, n + 1);
  log.acceleration.resize(steps, n + 1);
  log.applied_input = Eigen::MatrixXd::Zero(steps, m);

  NoiseSource noise(options.seed);
  SimState state =
      equilibrium_state(plant, head_velocity[0], options.cav_spacing);
  const int substeps = plant.substeps();
  std::vector<double> inputs(m, 0.0);

  int recorded = 0;
  for (int k = 0; k < steps; ++k) {
    state.time = k * plant.dt_control;
    log.time.push_back(state.time);
    log.position.row(k) = state.position.transpose();
    log.velocity.row(k) = state.velocity.transpose();
    recorded = k + 1;

    if (policy) {
      Eigen::VectorXd u;
      try {
        u = policy->control(Measurement{k, state.time, &state});
      } catch (const ControllerFailure& e) {
        std::ostringstream msg;
        msg << "controller failure at step " << k << " (t=" << state.time
            << " s): " << e.what();
        log.failure = msg.str();
        log.acceleration.row(k).setZero();
        break;
      }
      if (u.size() != m || !u.allFinite()) {
        log.failure = "controller returned an invalid input at step " +
                      std::to_string(k);
        log.acceleration.row(k).setZero();
        break;
      }
      for (int j = 0; j < m; ++j) inputs[j] = u(j);
      log.applied_input.row(k) = u.transpose();
    }

    const double head_accel =
        (head_velocity[k + 1] - head_velocity[k]) / plant.dt_control;
    bool collided = false;
    for (int sub = 0; sub < substeps; ++sub) {
      StepResult r = step(state, inputs, head_accel, plant, noise);
      if (sub == 0) log.acceleration.row(k) = r.acceleration.transpose();
      state = std::move(r.state);
      if (r.collision) {
        collided = true;
        log.collided = true;
        log.collision_time = k * plant.dt_control + (sub + 1) * plant.dt_sim;
        break;
      }
    }
    if (collided) {
      log.failure = "collision at t=" + format_number(*log.collision_time);
      break;
    }
  }

  log.time.resize(recorded);
  log.position.conservativeResize(recorded, Eigen::NoChange);
  log.velocity.conservativeResize(recorded, Eigen::NoChange);
  log.acceleration.conservativeResize(recorded, Eigen::NoChange);
  log.applied_input.conservativeResize(recorded, Eigen::NoChange);
  return log;
}

}  // namespace deeplcc
