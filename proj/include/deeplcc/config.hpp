#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "deeplcc/controller.hpp"
#include "deeplcc/mpc.hpp"
#include "deeplcc/scenarios.hpp"
#include "deeplcc/trajectory_data.hpp"
#include "deeplcc/vehicle_dynamics.hpp"

namespace deeplcc {

/// Invalid or inconsistent run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PlatoonSection {
  int n = 8;
  std::vector<int> cav_set = {3, 6};
  OvmParams nominal;
  double heterogeneity = 0.2;  // alpha, beta scaled by U[1 - h, 1 + h]
  std::uint64_t param_seed = 2021;
  double dt_control = 0.05;
  double dt_sim = 0.01;
  double noise_amplitude = 0.1;
  double cav_spacing = 20.0;
};

struct CollectionSection {
  int T = 2000;
  double excitation = 1.0;
  std::uint64_t seed = 1;
  double v_star = 15.0;
  double head_rate = 5.0;
  bool hdv_noise = true;
};

struct MpcSection {
  double ridge = 1e-8;
  /// Equilibrium velocity of the nominal model the MPC is given.
  double model_velocity = 15.0;
};

struct ScenarioSection {
  std::string profile = "eudc";
  std::uint64_t seed = 1;
  EudcOptions eudc;
  BrakeOptions brake;
  FuelModel fuel;
  std::vector<int> scored_vehicles = {3, 4, 5, 6, 7, 8};
  bool svg = true;
};

struct RunConfig {
  int schema_version = 1;
  PlatoonSection platoon;
  ControllerParams controller;
  EquilibriumReference reference = EquilibriumReference::kCurrent;
  MpcSection mpc;
  CollectionSection collection;
  ScenarioSection scenario;
  std::string output_dir = "out";

  /// Heterogeneous platoon drawn from the platoon section.
  PlatoonConfig platoon_config() const;
  /// Same topology with every human driver at the nominal parameters.
  PlatoonConfig nominal_platoon_config() const;
  CollectionOptions collection_options() const;
  MpcParams mpc_params() const;
  RecedingHorizonOptions policy_options() const;
  ProfileWithPhases profile() const;
  ProfileWithPhases profile(const std::string& name) const;

  /// Cross-section checks; throws ConfigError.
  void validate() const;
};

inline constexpr int kSchemaVersion = 1;

/// Parses and validates a JSON config. Unknown keys are rejected.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const RunConfig& cfg);

/// Throws ConfigError when the dataset was collected for another platoon
/// topology, sampling period or horizon pair.
void check_dataset_compatible(const RunConfig& cfg, const TrajectoryDataset& ds);

/// Planner factories shared by the command-line tool and the tests.
std::shared_ptr<const DeepLccPlanner> make_deep_lcc_planner(
    const RunConfig& cfg, const TrajectoryDataset& ds);
/// MPC on the nominal-parameter model linearized at mpc.model_velocity.
std::shared_ptr<const MpcPlanner> make_mpc_planner(const RunConfig& cfg);

}  // namespace deeplcc
