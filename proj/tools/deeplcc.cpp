// Command-line front end: collect, analyze, simulate, compare.

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "deeplcc/config.hpp"
#include "deeplcc/io.hpp"
#include "deeplcc/linear_model.hpp"
#include "deeplcc/scenarios.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace deeplcc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitPrerequisite = 4;

class PrerequisiteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RunFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool verbose = false;
};

void log(const GlobalOptions& g, const std::string& msg) {
  if (g.verbose) std::cerr << "[deeplcc] " << msg << '\n';
}

int emit_error(int code, const std::string& kind, const std::string& message) {
  json j{{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}};
  std::cerr << j.dump() << '\n';
  return code;
}

RunConfig load(const GlobalOptions& g) {
  if (g.config.empty()) throw ConfigError("--config is required");
  return load_config(g.config);
}

fs::path out_root(const GlobalOptions& g, const RunConfig& cfg) {
  return g.out.empty() ? fs::path(cfg.output_dir) : fs::path(g.out);
}

fs::path dataset_dir(const std::string& flag, const fs::path& root) {
  return flag.empty() ? root / "dataset" : fs::path(flag);
}

TrajectoryDataset load_dataset(const fs::path& dir, const RunConfig& cfg) {
  if (!fs::exists(dir / "dataset.csv") || !fs::exists(dir / "dataset.json")) {
    throw PrerequisiteError("no dataset in " + dir.string() +
                            "; run `deeplcc collect --config <file>` first");
  }
  TrajectoryDataset ds;
  try {
    ds = read_dataset(dir);
  } catch (const std::exception& e) {
    throw PrerequisiteError("cannot read dataset in " + dir.string() + ": " + e.what());
  }
  try {
    check_dataset_compatible(cfg, ds);
  } catch (const ConfigError& e) {
    throw PrerequisiteError(std::string(e.what()) +
                            "; rerun `deeplcc collect` with this config");
  }
  return ds;
}

std::string trajectory_csv(const TrajectoryLog& log) {
  std::ostringstream out;
  log.write_csv(out);
  return out.str();
}

std::string records_jsonl(const std::vector<StepRecord>& records) {
  std::string out;
  for (const auto& r : records) out += step_record_json(r) + "\n";
  return out;
}

std::string velocity_chart(const TrajectoryLog& log, const std::string& title) {
  static const char* palette[] = {"#000000", "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22"};
  std::vector<Series> series;
  for (int i = 0; i <= log.n; ++i) {
    Series s;
    s.label = i == 0 ? "head" : (log.is_cav(i) ? "CAV " : "HDV ") + std::to_string(i);
    s.color = palette[i % 10];
    s.x = log.time;
    s.y.resize(log.time.size());
    for (int k = 0; k < log.samples(); ++k) s.y[k] = log.velocity(k, i);
    series.push_back(std::move(s));
  }
  return line_chart_svg(title, "time [s]", "velocity [m/s]", series);
}

std::string spacing_chart(const TrajectoryLog& log, const std::string& title) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  std::vector<Series> series;
  int c = 0;
  for (int i : log.cav_set) {
    Series s;
    s.label = "CAV " + std::to_string(i);
    s.color = palette[c++ % 4];
    s.x = log.time;
    s.y.resize(log.time.size());
    for (int k = 0; k < log.samples(); ++k) s.y[k] = log.spacing(k, i);
    series.push_back(std::move(s));
  }
  return line_chart_svg(title, "time [s]", "spacing [m]", series);
}

json controllability_json(const ControllabilityReport& r) {
  json modes = json::array();
  for (const auto& z : r.uncontrollable_modes) modes.push_back({z.real(), z.imag()});
  return {{"state_dim", r.state_dim},
          {"kalman_rank", r.kalman_rank},
          {"controllable_dim", r.controllable_dim},
          {"controllable", r.controllable},
          {"stabilizable", r.stabilizable},
          {"uncontrollable_modes", modes},
          {"pbh_consistent", r.pbh_consistent},
          {"predicted_controllable", r.predicted_controllable},
          {"predicted_stabilizable", r.predicted_stabilizable}};
}

// ---------------------------------------------------------------------------

struct CollectOptions {
  std::optional<int> T;
};

int cmd_collect(const GlobalOptions& g, const CollectOptions& o) {
  RunConfig cfg = load(g);
  if (o.T) cfg.collection.T = *o.T;
  if (g.seed) cfg.collection.seed = *g.seed;
  cfg.validate();
  const fs::path dir = out_root(g, cfg) / "dataset";

  log(g, "collecting T=" + std::to_string(cfg.collection.T) + " samples");
  TrajectoryDataset ds;
  try {
    ds = collect_dataset(cfg.platoon_config(), cfg.collection.v_star, cfg.collection_options());
  } catch (const CollectionError& e) {
    throw RunFailure(e.what());
  }
  const int order = cfg.controller.Tini + cfg.controller.N + 2 * cfg.platoon.n;
  const ExcitationReport pe = is_persistently_exciting(ds.combined_input(), order);
  write_dataset(ds, dir);

  json summary{{"dataset", dir.string()},
               {"T", ds.length()},
               {"length_bound", min_data_length(ds.n, ds.m(), cfg.controller.Tini,
                                                cfg.controller.N)},
               {"persistent_excitation",
                {{"order", order},
                 {"verdict", pe.verdict},
                 {"rank", pe.rank},
                 {"sigma_min", pe.sigma_min},
                 {"reason", pe.reason}}}};
  std::cout << summary.dump(2) << '\n';
  if (!pe.verdict) {
    std::cerr << "warning: collected input is not persistently exciting of order " << order
              << '\n';
  }
  return kExitOk;
}

struct AnalyzeOptions {
  bool combined = false;
};

int cmd_analyze(const GlobalOptions& g, const AnalyzeOptions& o) {
  const RunConfig cfg = load(g);
  const PlatoonConfig platoon = cfg.platoon_config();
  const LinearTrafficModel model =
      linearize_platoon(platoon, cfg.collection.v_star, cfg.platoon.cav_spacing);
  const auto cav = analyze_controllability(model, InputChoice::kCavOnly);
  const auto comb = analyze_controllability(model, InputChoice::kCombined);
  const auto obs = analyze_observability(model);
  const auto& chosen = o.combined ? comb : cav;

  json coeffs = json::array();
  for (const auto& [i, c] : model.coeffs) {
    coeffs.push_back({{"vehicle", i},
                      {"alpha1", c.alpha1},
                      {"alpha2", c.alpha2},
                      {"alpha3", c.alpha3},
                      {"rank_condition", satisfies_rank_condition(c)}});
  }
  json report{{"n", model.n},
              {"S", model.cav_set},
              {"v_star", model.v_star},
              {"input", o.combined ? "combined" : "cav_only"},
              {"controllable", chosen.controllable},
              {"stabilizable", chosen.stabilizable},
              {"observable", obs.observable},
              {"rank_condition", cav.rank_condition},
              {"coefficients", coeffs},
              {"controllability",
               {{"cav_only", controllability_json(cav)},
                {"combined", controllability_json(comb)}}},
              {"observability",
               {{"state_dim", obs.state_dim},
                {"rank", obs.rank},
                {"observable", obs.observable},
                {"pbh_consistent", obs.pbh_consistent},
                {"predicted_observable", obs.predicted_observable}}}};
  const fs::path root = out_root(g, cfg);
  write_file_atomic(root / "analysis.json", report.dump(2) + "\n");
  std::cout << report.dump(2) << '\n';
  return kExitOk;
}

struct SimulateOptions {
  std::string controller = "deeplcc";
  std::string profile;
  std::string dataset;
};

int cmd_simulate(const GlobalOptions& g, const SimulateOptions& o) {
  RunConfig cfg = load(g);
  if (!o.profile.empty()) cfg.scenario.profile = o.profile;
  if (g.seed) cfg.scenario.seed = *g.seed;
  cfg.validate();
  const fs::path root = out_root(g, cfg);

  std::shared_ptr<const Planner> planner;
  if (o.controller == "deeplcc") {
    const TrajectoryDataset ds = load_dataset(dataset_dir(o.dataset, root), cfg);
    log(g, "building data-driven planner");
    planner = make_deep_lcc_planner(cfg, ds);
  } else if (o.controller == "mpc") {
    planner = make_mpc_planner(cfg);
  }
  for (const auto& w : cfg.controller.warnings(cfg.platoon.n)) std::cerr << "warning: " << w << '\n';

  const PlatoonConfig platoon = cfg.platoon_config();
  const ProfileWithPhases prof = cfg.profile();
  const double duration = prof.profile.duration();
  const auto steps = static_cast<std::size_t>(duration / platoon.dt_control + 0.5);
  const std::vector<double> head = prof.profile.sample(platoon.dt_control, steps + 1);

  std::unique_ptr<RecedingHorizonPolicy> policy;
  if (planner) {
    policy = std::make_unique<RecedingHorizonPolicy>(platoon, planner, cfg.policy_options());
  }
  ClosedLoopOptions opts;
  opts.seed = cfg.scenario.seed;
  opts.cav_spacing = cfg.platoon.cav_spacing;
  log(g, "simulating " + o.controller + " on " + cfg.scenario.profile);
  const TrajectoryLog log_ = simulate_closed_loop(platoon, policy.get(), head, duration, opts);

  const fs::path dir = root / ("simulate_" + o.controller + "_" + cfg.scenario.profile);
  write_file_atomic(dir / "trajectory.csv", trajectory_csv(log_));
  if (policy) write_file_atomic(dir / "solver.jsonl", records_jsonl(policy->records()));
  if (cfg.scenario.svg) {
    write_file_atomic(dir / "velocity.svg", velocity_chart(log_, "velocity, " + o.controller));
    if (!log_.cav_set.empty()) {
      write_file_atomic(dir / "spacing.svg", spacing_chart(log_, "CAV spacing, " + o.controller));
    }
  }
  json summary{{"controller", o.controller},
               {"profile", cfg.scenario.profile},
               {"seed", cfg.scenario.seed},
               {"samples", log_.samples()},
               {"collided", log_.collided},
               {"collision_time", log_.collision_time ? json(*log_.collision_time) : json()},
               {"failure", log_.failure},
               {"solver_failures", policy ? policy->failures() : 0},
               {"fuel_mL", total_fuel(log_, cfg.scenario.scored_vehicles, cfg.scenario.fuel)}};
  write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << '\n';
  if (log_.collided) throw RunFailure("collision during simulation");
  if (!log_.failure.empty()) throw RunFailure(log_.failure);
  return kExitOk;
}

struct CompareOptions {
  std::string profile;
  std::string dataset;
  bool phases = false;
};

int cmd_compare(const GlobalOptions& g, const CompareOptions& o) {
  RunConfig cfg = load(g);
  if (!o.profile.empty()) cfg.scenario.profile = o.profile;
  if (g.seed) cfg.scenario.seed = *g.seed;
  cfg.validate();
  const fs::path root = out_root(g, cfg);
  const TrajectoryDataset ds = load_dataset(dataset_dir(o.dataset, root), cfg);

  ComparisonInputs in;
  in.platoon = cfg.platoon_config();
  log(g, "building planners");
  in.deep_lcc = make_deep_lcc_planner(cfg, ds);
  in.mpc = make_mpc_planner(cfg);
  in.policy = cfg.policy_options();
  in.profile = cfg.profile();
  if (!o.phases) {
    in.profile.phases = {{"total", 0.0, in.profile.profile.duration(), false}};
  }
  in.vehicles = cfg.scenario.scored_vehicles;
  in.fuel = cfg.scenario.fuel;
  in.seed = cfg.scenario.seed;
  log(g, "running all-HDV, MPC and DeeP-LCC on " + cfg.scenario.profile);
  const ComparisonResult r = run_comparison(in);

  const fs::path dir = root / ("compare_" + cfg.scenario.profile);
  const char* slugs[] = {"all_hdv", "mpc", "deeplcc"};
  for (std::size_t s = 0; s < r.logs.size(); ++s) {
    if (r.logs[s].samples() == 0) continue;
    write_file_atomic(dir / ("trajectory_" + std::string(slugs[s]) + ".csv"),
                      trajectory_csv(r.logs[s]));
    if (s > 0) {
      write_file_atomic(dir / ("solver_" + std::string(slugs[s]) + ".jsonl"),
                        records_jsonl(r.records[s]));
    }
    if (cfg.scenario.svg) {
      write_file_atomic(dir / ("velocity_" + std::string(slugs[s]) + ".svg"),
                        velocity_chart(r.logs[s], "velocity, " + r.names[s]));
    }
  }
  write_file_atomic(dir / "fuel_report.json", r.report.to_json());
  const std::string table = r.report.to_table();
  write_file_atomic(dir / "fuel_report.txt", table);
  std::cout << table;
  for (const auto& s : r.report.strategies) {
    if (!s.completed) throw RunFailure(s.name + " run failed: " + s.failure);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-driven predictive cruise control for mixed platoons"};
  app.require_subcommand(1);
  GlobalOptions g;
  std::uint64_t seed = 0;
  auto add_globals = [&](CLI::App* sub) {
    sub->add_option("--config", g.config, "run configuration (JSON)")->required();
    sub->add_option("--seed", seed, "random seed override");
    sub->add_option("--out", g.out, "output directory (default: config output_dir)");
    sub->add_flag("--verbose", g.verbose, "progress on stderr");
  };

  CollectOptions co;
  auto* collect = app.add_subcommand("collect", "collect an excitation dataset");
  add_globals(collect);
  collect->add_option("--T", co.T, "number of samples (overrides the config)");

  AnalyzeOptions ao;
  auto* analyze = app.add_subcommand("analyze", "controllability and observability report");
  add_globals(analyze);
  analyze->add_flag("--combined", ao.combined, "report for the combined input [u; eps]");

  SimulateOptions so;
  auto* simulate = app.add_subcommand("simulate", "closed-loop run of one strategy");
  add_globals(simulate);
  simulate->add_option("--controller", so.controller, "none | mpc | deeplcc")
      ->check(CLI::IsMember({"none", "mpc", "deeplcc"}));
  simulate->add_option("--profile", so.profile, "eudc | brake")
      ->check(CLI::IsMember({"eudc", "brake"}));
  simulate->add_option("--dataset", so.dataset, "dataset directory (default: <out>/dataset)");

  CompareOptions cmp;
  auto* compare = app.add_subcommand("compare", "fuel comparison of all strategies");
  add_globals(compare);
  compare->add_option("--profile", cmp.profile, "eudc | brake")
      ->check(CLI::IsMember({"eudc", "brake"}));
  compare->add_option("--dataset", cmp.dataset, "dataset directory (default: <out>/dataset)");
  compare->add_flag("--phases", cmp.phases, "split fuel totals per profile phase");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return emit_error(kExitConfig, "usage", e.what());
  }
  for (auto* sub : {collect, analyze, simulate, compare}) {
    if (sub->parsed() && sub->count("--seed")) g.seed = seed;
  }

  try {
    if (collect->parsed()) return cmd_collect(g, co);
    if (analyze->parsed()) return cmd_analyze(g, ao);
    if (simulate->parsed()) return cmd_simulate(g, so);
    if (compare->parsed()) return cmd_compare(g, cmp);
  } catch (const ConfigError& e) {
    return emit_error(kExitConfig, "config", e.what());
  } catch (const PrerequisiteError& e) {
    return emit_error(kExitPrerequisite, "prerequisite", e.what());
  } catch (const RunFailure& e) {
    return emit_error(kExitRuntime, "runtime", e.what());
  } catch (const std::exception& e) {
    return emit_error(kExitRuntime, "runtime", e.what());
  }
  return kExitOk;
}
