#include "deeplcc/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "deeplcc/io.hpp"
#include "deeplcc/linear_model.hpp"

namespace deeplcc {

using nlohmann::json;

namespace {

// Reads optional keys of one JSON object and rejects unknown ones.
class Section {
 public:
  Section(const json& parent, const std::string& key, const std::string& path)
      : path_(path.empty() ? key : path + "." + key) {
    if (!parent.contains(key)) return;
    obj_ = &parent.at(key);
    if (!obj_->is_object()) throw ConfigError(path_ + " must be an object");
  }
  explicit Section(const json& root) : obj_(&root), path_("") {
    if (!root.is_object()) throw ConfigError("config root must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_ || !obj_->contains(key)) return;
    try {
      out = obj_->at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  Section child(const char* key) {
    seen_.insert(key);
    return obj_ ? Section(*obj_, key, path_) : Section(json::object(), key, path_);
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    return obj_ && obj_->contains(key) ? &obj_->at(key) : nullptr;
  }

  std::string where(const char* key) const {
    return path_.empty() ? std::string(key) : path_ + "." + key;
  }

  void finish() const {
    if (!obj_) return;
    for (const auto& [k, v] : obj_->items()) {
      if (!seen_.count(k)) throw ConfigError("unknown key " + where(k.c_str()));
    }
  }

 private:
  const json* obj_ = nullptr;
  std::string path_;
  std::set<std::string> seen_;
};

void read_ovm(Section s, OvmParams& p) {
  s.get("alpha", p.alpha);
  s.get("beta", p.beta);
  s.get("s_st", p.s_st);
  s.get("s_go", p.s_go);
  s.get("v_max", p.v_max);
  s.finish();
}

}  // namespace

PlatoonConfig RunConfig::platoon_config() const {
  PlatoonConfig cfg = make_platoon(platoon.n, platoon.cav_set, platoon.nominal,
                                   platoon.heterogeneity, platoon.param_seed);
  cfg.dt_control = platoon.dt_control;
  cfg.dt_sim = platoon.dt_sim;
  cfg.noise_amplitude = platoon.noise_amplitude;
  return cfg;
}

PlatoonConfig RunConfig::nominal_platoon_config() const {
  PlatoonConfig cfg = make_platoon(platoon.n, platoon.cav_set, platoon.nominal, 0.0,
                                   platoon.param_seed);
  cfg.dt_control = platoon.dt_control;
  cfg.dt_sim = platoon.dt_sim;
  cfg.noise_amplitude = platoon.noise_amplitude;
  return cfg;
}

CollectionOptions RunConfig::collection_options() const {
  CollectionOptions o;
  o.T = collection.T;
  o.excitation = collection.excitation;
  o.seed = collection.seed;
  o.cav_spacing = platoon.cav_spacing;
  o.head_rate = collection.head_rate;
  o.hdv_noise = collection.hdv_noise;
  o.Tini = controller.Tini;
  o.N = controller.N;
  return o;
}

MpcParams RunConfig::mpc_params() const {
  MpcParams p = MpcParams::from(controller);
  p.ridge = mpc.ridge;
  return p;
}

RecedingHorizonOptions RunConfig::policy_options() const {
  RecedingHorizonOptions o;
  o.reference = reference;
  o.collection_v_star = collection.v_star;
  o.cav_spacing = platoon.cav_spacing;
  return o;
}

ProfileWithPhases RunConfig::profile() const { return profile(scenario.profile); }

ProfileWithPhases RunConfig::profile(const std::string& name) const {
  if (name == "eudc") return eudc_like_profile(scenario.eudc);
  if (name == "brake") return brake_profile(scenario.brake);
  throw ConfigError("unknown profile '" + name + "' (expected eudc or brake)");
}

void RunConfig::validate() const {
  if (schema_version != kSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(schema_version) +
                      " (expected " + std::to_string(kSchemaVersion) + ")");
  }
  try {
    platoon.nominal.validate();
    if (!(platoon.heterogeneity >= 0 && platoon.heterogeneity < 1)) {
      throw ConfigError("platoon.heterogeneity must lie in [0, 1)");
    }
    if (!(platoon.cav_spacing > 0)) throw ConfigError("platoon.cav_spacing must be positive");
    const PlatoonConfig cfg = platoon_config();
    cfg.validate();
    controller.validate();
    mpc_params().validate();
    if (!(collection.v_star > 0 && collection.v_star < platoon.nominal.v_max)) {
      throw ConfigError("collection.v_star must lie in (0, v_max)");
    }
    if (!(collection.excitation > 0) || !(collection.head_rate >= 0)) {
      throw ConfigError("collection excitation must be positive");
    }
    const int need = min_data_length(platoon.n, cfg.m(), controller.Tini, controller.N);
    if (collection.T < need) {
      throw ConfigError("collection.T=" + std::to_string(collection.T) +
                        " is below the persistent excitation bound "
                        "(m+1)(Tini+N+2n)-1=" + std::to_string(need));
    }
    if (!(mpc.model_velocity > 0 && mpc.model_velocity < platoon.nominal.v_max)) {
      throw ConfigError("mpc.model_velocity must lie in (0, v_max)");
    }
    for (int v : scenario.scored_vehicles) {
      if (v < 1 || v > platoon.n) {
        throw ConfigError("scenario.scored_vehicles contains vehicle " + std::to_string(v) +
                          " outside 1..n");
      }
    }
    for (const char* name : {"eudc", "brake"}) {
      const ProfileWithPhases p = profile(name);
      p.profile.validate(controller.a_min, controller.a_max);
      if (!(p.profile.final_velocity() < platoon.nominal.v_max)) {
        throw ConfigError(std::string(name) + " profile exceeds v_max");
      }
    }
    profile();
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

RunConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Section top(root);
  top.get("schema_version", c.schema_version);
  top.get("output_dir", c.output_dir);

  {
    Section s = top.child("platoon");
    s.get("n", c.platoon.n);
    s.get("cav_set", c.platoon.cav_set);
    read_ovm(s.child("ovm"), c.platoon.nominal);
    s.get("heterogeneity", c.platoon.heterogeneity);
    s.get("param_seed", c.platoon.param_seed);
    s.get("dt_control", c.platoon.dt_control);
    s.get("dt_sim", c.platoon.dt_sim);
    s.get("noise_amplitude", c.platoon.noise_amplitude);
    s.get("cav_spacing", c.platoon.cav_spacing);
    s.finish();
  }
  {
    Section s = top.child("controller");
    ControllerParams& p = c.controller;
    s.get("Tini", p.Tini);
    s.get("N", p.N);
    s.get("wv", p.wv);
    s.get("ws", p.ws);
    s.get("wu", p.wu);
    s.get("lambda_g", p.lambda_g);
    s.get("lambda_y", p.lambda_y);
    s.get("s_tilde_min", p.s_tilde_min);
    s.get("s_tilde_max", p.s_tilde_max);
    s.get("a_min", p.a_min);
    s.get("a_max", p.a_max);
    s.get("qp_tol", p.qp_tol);
    s.get("qp_max_iter", p.qp_max_iter);
    s.get("hard_output_constraint", p.hard_output_constraint);
    std::string ref = "current";
    s.get("equilibrium_reference", ref);
    if (ref == "current") {
      c.reference = EquilibriumReference::kCurrent;
    } else if (ref == "collection") {
      c.reference = EquilibriumReference::kCollection;
    } else {
      throw ConfigError("controller.equilibrium_reference must be current or collection");
    }
    s.finish();
  }
  {
    Section s = top.child("mpc");
    s.get("ridge", c.mpc.ridge);
    s.get("model_velocity", c.mpc.model_velocity);
    s.finish();
  }
  {
    Section s = top.child("collection");
    s.get("T", c.collection.T);
    s.get("excitation", c.collection.excitation);
    s.get("seed", c.collection.seed);
    s.get("v_star", c.collection.v_star);
    s.get("head_rate", c.collection.head_rate);
    s.get("hdv_noise", c.collection.hdv_noise);
    s.finish();
  }
  {
    Section s = top.child("scenario");
    ScenarioSection& sc = c.scenario;
    s.get("profile", sc.profile);
    s.get("seed", sc.seed);
    s.get("scored_vehicles", sc.scored_vehicles);
    s.get("svg", sc.svg);
    {
      Section e = s.child("eudc");
      e.get("initial_velocity", sc.eudc.initial_velocity);
      e.get("initial_hold", sc.eudc.initial_hold);
      if (const json* phases = e.raw("phases")) {
        if (!phases->is_array() || phases->empty()) {
          throw ConfigError("scenario.eudc.phases must be a nonempty array");
        }
        sc.eudc.phases.clear();
        for (std::size_t k = 0; k < phases->size(); ++k) {
          EudcPhaseSpec spec;
          spec.name = "phase " + std::to_string(k + 1);
          Section ph((*phases)[k]);
          ph.get("name", spec.name);
          ph.get("target", spec.target);
          ph.get("accel", spec.accel);
          ph.get("hold", spec.hold);
          ph.finish();
          sc.eudc.phases.push_back(spec);
        }
      }
      e.finish();
    }
    {
      Section b = s.child("brake");
      b.get("cruise", sc.brake.cruise);
      b.get("brake_start", sc.brake.brake_start);
      b.get("decel", sc.brake.decel);
      b.get("low", sc.brake.low);
      b.get("low_hold", sc.brake.low_hold);
      b.get("accel", sc.brake.accel);
      b.get("duration", sc.brake.duration);
      b.finish();
    }
    {
      Section f = s.child("fuel");
      f.get("idle", sc.fuel.idle);
      f.get("b1", sc.fuel.b1);
      f.get("b2", sc.fuel.b2);
      f.get("c0", sc.fuel.c0);
      f.get("c1", sc.fuel.c1);
      f.get("c2", sc.fuel.c2);
      f.finish();
    }
    s.finish();
  }
  top.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("config file not found: " + path.string());
  }
  return parse_config(read_file(path));
}

std::string config_to_json(const RunConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["output_dir"] = c.output_dir;
  const auto& p = c.platoon;
  j["platoon"] = {{"n", p.n},
                  {"cav_set", p.cav_set},
                  {"ovm",
                   {{"alpha", p.nominal.alpha},
                    {"beta", p.nominal.beta},
                    {"s_st", p.nominal.s_st},
                    {"s_go", p.nominal.s_go},
                    {"v_max", p.nominal.v_max}}},
                  {"heterogeneity", p.heterogeneity},
                  {"param_seed", p.param_seed},
                  {"dt_control", p.dt_control},
                  {"dt_sim", p.dt_sim},
                  {"noise_amplitude", p.noise_amplitude},
                  {"cav_spacing", p.cav_spacing}};
  const auto& k = c.controller;
  j["controller"] = {{"Tini", k.Tini},
                     {"N", k.N},
                     {"wv", k.wv},
                     {"ws", k.ws},
                     {"wu", k.wu},
                     {"lambda_g", k.lambda_g},
                     {"lambda_y", k.lambda_y},
                     {"s_tilde_min", k.s_tilde_min},
                     {"s_tilde_max", k.s_tilde_max},
                     {"a_min", k.a_min},
                     {"a_max", k.a_max},
                     {"qp_tol", k.qp_tol},
                     {"qp_max_iter", k.qp_max_iter},
                     {"hard_output_constraint", k.hard_output_constraint},
                     {"equilibrium_reference",
                      c.reference == EquilibriumReference::kCurrent ? "current"
                                                                    : "collection"}};
  j["mpc"] = {{"ridge", c.mpc.ridge}, {"model_velocity", c.mpc.model_velocity}};
  j["collection"] = {{"T", c.collection.T},
                     {"excitation", c.collection.excitation},
                     {"seed", c.collection.seed},
                     {"v_star", c.collection.v_star},
                     {"head_rate", c.collection.head_rate},
                     {"hdv_noise", c.collection.hdv_noise}};
  const auto& s = c.scenario;
  json phases = json::array();
  for (const auto& ph : s.eudc.phases) {
    phases.push_back({{"name", ph.name},
                      {"target", ph.target},
                      {"accel", ph.accel},
                      {"hold", ph.hold}});
  }
  j["scenario"] = {
      {"profile", s.profile},
      {"seed", s.seed},
      {"scored_vehicles", s.scored_vehicles},
      {"svg", s.svg},
      {"eudc",
       {{"initial_velocity", s.eudc.initial_velocity},
        {"initial_hold", s.eudc.initial_hold},
        {"phases", phases}}},
      {"brake",
       {{"cruise", s.brake.cruise},
        {"brake_start", s.brake.brake_start},
        {"decel", s.brake.decel},
        {"low", s.brake.low},
        {"low_hold", s.brake.low_hold},
        {"accel", s.brake.accel},
        {"duration", s.brake.duration}}},
      {"fuel",
       {{"idle", s.fuel.idle},
        {"b1", s.fuel.b1},
        {"b2", s.fuel.b2},
        {"c0", s.fuel.c0},
        {"c1", s.fuel.c1},
        {"c2", s.fuel.c2}}}};
  return j.dump(2) + "\n";
}

void check_dataset_compatible(const RunConfig& cfg, const TrajectoryDataset& ds) {
  ds.validate();
  if (ds.n != cfg.platoon.n || ds.cav_set != cfg.platoon.cav_set) {
    throw ConfigError("dataset platoon (n, S) differs from the config");
  }
  if (std::abs(ds.dt - cfg.platoon.dt_control) > 1e-12) {
    throw ConfigError("dataset sampling period differs from platoon.dt_control");
  }
  const int need = min_data_length(ds.n, ds.m(), cfg.controller.Tini, cfg.controller.N);
  if (ds.length() < need) {
    throw ConfigError("dataset length " + std::to_string(ds.length()) +
                      " is below the persistent excitation bound " + std::to_string(need));
  }
}

std::shared_ptr<const DeepLccPlanner> make_deep_lcc_planner(
    const RunConfig& cfg, const TrajectoryDataset& ds) {
  check_dataset_compatible(cfg, ds);
  return std::make_shared<const DeepLccPlanner>(
      partition(ds, cfg.controller.Tini, cfg.controller.N), cfg.controller, cfg.platoon.n);
}

std::shared_ptr<const MpcPlanner> make_mpc_planner(const RunConfig& cfg) {
  const LinearTrafficModel model = linearize_platoon(
      cfg.nominal_platoon_config(), cfg.mpc.model_velocity, cfg.platoon.cav_spacing);
  return std::make_shared<const MpcPlanner>(discretize(model, cfg.platoon.dt_control),
                                            cfg.mpc_params(), cfg.platoon.n,
                                            static_cast<int>(cfg.platoon.cav_set.size()));
}

}  // namespace deeplcc
