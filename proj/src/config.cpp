#include "ttcshield/config.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "ttcshield/error.hpp"

namespace ttcshield::config {
namespace {

using nlohmann::json;

// Reads the members of one JSON object, remembering which keys were consumed so
// that leftovers can be reported.
class Section {
 public:
  Section(const json& node, std::string path, std::string_view origin)
      : node_(node), path_(std::move(path)), origin_(origin) {
    if (!node_.is_object()) fail(path_.empty() ? "top level" : path_, "expected an object");
  }

  bool has(const char* key) const { return node_.contains(key); }

  void read(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) fail(key, "expected a number");
      out = v->get<double>();
    }
  }

  void read(const char* key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) fail(key, "expected true or false");
      out = v->get<bool>();
    }
  }

  void read(const char* key, std::int64_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) fail(key, "expected an integer");
      out = v->get<std::int64_t>();
    }
  }

  void read(const char* key, std::uint64_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned()) fail(key, "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void read_size(const char* key, std::size_t& out) {
    std::uint64_t v = out;
    read(key, v);
    out = static_cast<std::size_t>(v);
  }

  template <class Parse>
  void read_enum(const char* key, Parse parse) {
    if (const json* v = take(key)) {
      if (!v->is_string()) fail(key, "expected a string");
      try {
        parse(v->get<std::string>());
      } catch (const ValidationError& e) {
        fail(key, e.what());
      }
    }
  }

  template <class T, class Convert>
  void read_list(const char* key, std::vector<T>& out, Convert convert) {
    if (const json* v = take(key)) {
      if (!v->is_array()) fail(key, "expected an array");
      out.clear();
      for (const json& item : *v) {
        try {
          out.push_back(convert(item));
        } catch (const ValidationError& e) {
          fail(key, e.what());
        }
      }
    }
  }

  Section child(const char* key) {
    static const json empty = json::object();
    const json* v = take(key);
    return Section(v != nullptr ? *v : empty, join(key), origin_);
  }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (used_.count(it.key()) == 0) fail(it.key(), "unknown key");
    }
  }

  [[noreturn]] void fail(std::string_view key, std::string_view what) const {
    throw ValidationError(std::string(origin_) + ": " + join(key) + ": " + std::string(what));
  }

 private:
  const json* take(const char* key) {
    used_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  std::string join(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  const json& node_;
  std::string path_;
  std::string_view origin_;
  std::set<std::string> used_;
};

json parse_document(std::string_view text, std::string_view origin) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string(origin) + ": malformed JSON: " + e.what());
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void read_scenario(Section s, sim::ScenarioConfig& c) {
  s.read_enum("scenario_kind", [&](const std::string& v) { c.scenario_kind = sim::parse_scenario_kind(v); });
  s.read("mean_initial_speed", c.mean_initial_speed);
  s.read("speed_noise_sigma", c.speed_noise_sigma);
  s.read("lane_width", c.lane_width);
  {
    Section r = s.child("vehicle_radii");
    r.read("ego", c.vehicle_radii.ego);
    r.read("errant_hdv", c.vehicle_radii.errant_hdv);
    r.read("lead_hdv", c.vehicle_radii.lead_hdv);
    r.read("rear_hdv", c.vehicle_radii.rear_hdv);
    r.finish();
  }
  {
    Section m = s.child("hdv_maneuver");
    m.read("trigger_gap", c.hdv_maneuver.trigger_gap);
    m.read("lateral_duration", c.hdv_maneuver.lateral_duration);
    m.read("peak_steering", c.hdv_maneuver.peak_steering);
    m.read("target_lane_offset", c.hdv_maneuver.target_lane_offset);
    m.read("trigger_jitter", c.hdv_maneuver.trigger_jitter);
    m.read("overtake_throttle", c.hdv_maneuver.overtake_throttle);
    m.finish();
  }
  s.read("static_obstacle_spacing", c.static_obstacle_spacing);
  s.read("max_steps", c.max_steps);
  s.read("dt", c.dt);
  s.read("seed", c.seed);
  s.read("rear_gap", c.rear_gap);
  s.read("errant_offset", c.errant_offset);
  s.read("lead_gap", c.lead_gap);
  s.read("shoulder_width", c.shoulder_width);
  s.read("road_edges", c.road_edges);
  s.read_list("hdv_roles", c.hdv_roles, [](const json& item) {
    if (!item.is_string()) throw ValidationError("expected role names");
    return sim::parse_role(item.get<std::string>());
  });
  {
    Section p = s.child("plant");
    p.read("max_gas_accel", c.plant.max_gas_accel);
    p.read("max_brake_accel", c.plant.max_brake_accel);
    p.read("max_wheel_angle", c.plant.max_wheel_angle);
    p.read("wheelbase", c.plant.wheelbase);
    p.finish();
  }
  s.finish();
}

void read_ttc(Section s, safety::TtcParams& p) {
  s.read("d_s", p.d_s);
  s.read("T_safe", p.T_safe);
  s.read("lambda", p.lambda);
  s.read("ttc_floor", p.ttc_floor);
  s.read("overlap_penalty", p.overlap_penalty);
  s.finish();
}

void read_planner(Section s, planner::PlannerConfig& p) {
  s.read_size("num_trajectories", p.num_trajectories);
  s.read_size("horizon", p.horizon);
  s.read("steer_increment", p.steer_increment);
  s.read("gas_level", p.gas_level);
  s.read("brake_level", p.brake_level);
  s.read("include_fallbacks", p.include_fallbacks);
  s.finish();
}

void read_training(Section s, pipeline::TrainConfig& t) {
  s.read_enum("kind", [&](const std::string& v) { t.kind = prediction::parse_model_kind(v); });
  s.read("ridge_lambda", t.ridge_lambda);
  s.read_size("batch_size", t.batch_size);
  s.read_size("max_epochs", t.max_epochs);
  s.read("learning_rate", t.learning_rate);
  s.read("learning_rate_decay", t.learning_rate_decay);
  s.read("min_improvement", t.min_improvement);
  s.read("holdout_fraction", t.holdout_fraction);
  s.read("seed", t.seed);
  s.read_size("replay_capacity", t.replay_capacity);
  s.read_size("warmup_steps", t.warmup_steps);
  s.read("online_retrain", t.online_retrain);
  s.finish();
}

}  // namespace

void RunConfig::validate() const {
  scenario.validate();
  ttc.validate();
  planner.validate();
  training.validate();
}

RunConfig parse_run_config(std::string_view json_text, std::string_view origin) {
  const json doc = parse_document(json_text, origin);
  RunConfig cfg;
  Section top(doc, "", origin);
  read_scenario(top.child("scenario"), cfg.scenario);
  read_ttc(top.child("ttc"), cfg.ttc);
  read_planner(top.child("planner"), cfg.planner);
  read_training(top.child("training"), cfg.training);
  top.finish();
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(origin) + ": " + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_text(path), path.string());
}

std::string dump_run_config(const RunConfig& cfg) {
  const sim::ScenarioConfig& s = cfg.scenario;
  json roles = json::array();
  for (sim::Role r : s.hdv_roles) roles.push_back(std::string(sim::to_string(r)));
  json doc = {
      {"scenario",
       {{"scenario_kind", std::string(sim::to_string(s.scenario_kind))},
        {"mean_initial_speed", s.mean_initial_speed},
        {"speed_noise_sigma", s.speed_noise_sigma},
        {"lane_width", s.lane_width},
        {"vehicle_radii",
         {{"ego", s.vehicle_radii.ego},
          {"errant_hdv", s.vehicle_radii.errant_hdv},
          {"lead_hdv", s.vehicle_radii.lead_hdv},
          {"rear_hdv", s.vehicle_radii.rear_hdv}}},
        {"hdv_maneuver",
         {{"trigger_gap", s.hdv_maneuver.trigger_gap},
          {"lateral_duration", s.hdv_maneuver.lateral_duration},
          {"peak_steering", s.hdv_maneuver.peak_steering},
          {"target_lane_offset", s.hdv_maneuver.target_lane_offset},
          {"trigger_jitter", s.hdv_maneuver.trigger_jitter},
          {"overtake_throttle", s.hdv_maneuver.overtake_throttle}}},
        {"static_obstacle_spacing", s.static_obstacle_spacing},
        {"max_steps", s.max_steps},
        {"dt", s.dt},
        {"seed", s.seed},
        {"rear_gap", s.rear_gap},
        {"errant_offset", s.errant_offset},
        {"lead_gap", s.lead_gap},
        {"shoulder_width", s.shoulder_width},
        {"road_edges", s.road_edges},
        {"hdv_roles", roles},
        {"plant",
         {{"max_gas_accel", s.plant.max_gas_accel},
          {"max_brake_accel", s.plant.max_brake_accel},
          {"max_wheel_angle", s.plant.max_wheel_angle},
          {"wheelbase", s.plant.wheelbase}}}}},
      {"ttc",
       {{"d_s", cfg.ttc.d_s},
        {"T_safe", cfg.ttc.T_safe},
        {"lambda", cfg.ttc.lambda},
        {"ttc_floor", cfg.ttc.ttc_floor},
        {"overlap_penalty", cfg.ttc.overlap_penalty}}},
      {"planner",
       {{"num_trajectories", cfg.planner.num_trajectories},
        {"horizon", cfg.planner.horizon},
        {"steer_increment", cfg.planner.steer_increment},
        {"gas_level", cfg.planner.gas_level},
        {"brake_level", cfg.planner.brake_level},
        {"include_fallbacks", cfg.planner.include_fallbacks}}},
      {"training",
       {{"kind", prediction::to_string(cfg.training.kind)},
        {"ridge_lambda", cfg.training.ridge_lambda},
        {"batch_size", cfg.training.batch_size},
        {"max_epochs", cfg.training.max_epochs},
        {"learning_rate", cfg.training.learning_rate},
        {"learning_rate_decay", cfg.training.learning_rate_decay},
        {"min_improvement", cfg.training.min_improvement},
        {"holdout_fraction", cfg.training.holdout_fraction},
        {"seed", cfg.training.seed},
        {"replay_capacity", cfg.training.replay_capacity},
        {"warmup_steps", cfg.training.warmup_steps},
        {"online_retrain", cfg.training.online_retrain}}}};
  return doc.dump(2) + "\n";
}

pipeline::SweepSpec parse_sweep_spec(std::string_view json_text, std::string_view origin) {
  const json doc = parse_document(json_text, origin);
  pipeline::SweepSpec spec;
  Section s(doc, "", origin);
  s.read_list("speeds", spec.speeds, [](const json& v) {
    if (!v.is_number()) throw ValidationError("expected numbers");
    return v.get<double>();
  });
  auto count = [](const json& v) {
    if (!v.is_number_unsigned()) throw ValidationError("expected non-negative integers");
    return static_cast<std::size_t>(v.get<std::uint64_t>());
  };
  s.read_list("ns", spec.ns, count);
  s.read_list("hs", spec.hs, count);
  s.read_size("runs_per_cell", spec.runs_per_cell);
  s.read("base_seed", spec.base_seed);
  s.finish();
  try {
    spec.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(origin) + ": " + e.what());
  }
  return spec;
}

pipeline::SweepSpec load_sweep_spec(const std::filesystem::path& path) {
  return parse_sweep_spec(read_text(path), path.string());
}

}  // namespace ttcshield::config
