#pragma once

// The shared JSON run configuration: `scenario`, `ttc`, `planner` and
// `training` sections, each optional, each strict about unknown keys.

#include <filesystem>
#include <string>
#include <string_view>

#include "ttcshield/pipeline.hpp"
#include "ttcshield/planner.hpp"
#include "ttcshield/safety_cost.hpp"
#include "ttcshield/sim_world.hpp"

namespace ttcshield::config {

struct RunConfig {
  sim::ScenarioConfig scenario;
  safety::TtcParams ttc;
  planner::PlannerConfig planner;
  pipeline::TrainConfig training;

  void validate() const;  // throws ValidationError
};

// Missing keys keep their defaults. Unknown keys, wrong types and values that
// break an invariant throw ValidationError naming `origin` and the key path.
RunConfig parse_run_config(std::string_view json_text, std::string_view origin = "<config>");
// Unreadable file: ValidationError naming the path.
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& cfg);

// Keys: speeds, ns, hs, runs_per_cell, base_seed.
pipeline::SweepSpec parse_sweep_spec(std::string_view json_text, std::string_view origin = "<spec>");
pipeline::SweepSpec load_sweep_spec(const std::filesystem::path& path);

}  // namespace ttcshield::config
