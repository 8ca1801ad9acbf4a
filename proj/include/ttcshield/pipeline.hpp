#pragma once

// Orchestration of the three phases: warm-up collection under random ego
// actions, predictor fitting, planner-controlled episodes and the parameter
// sweep, plus refitting on experience gathered while planning.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "ttcshield/planner.hpp"
#include "ttcshield/prediction.hpp"
#include "ttcshield/rng.hpp"
#include "ttcshield/safety_cost.hpp"
#include "ttcshield/sim_world.hpp"

namespace ttcshield::pipeline {

inline constexpr double kFullStopSpeed = 0.1;  // m/s

struct TrainConfig {
  prediction::ModelKind kind = prediction::ModelKind::linear;
  double ridge_lambda = 1e-6;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 200;  // 0 leaves the models at their initial parameters
  double learning_rate = 0.05;
  double learning_rate_decay = 0.99;  // per epoch
  double min_improvement = 1e-6;      // stop once the epoch loss on z-scored targets improves by less
  double holdout_fraction = 0.1;
  std::uint64_t seed = 0;             // holdout split and mlp3 initialisation
  std::size_t replay_capacity = 200000;
  std::size_t warmup_steps = 20000;
  bool online_retrain = false;        // refit after every evaluation episode

  void validate() const;  // throws ValidationError
};

struct Buffers {
  prediction::CavMemory cav;
  prediction::HdvMemory hdv;

  explicit Buffers(std::size_t capacity) : cav(capacity), hdv(capacity) {}
};

struct WarmupStats {
  std::size_t steps = 0;
  std::size_t episodes = 0;
};

// Drives the ego with uniform random actions for total_steps simulator steps,
// restarting the scenario after a collision or max_steps, and stores every
// complete-window transition.
Buffers warmup_collect(const sim::ScenarioConfig& config, std::size_t total_steps, Rng& rng,
                       std::size_t capacity, const planner::PlannerConfig& action_map = {},
                       WarmupStats* stats = nullptr);

struct Models {
  prediction::Predictor cav;
  prediction::Predictor hdv;

  planner::LearnedDynamics dynamics() const { return {cav, hdv}; }
};

struct ModelMetrics {
  std::size_t train_size = 0;
  std::size_t holdout_size = 0;
  std::size_t epochs = 0;
  double holdout_mse = 0.0;       // all six target components, target units
  double holdout_rms_x = 0.0;     // one-step position error, m
  double holdout_rms_y = 0.0;
};

struct TrainResult {
  Models models;
  ModelMetrics cav;
  ModelMetrics hdv;
};

// Minimum transitions per buffer for fitting.
std::size_t minimum_samples(prediction::ModelKind kind, std::size_t input_dim);

// Seeded split of dataset rows: (train, holdout).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_rows(
    std::size_t size, double holdout_fraction, std::uint64_t seed);

TrainResult train_models(const prediction::CavMemory& cav, const prediction::HdvMemory& hdv,
                         const TrainConfig& cfg);

// Mean squared error of each model over the training split that train_models
// would use for these buffers.
std::pair<double, double> training_split_mse(const Models& models, const Buffers& buffers,
                                             const TrainConfig& cfg);

enum class Termination { collision, full_stop, max_steps };
std::string_view to_string(Termination t);

enum class EgoPolicy { mpc, keep };
EgoPolicy parse_policy(std::string_view text);

struct EpisodeOptions {
  EgoPolicy policy = EgoPolicy::mpc;
  bool record_trace = true;
  bool collect_transitions = true;
};

struct EpisodeResult {
  bool success = false;
  Termination termination = Termination::max_steps;
  std::optional<sim::CollisionPair> collision_pair;
  double min_ttc_observed = safety::kInfinity;  // ego to HDVs over the true states
  std::int64_t ticks_elapsed = 0;
  std::vector<sim::WorldState> trace;           // snapshots without obstacles
  std::vector<sim::StaticObstacle> obstacles;
  std::vector<prediction::TransitionCAV> new_cav;
  std::vector<prediction::TransitionHDV> new_hdv;
  safety::CostTally planner_tally;
};

// model may be null only for the keep policy.
EpisodeResult run_episode(const sim::ScenarioConfig& config, const planner::DynamicsModel* model,
                          const planner::PlannerConfig& planner_cfg, const safety::TtcParams& ttc,
                          Rng& rng, const EpisodeOptions& options = {});

struct TraceVerdict {
  bool success = false;
  Termination termination = Termination::max_steps;
  std::optional<sim::CollisionPair> collision_pair;
  std::int64_t ticks_elapsed = 0;  // tick of the first collision, else the last tick
  double min_ttc_observed = safety::kInfinity;
  std::vector<sim::StaticObstacle> obstacles;  // the ones collision_pair indexes
};

// Re-adjudicates a recorded trace. Road-edge obstacles come from the geometry in
// `config` over the x range the trace covers; the edge grid is anchored at x = 0,
// so they coincide with the live ones near every vehicle.
TraceVerdict adjudicate_trace(std::span<const sim::WorldState> trace,
                              const sim::ScenarioConfig& config, const safety::TtcParams& ttc);

// Pushes the new transitions (evicting oldest first) and refits.
TrainResult retrain(Buffers& buffers, std::span<const prediction::TransitionCAV> new_cav,
                    std::span<const prediction::TransitionHDV> new_hdv, const TrainConfig& cfg);

struct SweepSpec {
  std::vector<double> speeds{15.0, 20.0, 25.0};
  std::vector<std::size_t> ns{5, 10, 20, 30};
  std::vector<std::size_t> hs{1, 3, 5, 7, 10};
  std::size_t runs_per_cell = 20;
  std::uint64_t base_seed = 0;

  void validate() const;  // throws ValidationError
};

struct SweepCell {
  double speed = 0.0;
  std::size_t n = 0;
  std::size_t h = 0;
  std::size_t runs = 0;
  std::size_t successes = 0;

  double success_rate() const {
    return runs == 0 ? 0.0 : static_cast<double>(successes) / static_cast<double>(runs);
  }
};

// Depends only on the cell coordinates and run index, never on enumeration order.
std::uint64_t episode_seed(std::uint64_t base_seed, double speed, std::size_t n, std::size_t h,
                           std::size_t run);

struct SweepOptions {
  std::size_t jobs = 1;
  EgoPolicy policy = EgoPolicy::mpc;
  std::optional<std::filesystem::path> trace_dir;  // traces/<speed>_<n>_<h>_<run>.csv
};

// Cells sorted by (speed, n, h).
std::vector<SweepCell> evaluate_sweep(const SweepSpec& spec, const sim::ScenarioConfig& config,
                                      const planner::DynamicsModel* model,
                                      const planner::PlannerConfig& planner_cfg,
                                      const safety::TtcParams& ttc,
                                      const SweepOptions& options = {});

}  // namespace ttcshield::pipeline
