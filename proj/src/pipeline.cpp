#include "ttcshield/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <tuple>

#include "ttcshield/error.hpp"
#include "ttcshield/trace_io.hpp"

namespace ttcshield::pipeline {
namespace {

using prediction::HistoryWindow;
using prediction::StateRow;

// True-history windows of every vehicle, padded at episode start by repeating
// the first observed row.
struct Windows {
  HistoryWindow ego;
  std::vector<HistoryWindow> hdvs;  // world order, ego skipped
  std::size_t observed = 1;         // real rows seen so far

  explicit Windows(const sim::WorldState& w) {
    for (const sim::VehicleEntry& v : w.vehicles) {
      HistoryWindow win;
      win.rows.assign(prediction::kHistoryLength, prediction::to_row(v.state));
      if (v.role == sim::Role::ego) {
        win.controls.assign(prediction::kHistoryLength, v.last_command);
        ego = std::move(win);
      } else {
        hdvs.push_back(std::move(win));
      }
    }
  }

  bool complete() const { return observed >= prediction::kHistoryLength; }

  void advance(const sim::WorldState& next) {
    std::size_t k = 0;
    for (const sim::VehicleEntry& v : next.vehicles) {
      const StateRow row = prediction::to_row(v.state);
      if (v.role == sim::Role::ego) {
        ego.slide(row, v.last_command);
      } else {
        hdvs[k++].slide(row);
      }
    }
    ++observed;
  }
};

double min_hdv_ttc(const sim::WorldState& w, const safety::TtcParams& ttc) {
  const sim::VehicleState& ego = w.ego().state;
  double best = safety::kInfinity;
  for (const sim::VehicleEntry& v : w.vehicles) {
    if (v.role == sim::Role::ego) continue;
    best = std::min(best, safety::ttc_pair(ego, v.state, ttc));
  }
  return best;
}

struct LoopSettings {
  std::int64_t step_limit = 0;
  bool stop_on_full_stop = true;
  bool record_trace = true;
  bool collect_transitions = true;
};

// A policy maps (windows, world, rng) to the ego command for this tick.
template <class Policy>
EpisodeResult run_loop(const sim::ScenarioConfig& config, const safety::TtcParams& ttc, Rng& rng,
                       const LoopSettings& settings, Policy&& policy) {
  sim::WorldState world = sim::init_scenario(config, rng);
  EpisodeResult result;
  result.obstacles = world.obstacles;
  Windows windows(world);
  result.min_ttc_observed = min_hdv_ttc(world, ttc);
  auto snapshot = [&](const sim::WorldState& w) {
    if (!settings.record_trace) return;
    sim::WorldState s = w;
    s.obstacles.clear();
    result.trace.push_back(std::move(s));
  };
  snapshot(world);

  if ((result.collision_pair = sim::detect_collision(world))) {
    result.termination = Termination::collision;
    return result;
  }
  result.termination = Termination::max_steps;
  for (std::int64_t step = 0; step < settings.step_limit; ++step) {
    const sim::ControlCommand cmd = policy(windows, world, rng, result.planner_tally);
    sim::WorldState next = sim::step_world(world, config, cmd);

    if (settings.collect_transitions && windows.complete()) {
      std::size_t k = 0;
      for (const sim::VehicleEntry& v : next.vehicles) {
        const StateRow row = prediction::to_row(v.state);
        if (v.role == sim::Role::ego) {
          result.new_cav.push_back({windows.ego, cmd, row});
        } else {
          result.new_hdv.push_back({windows.hdvs[k++], row});
        }
      }
    }
    windows.advance(next);
    world = std::move(next);
    snapshot(world);
    result.min_ttc_observed = std::min(result.min_ttc_observed, min_hdv_ttc(world, ttc));

    if ((result.collision_pair = sim::detect_collision(world))) {
      result.termination = Termination::collision;
      break;
    }
    if (settings.stop_on_full_stop && world.ego().state.speed() < kFullStopSpeed) {
      result.termination = Termination::full_stop;
      break;
    }
  }
  result.ticks_elapsed = world.tick;
  result.success = result.termination != Termination::collision;
  return result;
}

}  // namespace

TraceVerdict adjudicate_trace(std::span<const sim::WorldState> trace,
                              const sim::ScenarioConfig& config, const safety::TtcParams& ttc) {
  if (trace.empty()) throw ValidationError("trace has no ticks");
  double x_min = safety::kInfinity;
  double x_max = -safety::kInfinity;
  for (const sim::WorldState& w : trace) {
    for (const sim::VehicleEntry& v : w.vehicles) {
      x_min = std::min(x_min, v.state.position.x);
      x_max = std::max(x_max, v.state.position.x);
    }
  }
  TraceVerdict verdict;
  if (config.road_edges) {
    verdict.obstacles = sim::road_edge_obstacles(config, x_min - 20.0, x_max + 20.0);
  }
  for (const sim::WorldState& w : trace) {
    sim::WorldState world = w;
    world.obstacles = verdict.obstacles;
    verdict.min_ttc_observed = std::min(verdict.min_ttc_observed, min_hdv_ttc(world, ttc));
    verdict.ticks_elapsed = world.tick;
    if ((verdict.collision_pair = sim::detect_collision(world))) {
      verdict.termination = Termination::collision;
      return verdict;
    }
  }
  const sim::WorldState& last = trace.back();
  verdict.termination = last.tick > trace.front().tick && last.ego().state.speed() < kFullStopSpeed
                            ? Termination::full_stop
                            : Termination::max_steps;
  verdict.success = true;
  return verdict;
}

namespace {

ModelMetrics evaluate(const prediction::Predictor& model, const prediction::Dataset& holdout,
                      std::size_t train_size, std::size_t epochs) {
  ModelMetrics m;
  m.train_size = train_size;
  m.holdout_size = holdout.size();
  m.epochs = epochs;
  double sx = 0.0;
  double sy = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < holdout.size(); ++i) {
    const auto p = prediction::predict(model, holdout.feature_row(i)).values();
    const auto t = holdout.target_values(i);
    for (std::size_t c = 0; c < prediction::kStateDim; ++c) {
      const double e = p[c] - t[c];
      total += e * e;
    }
    sx += (p[0] - t[0]) * (p[0] - t[0]);
    sy += (p[1] - t[1]) * (p[1] - t[1]);
  }
  const double n = static_cast<double>(holdout.size());
  m.holdout_mse = total / n;
  m.holdout_rms_x = std::sqrt(sx / n);
  m.holdout_rms_y = std::sqrt(sy / n);
  return m;
}

std::pair<prediction::Predictor, ModelMetrics> fit_one(const prediction::Dataset& data,
                                                       std::size_t input_dim, std::uint64_t tag,
                                                       const TrainConfig& cfg, const char* name) {
  const std::size_t need = minimum_samples(cfg.kind, input_dim);
  if (data.size() < need) {
    throw ValidationError(std::string("insufficient ") + name + " transitions: need " +
                          std::to_string(need) + ", have " + std::to_string(data.size()));
  }
  const auto [train_rows, holdout_rows] =
      split_rows(data.size(), cfg.holdout_fraction, mix_seed({cfg.seed, tag}));
  const prediction::Dataset train = data.subset(train_rows);
  const prediction::Dataset holdout = data.subset(holdout_rows);

  if (cfg.kind == prediction::ModelKind::linear) {
    if (cfg.max_epochs == 0) {
      prediction::Predictor model = prediction::make_linear(input_dim);
      prediction::fit_normalization(model, train);
      return {model, evaluate(model, holdout, train.size(), 0)};
    }
    prediction::Predictor model = prediction::fit_linear_closed_form(train, cfg.ridge_lambda);
    return {model, evaluate(model, holdout, train.size(), 1)};
  }

  Rng rng(mix_seed({cfg.seed, tag, 0x6d6c7033ULL}));
  prediction::Predictor model = prediction::make_mlp3(input_dim, rng);
  prediction::fit_normalization(model, train);
  if (cfg.max_epochs == 0) return {model, evaluate(model, holdout, train.size(), 0)};

  // Descend on z-scored targets so one learning rate suits every output; the
  // output normalization is folded back in afterwards.
  const std::vector<double> out_mean = model.output_mean;
  const std::vector<double> out_scale = model.output_scale;
  prediction::Dataset scaled = train;
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    for (std::size_t c = 0; c < prediction::kStateDim; ++c) {
      double& t = scaled.targets[i * prediction::kStateDim + c];
      t = (t - out_mean[c]) / out_scale[c];
    }
  }
  model.output_mean.assign(prediction::kStateDim, 0.0);
  model.output_scale.assign(prediction::kStateDim, 1.0);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double previous = safety::kInfinity;
  double lr = cfg.learning_rate;
  std::size_t epochs = 0;
  while (epochs < cfg.max_epochs) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      const std::span<const std::size_t> rows(order.data() + start, len);
      auto [next, loss] = prediction::train_step(model, scaled, rows, lr);
      model = std::move(next);
      epoch_loss += loss * static_cast<double>(len);
    }
    epoch_loss /= static_cast<double>(order.size());
    ++epochs;
    lr *= cfg.learning_rate_decay;
    if (previous - epoch_loss < cfg.min_improvement) break;
    previous = epoch_loss;
  }
  model.output_mean = out_mean;
  model.output_scale = out_scale;
  return {model, evaluate(model, holdout, train.size(), epochs)};
}

}  // namespace

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ValidationError(std::string("training: ") + what);
  };
  require(std::isfinite(ridge_lambda) && ridge_lambda >= 0.0, "ridge_lambda must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(std::isfinite(learning_rate) && learning_rate > 0.0, "learning_rate must be > 0");
  require(learning_rate_decay > 0.0 && learning_rate_decay <= 1.0,
          "learning_rate_decay must lie in (0, 1]");
  require(std::isfinite(min_improvement) && min_improvement >= 0.0,
          "min_improvement must be >= 0");
  require(holdout_fraction > 0.0 && holdout_fraction < 1.0, "holdout_fraction must lie in (0, 1)");
  require(replay_capacity >= 1, "replay_capacity must be >= 1");
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::collision: return "collision";
    case Termination::full_stop: return "full_stop";
    case Termination::max_steps: return "max_steps";
  }
  return "unknown";
}

EgoPolicy parse_policy(std::string_view text) {
  if (text == "mpc") return EgoPolicy::mpc;
  if (text == "keep") return EgoPolicy::keep;
  throw ValidationError("unknown policy '" + std::string(text) + "' (expected mpc or keep)");
}

Buffers warmup_collect(const sim::ScenarioConfig& config, std::size_t total_steps, Rng& rng,
                       std::size_t capacity, const planner::PlannerConfig& action_map,
                       WarmupStats* stats) {
  config.validate();
  Buffers buffers(capacity);
  std::uniform_int_distribution<std::size_t> pick(0, planner::kActionCount - 1);
  auto random_policy = [&](const Windows& w, const sim::WorldState&, Rng& r, safety::CostTally&) {
    const planner::Action a = planner::action_from_index(pick(r));
    return planner::action_to_command(a, w.ego.controls.back().steering, action_map);
  };

  LoopSettings settings;
  settings.stop_on_full_stop = false;
  settings.record_trace = false;
  std::size_t consumed = 0;
  std::size_t episodes = 0;
  while (consumed < total_steps) {
    settings.step_limit =
        std::min<std::int64_t>(config.max_steps, static_cast<std::int64_t>(total_steps - consumed));
    EpisodeResult ep = run_loop(config, safety::TtcParams{}, rng, settings, random_policy);
    ++episodes;
    consumed += static_cast<std::size_t>(ep.ticks_elapsed);
    for (auto& t : ep.new_cav) buffers.cav.push(std::move(t));
    for (auto& t : ep.new_hdv) buffers.hdv.push(std::move(t));
    if (ep.ticks_elapsed == 0) break;  // collision at spawn: no progress possible
  }
  if (stats != nullptr) *stats = {consumed, episodes};
  return buffers;
}

std::size_t minimum_samples(prediction::ModelKind kind, std::size_t input_dim) {
  return kind == prediction::ModelKind::linear ? 2 * (input_dim + 1) : 4 * input_dim;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_rows(
    std::size_t size, double holdout_fraction, std::uint64_t seed) {
  std::vector<std::size_t> perm(size);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::size_t k = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(size)));
  k = std::clamp<std::size_t>(k, size > 1 ? 1 : 0, size > 1 ? size - 1 : 0);
  std::vector<std::size_t> holdout(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(k), perm.end());
  std::sort(holdout.begin(), holdout.end());
  std::sort(train.begin(), train.end());
  return {train, holdout};
}

TrainResult train_models(const prediction::CavMemory& cav, const prediction::HdvMemory& hdv,
                         const TrainConfig& cfg) {
  cfg.validate();
  TrainResult out;
  auto [cav_model, cav_metrics] =
      fit_one(prediction::make_dataset(cav), prediction::kCavFeatures, 1, cfg, "ego");
  auto [hdv_model, hdv_metrics] =
      fit_one(prediction::make_dataset(hdv), prediction::kHdvFeatures, 2, cfg, "HDV");
  out.models = {std::move(cav_model), std::move(hdv_model)};
  out.cav = cav_metrics;
  out.hdv = hdv_metrics;
  return out;
}

std::pair<double, double> training_split_mse(const Models& models, const Buffers& buffers,
                                             const TrainConfig& cfg) {
  auto one = [&](const prediction::Dataset& data, const prediction::Predictor& model,
                 std::uint64_t tag) {
    const auto rows = split_rows(data.size(), cfg.holdout_fraction, mix_seed({cfg.seed, tag})).first;
    return prediction::dataset_mse(model, data.subset(rows));
  };
  return {one(prediction::make_dataset(buffers.cav), models.cav, 1),
          one(prediction::make_dataset(buffers.hdv), models.hdv, 2)};
}

EpisodeResult run_episode(const sim::ScenarioConfig& config, const planner::DynamicsModel* model,
                          const planner::PlannerConfig& planner_cfg, const safety::TtcParams& ttc,
                          Rng& rng, const EpisodeOptions& options) {
  config.validate();
  ttc.validate();
  planner_cfg.validate();
  LoopSettings settings;
  settings.step_limit = config.max_steps;
  settings.record_trace = options.record_trace;
  settings.collect_transitions = options.collect_transitions;

  if (options.policy == EgoPolicy::keep) {
    auto keep = [&](const Windows& w, const sim::WorldState&, Rng&, safety::CostTally&) {
      return planner::action_to_command(planner::kKeep, w.ego.controls.back().steering,
                                        planner_cfg);
    };
    return run_loop(config, ttc, rng, settings, keep);
  }
  if (model == nullptr) throw ValidationError("run_episode: the mpc policy needs trained models");
  safety::ObstacleField field;
  bool field_ready = false;
  auto mpc = [&](const Windows& w, const sim::WorldState& world, Rng& r, safety::CostTally& tally) {
    if (!field_ready) {
      field = safety::ObstacleField(world.obstacles);
      field_ready = true;
    }
    const planner::PlanResult plan =
        planner::plan_step(w.ego, w.hdvs, field, *model, planner_cfg, ttc, r);
    tally += plan.tally;
    return plan.chosen_command;
  };
  return run_loop(config, ttc, rng, settings, mpc);
}

TrainResult retrain(Buffers& buffers, std::span<const prediction::TransitionCAV> new_cav,
                    std::span<const prediction::TransitionHDV> new_hdv, const TrainConfig& cfg) {
  for (const auto& t : new_cav) buffers.cav.push(t);
  for (const auto& t : new_hdv) buffers.hdv.push(t);
  return train_models(buffers.cav, buffers.hdv, cfg);
}

void SweepSpec::validate() const {
  if (speeds.empty() || ns.empty() || hs.empty()) {
    throw ValidationError("sweep: speeds, ns and hs must be non-empty");
  }
  if (runs_per_cell < 1) throw ValidationError("sweep: runs_per_cell must be >= 1");
  for (double s : speeds) {
    if (!std::isfinite(s) || s < 0.0) throw ValidationError("sweep: speeds must be >= 0");
  }
  for (std::size_t n : ns) {
    if (n < 1) throw ValidationError("sweep: every n must be >= 1");
  }
  for (std::size_t h : hs) {
    if (h < 1) throw ValidationError("sweep: every h must be >= 1");
  }
}

std::uint64_t episode_seed(std::uint64_t base_seed, double speed, std::size_t n, std::size_t h,
                           std::size_t run) {
  return mix_seed({base_seed, double_bits(speed), n, h, run});
}

std::vector<SweepCell> evaluate_sweep(const SweepSpec& spec, const sim::ScenarioConfig& config,
                                      const planner::DynamicsModel* model,
                                      const planner::PlannerConfig& planner_cfg,
                                      const safety::TtcParams& ttc, const SweepOptions& options) {
  spec.validate();
  std::vector<SweepCell> cells;
  for (double speed : spec.speeds) {
    for (std::size_t n : spec.ns) {
      for (std::size_t h : spec.hs) cells.push_back({speed, n, h, spec.runs_per_cell, 0});
    }
  }
  std::sort(cells.begin(), cells.end(), [](const SweepCell& a, const SweepCell& b) {
    return std::tie(a.speed, a.n, a.h) < std::tie(b.speed, b.n, b.h);
  });
  cells.erase(std::unique(cells.begin(), cells.end(),
                          [](const SweepCell& a, const SweepCell& b) {
                            return a.speed == b.speed && a.n == b.n && a.h == b.h;
                          }),
              cells.end());
  if (options.trace_dir) std::filesystem::create_directories(*options.trace_dir);

  const std::size_t runs = spec.runs_per_cell;
  const std::size_t tasks = cells.size() * runs;
  std::vector<unsigned char> outcome(tasks, 0);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&]() {
    for (std::size_t t = next++; t < tasks; t = next++) {
      const SweepCell& cell = cells[t / runs];
      const std::size_t run = t % runs;
      try {
        sim::ScenarioConfig cfg = config;
        cfg.mean_initial_speed = cell.speed;
        cfg.seed = episode_seed(spec.base_seed, cell.speed, cell.n, cell.h, run);
        planner::PlannerConfig pc = planner_cfg;
        pc.num_trajectories = cell.n;
        pc.horizon = cell.h;
        EpisodeOptions eo;
        eo.policy = options.policy;
        eo.record_trace = options.trace_dir.has_value();
        eo.collect_transitions = false;
        Rng rng(cfg.seed);
        const EpisodeResult ep = run_episode(cfg, model, pc, ttc, rng, eo);
        outcome[t] = ep.success ? 1 : 0;
        if (options.trace_dir) {
          char name[96];
          std::snprintf(name, sizeof name, "%g_%zu_%zu_%zu.csv", cell.speed, cell.n, cell.h, run);
          io::write_trace_csv(*options.trace_dir / name, ep.trace);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = tasks;
      }
    }
  };

  const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, std::max<std::size_t>(tasks, 1));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t t = 0; t < tasks; ++t) cells[t / runs].successes += outcome[t];
  return cells;
}

}  // namespace ttcshield::pipeline
