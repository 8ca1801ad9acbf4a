#include "ttcshield/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <ostream>
#include <string>
#include <vector>

#include "ttcshield/config.hpp"
#include "ttcshield/error.hpp"
#include "ttcshield/pipeline.hpp"
#include "ttcshield/serialization.hpp"
#include "ttcshield/trace_io.hpp"

namespace ttcshield::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string format(const char* fmt, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, value);
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// flag > TTCSHIELD_SEED > fallback
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
  if (flag) return *flag;
  if (const char* env = std::getenv(kSeedEnvVar); env != nullptr && *env != '\0') {
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (errno != 0 || *end != '\0' || env[0] == '-') {
      throw ValidationError(std::string(kSeedEnvVar) + " is not an unsigned integer: " + env);
    }
    return v;
  }
  return fallback;
}

config::RunConfig load_config(const std::string& path) {
  return path.empty() ? config::RunConfig{} : config::load_run_config(path);
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  }
}

// Written before the work starts and rewritten with finished_at once it ends.
class Manifest {
 public:
  Manifest(fs::path path, std::string subcommand, const std::string& config_path,
           std::uint64_t seed, const fs::path& output) : path_(std::move(path)) {
    doc_["tool"] = "ttcshield";
    doc_["version"] = kToolVersion;
    doc_["subcommand"] = std::move(subcommand);
    doc_["config_path"] = config_path;
    doc_["seed"] = seed;
    doc_["output"] = output.string();
    doc_["started_at"] = utc_now();
    flush();
  }

  void finish() {
    doc_["finished_at"] = utc_now();
    flush();
  }

 private:
  void flush() const { io::write_file_atomic(path_, doc_.dump(2) + "\n"); }

  fs::path path_;
  ordered_json doc_;
};

// Obstacles are named by position; their list index depends on the span generated.
std::string entity_name(const sim::EntityRef& e, std::span<const sim::StaticObstacle> obstacles) {
  if (e.kind == sim::EntityRef::Kind::obstacle) {
    const sim::Vec2 p = obstacles[e.index].position;
    char buf[80];
    std::snprintf(buf, sizeof buf, "obstacle(%g,%g)", p.x, p.y);
    return buf;
  }
  return std::string(sim::to_string(e.role));
}

std::string pair_name(const sim::CollisionPair& p, std::span<const sim::StaticObstacle> obstacles) {
  return entity_name(p.first, obstacles) + "-" + entity_name(p.second, obstacles);
}

std::string print_ttc(double t) { return std::isfinite(t) ? format("%.6g", t) : "inf"; }

// ---- collect ----------------------------------------------------------------

struct CollectArgs {
  std::string config;
  std::optional<std::size_t> steps;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_collect(const CollectArgs& a, std::ostream& out) {
  const config::RunConfig cfg = load_config(a.config);
  const std::uint64_t seed = resolve_seed(a.seed, cfg.training.seed);
  const std::size_t steps = a.steps.value_or(cfg.training.warmup_steps);
  const fs::path dir(a.out);
  ensure_directory(dir);
  Manifest manifest(dir / "manifest.json", "collect", a.config, seed, dir);

  Rng rng(mix_seed({seed, 0x636f6c6c656374ULL}));
  pipeline::WarmupStats stats;
  const pipeline::Buffers buffers = pipeline::warmup_collect(
      cfg.scenario, steps, rng, cfg.training.replay_capacity, cfg.planner, &stats);
  io::save_buffers(dir, buffers);
  manifest.finish();

  out << "steps: " << stats.steps << "\n"
      << "episodes: " << stats.episodes << "\n"
      << "cav transitions: " << buffers.cav.size() << "\n"
      << "hdv transitions: " << buffers.hdv.size() << "\n";
  return kExitOk;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string buffers;
  std::string kind;
  std::string out;
  std::optional<std::uint64_t> seed;
};

ordered_json metrics_json(const pipeline::ModelMetrics& m) {
  ordered_json j;
  j["train_size"] = m.train_size;
  j["holdout_size"] = m.holdout_size;
  j["epochs"] = m.epochs;
  j["holdout_mse"] = m.holdout_mse;
  j["holdout_position_mse"] =
      0.5 * (m.holdout_rms_x * m.holdout_rms_x + m.holdout_rms_y * m.holdout_rms_y);
  j["holdout_rms_x"] = m.holdout_rms_x;
  j["holdout_rms_y"] = m.holdout_rms_y;
  return j;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  config::RunConfig cfg = load_config(a.config);
  if (!a.kind.empty()) cfg.training.kind = prediction::parse_model_kind(a.kind);
  cfg.training.seed = resolve_seed(a.seed, cfg.training.seed);
  cfg.training.validate();

  const pipeline::Buffers buffers = io::load_buffers(a.buffers, cfg.training.replay_capacity);
  const fs::path dir(a.out);
  ensure_directory(dir);
  Manifest manifest(dir / "manifest.json", "train", a.config, cfg.training.seed, dir);

  const pipeline::TrainResult result =
      pipeline::train_models(buffers.cav, buffers.hdv, cfg.training);
  io::save_models(dir, result.models);
  ordered_json metrics;
  metrics["kind"] = prediction::to_string(cfg.training.kind);
  metrics["cav"] = metrics_json(result.cav);
  metrics["hdv"] = metrics_json(result.hdv);
  io::write_file_atomic(dir / "metrics.json", metrics.dump(2) + "\n");
  manifest.finish();

  for (const auto& [name, m] : {std::pair{"cav", &result.cav}, std::pair{"hdv", &result.hdv}}) {
    out << name << ": train " << m->train_size << " holdout " << m->holdout_size
        << " mse " << format("%.6g", m->holdout_mse) << " rms_x "
        << format("%.6g", m->holdout_rms_x) << " rms_y " << format("%.6g", m->holdout_rms_y)
        << "\n";
  }
  return kExitOk;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string config;
  std::string models;
  std::string buffers;
  std::string traces;
  std::string policy = "mpc";
  std::optional<std::size_t> n;
  std::optional<std::size_t> horizon;
  std::optional<double> speed;
  std::size_t runs = 20;
  std::optional<std::uint64_t> seed;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  config::RunConfig cfg = load_config(a.config);
  if (a.n) cfg.planner.num_trajectories = *a.n;
  if (a.horizon) cfg.planner.horizon = *a.horizon;
  if (a.speed) cfg.scenario.mean_initial_speed = *a.speed;
  cfg.validate();
  const pipeline::EgoPolicy policy = pipeline::parse_policy(a.policy);
  const std::uint64_t seed = resolve_seed(a.seed, 0);

  std::optional<pipeline::Models> models;
  if (!a.models.empty()) {
    models = io::load_models(a.models);
  } else if (policy == pipeline::EgoPolicy::mpc) {
    throw ValidationError("eval with --policy mpc needs --models");
  }
  std::optional<pipeline::Buffers> buffers;
  const bool online = cfg.training.online_retrain;
  if (online) {
    if (a.buffers.empty()) throw ValidationError("training.online_retrain needs --buffers");
    buffers = io::load_buffers(a.buffers, cfg.training.replay_capacity);
  }

  std::optional<fs::path> trace_dir;
  std::optional<Manifest> manifest;
  if (!a.traces.empty()) {
    trace_dir = fs::path(a.traces);
    ensure_directory(*trace_dir);
    manifest.emplace(*trace_dir / "manifest.json", "eval", a.config, seed, *trace_dir);
  }

  std::size_t successes = 0;
  std::map<std::string, std::size_t> outcomes;
  std::vector<double> min_ttcs;
  const double speed = cfg.scenario.mean_initial_speed;
  const std::size_t n = cfg.planner.num_trajectories;
  const std::size_t h = cfg.planner.horizon;
  for (std::size_t run = 0; run < a.runs; ++run) {
    Rng rng(pipeline::episode_seed(seed, speed, n, h, run));
    pipeline::EpisodeOptions options;
    options.policy = policy;
    options.record_trace = trace_dir.has_value();
    options.collect_transitions = online;
    std::optional<planner::LearnedDynamics> dynamics;
    if (models) dynamics = models->dynamics();
    const pipeline::EpisodeResult r = pipeline::run_episode(
        cfg.scenario, dynamics ? &*dynamics : nullptr, cfg.planner, cfg.ttc, rng, options);
    if (r.success) ++successes;
    ++outcomes[r.collision_pair ? pair_name(*r.collision_pair, r.obstacles)
                                : std::string(pipeline::to_string(r.termination))];
    min_ttcs.push_back(r.min_ttc_observed);
    if (trace_dir) {
      char name[96];
      std::snprintf(name, sizeof name, "%g_%zu_%zu_%zu.csv", speed, n, h, run);
      io::write_trace_csv(*trace_dir / name, r.trace);
    }
    if (online) models = pipeline::retrain(*buffers, r.new_cav, r.new_hdv, cfg.training).models;
  }
  if (manifest) manifest->finish();

  out << "successes: " << successes << "/" << a.runs << "\n";
  if (!min_ttcs.empty()) {
    std::sort(min_ttcs.begin(), min_ttcs.end());
    out << "min_ttc: min " << print_ttc(min_ttcs.front()) << " median "
        << print_ttc(min_ttcs[min_ttcs.size() / 2]) << " max " << print_ttc(min_ttcs.back())
        << "\n";
    for (const auto& [outcome, count] : outcomes) out << "outcome " << outcome << ": " << count << "\n";
  }
  return kExitOk;
}

// ---- sweep ------------------------------------------------------------------

struct SweepArgs {
  std::string config;
  std::string models;
  std::string spec;
  std::string out;
  std::string traces;
  std::string policy = "mpc";
  std::size_t jobs = 1;
  std::optional<std::uint64_t> seed;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const config::RunConfig cfg = load_config(a.config);
  cfg.validate();
  pipeline::SweepSpec spec = a.spec.empty() ? pipeline::SweepSpec{} : config::load_sweep_spec(a.spec);
  spec.base_seed = resolve_seed(a.seed, spec.base_seed);
  spec.validate();
  if (a.jobs == 0) throw ValidationError("--jobs must be at least 1");

  pipeline::SweepOptions options;
  options.jobs = a.jobs;
  options.policy = pipeline::parse_policy(a.policy);
  std::optional<pipeline::Models> models;
  if (!a.models.empty()) {
    models = io::load_models(a.models);
  } else if (options.policy == pipeline::EgoPolicy::mpc) {
    throw ValidationError("sweep with --policy mpc needs --models");
  }
  if (!a.traces.empty()) {
    options.trace_dir = fs::path(a.traces);
    ensure_directory(*options.trace_dir);
  }

  const fs::path csv(a.out);
  if (csv.has_parent_path()) ensure_directory(csv.parent_path());
  fs::path manifest_path = csv;
  manifest_path += ".manifest.json";
  Manifest manifest(manifest_path, "sweep", a.config, spec.base_seed, csv);

  std::optional<planner::LearnedDynamics> dynamics;
  if (models) dynamics = models->dynamics();
  const std::vector<pipeline::SweepCell> cells = pipeline::evaluate_sweep(
      spec, cfg.scenario, dynamics ? &*dynamics : nullptr, cfg.planner, cfg.ttc, options);
  io::write_sweep_csv(csv, cells);
  manifest.finish();

  // Ties go to the first cell in (n, h) order.
  std::vector<const pipeline::SweepCell*> best;
  for (const pipeline::SweepCell& c : cells) {
    if (best.empty() || best.back()->speed != c.speed) {
      best.push_back(&c);
    } else if (c.successes * best.back()->runs > best.back()->successes * c.runs) {
      best.back() = &c;
    }
  }
  out << "cells: " << cells.size() << "\n";
  for (const pipeline::SweepCell* c : best) {
    out << "speed " << format("%g", c->speed) << ": best n=" << c->n << " h=" << c->h << " "
        << c->successes << "/" << c->runs << "\n";
  }
  return kExitOk;
}

// ---- replay -----------------------------------------------------------------

struct ReplayArgs {
  std::string trace;
  std::string config;
};

int cmd_replay(const ReplayArgs& a, std::ostream& out) {
  const config::RunConfig cfg = load_config(a.config);
  const std::vector<sim::WorldState> trace = io::read_trace_csv(fs::path(a.trace), cfg.scenario.vehicle_radii);
  const pipeline::TraceVerdict v = pipeline::adjudicate_trace(trace, cfg.scenario, cfg.ttc);
  out << "verdict: " << (v.success ? "success" : "collision") << "\n"
      << "termination: " << pipeline::to_string(v.termination) << "\n"
      << "ticks: " << v.ticks_elapsed << "\n";
  if (v.collision_pair) {
    out << "collision: " << pair_name(*v.collision_pair, v.obstacles) << " at tick " << v.ticks_elapsed << "\n";
  }
  out << "min_ttc: " << print_ttc(v.min_ttc_observed) << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learned-dynamics MPC crash avoidance with a TTC safety cost", "ttcshield"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  CollectArgs collect;
  CLI::App* c = app.add_subcommand("collect", "Warm-up data collection under random ego actions");
  c->add_option("--config", collect.config, "Run configuration JSON");
  c->add_option("--steps", collect.steps, "Simulator steps (default training.warmup_steps)");
  c->add_option("--out", collect.out, "Output directory for r_cav.bin and r_hdv.bin")->required();
  c->add_option("--seed", collect.seed, "Seed (default $TTCSHIELD_SEED, then training.seed)");

  TrainArgs train;
  CLI::App* t = app.add_subcommand("train", "Fit both predictors on collected buffers");
  t->add_option("--config", train.config, "Run configuration JSON");
  t->add_option("--buffers", train.buffers, "Directory holding r_cav.bin and r_hdv.bin")->required();
  t->add_option("--kind", train.kind, "linear or mlp3 (default training.kind)");
  t->add_option("--out", train.out, "Output directory for checkpoints and metrics.json")->required();
  t->add_option("--seed", train.seed, "Seed for the holdout split and mlp3 initialisation");

  EvalArgs eval;
  CLI::App* e = app.add_subcommand("eval", "Run planner-controlled episodes at one setting");
  e->add_option("--config", eval.config, "Run configuration JSON");
  e->add_option("--models", eval.models, "Checkpoint directory (f_cav.json, f_hdv.json)");
  e->add_option("--buffers", eval.buffers, "Buffers to refit on when training.online_retrain is set");
  e->add_option("--policy", eval.policy, "mpc or keep")->capture_default_str();
  e->add_option("--n", eval.n, "Sampled action sequences per tick");
  e->add_option("--horizon", eval.horizon, "Planning horizon in steps");
  e->add_option("--speed", eval.speed, "Mean initial speed, m/s");
  e->add_option("--runs", eval.runs, "Episodes")->capture_default_str();
  e->add_option("--seed", eval.seed, "Base seed (default $TTCSHIELD_SEED, then 0)");
  e->add_option("--traces", eval.traces, "Write one trace CSV per episode into this directory");

  SweepArgs sweep;
  CLI::App* s = app.add_subcommand("sweep", "Success rate over a (speed, n, h) grid");
  s->add_option("--config", sweep.config, "Run configuration JSON");
  s->add_option("--models", sweep.models, "Checkpoint directory");
  s->add_option("--spec", sweep.spec, "Sweep spec JSON (default 3 speeds x 4 n x 5 h, 20 runs)");
  s->add_option("--out", sweep.out, "Output CSV")->required();
  s->add_option("--traces", sweep.traces, "Write one trace CSV per episode into this directory");
  s->add_option("--policy", sweep.policy, "mpc or keep")->capture_default_str();
  s->add_option("--jobs", sweep.jobs, "Worker threads")->capture_default_str();
  s->add_option("--seed", sweep.seed, "Overrides the spec base_seed");

  ReplayArgs replay;
  CLI::App* r = app.add_subcommand("replay", "Re-adjudicate a recorded episode trace");
  r->add_option("--trace", replay.trace, "Trace CSV")->required();
  r->add_option("--config", replay.config, "Run configuration JSON (geometry, radii, ttc)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  }

  try {
    if (c->parsed()) return cmd_collect(collect, out);
    if (t->parsed()) return cmd_train(train, out);
    if (e->parsed()) return cmd_eval(eval, out);
    if (s->parsed()) return cmd_sweep(sweep, out);
    return cmd_replay(replay, out);
  } catch (const ValidationError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const IoError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitIo;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return 1;
  }
}

}  // namespace ttcshield::cli
