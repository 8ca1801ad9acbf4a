#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "ttcshield/config.hpp"
#include "ttcshield/error.hpp"
#include "ttcshield/serialization.hpp"
#include "ttcshield/trace_io.hpp"

namespace ttcshield {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("ttcshield_io_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

pipeline::Buffers sample_buffers(std::size_t steps = 300) {
  Rng rng(1);
  return pipeline::warmup_collect(sim::ScenarioConfig{}, steps, rng, 10000);
}

TEST(RunConfig, EmptyDocumentGivesDefaults) {
  const config::RunConfig cfg = config::parse_run_config("{}");
  EXPECT_EQ(cfg.scenario.mean_initial_speed, sim::ScenarioConfig{}.mean_initial_speed);
  EXPECT_EQ(cfg.ttc.d_s, safety::TtcParams{}.d_s);
  EXPECT_EQ(cfg.planner.num_trajectories, planner::PlannerConfig{}.num_trajectories);
  EXPECT_EQ(cfg.training.warmup_steps, pipeline::TrainConfig{}.warmup_steps);
}

TEST(RunConfig, OverridesApply) {
  const config::RunConfig cfg = config::parse_run_config(
      R"({"scenario": {"mean_initial_speed": 25, "scenario_kind": "overtake_from_right",
                       "hdv_maneuver": {"trigger_gap": 12}},
         "ttc": {"d_s": 4.0}, "planner": {"horizon": 7}, "training": {"kind": "mlp3"}})");
  EXPECT_EQ(cfg.scenario.mean_initial_speed, 25.0);
  EXPECT_EQ(cfg.scenario.scenario_kind, sim::ScenarioKind::overtake_from_right);
  EXPECT_EQ(cfg.scenario.hdv_maneuver.trigger_gap, 12.0);
  EXPECT_EQ(cfg.ttc.d_s, 4.0);
  EXPECT_EQ(cfg.planner.horizon, 7u);
  EXPECT_EQ(cfg.training.kind, prediction::ModelKind::mlp3);
}

TEST(RunConfig, StrictAboutUnknownKeysTypesAndRanges) {
  EXPECT_THROW(config::parse_run_config(R"({"scenario": {"speed": 3}})"), ValidationError);
  EXPECT_THROW(config::parse_run_config(R"({"extras": {}})"), ValidationError);
  EXPECT_THROW(config::parse_run_config(R"({"ttc": {"d_s": "far"}})"), ValidationError);
  EXPECT_THROW(config::parse_run_config(R"({"ttc": {"d_s": -1}})"), ValidationError);
  EXPECT_THROW(config::parse_run_config(R"({"planner": {"horizon": -3}})"), ValidationError);
  EXPECT_THROW(config::parse_run_config(R"({"planner": {"horizon": 2.5}})"), ValidationError);
  EXPECT_THROW(config::parse_run_config(R"({"training": {"kind": "gru"}})"), ValidationError);
  EXPECT_THROW(config::parse_run_config("{not json"), ValidationError);
  EXPECT_THROW(config::parse_run_config("[]"), ValidationError);
}

TEST(RunConfig, ErrorNamesOriginAndKey) {
  try {
    config::parse_run_config(R"({"scenario": {"hdv_maneuver": {"bogus": 1}}})", "run.json");
    FAIL() << "accepted an unknown key";
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("run.json"), std::string::npos) << what;
    EXPECT_NE(what.find("bogus"), std::string::npos) << what;
  }
}

TEST(RunConfig, DumpRoundTrips) {
  config::RunConfig cfg;
  cfg.scenario.mean_initial_speed = 17.25;
  cfg.scenario.hdv_roles = {sim::Role::errant_hdv, sim::Role::rear_hdv};
  cfg.ttc.lambda = 0.1;
  cfg.planner.include_fallbacks = true;
  cfg.training.seed = 1234567890123ULL;
  const std::string text = config::dump_run_config(cfg);
  const config::RunConfig back = config::parse_run_config(text);
  EXPECT_EQ(config::dump_run_config(back), text);
  EXPECT_EQ(back.scenario.hdv_roles, cfg.scenario.hdv_roles);
  EXPECT_EQ(back.training.seed, cfg.training.seed);
}

TEST(RunConfig, MissingFileIsValidationError) {
  EXPECT_THROW(config::load_run_config("/nonexistent/ttcshield.json"), ValidationError);
}

TEST(SweepSpec, ParseAndReject) {
  const auto spec = config::parse_sweep_spec(
      R"({"speeds": [20], "ns": [30], "hs": [3], "runs_per_cell": 20, "base_seed": 7})");
  EXPECT_EQ(spec.speeds, std::vector<double>{20.0});
  EXPECT_EQ(spec.runs_per_cell, 20u);
  EXPECT_EQ(spec.base_seed, 7u);
  const auto defaults = config::parse_sweep_spec("{}");
  EXPECT_EQ(defaults.speeds.size() * defaults.ns.size() * defaults.hs.size(), 60u);
  EXPECT_THROW(config::parse_sweep_spec(R"({"ns": []})"), ValidationError);
  EXPECT_THROW(config::parse_sweep_spec(R"({"runs_per_cell": 0})"), ValidationError);
  EXPECT_THROW(config::parse_sweep_spec(R"({"cells": 3})"), ValidationError);
}

prediction::Predictor awkward_predictor() {
  Rng rng(2);
  prediction::Predictor m = prediction::make_mlp3(prediction::kHdvFeatures, rng, 5);
  m.input_mean.assign(prediction::kHdvFeatures, 0.1);
  m.input_scale.assign(prediction::kHdvFeatures, 1.0 / 3.0);
  m.output_mean.assign(prediction::kStateDim, -1e-300);
  m.output_scale.assign(prediction::kStateDim, 6.02214076e23);
  return m;
}

TEST(Checkpoint, JsonRoundTripIsExact) {
  const prediction::Predictor m = awkward_predictor();
  EXPECT_EQ(io::predictor_from_json(io::predictor_to_json(m)), m);
  const prediction::Predictor lin = prediction::make_linear(prediction::kCavFeatures);
  EXPECT_EQ(io::predictor_from_json(io::predictor_to_json(lin)), lin);
}

TEST(Checkpoint, FormatTagIsChecked) {
  std::string text = io::predictor_to_json(awkward_predictor());
  const auto at = text.find(io::kCheckpointFormat);
  ASSERT_NE(at, std::string::npos);
  text.replace(at, std::string(io::kCheckpointFormat).size(), "ttcshield-predictor-v0");
  EXPECT_THROW(io::predictor_from_json(text), ValidationError);
}

TEST(Checkpoint, ShapeMismatchIsRejected) {
  prediction::Predictor m = awkward_predictor();
  m.layers[1].weights.pop_back();
  EXPECT_THROW(io::predictor_from_json(io::predictor_to_json(m)), ValidationError);
  EXPECT_THROW(io::predictor_from_json("{}"), ValidationError);
  EXPECT_THROW(io::predictor_from_json("garbage"), ValidationError);
}

TEST(Checkpoint, ModelsDirectoryRoundTrip) {
  TempDir dir;
  const pipeline::Models models{prediction::make_linear(prediction::kCavFeatures), awkward_predictor()};
  io::save_models(dir.path(), models);
  const pipeline::Models back = io::load_models(dir.path());
  EXPECT_EQ(back.cav, models.cav);
  EXPECT_EQ(back.hdv, models.hdv);
  EXPECT_THROW(io::load_models(dir.path() / "missing"), ValidationError);
}

TEST(Buffers, BinaryRoundTrip) {
  const pipeline::Buffers b = sample_buffers();
  std::stringstream cav;
  std::stringstream hdv;
  io::write_buffer(cav, b.cav);
  io::write_buffer(hdv, b.hdv);
  const auto cav_back = io::read_cav_buffer(cav, 10000);
  const auto hdv_back = io::read_hdv_buffer(hdv, 10000);
  ASSERT_EQ(cav_back.size(), b.cav.size());
  ASSERT_EQ(hdv_back.size(), b.hdv.size());
  for (std::size_t i = 0; i < b.cav.size(); ++i) ASSERT_EQ(cav_back[i], b.cav[i]);
  for (std::size_t i = 0; i < b.hdv.size(); ++i) ASSERT_EQ(hdv_back[i], b.hdv[i]);
}

TEST(Buffers, CapacityKeepsNewest) {
  const pipeline::Buffers b = sample_buffers();
  std::stringstream cav;
  io::write_buffer(cav, b.cav);
  const auto back = io::read_cav_buffer(cav, 10);
  ASSERT_EQ(back.size(), 10u);
  EXPECT_EQ(back[9], b.cav[b.cav.size() - 1]);
  EXPECT_EQ(back[0], b.cav[b.cav.size() - 10]);
}

TEST(Buffers, KindVersionAndTruncationAreChecked) {
  const pipeline::Buffers b = sample_buffers();
  std::stringstream hdv;
  io::write_buffer(hdv, b.hdv);
  const std::string bytes = hdv.str();
  {
    std::istringstream wrong_kind(bytes);
    EXPECT_THROW(io::read_cav_buffer(wrong_kind, 100), ValidationError);
  }
  {
    std::string bumped = bytes;
    bumped[8] = static_cast<char>(bumped[8] + 1);  // version field follows the magic
    std::istringstream in(bumped);
    EXPECT_THROW(io::read_hdv_buffer(in, 100), ValidationError);
  }
  {
    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    std::istringstream in(bad_magic);
    EXPECT_THROW(io::read_hdv_buffer(in, 100), ValidationError);
  }
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{20}, bytes.size() / 2,
                          bytes.size() - 1}) {
    std::istringstream in(bytes.substr(0, cut));
    EXPECT_THROW(io::read_hdv_buffer(in, 100), ValidationError) << cut;
  }
  {
    std::istringstream in(bytes + "x");
    EXPECT_THROW(io::read_hdv_buffer(in, 100), ValidationError);
  }
}

TEST(Buffers, DirectoryRoundTripAndMissingFile) {
  TempDir dir;
  const pipeline::Buffers b = sample_buffers();
  io::save_buffers(dir.path(), b);
  const pipeline::Buffers back = io::load_buffers(dir.path(), 10000);
  EXPECT_EQ(back.cav.size(), b.cav.size());
  EXPECT_EQ(back.hdv.size(), b.hdv.size());
  fs::remove(dir.path() / io::kHdvBufferFile);
  try {
    io::load_buffers(dir.path(), 10000);
    FAIL() << "loaded without r_hdv.bin";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find(io::kHdvBufferFile), std::string::npos) << e.what();
  }
}

TEST(Buffers, EmptyRoundTrip) {
  const prediction::CavMemory empty(5);
  std::stringstream s;
  io::write_buffer(s, empty);
  EXPECT_EQ(io::read_cav_buffer(s, 5).size(), 0u);
}

std::vector<sim::WorldState> sample_trace() {
  Rng rng(3);
  pipeline::EpisodeOptions opt;
  opt.policy = pipeline::EgoPolicy::keep;
  return pipeline::run_episode(sim::ScenarioConfig{}, nullptr, {}, {}, rng, opt).trace;
}

TEST(TraceCsv, RoundTripIsBitExact) {
  const auto trace = sample_trace();
  std::stringstream s;
  io::write_trace_csv(s, trace);
  const std::string text = s.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), io::kTraceHeader);
  const auto back = io::read_trace_csv(s);
  ASSERT_EQ(back.size(), trace.size());
  for (std::size_t t = 0; t < trace.size(); ++t) {
    ASSERT_EQ(back[t].tick, trace[t].tick);
    ASSERT_EQ(back[t].vehicles.size(), trace[t].vehicles.size());
    for (std::size_t v = 0; v < trace[t].vehicles.size(); ++v) {
      const auto& a = trace[t].vehicles[v];
      const auto& b = back[t].vehicles[v];
      ASSERT_EQ(a.role, b.role);
      ASSERT_EQ(a.state, b.state);
      ASSERT_EQ(a.last_command, b.last_command);
    }
  }
  std::stringstream again;
  io::write_trace_csv(again, back);
  EXPECT_EQ(again.str(), text);
}

TEST(TraceCsv, MalformedDocumentsAreRejected) {
  const auto trace = sample_trace();
  std::stringstream s;
  io::write_trace_csv(s, trace);
  const std::string text = s.str();
  auto rejects = [](const std::string& doc) {
    std::istringstream in(doc);
    return [&] {
      try {
        io::read_trace_csv(in);
      } catch (const ValidationError&) {
        return true;
      }
      return false;
    }();
  };
  EXPECT_TRUE(rejects(""));
  EXPECT_TRUE(rejects("tick,role\n"));
  EXPECT_TRUE(rejects(text.substr(0, text.size() - 1)));      // no final newline
  EXPECT_TRUE(rejects(text.substr(0, text.size() / 2)));      // cut mid-row
  std::size_t sixth_row = 0;
  for (int i = 0; i < 6; ++i) sixth_row = text.find('\n', sixth_row) + 1;
  EXPECT_TRUE(rejects(text.substr(0, sixth_row)));            // tick 1 missing vehicles
  std::string bad_field = text;
  bad_field.replace(bad_field.find(",ego,") + 5, 1, "q");
  EXPECT_TRUE(rejects(bad_field));
  std::string bad_role = text;
  bad_role.replace(bad_role.find(",ego,"), 5, ",bus,");
  EXPECT_TRUE(rejects(bad_role));
}

TEST(TraceCsv, MissingFileIsValidationError) {
  EXPECT_THROW(io::read_trace_csv(fs::path("/nonexistent/trace.csv")), ValidationError);
}

TEST(SweepCsv, HeaderAndRows) {
  const std::vector<pipeline::SweepCell> cells{{15.0, 5, 1, 20, 17}, {20.0, 30, 3, 20, 20}};
  std::ostringstream s;
  io::write_sweep_csv(s, cells);
  std::istringstream in(s.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, io::kSweepHeader);
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, line.rfind(',')), "15,5,1,20,17");
  std::size_t rows = 1;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 2u);
}

TEST(AtomicWrite, ReplacesContent) {
  TempDir dir;
  const fs::path p = dir.path() / "out.txt";
  io::write_file_atomic(p, "first");
  io::write_file_atomic(p, "second");
  EXPECT_EQ(slurp(p), "second");
  EXPECT_THROW(io::write_file_atomic(dir.path() / "no" / "such" / "dir" / "f", "x"), IoError);
}

}  // namespace
}  // namespace ttcshield
