#include "ttcshield/planner.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ttcshield/error.hpp"

namespace ttcshield::planner {
namespace {

sim::VehicleState as_vehicle(const prediction::StateRow& r) {
  sim::VehicleState s;
  s.position = {r.x, r.y};
  s.velocity = {r.vx, r.vy};
  s.acceleration = {r.ax, r.ay};
  return s;
}

bool finite(const prediction::StateRow& r) {
  for (double v : r.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

void PlannerConfig::validate() const {
  if (num_trajectories < 1) throw ValidationError("planner: num_trajectories must be >= 1");
  if (horizon < 1) throw ValidationError("planner: horizon must be >= 1");
  if (!(steer_increment > 0.0 && steer_increment <= 1.0)) {
    throw ValidationError("planner: steer_increment must lie in (0, 1]");
  }
  if (!(gas_level > 0.0 && gas_level <= 1.0)) {
    throw ValidationError("planner: gas_level must lie in (0, 1]");
  }
  if (!(brake_level > 0.0 && brake_level <= 1.0)) {
    throw ValidationError("planner: brake_level must lie in (0, 1]");
  }
}

sim::ControlCommand action_to_command(Action a, double current_steering, const PlannerConfig& cfg) {
  sim::ControlCommand cmd;
  if (a.longitudinal == 0) {
    cmd.brake = cfg.brake_level;
  } else if (a.longitudinal == 2) {
    cmd.throttle = cfg.gas_level;
  }
  const double delta = a.latitudinal == 0   ? -cfg.steer_increment
                       : a.latitudinal == 2 ? cfg.steer_increment
                                            : 0.0;
  cmd.steering = std::clamp(current_steering + delta, -1.0, 1.0);
  return cmd;
}

std::vector<ActionSequence> sample_action_sequences(const PlannerConfig& cfg, Rng& rng) {
  cfg.validate();
  std::uniform_int_distribution<std::size_t> pick(0, kActionCount - 1);
  std::vector<ActionSequence> seqs(cfg.num_trajectories, ActionSequence(cfg.horizon));
  for (ActionSequence& seq : seqs) {
    for (Action& a : seq) a = action_from_index(pick(rng));
  }
  if (cfg.include_fallbacks) {
    if (!seqs.empty()) std::fill(seqs[0].begin(), seqs[0].end(), kKeep);
    if (seqs.size() > 1) std::fill(seqs[1].begin(), seqs[1].end(), kStraightBrake);
  }
  return seqs;
}

LearnedDynamics::LearnedDynamics(prediction::Predictor cav, prediction::Predictor hdv)
    : cav_(std::move(cav)), hdv_(std::move(hdv)) {
  cav_.validate();
  hdv_.validate();
  if (cav_.input_dim != prediction::kCavFeatures) {
    throw ValidationError("ego predictor must take " + std::to_string(prediction::kCavFeatures) +
                          " features, got " + std::to_string(cav_.input_dim));
  }
  if (hdv_.input_dim != prediction::kHdvFeatures) {
    throw ValidationError("HDV predictor must take " + std::to_string(prediction::kHdvFeatures) +
                          " features, got " + std::to_string(hdv_.input_dim));
  }
}

prediction::StateRow LearnedDynamics::ego_next(const prediction::HistoryWindow& window,
                                               const sim::ControlCommand& cmd) const {
  const auto f = prediction::featurize_cav(window, cmd);
  return prediction::to_absolute(window.last(), prediction::predict(cav_, f));
}

prediction::StateRow LearnedDynamics::hdv_next(const prediction::HistoryWindow& window) const {
  const auto f = prediction::featurize_hdv(window);
  return prediction::to_absolute(window.last(), prediction::predict(hdv_, f));
}

RolloutResult rollout(const prediction::HistoryWindow& ego_window,
                      std::span<const prediction::HistoryWindow> hdv_windows,
                      const safety::ObstacleField& obstacles, std::span<const Action> seq,
                      const DynamicsModel& model, const PlannerConfig& cfg,
                      const safety::TtcParams& p) {
  if (!ego_window.has_controls()) throw ValidationError("rollout: ego window lacks control rows");
  prediction::HistoryWindow ego = ego_window;
  std::vector<prediction::HistoryWindow> hdvs(hdv_windows.begin(), hdv_windows.end());
  std::vector<sim::VehicleState> hdv_states(hdvs.size());
  double steering = ego.controls.back().steering;

  RolloutResult out;
  for (const Action a : seq) {
    const sim::ControlCommand cmd = action_to_command(a, steering, cfg);
    steering = cmd.steering;
    const prediction::StateRow ego_row = model.ego_next(ego, cmd);
    bool diverged = !finite(ego_row);
    for (std::size_t j = 0; j < hdvs.size(); ++j) {
      const prediction::StateRow row = model.hdv_next(hdvs[j]);
      diverged = diverged || !finite(row);
      hdv_states[j] = as_vehicle(row);
      hdvs[j].slide(row);
    }
    // A non-finite prediction would otherwise read as infinite TTC, i.e. zero risk.
    if (diverged) {
      out.cost = safety::kInfinity;
      return out;
    }
    ego.slide(ego_row, cmd);
    out.cost += safety::state_cost(as_vehicle(ego_row), hdv_states, obstacles, p, &out.tally);
  }
  return out;
}

PlanResult plan_step(const prediction::HistoryWindow& ego_window,
                     std::span<const prediction::HistoryWindow> hdv_windows,
                     const safety::ObstacleField& obstacles, const DynamicsModel& model,
                     const PlannerConfig& cfg, const safety::TtcParams& p, Rng& rng) {
  const std::vector<ActionSequence> seqs = sample_action_sequences(cfg, rng);
  PlanResult result;
  result.costs.reserve(seqs.size());
  bool found = false;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const RolloutResult r = rollout(ego_window, hdv_windows, obstacles, seqs[i], model, cfg, p);
    result.costs.push_back(r.cost);
    result.tally += r.tally;
    if (!std::isfinite(r.cost)) continue;
    if (!found || r.cost < result.costs[result.chosen_index]) {
      result.chosen_index = i;
      found = true;
    }
  }
  const double steering = ego_window.controls.back().steering;
  if (found) {
    result.chosen_action = seqs[result.chosen_index].front();
  } else {
    result.all_non_finite = true;
    result.chosen_index = 0;
    result.chosen_action = kStraightBrake;
  }
  result.chosen_command = action_to_command(result.chosen_action, steering, cfg);
  return result;
}

}  // namespace ttcshield::planner
