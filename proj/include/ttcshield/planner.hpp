#pragma once

// Random-shooting MPC over the 3 x 3 categorical action alphabet: sample
// candidate sequences, roll each out through the learned dynamics, score the
// predicted states with the TTC cost, execute the first action of the best one.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ttcshield/prediction.hpp"
#include "ttcshield/rng.hpp"
#include "ttcshield/safety_cost.hpp"
#include "ttcshield/sim_world.hpp"

namespace ttcshield::planner {

struct Action {
  std::uint8_t longitudinal = 1;  // 0 brake, 1 keep, 2 gas
  std::uint8_t latitudinal = 1;   // 0 left, 1 keep, 2 right

  constexpr bool operator==(const Action&) const = default;
};

inline constexpr std::size_t kActionCount = 9;
inline constexpr Action kKeep{1, 1};
inline constexpr Action kStraightBrake{0, 1};

// index = 3 * longitudinal + latitudinal
constexpr Action action_from_index(std::size_t index) {
  return {static_cast<std::uint8_t>(index / 3), static_cast<std::uint8_t>(index % 3)};
}
constexpr std::size_t action_index(Action a) { return 3u * a.longitudinal + a.latitudinal; }

struct PlannerConfig {
  std::size_t num_trajectories = 30;
  std::size_t horizon = 3;
  double steer_increment = 0.1;
  double gas_level = 0.8;
  double brake_level = 1.0;
  bool include_fallbacks = false;

  void validate() const;  // throws ValidationError
};

using ActionSequence = std::vector<Action>;

sim::ControlCommand action_to_command(Action a, double current_steering, const PlannerConfig& cfg);

// n sequences of h i.i.d. uniform actions. With include_fallbacks the first two
// sequences become all-keep and all-straight-brake (when n allows).
std::vector<ActionSequence> sample_action_sequences(const PlannerConfig& cfg, Rng& rng);

// One-step dynamics used inside rollouts. Returned rows are absolute.
class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;
  virtual prediction::StateRow ego_next(const prediction::HistoryWindow& window,
                                        const sim::ControlCommand& cmd) const = 0;
  virtual prediction::StateRow hdv_next(const prediction::HistoryWindow& window) const = 0;
};

// f_CAV for the ego and one shared f_HDV applied to every surrounding vehicle.
class LearnedDynamics final : public DynamicsModel {
 public:
  LearnedDynamics(prediction::Predictor cav, prediction::Predictor hdv);

  prediction::StateRow ego_next(const prediction::HistoryWindow& window,
                                const sim::ControlCommand& cmd) const override;
  prediction::StateRow hdv_next(const prediction::HistoryWindow& window) const override;

  const prediction::Predictor& cav() const { return cav_; }
  const prediction::Predictor& hdv() const { return hdv_; }

 private:
  prediction::Predictor cav_;
  prediction::Predictor hdv_;
};

struct RolloutResult {
  double cost = 0.0;
  safety::CostTally tally;
};

// Cumulative predicted cost of `seq`. The steering increments apply to the last
// control row of the ego window, then to each command of the sequence in turn.
// Infinite once any predicted row is non-finite.
RolloutResult rollout(const prediction::HistoryWindow& ego_window,
                      std::span<const prediction::HistoryWindow> hdv_windows,
                      const safety::ObstacleField& obstacles, std::span<const Action> seq,
                      const DynamicsModel& model, const PlannerConfig& cfg,
                      const safety::TtcParams& p);

struct PlanResult {
  Action chosen_action = kStraightBrake;
  sim::ControlCommand chosen_command;
  std::vector<double> costs;      // one cumulative cost per sampled sequence
  std::size_t chosen_index = 0;
  bool all_non_finite = false;    // every cost was inf/NaN; straight brake was chosen
  safety::CostTally tally;        // terms evaluated across all rollouts
};

// Lowest cost wins, ties go to the lowest index, non-finite costs rank last.
PlanResult plan_step(const prediction::HistoryWindow& ego_window,
                     std::span<const prediction::HistoryWindow> hdv_windows,
                     const safety::ObstacleField& obstacles, const DynamicsModel& model,
                     const PlannerConfig& cfg, const safety::TtcParams& p, Rng& rng);

}  // namespace ttcshield::planner
