#pragma once

// Time-to-collision risk functional used as the planner cost.

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "ttcshield/sim_world.hpp"

namespace ttcshield::safety {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct TtcParams {
  double d_s = 3.0;              // safety distance with both vehicle radii folded in, m
  double T_safe = 5.0;           // s; larger TTCs carry no risk
  double lambda = 0.5;           // weight of the static-obstacle sum
  double ttc_floor = 0.05;       // s; TTC inside the safety envelope
  double overlap_penalty = 1e3;  // added per entity inside the safety envelope

  void validate() const;  // throws ValidationError
};

// Closed-form pairwise TTC with dx = other - ego and dv = other_v - ego_v:
// (|dx| - d_s) / -proj(dv, dx) when closing, infinite otherwise, ttc_floor
// inside the envelope |dx| <= d_s.
double ttc_pair(const sim::VehicleState& ego, const sim::VehicleState& other, const TtcParams& p);

// Same with only the ego velocity projected on the line of sight to the obstacle.
double ttc_static(const sim::VehicleState& ego, const sim::StaticObstacle& obs, const TtcParams& p);

// Smallest non-negative root of |dx + dv t| = d_s under zero acceleration,
// solved directly; infinite when the separation never reaches d_s. Reference for ttc_pair.
double ttc_quadratic_oracle(const sim::VehicleState& ego, const sim::VehicleState& other,
                            const TtcParams& p);

// ttc if ttc <= T_safe, otherwise infinite.
double threshold_ttc(double ttc, double T_safe);

// Structure-of-arrays copy of obstacle centres, the layout the kernels consume.
struct ObstacleField {
  std::vector<double> xs;
  std::vector<double> ys;

  ObstacleField() = default;
  explicit ObstacleField(std::span<const sim::StaticObstacle> obstacles);
  std::size_t size() const { return xs.size(); }
};

// Tallies of individual terms folded into one state_cost call.
struct CostTally {
  std::size_t aggregates = 0;  // state_cost invocations
  std::size_t pair_terms = 0;
  std::size_t static_terms = 0;

  std::size_t total() const { return aggregates + pair_terms + static_terms; }
  CostTally& operator+=(const CostTally& o) {
    aggregates += o.aggregates;
    pair_terms += o.pair_terms;
    static_terms += o.static_terms;
    return *this;
  }
};

// sum_j 1/T(ttc_pair) + lambda * sum_s 1/T(ttc_static) + overlap_penalty per entity
// inside the envelope, where T is threshold_ttc and 1/inf = 0.
double state_cost(const sim::VehicleState& ego, std::span<const sim::VehicleState> hdvs,
                  const ObstacleField& obstacles, const TtcParams& p, CostTally* tally = nullptr);

double state_cost(const sim::VehicleState& ego, std::span<const sim::VehicleState> hdvs,
                  std::span<const sim::StaticObstacle> obstacles, const TtcParams& p);

}  // namespace ttcshield::safety
