#include "ttcshield/safety_cost.hpp"

#include <cmath>

#include "ttcshield/error.hpp"
#include "ttcshield/kernels.hpp"

namespace ttcshield::safety {
namespace {

double pair_ttc(const sim::VehicleState& ego, const sim::VehicleState& other, const TtcParams& p,
                bool& overlap) {
  overlap = false;
  const sim::Vec2 dx = other.position - ego.position;
  const double dist = sim::norm(dx);
  if (dist <= p.d_s) {
    overlap = true;
    return p.ttc_floor;
  }
  const sim::Vec2 dv = other.velocity - ego.velocity;
  const double proj = sim::dot(dv, dx) / dist;
  if (!(proj < 0.0)) return kInfinity;
  const double ttc = -(dist - p.d_s) / proj;
  return ttc < p.ttc_floor ? p.ttc_floor : ttc;
}

kernels::EgoMotion ego_motion(const sim::VehicleState& ego) {
  return {ego.position.x, ego.position.y, ego.velocity.x, ego.velocity.y};
}

}  // namespace

void TtcParams::validate() const {
  if (!(d_s > 0.0) || !std::isfinite(d_s)) throw ValidationError("ttc: d_s must be positive");
  if (!(T_safe > 0.0) || !std::isfinite(T_safe)) {
    throw ValidationError("ttc: T_safe must be positive");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ValidationError("ttc: lambda must be non-negative");
  }
  if (!(ttc_floor > 0.0) || !(ttc_floor < T_safe)) {
    throw ValidationError("ttc: ttc_floor must lie in (0, T_safe)");
  }
  if (!(overlap_penalty >= 0.0) || !std::isfinite(overlap_penalty)) {
    throw ValidationError("ttc: overlap_penalty must be non-negative");
  }
}

double ttc_pair(const sim::VehicleState& ego, const sim::VehicleState& other, const TtcParams& p) {
  bool overlap = false;
  return pair_ttc(ego, other, p, overlap);
}

double ttc_static(const sim::VehicleState& ego, const sim::StaticObstacle& obs, const TtcParams& p) {
  bool overlap = false;
  return kernels::static_ttc(obs.position.x, obs.position.y, ego_motion(ego), p.d_s, p.ttc_floor,
                             overlap);
}

double ttc_quadratic_oracle(const sim::VehicleState& ego, const sim::VehicleState& other,
                            const TtcParams& p) {
  const sim::Vec2 dx = other.position - ego.position;
  const sim::Vec2 dv = other.velocity - ego.velocity;
  const double a = sim::dot(dv, dv);
  const double b = 2.0 * sim::dot(dx, dv);
  const double c = sim::dot(dx, dx) - p.d_s * p.d_s;
  if (c <= 0.0) return 0.0;
  if (a == 0.0) return kInfinity;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return kInfinity;
  // Roots share the sign of -b when c > 0; only approaching motion (b < 0) has positive ones.
  if (b >= 0.0) return kInfinity;
  const double q = 0.5 * (-b + std::sqrt(disc));
  return c / q;
}

double threshold_ttc(double ttc, double T_safe) { return ttc <= T_safe ? ttc : kInfinity; }

ObstacleField::ObstacleField(std::span<const sim::StaticObstacle> obstacles) {
  xs.reserve(obstacles.size());
  ys.reserve(obstacles.size());
  for (const sim::StaticObstacle& o : obstacles) {
    xs.push_back(o.position.x);
    ys.push_back(o.position.y);
  }
}

double state_cost(const sim::VehicleState& ego, std::span<const sim::VehicleState> hdvs,
                  const ObstacleField& obstacles, const TtcParams& p, CostTally* tally) {
  double pair_sum = 0.0;
  std::size_t overlaps = 0;
  for (const sim::VehicleState& other : hdvs) {
    bool overlap = false;
    const double ttc = threshold_ttc(pair_ttc(ego, other, p, overlap), p.T_safe);
    pair_sum += 1.0 / ttc;
    overlaps += overlap ? 1 : 0;
  }

  const kernels::StaticTtcParams kp{p.d_s, p.T_safe, p.ttc_floor};
  const kernels::StaticCostSum statics = kernels::active().static_cost(
      obstacles.xs.data(), obstacles.ys.data(), obstacles.size(), ego_motion(ego), kp);
  overlaps += statics.overlaps;

  if (tally != nullptr) {
    tally->aggregates += 1;
    tally->pair_terms += hdvs.size();
    tally->static_terms += obstacles.size();
  }
  return pair_sum + p.lambda * statics.inverse_ttc +
         p.overlap_penalty * static_cast<double>(overlaps);
}

double state_cost(const sim::VehicleState& ego, std::span<const sim::VehicleState> hdvs,
                  std::span<const sim::StaticObstacle> obstacles, const TtcParams& p) {
  return state_cost(ego, hdvs, ObstacleField(obstacles), p);
}

}  // namespace ttcshield::safety
