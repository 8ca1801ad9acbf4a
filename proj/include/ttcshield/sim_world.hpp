#pragma once

// Deterministic 2D kinematic traffic simulator for crash-imminent overtaking
// scenarios. Frame: x along the road, y towards the right-hand side of the
// road, heading measured from +x towards +y, so positive steering turns right.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ttcshield/rng.hpp"

namespace ttcshield::sim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr bool operator==(const Vec2&) const = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::sqrt(dot(a, a)); }

struct VehicleState {
  Vec2 position;
  Vec2 velocity;
  Vec2 acceleration;
  double heading = 0.0;
  double steering_position = 0.0;  // [-1, 1], -1 full left
  double radius = 1.2;

  double speed() const { return norm(velocity); }
  bool operator==(const VehicleState&) const = default;
};

struct ControlCommand {
  double throttle = 0.0;  // [0, 1]
  double brake = 0.0;     // [0, 1], never together with throttle
  double steering = 0.0;  // [-1, 1]

  bool operator==(const ControlCommand&) const = default;
};

// Throws ValidationError on out-of-range or non-finite fields, or throttle and brake both set.
void validate(const ControlCommand& cmd);

struct StaticObstacle {
  Vec2 position;
  double radius = 0.0;

  bool operator==(const StaticObstacle&) const = default;
};

enum class ScenarioKind { overtake_from_left, overtake_from_right };
enum class Role { ego, errant_hdv, lead_hdv, rear_hdv };

std::string_view to_string(ScenarioKind kind);
std::string_view to_string(Role role);
ScenarioKind parse_scenario_kind(std::string_view text);
Role parse_role(std::string_view text);

struct PlantParams {
  double max_gas_accel = 4.0;     // m/s^2 at full throttle
  double max_brake_accel = 8.0;   // m/s^2 at full brake
  double max_wheel_angle = 0.5236;  // rad at |steering| = 1
  double wheelbase = 2.7;         // m
};

struct VehicleRadii {
  double ego = 1.2;
  double errant_hdv = 1.2;
  double lead_hdv = 1.2;
  double rear_hdv = 1.2;

  double for_role(Role role) const;
  double max() const;
};

// Scripted cut-in of the errant vehicle: once its gap to the lead vehicle falls
// below trigger_gap (plus a per-run start delay drawn from [0, 2 * trigger_jitter]),
// it steers a half-sine lobe towards the ego lane, counter-steers an equal lobe
// back to a straight heading, then tracks the line target_lane_offset away from
// its starting lane. overtake_throttle is held for both lobes.
struct ManeuverProfile {
  double trigger_gap = 16.0;
  double lateral_duration = 0.6;
  double peak_steering = 0.12;
  double target_lane_offset = 3.5;
  double trigger_jitter = 0.2;
  double overtake_throttle = 1.0;
};

struct ScenarioConfig {
  ScenarioKind scenario_kind = ScenarioKind::overtake_from_left;
  double mean_initial_speed = 20.0;
  double speed_noise_sigma = 1.0;
  double lane_width = 3.5;
  VehicleRadii vehicle_radii;
  ManeuverProfile hdv_maneuver;
  double static_obstacle_spacing = 2.0;
  std::int64_t max_steps = 200;
  double dt = 0.05;
  std::uint64_t seed = 0;

  // Initial geometry, relative to the ego at x = 0.
  double rear_gap = 10.0;        // rear HDV this far behind the ego, same lane
  double errant_offset = -3.0;   // errant HDV longitudinal offset, adjacent lane
  double lead_gap = 15.0;        // lead HDV this far ahead of the errant HDV
  double shoulder_width = 10.0;  // road edge lies this far outside the outer lane line
  bool road_edges = true;        // false leaves the road without roadside obstacles
  std::vector<Role> hdv_roles{Role::errant_hdv, Role::lead_hdv, Role::rear_hdv};
  PlantParams plant;

  void validate() const;  // throws ValidationError
};

struct VehicleEntry {
  Role role = Role::ego;
  VehicleState state;
  ControlCommand last_command;  // command that produced `state`
  double cruise_speed = 0.0;
  double lane_center = 0.0;

  bool operator==(const VehicleEntry&) const = default;
};

struct ManeuverState {
  std::int64_t trigger_tick = -1;  // tick at which the gap condition first held
  std::int64_t delay_ticks = 0;

  bool operator==(const ManeuverState&) const = default;
};

struct WorldState {
  std::int64_t tick = 0;
  std::vector<VehicleEntry> vehicles;  // ego first, then HDVs in canonical role order
  std::vector<StaticObstacle> obstacles;
  ManeuverState maneuver;

  const VehicleEntry& ego() const;
  const VehicleEntry* find(Role role) const;
  bool operator==(const WorldState&) const = default;
};

VehicleState step_vehicle(const VehicleState& state, const ControlCommand& cmd, double dt,
                          const PlantParams& plant = {});

ControlCommand scripted_hdv_command(const ScenarioConfig& config, Role role,
                                    const WorldState& world);

WorldState step_world(const WorldState& world, const ScenarioConfig& config,
                      const ControlCommand& ego_cmd);

struct EntityRef {
  enum class Kind { vehicle, obstacle };
  Kind kind = Kind::vehicle;
  std::size_t index = 0;  // into vehicles or obstacles
  Role role = Role::ego;  // meaningful for vehicles only

  bool operator==(const EntityRef&) const = default;
};

struct CollisionPair {
  EntityRef first;
  EntityRef second;
};

// First overlapping pair in list order: vehicle pairs (i < j), then ego-obstacle pairs.
// Circles that only touch do not collide.
std::optional<CollisionPair> detect_collision(const WorldState& world);

WorldState init_scenario(const ScenarioConfig& config, Rng& rng);

// Road-edge obstacle rows for the configured geometry over [x_begin, x_end].
std::vector<StaticObstacle> road_edge_obstacles(const ScenarioConfig& config,
                                                double x_begin, double x_end);

// The obstacles init_scenario places: both road edges from behind the last
// vehicle to beyond the farthest point any vehicle can reach within max_steps.
std::vector<StaticObstacle> scenario_obstacles(const ScenarioConfig& config);

}  // namespace ttcshield::sim
