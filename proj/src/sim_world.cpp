#include "ttcshield/sim_world.hpp"

#include <algorithm>
#include <numbers>

#include "ttcshield/error.hpp"

namespace ttcshield::sim {
namespace {

bool finite(Vec2 v) { return std::isfinite(v.x) && std::isfinite(v.y); }

bool finite(const VehicleState& s) {
  return finite(s.position) && finite(s.velocity) && finite(s.acceleration) &&
         std::isfinite(s.heading) && std::isfinite(s.steering_position) &&
         std::isfinite(s.radius);
}

double lateral_sign(ScenarioKind kind) {
  // Direction of the errant cut-in: from the left lane towards +y.
  return kind == ScenarioKind::overtake_from_left ? 1.0 : -1.0;
}

// Speed-hold controller for lane keepers. There is no drag in the plant, so a
// vehicle at its cruise speed receives an all-zero command.
ControlCommand hold_speed(const VehicleEntry& v) {
  constexpr double kGain = 0.5;
  ControlCommand cmd;
  const double error = v.cruise_speed - v.state.speed();
  if (error > 0.0) {
    cmd.throttle = std::min(1.0, kGain * error);
  } else if (error < 0.0) {
    cmd.brake = std::min(1.0, -kGain * error);
  }
  return cmd;
}

double longitudinal_gap_to_lead(const WorldState& world, const VehicleEntry& errant) {
  const VehicleEntry* lead = world.find(Role::lead_hdv);
  if (lead == nullptr) return std::numeric_limits<double>::infinity();
  return lead->state.position.x - errant.state.position.x;
}

// Seconds since the cut-in started, or nullopt before it starts.
std::optional<double> maneuver_clock(const ScenarioConfig& config, const WorldState& world,
                                     const VehicleEntry& errant) {
  std::int64_t trigger = world.maneuver.trigger_tick;
  if (trigger < 0) {
    if (longitudinal_gap_to_lead(world, errant) >= config.hdv_maneuver.trigger_gap) {
      return std::nullopt;
    }
    trigger = world.tick;
  }
  const std::int64_t start = trigger + world.maneuver.delay_ticks;
  if (world.tick < start) return std::nullopt;
  return static_cast<double>(world.tick - start) * config.dt;
}

ControlCommand errant_command(const ScenarioConfig& config, const WorldState& world,
                              const VehicleEntry& errant) {
  const ManeuverProfile& m = config.hdv_maneuver;
  const std::optional<double> clock = maneuver_clock(config, world, errant);
  if (!clock) return hold_speed(errant);

  const double sign = lateral_sign(config.scenario_kind);
  const double t = *clock;
  const double lobe = m.lateral_duration;
  ControlCommand cmd;
  if (t < lobe) {
    cmd.throttle = m.overtake_throttle;
    cmd.steering = sign * m.peak_steering * std::sin(std::numbers::pi * t / lobe);
  } else if (t < 2.0 * lobe) {
    cmd.throttle = m.overtake_throttle;
    cmd.steering = -sign * m.peak_steering * std::sin(std::numbers::pi * (t - lobe) / lobe);
  } else {
    // Track the target line with a heading-damped proportional law; speed is left as is.
    constexpr double kLateralGain = 0.02;
    constexpr double kHeadingGain = 0.6;
    const double target_y = errant.lane_center + sign * m.target_lane_offset;
    const double steer = kLateralGain * (target_y - errant.state.position.y) -
                         kHeadingGain * errant.state.heading;
    cmd.steering = std::clamp(steer, -0.2, 0.2);
  }
  cmd.steering = std::clamp(cmd.steering, -1.0, 1.0);
  return cmd;
}

}  // namespace

std::string_view to_string(ScenarioKind kind) {
  return kind == ScenarioKind::overtake_from_left ? "overtake_from_left" : "overtake_from_right";
}

std::string_view to_string(Role role) {
  switch (role) {
    case Role::ego: return "ego";
    case Role::errant_hdv: return "errant_hdv";
    case Role::lead_hdv: return "lead_hdv";
    case Role::rear_hdv: return "rear_hdv";
  }
  return "unknown";
}

ScenarioKind parse_scenario_kind(std::string_view text) {
  if (text == "overtake_from_left") return ScenarioKind::overtake_from_left;
  if (text == "overtake_from_right") return ScenarioKind::overtake_from_right;
  throw ValidationError("unknown scenario_kind '" + std::string(text) + "'");
}

Role parse_role(std::string_view text) {
  for (Role r : {Role::ego, Role::errant_hdv, Role::lead_hdv, Role::rear_hdv}) {
    if (text == to_string(r)) return r;
  }
  throw ValidationError("unknown vehicle role '" + std::string(text) + "'");
}

double VehicleRadii::for_role(Role role) const {
  switch (role) {
    case Role::ego: return ego;
    case Role::errant_hdv: return errant_hdv;
    case Role::lead_hdv: return lead_hdv;
    case Role::rear_hdv: return rear_hdv;
  }
  return ego;
}

double VehicleRadii::max() const { return std::max({ego, errant_hdv, lead_hdv, rear_hdv}); }

void validate(const ControlCommand& cmd) {
  if (!std::isfinite(cmd.throttle) || !std::isfinite(cmd.brake) || !std::isfinite(cmd.steering)) {
    throw ValidationError("control command has non-finite fields");
  }
  if (cmd.throttle < 0.0 || cmd.throttle > 1.0 || cmd.brake < 0.0 || cmd.brake > 1.0 ||
      cmd.steering < -1.0 || cmd.steering > 1.0) {
    throw ValidationError("control command outside its range");
  }
  if (cmd.throttle * cmd.brake != 0.0) {
    throw ValidationError("throttle and brake applied together");
  }
}

void ScenarioConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ValidationError(std::string("scenario: ") + what);
  };
  require(std::isfinite(dt) && dt > 0.0, "dt must be positive");
  require(max_steps > 0, "max_steps must be positive");
  require(std::isfinite(mean_initial_speed) && mean_initial_speed >= 0.0,
          "mean_initial_speed must be non-negative");
  require(std::isfinite(speed_noise_sigma) && speed_noise_sigma >= 0.0,
          "speed_noise_sigma must be non-negative");
  for (double r : {vehicle_radii.ego, vehicle_radii.errant_hdv, vehicle_radii.lead_hdv,
                   vehicle_radii.rear_hdv}) {
    require(std::isfinite(r) && r > 0.0, "vehicle radii must be positive");
  }
  require(std::isfinite(lane_width) && lane_width > 2.0 * vehicle_radii.max(),
          "lane_width must exceed every vehicle diameter");
  require(std::isfinite(static_obstacle_spacing) && static_obstacle_spacing > 0.0,
          "static_obstacle_spacing must be positive");
  require(std::isfinite(shoulder_width) && shoulder_width >= 0.0,
          "shoulder_width must be non-negative");
  require(std::isfinite(hdv_maneuver.trigger_gap) && hdv_maneuver.trigger_gap > 0.0,
          "hdv_maneuver.trigger_gap must be positive");
  require(std::isfinite(hdv_maneuver.lateral_duration) && hdv_maneuver.lateral_duration > 0.0,
          "hdv_maneuver.lateral_duration must be positive");
  require(std::isfinite(hdv_maneuver.peak_steering) && std::abs(hdv_maneuver.peak_steering) <= 1.0,
          "hdv_maneuver.peak_steering must lie in [-1, 1]");
  require(std::isfinite(hdv_maneuver.target_lane_offset), "hdv_maneuver.target_lane_offset");
  require(std::isfinite(hdv_maneuver.trigger_jitter) && hdv_maneuver.trigger_jitter >= 0.0,
          "hdv_maneuver.trigger_jitter must be non-negative");
  require(hdv_maneuver.overtake_throttle >= 0.0 && hdv_maneuver.overtake_throttle <= 1.0,
          "hdv_maneuver.overtake_throttle must lie in [0, 1]");
  require(std::isfinite(rear_gap) && std::isfinite(errant_offset) && std::isfinite(lead_gap),
          "geometry offsets must be finite");
  for (std::size_t i = 0; i < hdv_roles.size(); ++i) {
    require(hdv_roles[i] != Role::ego, "hdv_roles must not contain ego");
    for (std::size_t j = 0; j < i; ++j) require(hdv_roles[i] != hdv_roles[j], "duplicate hdv role");
  }
  require(plant.max_gas_accel >= 0.0 && plant.max_brake_accel >= 0.0 &&
              plant.max_wheel_angle > 0.0 && plant.wheelbase > 0.0,
          "plant parameters out of range");
}

const VehicleEntry& WorldState::ego() const {
  const VehicleEntry* e = find(Role::ego);
  if (e == nullptr) throw ValidationError("world has no ego vehicle");
  return *e;
}

const VehicleEntry* WorldState::find(Role role) const {
  for (const VehicleEntry& v : vehicles) {
    if (v.role == role) return &v;
  }
  return nullptr;
}

VehicleState step_vehicle(const VehicleState& state, const ControlCommand& cmd, double dt,
                          const PlantParams& plant) {
  if (!std::isfinite(dt) || dt <= 0.0) throw ValidationError("step_vehicle: dt must be positive");
  if (!finite(state)) throw ValidationError("step_vehicle: non-finite vehicle state");
  validate(cmd);

  const double accel = plant.max_gas_accel * cmd.throttle - plant.max_brake_accel * cmd.brake;
  const double speed = std::max(0.0, state.speed() + accel * dt);
  const double steering = std::clamp(cmd.steering, -1.0, 1.0);
  const double wheel_angle = steering * plant.max_wheel_angle;
  const double heading = state.heading + speed / plant.wheelbase * std::tan(wheel_angle) * dt;

  VehicleState next = state;
  next.velocity = {speed * std::cos(heading), speed * std::sin(heading)};
  next.position = state.position + next.velocity * dt;
  next.acceleration = (next.velocity - state.velocity) * (1.0 / dt);
  next.heading = heading;
  next.steering_position = steering;
  return next;
}

ControlCommand scripted_hdv_command(const ScenarioConfig& config, Role role,
                                    const WorldState& world) {
  if (role == Role::ego) throw ValidationError("scripted_hdv_command: ego is not scripted");
  const VehicleEntry* vehicle = world.find(role);
  if (vehicle == nullptr) throw ValidationError("scripted_hdv_command: role not in world");
  if (role == Role::errant_hdv) return errant_command(config, world, *vehicle);
  return hold_speed(*vehicle);
}

WorldState step_world(const WorldState& world, const ScenarioConfig& config,
                      const ControlCommand& ego_cmd) {
  validate(ego_cmd);
  WorldState next = world;
  for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
    const VehicleEntry& v = world.vehicles[i];
    const ControlCommand cmd =
        v.role == Role::ego ? ego_cmd : scripted_hdv_command(config, v.role, world);
    next.vehicles[i].state = step_vehicle(v.state, cmd, config.dt, config.plant);
    next.vehicles[i].last_command = cmd;
  }
  if (world.maneuver.trigger_tick < 0) {
    if (const VehicleEntry* errant = world.find(Role::errant_hdv)) {
      if (longitudinal_gap_to_lead(world, *errant) < config.hdv_maneuver.trigger_gap) {
        next.maneuver.trigger_tick = world.tick;
      }
    }
  }
  next.tick = world.tick + 1;
  return next;
}

std::optional<CollisionPair> detect_collision(const WorldState& world) {
  const auto& vs = world.vehicles;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    for (std::size_t j = i + 1; j < vs.size(); ++j) {
      const double reach = vs[i].state.radius + vs[j].state.radius;
      if (norm(vs[j].state.position - vs[i].state.position) < reach) {
        return CollisionPair{{EntityRef::Kind::vehicle, i, vs[i].role},
                             {EntityRef::Kind::vehicle, j, vs[j].role}};
      }
    }
  }
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (vs[i].role != Role::ego) continue;
    for (std::size_t k = 0; k < world.obstacles.size(); ++k) {
      const StaticObstacle& o = world.obstacles[k];
      if (norm(o.position - vs[i].state.position) < vs[i].state.radius + o.radius) {
        return CollisionPair{{EntityRef::Kind::vehicle, i, vs[i].role},
                             {EntityRef::Kind::obstacle, k, Role::ego}};
      }
    }
  }
  return std::nullopt;
}

std::vector<StaticObstacle> road_edge_obstacles(const ScenarioConfig& config, double x_begin,
                                                double x_end) {
  std::vector<StaticObstacle> obstacles;
  const double edge = config.lane_width + config.shoulder_width;
  const double spacing = config.static_obstacle_spacing;
  const auto first = static_cast<std::int64_t>(std::floor(x_begin / spacing));
  const auto last = static_cast<std::int64_t>(std::ceil(x_end / spacing));
  for (double side : {-edge, edge}) {
    for (std::int64_t k = first; k <= last; ++k) {
      obstacles.push_back({{static_cast<double>(k) * spacing, side}, 0.0});
    }
  }
  return obstacles;
}

std::vector<StaticObstacle> scenario_obstacles(const ScenarioConfig& config) {
  if (!config.road_edges) return {};
  double x_min = 0.0;
  double x_max = 0.0;
  for (Role role : config.hdv_roles) {
    const double x = role == Role::errant_hdv ? config.errant_offset
                     : role == Role::lead_hdv ? config.errant_offset + config.lead_gap
                                              : -config.rear_gap;
    x_min = std::min(x_min, x);
    x_max = std::max(x_max, x);
  }
  const double horizon = static_cast<double>(config.max_steps) * config.dt;
  const double reach =
      (config.mean_initial_speed + 5.0 * config.speed_noise_sigma + 10.0) * horizon;
  return road_edge_obstacles(config, x_min - 20.0, x_max + reach + 20.0);
}

WorldState init_scenario(const ScenarioConfig& config, Rng& rng) {
  config.validate();

  const double half_lane = 0.5 * config.lane_width;
  const bool from_left = config.scenario_kind == ScenarioKind::overtake_from_left;
  const double ego_lane = from_left ? half_lane : -half_lane;
  const double adjacent_lane = -ego_lane;

  auto draw_speed = [&]() {
    if (config.speed_noise_sigma == 0.0) return config.mean_initial_speed;
    std::normal_distribution<double> noise(0.0, config.speed_noise_sigma);
    return std::max(0.0, config.mean_initial_speed + noise(rng));
  };

  auto place = [&](Role role, double x, double y) {
    VehicleEntry v;
    v.role = role;
    v.cruise_speed = draw_speed();
    v.lane_center = y;
    v.state.position = {x, y};
    v.state.velocity = {v.cruise_speed, 0.0};
    v.state.radius = config.vehicle_radii.for_role(role);
    return v;
  };

  auto has = [&](Role role) {
    return std::find(config.hdv_roles.begin(), config.hdv_roles.end(), role) !=
           config.hdv_roles.end();
  };

  WorldState world;
  world.vehicles.push_back(place(Role::ego, 0.0, ego_lane));
  if (has(Role::errant_hdv)) {
    world.vehicles.push_back(place(Role::errant_hdv, config.errant_offset, adjacent_lane));
  }
  if (has(Role::lead_hdv)) {
    world.vehicles.push_back(
        place(Role::lead_hdv, config.errant_offset + config.lead_gap, adjacent_lane));
  }
  if (has(Role::rear_hdv)) {
    world.vehicles.push_back(place(Role::rear_hdv, -config.rear_gap, ego_lane));
  }

  if (config.hdv_maneuver.trigger_jitter > 0.0) {
    std::uniform_real_distribution<double> jitter(0.0, 2.0 * config.hdv_maneuver.trigger_jitter);
    world.maneuver.delay_ticks = std::llround(jitter(rng) / config.dt);
  }

  world.obstacles = scenario_obstacles(config);
  return world;
}

}  // namespace ttcshield::sim
