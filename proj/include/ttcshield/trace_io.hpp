#pragma once

// CSV formats: per-tick episode traces and the sweep table.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "ttcshield/sim_world.hpp"

namespace ttcshield::pipeline {
struct SweepCell;
}

namespace ttcshield::io {

inline constexpr const char* kTraceHeader =
    "tick,role,x,y,vx,vy,ax,ay,heading,steering,throttle,brake";
inline constexpr const char* kSweepHeader = "speed,n,h,runs,successes,success_rate";

// One row per vehicle per tick, tick-major, vehicles in world order. Values are
// printed with 17 significant digits so a trace reads back bit-exact.
void write_trace_csv(std::ostream& out, std::span<const sim::WorldState> trace);
void write_trace_csv(const std::filesystem::path& path, std::span<const sim::WorldState> trace);

// Rebuilds the snapshots (without obstacles). Radii come from `radii`. Throws
// ValidationError on a malformed or truncated document: wrong header, bad field,
// a tick missing vehicles, non-consecutive ticks, or no final newline.
std::vector<sim::WorldState> read_trace_csv(std::istream& in, const sim::VehicleRadii& radii = {});
std::vector<sim::WorldState> read_trace_csv(const std::filesystem::path& path,
                                            const sim::VehicleRadii& radii = {});

void write_sweep_csv(std::ostream& out, std::span<const pipeline::SweepCell> cells);
void write_sweep_csv(const std::filesystem::path& path, std::span<const pipeline::SweepCell> cells);

}  // namespace ttcshield::io
