#include "ttcshield/trace_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "ttcshield/error.hpp"
#include "ttcshield/pipeline.hpp"

namespace ttcshield::io {
namespace {

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& text, std::size_t line_no) {
  // strtod accepts inf/nan spellings the writer never emits; reject non-finite values.
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(v)) {
    throw ValidationError("trace line " + std::to_string(line_no) + ": bad number '" + text + "'");
  }
  return v;
}

std::int64_t parse_tick(const std::string& text, std::size_t line_no) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || v < 0) {
    throw ValidationError("trace line " + std::to_string(line_no) + ": bad tick '" + text + "'");
  }
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace

void write_trace_csv(std::ostream& out, std::span<const sim::WorldState> trace) {
  out << kTraceHeader << '\n';
  for (const sim::WorldState& w : trace) {
    for (const sim::VehicleEntry& v : w.vehicles) {
      const sim::VehicleState& s = v.state;
      out << w.tick << ',' << sim::to_string(v.role) << ',' << fmt17(s.position.x) << ','
          << fmt17(s.position.y) << ',' << fmt17(s.velocity.x) << ',' << fmt17(s.velocity.y) << ','
          << fmt17(s.acceleration.x) << ',' << fmt17(s.acceleration.y) << ',' << fmt17(s.heading)
          << ',' << fmt17(s.steering_position) << ',' << fmt17(v.last_command.throttle) << ','
          << fmt17(v.last_command.brake) << '\n';
    }
  }
}

void write_trace_csv(const std::filesystem::path& path, std::span<const sim::WorldState> trace) {
  std::ofstream out = open_out(path);
  write_trace_csv(out, trace);
  finish(out, path);
}

std::vector<sim::WorldState> read_trace_csv(std::istream& in, const sim::VehicleRadii& radii) {
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.empty() || text.back() != '\n') {
    throw ValidationError("trace is empty or ends mid-line (truncated?)");
  }
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTraceHeader) throw ValidationError("trace header mismatch: '" + line + "'");

  std::vector<sim::WorldState> trace;
  std::size_t line_no = 1;
  while (std::getline(lines, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> f = split_fields(line);
    if (f.size() != 12) {
      throw ValidationError("trace line " + std::to_string(line_no) + ": expected 12 fields, got " +
                            std::to_string(f.size()));
    }
    const std::int64_t tick = parse_tick(f[0], line_no);
    if (trace.empty() || trace.back().tick != tick) {
      const std::int64_t expected = trace.empty() ? tick : trace.back().tick + 1;
      if (tick != expected) {
        throw ValidationError("trace line " + std::to_string(line_no) + ": tick " +
                              std::to_string(tick) + " out of sequence");
      }
      trace.emplace_back();
      trace.back().tick = tick;
    }
    sim::VehicleEntry v;
    v.role = sim::parse_role(f[1]);
    v.state.position = {parse_double(f[2], line_no), parse_double(f[3], line_no)};
    v.state.velocity = {parse_double(f[4], line_no), parse_double(f[5], line_no)};
    v.state.acceleration = {parse_double(f[6], line_no), parse_double(f[7], line_no)};
    v.state.heading = parse_double(f[8], line_no);
    v.state.steering_position = parse_double(f[9], line_no);
    v.state.radius = radii.for_role(v.role);
    v.last_command = {parse_double(f[10], line_no), parse_double(f[11], line_no),
                      v.state.steering_position};
    v.cruise_speed = v.state.speed();
    v.lane_center = v.state.position.y;
    trace.back().vehicles.push_back(v);
  }
  if (trace.empty()) throw ValidationError("trace has no rows");

  const std::vector<sim::VehicleEntry>& first = trace.front().vehicles;
  std::size_t egos = 0;
  for (const sim::VehicleEntry& v : first) egos += v.role == sim::Role::ego ? 1 : 0;
  if (egos != 1) throw ValidationError("trace must contain exactly one ego per tick");
  for (const sim::WorldState& w : trace) {
    bool same = w.vehicles.size() == first.size();
    for (std::size_t i = 0; same && i < first.size(); ++i) same = w.vehicles[i].role == first[i].role;
    if (!same) {
      throw ValidationError("trace tick " + std::to_string(w.tick) +
                            " does not list the same vehicles as the first tick (truncated?)");
    }
  }
  return trace;
}

std::vector<sim::WorldState> read_trace_csv(const std::filesystem::path& path,
                                            const sim::VehicleRadii& radii) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open trace '" + path.string() + "'");
  return read_trace_csv(in, radii);
}

void write_sweep_csv(std::ostream& out, std::span<const pipeline::SweepCell> cells) {
  out << kSweepHeader << '\n';
  for (const pipeline::SweepCell& c : cells) {
    out << fmt17(c.speed) << ',' << c.n << ',' << c.h << ',' << c.runs << ',' << c.successes << ','
        << fmt17(c.success_rate()) << '\n';
  }
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const pipeline::SweepCell> cells) {
  std::ofstream out = open_out(path);
  write_sweep_csv(out, cells);
  finish(out, path);
}

}  // namespace ttcshield::io
