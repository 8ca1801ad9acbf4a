#include <string>

#include "ttcshield/prediction.hpp"

namespace ttcshield::prediction {
namespace {

void check_rows(const HistoryWindow& window) {
  if (window.rows.size() != kHistoryLength) {
    throw ValidationError("history window must hold exactly " + std::to_string(kHistoryLength) +
                          " rows, got " + std::to_string(window.rows.size()));
  }
}

template <class Out>
void write_states(const HistoryWindow& window, Out& out) {
  const StateRow& anchor = window.rows.back();
  std::size_t k = 0;
  for (const StateRow& r : window.rows) {
    out[k++] = r.x - anchor.x;
    out[k++] = r.y - anchor.y;
    out[k++] = r.vx;
    out[k++] = r.vy;
    out[k++] = r.ax;
    out[k++] = r.ay;
  }
}

}  // namespace

StateRow to_row(const sim::VehicleState& s) {
  return {s.position.x, s.position.y, s.velocity.x, s.velocity.y, s.acceleration.x,
          s.acceleration.y};
}

void HistoryWindow::slide(const StateRow& row) {
  rows.erase(rows.begin());
  rows.push_back(row);
}

void HistoryWindow::slide(const StateRow& row, const sim::ControlCommand& produced_by) {
  slide(row);
  if (!controls.empty()) {
    controls.erase(controls.begin());
    controls.push_back(produced_by);
  }
}

std::array<double, kHdvFeatures> featurize_hdv(const HistoryWindow& window) {
  check_rows(window);
  std::array<double, kHdvFeatures> out{};
  write_states(window, out);
  return out;
}

std::array<double, kCavFeatures> featurize_cav(const HistoryWindow& window,
                                               const sim::ControlCommand& candidate) {
  check_rows(window);
  if (window.controls.size() != kHistoryLength) {
    throw ValidationError("ego history window must carry " + std::to_string(kHistoryLength) +
                          " control rows");
  }
  std::array<double, kCavFeatures> out{};
  write_states(window, out);
  std::size_t k = kHdvFeatures;
  for (const sim::ControlCommand& c : window.controls) {
    out[k++] = c.throttle;
    out[k++] = c.steering;
    out[k++] = c.brake;
  }
  out[k++] = candidate.throttle;
  out[k++] = candidate.steering;
  out[k++] = candidate.brake;
  return out;
}

StateRow target_row(const StateRow& last, const StateRow& next) {
  StateRow t = next;
  t.x = next.x - last.x;
  t.y = next.y - last.y;
  return t;
}

StateRow to_absolute(const StateRow& last, const StateRow& delta) {
  StateRow r = delta;
  r.x = last.x + delta.x;
  r.y = last.y + delta.y;
  return r;
}

void Dataset::append(std::span<const double> f, std::span<const double> t) {
  if (input_dim == 0) input_dim = f.size();
  if (f.size() != input_dim || t.size() != kStateDim) {
    throw ValidationError("dataset row has the wrong width");
  }
  features.insert(features.end(), f.begin(), f.end());
  targets.insert(targets.end(), t.begin(), t.end());
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.input_dim = input_dim;
  out.features.reserve(rows.size() * input_dim);
  out.targets.reserve(rows.size() * kStateDim);
  for (std::size_t r : rows) {
    const auto f = feature_row(r);
    const auto t = target_values(r);
    out.features.insert(out.features.end(), f.begin(), f.end());
    out.targets.insert(out.targets.end(), t.begin(), t.end());
  }
  return out;
}

Dataset make_dataset(std::span<const TransitionHDV> transitions) {
  Dataset data;
  data.input_dim = kHdvFeatures;
  data.features.reserve(transitions.size() * kHdvFeatures);
  data.targets.reserve(transitions.size() * kStateDim);
  for (const TransitionHDV& t : transitions) {
    data.append(featurize_hdv(t.window), target_row(t.window.last(), t.next).values());
  }
  return data;
}

Dataset make_dataset(std::span<const TransitionCAV> transitions) {
  Dataset data;
  data.input_dim = kCavFeatures;
  data.features.reserve(transitions.size() * kCavFeatures);
  data.targets.reserve(transitions.size() * kStateDim);
  for (const TransitionCAV& t : transitions) {
    data.append(featurize_cav(t.window, t.applied_action_command),
                target_row(t.window.last(), t.next).values());
  }
  return data;
}

Dataset make_dataset(const HdvMemory& memory) {
  Dataset data;
  data.input_dim = kHdvFeatures;
  for (const TransitionHDV& t : memory) {
    data.append(featurize_hdv(t.window), target_row(t.window.last(), t.next).values());
  }
  return data;
}

Dataset make_dataset(const CavMemory& memory) {
  Dataset data;
  data.input_dim = kCavFeatures;
  for (const TransitionCAV& t : memory) {
    data.append(featurize_cav(t.window, t.applied_action_command),
                target_row(t.window.last(), t.next).values());
  }
  return data;
}

}  // namespace ttcshield::prediction
