#pragma once

// Learned one-step dynamics: history windows, replay memories, and the shared
// HDV / ego predictors together with their fitting routines.

#include <array>
#include <cstddef>
#include <deque>
#include <span>
#include <utility>
#include <vector>

#include "ttcshield/error.hpp"
#include "ttcshield/rng.hpp"
#include "ttcshield/sim_world.hpp"

namespace ttcshield::prediction {

inline constexpr std::size_t kHistoryLength = 5;
inline constexpr std::size_t kStateDim = 6;
inline constexpr std::size_t kControlDim = 3;
inline constexpr std::size_t kHdvFeatures = kHistoryLength * kStateDim;                    // 30
inline constexpr std::size_t kCavHistoryFeatures = kHistoryLength * (kStateDim + kControlDim);  // 45
inline constexpr std::size_t kCavFeatures = kCavHistoryFeatures + kControlDim;            // 48
inline constexpr std::size_t kHiddenWidth = 64;

struct StateRow {
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  double ax = 0.0;
  double ay = 0.0;

  std::array<double, kStateDim> values() const { return {x, y, vx, vy, ax, ay}; }
  static StateRow from(std::span<const double> v) { return {v[0], v[1], v[2], v[3], v[4], v[5]}; }
  bool operator==(const StateRow&) const = default;
};

StateRow to_row(const sim::VehicleState& state);

// Oldest row first. For the ego, controls[k] is the command that produced rows[k].
struct HistoryWindow {
  std::vector<StateRow> rows;
  std::vector<sim::ControlCommand> controls;

  bool has_controls() const { return !controls.empty(); }
  const StateRow& last() const { return rows.back(); }

  // Drops the oldest row and appends `row` (with its producing command when tracked).
  void slide(const StateRow& row);
  void slide(const StateRow& row, const sim::ControlCommand& produced_by);

  bool operator==(const HistoryWindow&) const = default;
};

struct TransitionHDV {
  HistoryWindow window;
  StateRow next;

  bool operator==(const TransitionHDV&) const = default;
};

struct TransitionCAV {
  HistoryWindow window;
  sim::ControlCommand applied_action_command;  // executed at the window's final tick
  StateRow next;

  bool operator==(const TransitionCAV&) const = default;
};

// Row-major flattening with every position expressed relative to the last row.
std::array<double, kHdvFeatures> featurize_hdv(const HistoryWindow& window);

// 30 state features, 15 control features (throttle, steering, brake per row),
// then the candidate command in the same order.
std::array<double, kCavFeatures> featurize_cav(const HistoryWindow& window,
                                               const sim::ControlCommand& candidate);

// Learning target: position as a delta from the window's last row, the rest absolute.
StateRow target_row(const StateRow& last, const StateRow& next);
StateRow to_absolute(const StateRow& last, const StateRow& delta);

template <class T>
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ValidationError("replay memory capacity must be positive");
  }

  void push(T transition) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(transition));
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  const T& operator[](std::size_t i) const { return items_[i]; }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  // Uniform draw of b distinct transitions (partial Fisher-Yates over indices).
  std::vector<T> sample_batch(std::size_t b, Rng& rng) const {
    if (b > items_.size()) throw ValidationError("sample_batch: memory holds fewer than b items");
    std::vector<std::size_t> index(items_.size());
    for (std::size_t i = 0; i < index.size(); ++i) index[i] = i;
    std::vector<T> batch;
    batch.reserve(b);
    for (std::size_t i = 0; i < b; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, index.size() - 1);
      std::swap(index[i], index[pick(rng)]);
      batch.push_back(items_[index[i]]);
    }
    return batch;
  }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
};

using HdvMemory = ReplayMemory<TransitionHDV>;
using CavMemory = ReplayMemory<TransitionCAV>;

enum class ModelKind { linear, mlp3 };

const char* to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

// Affine map y = bias + x * weights with weights row-major [inputs x outputs].
struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  bool operator==(const DenseLayer&) const = default;
};

// prediction = output_mean + output_scale * net((features - input_mean) / input_scale)
// where net is one affine map (linear) or affine-tanh-affine-tanh-affine (mlp3).
struct Predictor {
  ModelKind kind = ModelKind::linear;
  std::size_t input_dim = 0;
  std::size_t output_dim = kStateDim;
  std::vector<double> input_mean;
  std::vector<double> input_scale;
  std::vector<double> output_mean;
  std::vector<double> output_scale;
  std::vector<DenseLayer> layers;

  void validate() const;  // throws ValidationError on inconsistent shapes
  bool operator==(const Predictor&) const = default;
};

// Identity normalization, zero parameters.
Predictor make_linear(std::size_t input_dim);
// Identity normalization, Glorot-uniform weights, zero biases.
Predictor make_mlp3(std::size_t input_dim, Rng& rng, std::size_t hidden = kHiddenWidth);

// Delta-form next row; see target_row.
StateRow predict(const Predictor& model, std::span<const double> features);

// (1/b) sum ||prediction - truth||^2
double mse_loss(std::span<const StateRow> predictions, std::span<const StateRow> truths);

// Flattened (features, delta-form target) pairs.
struct Dataset {
  std::size_t input_dim = 0;
  std::vector<double> features;  // size() x input_dim, row-major
  std::vector<double> targets;   // size() x kStateDim, row-major

  std::size_t size() const { return input_dim == 0 ? 0 : features.size() / input_dim; }
  std::span<const double> feature_row(std::size_t i) const {
    return {features.data() + i * input_dim, input_dim};
  }
  std::span<const double> target_values(std::size_t i) const {
    return {targets.data() + i * kStateDim, kStateDim};
  }
  void append(std::span<const double> f, std::span<const double> t);
  Dataset subset(std::span<const std::size_t> rows) const;
};

Dataset make_dataset(const HdvMemory& memory);
Dataset make_dataset(const CavMemory& memory);
Dataset make_dataset(std::span<const TransitionHDV> transitions);
Dataset make_dataset(std::span<const TransitionCAV> transitions);

// Mean squared error of the model over a dataset, in target units.
double dataset_mse(const Predictor& model, const Dataset& data);

// Sets input/output normalization from data (z-score; near-constant columns keep scale 1).
void fit_normalization(Predictor& model, const Dataset& data);

// Ridge least squares in normalized coordinates with an unpenalized intercept:
// (Zc'Zc / N + lambda I) W = Zc'Tc / N. Throws on fewer than input_dim samples or
// a numerically singular system when lambda == 0.
Predictor fit_linear_closed_form(const Dataset& data, double lambda_ridge);

template <class T>
Predictor fit_linear_closed_form(const ReplayMemory<T>& memory, double lambda_ridge) {
  return fit_linear_closed_form(make_dataset(memory), lambda_ridge);
}

// Loss and its gradient with respect to every layer, by backpropagation.
struct Gradient {
  double loss = 0.0;
  std::vector<DenseLayer> layers;  // same shapes as the model's
};

Gradient loss_gradient(const Predictor& model, const Dataset& data,
                       std::span<const std::size_t> rows);
Gradient loss_gradient(const Predictor& model, const Dataset& data);

// One full-batch gradient-descent step on the MSE; returns the pre-step loss.
std::pair<Predictor, double> train_step(const Predictor& model, const Dataset& batch,
                                        double learning_rate);
std::pair<Predictor, double> train_step(const Predictor& model, const Dataset& data,
                                        std::span<const std::size_t> rows, double learning_rate);

}  // namespace ttcshield::prediction
