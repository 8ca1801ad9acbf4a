#include <cmath>
#include <string>

#include "ttcshield/kernels.hpp"
#include "ttcshield/prediction.hpp"

namespace ttcshield::prediction {
namespace {

constexpr std::size_t kMaxWidth = 256;
constexpr double kMinScale = 1e-12;

bool has_hidden_activation(const Predictor& model, std::size_t layer) {
  return model.kind == ModelKind::mlp3 && layer + 1 < model.layers.size();
}

}  // namespace

const char* to_string(ModelKind kind) { return kind == ModelKind::linear ? "linear" : "mlp3"; }

ModelKind parse_model_kind(std::string_view text) {
  if (text == "linear") return ModelKind::linear;
  if (text == "mlp3") return ModelKind::mlp3;
  throw ValidationError("unknown model kind '" + std::string(text) + "'");
}

void Predictor::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ValidationError("predictor: " + what);
  };
  require(input_dim > 0 && input_dim <= kMaxWidth, "input_dim out of range");
  require(output_dim == kStateDim, "output_dim must be 6");
  require(input_mean.size() == input_dim && input_scale.size() == input_dim,
          "input normalization size mismatch");
  require(output_mean.size() == output_dim && output_scale.size() == output_dim,
          "output normalization size mismatch");
  for (double s : input_scale) require(std::isfinite(s) && s > 0.0, "input scales must be > 0");
  for (double s : output_scale) require(std::isfinite(s) && s > 0.0, "output scales must be > 0");
  require(layers.size() == (kind == ModelKind::linear ? 1u : 3u), "wrong layer count for kind");
  std::size_t width = input_dim;
  for (const DenseLayer& l : layers) {
    require(l.inputs == width, "layer input width does not chain");
    require(l.outputs > 0 && l.outputs <= kMaxWidth, "layer width out of range");
    require(l.weights.size() == l.inputs * l.outputs, "weight matrix size mismatch");
    require(l.bias.size() == l.outputs, "bias size mismatch");
    width = l.outputs;
  }
  require(width == output_dim, "final layer width must equal output_dim");
}

Predictor make_linear(std::size_t input_dim) {
  Predictor m;
  m.kind = ModelKind::linear;
  m.input_dim = input_dim;
  m.input_mean.assign(input_dim, 0.0);
  m.input_scale.assign(input_dim, 1.0);
  m.output_mean.assign(kStateDim, 0.0);
  m.output_scale.assign(kStateDim, 1.0);
  m.layers.push_back({input_dim, kStateDim, std::vector<double>(input_dim * kStateDim, 0.0),
                      std::vector<double>(kStateDim, 0.0)});
  m.validate();
  return m;
}

Predictor make_mlp3(std::size_t input_dim, Rng& rng, std::size_t hidden) {
  Predictor m;
  m.kind = ModelKind::mlp3;
  m.input_dim = input_dim;
  m.input_mean.assign(input_dim, 0.0);
  m.input_scale.assign(input_dim, 1.0);
  m.output_mean.assign(kStateDim, 0.0);
  m.output_scale.assign(kStateDim, 1.0);
  const std::size_t widths[4] = {input_dim, hidden, hidden, kStateDim};
  for (int l = 0; l < 3; ++l) {
    DenseLayer layer{widths[l], widths[l + 1], {}, std::vector<double>(widths[l + 1], 0.0)};
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.inputs + layer.outputs));
    std::uniform_real_distribution<double> init(-limit, limit);
    layer.weights.resize(layer.inputs * layer.outputs);
    for (double& w : layer.weights) w = init(rng);
    m.layers.push_back(std::move(layer));
  }
  m.validate();
  return m;
}

StateRow predict(const Predictor& model, std::span<const double> features) {
  if (features.size() != model.input_dim) {
    throw ValidationError("predict: expected " + std::to_string(model.input_dim) +
                          " features, got " + std::to_string(features.size()));
  }
  const kernels::KernelTable& k = kernels::active();
  std::array<double, kMaxWidth> a{};
  std::array<double, kMaxWidth> b{};
  for (std::size_t j = 0; j < model.input_dim; ++j) {
    a[j] = (features[j] - model.input_mean[j]) / model.input_scale[j];
  }
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const DenseLayer& layer = model.layers[l];
    k.affine(a.data(), layer.inputs, layer.weights.data(), layer.bias.data(), layer.outputs,
             b.data());
    if (has_hidden_activation(model, l)) {
      for (std::size_t i = 0; i < layer.outputs; ++i) b[i] = std::tanh(b[i]);
    }
    std::swap(a, b);
  }
  std::array<double, kStateDim> out{};
  for (std::size_t i = 0; i < kStateDim; ++i) {
    out[i] = model.output_mean[i] + model.output_scale[i] * a[i];
  }
  return StateRow::from(out);
}

double mse_loss(std::span<const StateRow> predictions, std::span<const StateRow> truths) {
  if (predictions.empty()) throw ValidationError("mse_loss: empty batch");
  if (predictions.size() != truths.size()) throw ValidationError("mse_loss: batch size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto p = predictions[i].values();
    const auto t = truths[i].values();
    for (std::size_t c = 0; c < kStateDim; ++c) {
      const double e = p[c] - t[c];
      total += e * e;
    }
  }
  return total / static_cast<double>(predictions.size());
}

double dataset_mse(const Predictor& model, const Dataset& data) {
  if (data.size() == 0) throw ValidationError("dataset_mse: empty dataset");
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto p = predict(model, data.feature_row(i)).values();
    const auto t = data.target_values(i);
    for (std::size_t c = 0; c < kStateDim; ++c) {
      const double e = p[c] - t[c];
      total += e * e;
    }
  }
  return total / static_cast<double>(data.size());
}

void fit_normalization(Predictor& model, const Dataset& data) {
  if (data.input_dim != model.input_dim) throw ValidationError("fit_normalization: width mismatch");
  const std::size_t n = data.size();
  if (n == 0) throw ValidationError("fit_normalization: empty dataset");
  auto column_stats = [n](auto value, std::size_t columns, std::vector<double>& mean,
                          std::vector<double>& scale) {
    mean.assign(columns, 0.0);
    scale.assign(columns, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < columns; ++c) mean[c] += value(i, c);
    }
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < columns; ++c) {
        const double d = value(i, c) - mean[c];
        scale[c] += d * d;
      }
    }
    for (double& s : scale) {
      s = std::sqrt(s / static_cast<double>(n));
      if (!(s > kMinScale)) s = 1.0;
    }
  };
  column_stats([&](std::size_t i, std::size_t c) { return data.feature_row(i)[c]; },
               data.input_dim, model.input_mean, model.input_scale);
  column_stats([&](std::size_t i, std::size_t c) { return data.target_values(i)[c]; }, kStateDim,
               model.output_mean, model.output_scale);
}

}  // namespace ttcshield::prediction
