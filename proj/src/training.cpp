#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <string>

#include "ttcshield/prediction.hpp"

namespace ttcshield::prediction {
namespace {

constexpr double kSingularRcond = 1e-12;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

bool hidden_activation(const Predictor& model, std::size_t layer) {
  return model.kind == ModelKind::mlp3 && layer + 1 < model.layers.size();
}

}  // namespace

Predictor fit_linear_closed_form(const Dataset& data, double lambda_ridge) {
  const std::size_t n = data.size();
  const std::size_t d = data.input_dim;
  if (!(lambda_ridge >= 0.0) || !std::isfinite(lambda_ridge)) {
    throw ValidationError("fit_linear_closed_form: lambda_ridge must be finite and >= 0");
  }
  if (d == 0 || n < d) {
    throw ValidationError("fit_linear_closed_form: need at least " + std::to_string(d) +
                          " samples, got " + std::to_string(n));
  }

  Predictor model = make_linear(d);
  fit_normalization(model, data);

  RowMatrix z(n, d);
  RowMatrix t(n, kStateDim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto f = data.feature_row(i);
    const auto y = data.target_values(i);
    for (std::size_t j = 0; j < d; ++j) z(i, j) = (f[j] - model.input_mean[j]) / model.input_scale[j];
    for (std::size_t c = 0; c < kStateDim; ++c) {
      t(i, c) = (y[c] - model.output_mean[c]) / model.output_scale[c];
    }
  }
  const Eigen::RowVectorXd z_mean = z.colwise().mean();
  const Eigen::RowVectorXd t_mean = t.colwise().mean();
  z.rowwise() -= z_mean;
  t.rowwise() -= t_mean;

  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd normal = (z.transpose() * z) * inv_n;
  normal.diagonal().array() += lambda_ridge;
  const Eigen::MatrixXd rhs = (z.transpose() * t) * inv_n;

  const Eigen::LLT<Eigen::MatrixXd> llt(normal);
  if (llt.info() != Eigen::Success || llt.rcond() < kSingularRcond) {
    throw ValidationError("fit_linear_closed_form: normal matrix is singular" +
                          std::string(lambda_ridge == 0.0 ? " (lambda_ridge = 0)" : ""));
  }
  const Eigen::MatrixXd w = llt.solve(rhs);
  const Eigen::RowVectorXd b = t_mean - z_mean * w;

  DenseLayer& layer = model.layers.front();
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t c = 0; c < kStateDim; ++c) layer.weights[j * kStateDim + c] = w(j, c);
  }
  for (std::size_t c = 0; c < kStateDim; ++c) layer.bias[c] = b(c);
  return model;
}

Gradient loss_gradient(const Predictor& model, const Dataset& data,
                       std::span<const std::size_t> rows) {
  if (rows.empty()) throw ValidationError("loss_gradient: empty batch");
  if (data.input_dim != model.input_dim) {
    throw ValidationError("loss_gradient: dataset width " + std::to_string(data.input_dim) +
                          " does not match model input_dim " + std::to_string(model.input_dim));
  }
  Gradient g;
  for (const DenseLayer& l : model.layers) {
    g.layers.push_back({l.inputs, l.outputs, std::vector<double>(l.weights.size(), 0.0),
                        std::vector<double>(l.bias.size(), 0.0)});
  }

  const std::size_t depth = model.layers.size();
  std::vector<std::vector<double>> acts(depth + 1);
  acts[0].resize(model.input_dim);
  for (std::size_t l = 0; l < depth; ++l) acts[l + 1].resize(model.layers[l].outputs);
  std::vector<double> delta;
  std::vector<double> back;
  const double scale = 2.0 / static_cast<double>(rows.size());

  for (std::size_t r : rows) {
    const auto f = data.feature_row(r);
    const auto target = data.target_values(r);
    for (std::size_t j = 0; j < model.input_dim; ++j) {
      acts[0][j] = (f[j] - model.input_mean[j]) / model.input_scale[j];
    }
    for (std::size_t l = 0; l < depth; ++l) {
      const DenseLayer& layer = model.layers[l];
      std::vector<double>& out = acts[l + 1];
      for (std::size_t i = 0; i < layer.outputs; ++i) out[i] = layer.bias[i];
      for (std::size_t j = 0; j < layer.inputs; ++j) {
        const double x = acts[l][j];
        const double* w = layer.weights.data() + j * layer.outputs;
        for (std::size_t i = 0; i < layer.outputs; ++i) out[i] += x * w[i];
      }
      if (hidden_activation(model, l)) {
        for (double& v : out) v = std::tanh(v);
      }
    }

    delta.assign(kStateDim, 0.0);
    for (std::size_t c = 0; c < kStateDim; ++c) {
      const double y = model.output_mean[c] + model.output_scale[c] * acts[depth][c];
      const double e = y - target[c];
      g.loss += e * e;
      delta[c] = scale * e * model.output_scale[c];
    }

    for (std::size_t l = depth; l-- > 0;) {
      const DenseLayer& layer = model.layers[l];
      DenseLayer& grad = g.layers[l];
      for (std::size_t i = 0; i < layer.outputs; ++i) grad.bias[i] += delta[i];
      for (std::size_t j = 0; j < layer.inputs; ++j) {
        const double x = acts[l][j];
        double* gw = grad.weights.data() + j * layer.outputs;
        for (std::size_t i = 0; i < layer.outputs; ++i) gw[i] += x * delta[i];
      }
      if (l == 0) break;
      back.assign(layer.inputs, 0.0);
      for (std::size_t j = 0; j < layer.inputs; ++j) {
        const double* w = layer.weights.data() + j * layer.outputs;
        double s = 0.0;
        for (std::size_t i = 0; i < layer.outputs; ++i) s += w[i] * delta[i];
        if (hidden_activation(model, l - 1)) s *= 1.0 - acts[l][j] * acts[l][j];
        back[j] = s;
      }
      delta.swap(back);
    }
  }
  g.loss /= static_cast<double>(rows.size());
  return g;
}

Gradient loss_gradient(const Predictor& model, const Dataset& data) {
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return loss_gradient(model, data, rows);
}

std::pair<Predictor, double> train_step(const Predictor& model, const Dataset& data,
                                        std::span<const std::size_t> rows, double learning_rate) {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("train_step: learning_rate must be finite and non-negative");
  }
  const Gradient g = loss_gradient(model, data, rows);
  Predictor next = model;
  if (learning_rate > 0.0) {
    for (std::size_t l = 0; l < next.layers.size(); ++l) {
      DenseLayer& layer = next.layers[l];
      for (std::size_t k = 0; k < layer.weights.size(); ++k) {
        layer.weights[k] -= learning_rate * g.layers[l].weights[k];
      }
      for (std::size_t k = 0; k < layer.bias.size(); ++k) {
        layer.bias[k] -= learning_rate * g.layers[l].bias[k];
      }
    }
  }
  return {std::move(next), g.loss};
}

std::pair<Predictor, double> train_step(const Predictor& model, const Dataset& batch,
                                        double learning_rate) {
  std::vector<std::size_t> rows(batch.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return train_step(model, batch, rows, learning_rate);
}

}  // namespace ttcshield::prediction
