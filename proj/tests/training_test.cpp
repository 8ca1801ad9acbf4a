#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "ttcshield/error.hpp"
#include "ttcshield/prediction.hpp"

namespace ttcshield::prediction {
namespace {

struct AffineTruth {
  std::vector<double> a;  // d x 6 row-major
  std::vector<double> c;
};

AffineTruth random_truth(Rng& rng, std::size_t d) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  AffineTruth t{std::vector<double>(d * kStateDim), std::vector<double>(kStateDim)};
  for (double& v : t.a) v = u(rng);
  for (double& v : t.c) v = 3.0 * u(rng);
  return t;
}

std::vector<double> affine_value(const AffineTruth& t, std::span<const double> f) {
  std::vector<double> y = t.c;
  for (std::size_t j = 0; j < f.size(); ++j) {
    for (std::size_t c = 0; c < kStateDim; ++c) y[c] += f[j] * t.a[j * kStateDim + c];
  }
  return y;
}

std::vector<double> random_features(Rng& rng, std::size_t d) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> f(d);
  for (std::size_t j = 0; j < d; ++j) f[j] = u(rng) * (1.0 + static_cast<double>(j % 4)) + 0.5 * j;
  return f;
}

Dataset affine_dataset(Rng& rng, const AffineTruth& truth, std::size_t d, std::size_t n,
                       double noise = 0.0) {
  std::normal_distribution<double> eps(0.0, 1.0);
  Dataset data;
  data.input_dim = d;
  for (std::size_t i = 0; i < n; ++i) {
    const auto f = random_features(rng, d);
    auto y = affine_value(truth, f);
    for (double& v : y) v += noise * eps(rng);
    data.append(f, y);
  }
  return data;
}

TEST(ClosedForm, RecoversExactAffineMapWithoutRidge) {
  Rng rng(1);
  const std::size_t d = kHdvFeatures;
  const AffineTruth truth = random_truth(rng, d);
  const Dataset data = affine_dataset(rng, truth, d, 200);
  const Predictor m = fit_linear_closed_form(data, 0.0);
  EXPECT_LT(dataset_mse(m, data), 1e-16);
  for (int i = 0; i < 50; ++i) {
    const auto f = random_features(rng, d);
    const auto want = affine_value(truth, f);
    const auto got = predict(m, f).values();
    for (std::size_t c = 0; c < kStateDim; ++c) EXPECT_NEAR(got[c], want[c], 1e-8);
  }
}

TEST(ClosedForm, EffectiveWeightsMatchTruth) {
  Rng rng(2);
  const std::size_t d = 12;
  const AffineTruth truth = random_truth(rng, d);
  const Predictor m = fit_linear_closed_form(affine_dataset(rng, truth, d, 100), 0.0);
  const std::vector<double> zero(d, 0.0);
  const auto base = predict(m, zero).values();
  for (std::size_t c = 0; c < kStateDim; ++c) EXPECT_NEAR(base[c], truth.c[c], 1e-8);
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> e(d, 0.0);
    e[j] = 1.0;
    const auto p = predict(m, e).values();
    for (std::size_t c = 0; c < kStateDim; ++c) {
      EXPECT_NEAR(p[c] - base[c], truth.a[j * kStateDim + c], 1e-8);
    }
  }
}

TEST(ClosedForm, HugeRidgePredictsTargetMean) {
  Rng rng(3);
  const std::size_t d = 8;
  const AffineTruth truth = random_truth(rng, d);
  const Dataset data = affine_dataset(rng, truth, d, 64, 0.1);
  std::vector<double> mean(kStateDim, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t c = 0; c < kStateDim; ++c) mean[c] += data.target_values(i)[c] / 64.0;
  }
  const Predictor m = fit_linear_closed_form(data, 1e12);
  for (int i = 0; i < 10; ++i) {
    const auto p = predict(m, random_features(rng, d)).values();
    for (std::size_t c = 0; c < kStateDim; ++c) EXPECT_NEAR(p[c], mean[c], 1e-6);
  }
}

TEST(ClosedForm, DuplicatedSamplesGiveSameFit) {
  Rng rng(4);
  const std::size_t d = 10;
  const AffineTruth truth = random_truth(rng, d);
  const Dataset data = affine_dataset(rng, truth, d, 40, 0.3);
  Dataset twice = data;
  for (std::size_t i = 0; i < data.size(); ++i) twice.append(data.feature_row(i), data.target_values(i));
  const Predictor a = fit_linear_closed_form(data, 1e-3);
  const Predictor b = fit_linear_closed_form(twice, 1e-3);
  for (int i = 0; i < 20; ++i) {
    const auto f = random_features(rng, d);
    const auto pa = predict(a, f).values();
    const auto pb = predict(b, f).values();
    for (std::size_t c = 0; c < kStateDim; ++c) EXPECT_NEAR(pa[c], pb[c], 1e-9);
  }
}

TEST(ClosedForm, RejectsTooFewSamplesAndSingularSystems) {
  Rng rng(5);
  const AffineTruth truth = random_truth(rng, 6);
  EXPECT_THROW(fit_linear_closed_form(affine_dataset(rng, truth, 6, 5), 0.0), ValidationError);
  Dataset collinear;
  collinear.input_dim = 2;
  for (int i = 0; i < 10; ++i) {
    const double v = static_cast<double>(i);
    const std::vector<double> f{v, 2.0 * v};
    collinear.append(f, std::vector<double>(kStateDim, v));
  }
  EXPECT_THROW(fit_linear_closed_form(collinear, 0.0), ValidationError);
  EXPECT_NO_THROW(fit_linear_closed_form(collinear, 1e-3));
  EXPECT_THROW(fit_linear_closed_form(collinear, -1.0), ValidationError);
}

TEST(ClosedForm, NoWorseThanLongGradientDescent) {
  Rng rng(6);
  const std::size_t d = 10;
  const AffineTruth truth = random_truth(rng, d);
  const Dataset data = affine_dataset(rng, truth, d, 300, 0.5);
  const Predictor exact = fit_linear_closed_form(data, 0.0);
  Predictor gd = make_linear(d);
  fit_normalization(gd, data);
  double previous = dataset_mse(gd, data);
  for (int step = 0; step < 10000; ++step) {
    auto [next, loss] = train_step(gd, data, 0.02);
    ASSERT_LE(loss, previous * (1.0 + 1e-12) + 1e-15) << "step " << step;
    previous = loss;
    gd = std::move(next);
  }
  const double exact_mse = dataset_mse(exact, data);
  const double gd_mse = dataset_mse(gd, data);
  EXPECT_LE(exact_mse, gd_mse * (1.0 + 1e-12));
  EXPECT_NEAR(exact_mse, gd_mse, 1e-6 * gd_mse);
}

TEST(TrainStep, ZeroLearningRateLeavesModelUnchanged) {
  Rng rng(7);
  const AffineTruth truth = random_truth(rng, 6);
  const Dataset data = affine_dataset(rng, truth, 6, 20, 0.1);
  Predictor m = make_mlp3(6, rng, 8);
  fit_normalization(m, data);
  const auto [next, loss] = train_step(m, data, 0.0);
  EXPECT_EQ(next, m);
  EXPECT_GT(loss, 0.0);
  EXPECT_THROW(train_step(m, data, -1.0), ValidationError);
}

TEST(TrainStep, SingleSampleLossDecreases) {
  Rng rng(8);
  const AffineTruth truth = random_truth(rng, 6);
  for (ModelKind kind : {ModelKind::linear, ModelKind::mlp3}) {
    const Dataset data = affine_dataset(rng, truth, 6, 1);
    Predictor m = kind == ModelKind::linear ? make_linear(6) : make_mlp3(6, rng, 16);
    const double before = dataset_mse(m, data);
    ASSERT_GT(before, 0.0);
    for (int i = 0; i < 5; ++i) m = train_step(m, data, 1e-3).first;
    EXPECT_LT(dataset_mse(m, data), before) << to_string(kind);
  }
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

double perturbed_loss(Predictor m, const Dataset& data, std::size_t layer, bool bias,
                      std::size_t k, double delta) {
  (bias ? m.layers[layer].bias[k] : m.layers[layer].weights[k]) += delta;
  return loss_gradient(m, data).loss;
}

void check_gradient(const Predictor& m, const Dataset& data, Rng& rng, std::size_t probes) {
  const double eps = 1e-5;
  const Gradient g = loss_gradient(m, data);
  ASSERT_EQ(g.layers.size(), m.layers.size());
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const DenseLayer& layer = m.layers[l];
    ASSERT_EQ(g.layers[l].weights.size(), layer.weights.size());
    ASSERT_EQ(g.layers[l].bias.size(), layer.bias.size());
    auto probe = [&](bool bias, std::size_t k) {
      const double analytic = bias ? g.layers[l].bias[k] : g.layers[l].weights[k];
      const double numeric = (perturbed_loss(m, data, l, bias, k, eps) -
                              perturbed_loss(m, data, l, bias, k, -eps)) /
                             (2.0 * eps);
      EXPECT_LT(relative_error(analytic, numeric), 1e-4)
          << "layer " << l << (bias ? " bias " : " weight ") << k << ": " << analytic << " vs "
          << numeric;
    };
    if (probes == 0) {
      for (std::size_t k = 0; k < layer.weights.size(); ++k) probe(false, k);
      for (std::size_t k = 0; k < layer.bias.size(); ++k) probe(true, k);
    } else {
      std::uniform_int_distribution<std::size_t> wk(0, layer.weights.size() - 1);
      std::uniform_int_distribution<std::size_t> bk(0, layer.bias.size() - 1);
      for (std::size_t i = 0; i < probes; ++i) {
        probe(false, wk(rng));
        probe(true, bk(rng));
      }
    }
  }
}

Predictor randomized_mlp3(std::size_t d, std::size_t hidden, Rng& rng) {
  Predictor m = make_mlp3(d, rng, hidden);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (DenseLayer& l : m.layers) {
    for (double& b : l.bias) b = u(rng);
  }
  return m;
}

TEST(Gradient, FiniteDifferencesSmallNetworkEveryParameter) {
  Rng rng(9);
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t d = 4;
    const AffineTruth truth = random_truth(rng, d);
    const Dataset data = affine_dataset(rng, truth, d, 6, 0.2);
    Predictor m = randomized_mlp3(d, 8, rng);
    fit_normalization(m, data);
    check_gradient(m, data, rng, 0);
    if (HasFailure()) return;
  }
}

TEST(Gradient, FiniteDifferencesFullWidthRandomCoordinates) {
  Rng rng(10);
  for (int draw = 0; draw < 5; ++draw) {
    const AffineTruth truth = random_truth(rng, kHdvFeatures);
    const Dataset data = affine_dataset(rng, truth, kHdvFeatures, 16, 0.2);
    Predictor m = randomized_mlp3(kHdvFeatures, kHiddenWidth, rng);
    fit_normalization(m, data);
    check_gradient(m, data, rng, 40);
  }
}

TEST(Gradient, LinearFiniteDifferences) {
  Rng rng(11);
  const AffineTruth truth = random_truth(rng, 5);
  const Dataset data = affine_dataset(rng, truth, 5, 12, 0.2);
  Predictor m = fit_linear_closed_form(data, 0.1);
  check_gradient(m, data, rng, 0);
}

TEST(Gradient, LossMatchesDatasetMse) {
  Rng rng(12);
  const AffineTruth truth = random_truth(rng, 7);
  const Dataset data = affine_dataset(rng, truth, 7, 25, 0.2);
  Predictor m = randomized_mlp3(7, 16, rng);
  fit_normalization(m, data);
  EXPECT_NEAR(loss_gradient(m, data).loss, dataset_mse(m, data), 1e-12);
  const std::vector<std::size_t> empty;
  EXPECT_THROW(loss_gradient(m, data, empty), ValidationError);
}

TEST(Normalization, StandardizesColumnsAndKeepsConstantOnes) {
  Dataset data;
  data.input_dim = 2;
  for (int i = 0; i < 4; ++i) {
    const std::vector<double> f{static_cast<double>(i), 5.0};
    data.append(f, std::vector<double>(kStateDim, 2.0 * i));
  }
  Predictor m = make_linear(2);
  fit_normalization(m, data);
  EXPECT_DOUBLE_EQ(m.input_mean[0], 1.5);
  EXPECT_DOUBLE_EQ(m.input_scale[0], std::sqrt(1.25));
  EXPECT_DOUBLE_EQ(m.input_mean[1], 5.0);
  EXPECT_EQ(m.input_scale[1], 1.0);
  EXPECT_DOUBLE_EQ(m.output_mean[0], 3.0);
  EXPECT_DOUBLE_EQ(m.output_scale[0], std::sqrt(5.0));
}

}  // namespace
}  // namespace ttcshield::prediction
