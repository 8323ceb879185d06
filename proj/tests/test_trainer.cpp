#include <gtest/gtest.h>

#include "slidenet/trainer.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace slidenet;

namespace {

Weights<double> single(const Tensor<double>& t) {
  Weights<double> w;
  w.params.push_back({"p", t});
  return w;
}

std::vector<FrameVolume> random_volumes(std::size_t n, std::uint64_t seed, std::array<std::size_t, 3> mix) {
  SplitMix64 rng(seed);
  std::vector<FrameVolume> out;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < mix[c] && out.size() < n; ++i) {
      out.push_back({oracle::random_tensor<float>({1, 8, 32, 32}, rng, 0.0, 1.0), out.size(), out.size() + 7,
                     category_from_index(c)});
    }
  return out;
}

}  // namespace

TEST(SgdStep, PlainGradientDescentWithoutMomentum) {
  auto w = single(Tensor<double>(Shape{3}, std::vector<double>{1.0, -2.0, 0.5}));
  const auto g = single(Tensor<double>(Shape{3}, std::vector<double>{0.5, 1.0, -4.0}));
  auto v = Weights<double>::zeros_like(w);
  sgd_step(w, g, v, 0.1, 0.0);
  EXPECT_DOUBLE_EQ(w[0][0], 1.0 - 0.1 * 0.5);
  EXPECT_DOUBLE_EQ(w[0][1], -2.0 - 0.1 * 1.0);
  EXPECT_DOUBLE_EQ(w[0][2], 0.5 + 0.1 * 4.0);
}

TEST(SgdStep, ZeroGradientAndVelocityLeaveWeights) {
  const auto w0 = single(Tensor<double>(Shape{2}, std::vector<double>{3.0, 4.0}));
  auto w = w0;
  auto v = Weights<double>::zeros_like(w);
  sgd_step(w, Weights<double>::zeros_like(w), v, 0.5, 0.9);
  EXPECT_EQ(w, w0);
}

TEST(SgdStep, MomentumMatchesUnrolledRecurrence) {
  const double w0 = 2.0, g = 0.3, lr = 0.05, mu = 0.9;
  auto w = single(Tensor<double>(Shape{1}, w0));
  const auto gw = single(Tensor<double>(Shape{1}, g));
  auto v = Weights<double>::zeros_like(w);
  sgd_step(w, gw, v, lr, mu);
  sgd_step(w, gw, v, lr, mu);
  // v1 = -lr g, v2 = mu v1 - lr g, w2 = w0 + v1 + v2
  const double expect = w0 - lr * g + (mu * -lr * g - lr * g);
  EXPECT_NEAR(w[0][0], expect, 1e-15);
  EXPECT_NEAR(v[0][0], -lr * g * (1 + mu), 1e-15);
}

TEST(SgdStep, MisalignedShapesThrow) {
  auto w = single(Tensor<double>(Shape{2}));
  auto v = Weights<double>::zeros_like(w);
  EXPECT_THROW(sgd_step(w, single(Tensor<double>(Shape{3})), v, 0.1, 0.0), ShapeError);
  EXPECT_THROW(sgd_step(w, Weights<double>{}, v, 0.1, 0.0), ShapeError);
}

TEST(CategoryWeights, Examples) {
  const auto balanced = category_weights({10, 10, 10});
  for (double w : balanced) EXPECT_EQ(w, 1.0);
  const auto skewed = category_weights({80, 10, 10});
  // Independent evaluation: inverse counts over their mean.
  const double inv[3] = {1.0 / 80, 1.0 / 10, 1.0 / 10};
  const double mean = (inv[0] + inv[1] + inv[2]) / 3.0;
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(skewed[c], inv[c] / mean, 1e-12);
  EXPECT_NEAR(skewed[0], 0.1765, 1e-4);
  EXPECT_NEAR(skewed[1], 1.4118, 1e-4);
  const auto capped = category_weights({5, 5, 0});
  EXPECT_EQ(capped[2], 10.0);
  EXPECT_EQ(capped[0], 1.0);
  EXPECT_THROW(category_weights({0, 0, 0}), InvariantError);
}

TEST(CategoryWeights, NormalizedToMeanOneAndCapped) {
  SplitMix64 rng(3);
  for (int i = 0; i < 200; ++i) {
    std::array<std::uint64_t, 3> h{};
    for (auto& x : h) x = rng.uniform_int(1, 1000);
    const auto w = category_weights(h);
    double mean = 0;
    bool capped = false;
    for (int c = 0; c < 3; ++c) {
      EXPECT_LE(w[c], 10.0);
      capped |= w[c] == 10.0;
      mean += w[c] / 3.0;
    }
    if (!capped) {
      EXPECT_NEAR(mean, 1.0, 1e-12);
    }
    // Rarer categories never weigh less.
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        if (h[a] < h[b]) {
          EXPECT_GE(w[a], w[b]);
        }
      }
    }
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, ZeroEpochsLeavesWeightsUntouched) {
  Network<float> net(tiny_preset(1));
  const auto before = net.weights();
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto h = train(net, random_volumes(4, 1, {2, 1, 1}), cfg);
  EXPECT_EQ(h.size(), 0u);
  EXPECT_EQ(net.weights(), before);
}

TEST(Train, InputErrors) {
  Network<float> net(tiny_preset(1));
  EXPECT_THROW(train(net, {}, TrainConfig{}), InvariantError);
  std::vector<FrameVolume> bad{{Tensor<float>({1, 8, 16, 16}), 0, 7, Category::Unchanged}};
  EXPECT_THROW(train(net, bad, TrainConfig{}), ShapeError);
  auto unlabeled = random_volumes(2, 2, {2, 0, 0});
  unlabeled[1].category.reset();
  EXPECT_THROW(train(net, unlabeled, TrainConfig{}), InvariantError);
}

TEST(Train, DeterministicForSameInputs) {
  const auto data = random_volumes(6, 9, {2, 2, 2});
  TrainConfig cfg{0.01, 0.9, 3, 4, 42, Weighting::InverseFrequency, std::nullopt};
  Network<float> a(tiny_preset(5)), b(tiny_preset(5));
  const auto ha = train(a, data, cfg);
  const auto hb = train(b, data, cfg);
  EXPECT_EQ(ha.to_table(), hb.to_table());
  EXPECT_EQ(a.weights(), b.weights());
  EXPECT_EQ(ha.size(), 3u);
  cfg.shuffle_seed = 43;
  Network<float> c(tiny_preset(5));
  train(c, data, cfg);
  EXPECT_FALSE(c.weights() == a.weights());
}

TEST(Train, UniformAndInverseAgreeOnBalancedData) {
  const auto data = random_volumes(6, 4, {2, 2, 2});
  TrainConfig cfg{0.01, 0.9, 2, 3, 1, Weighting::Uniform, std::nullopt};
  Network<float> a(tiny_preset(2)), b(tiny_preset(2));
  train(a, data, cfg);
  cfg.weighting = Weighting::InverseFrequency;
  train(b, data, cfg);
  EXPECT_EQ(a.weights(), b.weights());
}

TEST(Train, OverfitsEightLectureVolumes) {
  const auto data = fixtures::overfit_set(31);
  ASSERT_EQ(data.size(), 8u);
  std::array<std::size_t, 3> seen{};
  for (const auto& v : data) ++seen[index_of(*v.category)];
  EXPECT_GT(seen[0], 0u);
  EXPECT_GT(seen[2], 0u);
  Network<float> net(tiny_preset(3));
  TrainConfig cfg{0.01, 0.9, 300, 8, 3, Weighting::InverseFrequency, 1.0};
  const auto h = train(net, data, cfg);
  EXPECT_EQ(h.epochs.back().train_accuracy, 1.0);
  EXPECT_EQ(evaluate(net, data).accuracy, 1.0);
}

TEST(Train, HistoryRecordsValidationAndTable) {
  const auto data = random_volumes(3, 5, {1, 1, 1});
  Network<float> net(tiny_preset(2));
  std::size_t calls = 0;
  const auto h = train(net, data, TrainConfig{0.01, 0.9, 2, 2, 0, Weighting::Uniform, std::nullopt}, data,
                       [&](const EpochRecord& r) { EXPECT_EQ(r.epoch, ++calls); });
  EXPECT_EQ(calls, 2u);
  ASSERT_TRUE(h.epochs[1].validation.has_value());
  const auto table = h.to_table();
  EXPECT_EQ(table.substr(0, table.find('\n')), "epoch\tloss\taccuracy");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);
}

TEST(Evaluate, MatchesDirectCountingOnRandomPredictions) {
  SplitMix64 rng(77);
  std::vector<Category> pred, truth;
  for (int i = 0; i < 100; ++i) {
    pred.push_back(category_from_index(rng.uniform_int(0, 2)));
    truth.push_back(category_from_index(rng.uniform_int(0, 2)));
  }
  const auto m = metrics_from(pred, truth);
  std::size_t correct = 0;
  for (int i = 0; i < 100; ++i) correct += pred[i] == truth[i];
  EXPECT_DOUBLE_EQ(m.accuracy, correct / 100.0);
  for (std::size_t c = 0; c < 3; ++c) {
    double tp = 0, np = 0, nt = 0;
    for (int i = 0; i < 100; ++i) {
      tp += index_of(pred[i]) == c && index_of(truth[i]) == c;
      np += index_of(pred[i]) == c;
      nt += index_of(truth[i]) == c;
    }
    EXPECT_NEAR(m.prf.per_category[c].precision, tp / np, 1e-12);
    EXPECT_NEAR(m.prf.per_category[c].recall, tp / nt, 1e-12);
  }
}

TEST(Evaluate, NetworkEvaluationAgreesWithPredictions) {
  const auto data = random_volumes(5, 8, {2, 2, 1});
  Network<float> net(tiny_preset(4));
  const auto pred = predict_categories(net, data);
  std::vector<Category> truth;
  for (const auto& v : data) truth.push_back(*v.category);
  EXPECT_EQ(evaluate(net, data).confusion, confusion_matrix(pred, truth));
  EXPECT_THROW(evaluate(net, {}), InvariantError);
}
