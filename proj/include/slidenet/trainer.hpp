#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slidenet/category.hpp"
#include "slidenet/errors.hpp"
#include "slidenet/evalkit.hpp"
#include "slidenet/ingest.hpp"
#include "slidenet/network.hpp"
#include "slidenet/random.hpp"

namespace slidenet {

enum class Weighting { Uniform, InverseFrequency };

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  std::uint64_t shuffle_seed = 0;
  Weighting weighting = Weighting::InverseFrequency;
  // Stop once the training set is classified at least this well. Off by default.
  std::optional<double> stop_at_accuracy;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
  }
};

struct Metrics {
  ConfusionMatrix confusion;
  PrfReport prf;
  double accuracy = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<Metrics> validation;
};

struct History {
  std::vector<EpochRecord> epochs;

  std::size_t size() const { return epochs.size(); }

  /// Tab-separated "epoch loss accuracy" lines with a header row.
  std::string to_table() const {
    std::string out = "epoch\tloss\taccuracy\n";
    char buf[96];
    for (const auto& e : epochs) {
      std::snprintf(buf, sizeof buf, "%zu\t%.9g\t%.6f\n", e.epoch, e.mean_loss, e.train_accuracy);
      out += buf;
    }
    return out;
  }
};

/// v <- momentum * v - lr * g;  w <- w + v
template <typename T>
void sgd_step(Weights<T>& weights, const Weights<T>& grads, Weights<T>& velocity, T learning_rate, T momentum) {
  if (grads.size() != weights.size() || velocity.size() != weights.size()) {
    throw ShapeError("sgd_step: weights, gradients and velocity are not aligned");
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    auto& w = weights[i];
    const auto& g = grads[i];
    auto& v = velocity[i];
    w.require_same_shape(g);
    w.require_same_shape(v);
    for (std::size_t k = 0; k < w.size(); ++k) {
      v[k] = momentum * v[k] - learning_rate * g[k];
      w[k] += v[k];
    }
  }
}

inline constexpr double kMaxCategoryWeight = 10.0;

/// Inverse-frequency weights normalized to mean 1 over the observed
/// categories; unobserved categories (and anything above it) get the cap.
inline std::array<double, 3> category_weights(const std::array<std::uint64_t, 3>& histogram) {
  std::array<double, 3> w{};
  double sum = 0.0;
  std::size_t seen = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    if (histogram[c] == 0) continue;
    w[c] = 1.0 / static_cast<double>(histogram[c]);
    sum += w[c];
    ++seen;
  }
  if (seen == 0) throw InvariantError("category histogram is empty");
  const double mean = sum / static_cast<double>(seen);
  std::uint64_t lo = UINT64_MAX, hi = 0;
  for (auto h : histogram) {
    if (h == 0) continue;
    lo = std::min(lo, h);
    hi = std::max(hi, h);
  }
  for (std::size_t c = 0; c < 3; ++c) {
    if (histogram[c] == 0) {
      w[c] = kMaxCategoryWeight;
    } else {
      // Balanced observed counts give exactly 1 rather than a rounded quotient.
      w[c] = lo == hi ? 1.0 : std::min(w[c] / mean, kMaxCategoryWeight);
    }
  }
  return w;
}

inline std::array<std::uint64_t, 3> category_histogram(std::span<const FrameVolume> volumes) {
  std::array<std::uint64_t, 3> h{};
  for (const auto& v : volumes) {
    if (!v.category) throw InvariantError("training volume is unlabeled");
    ++h[index_of(*v.category)];
  }
  return h;
}

namespace detail {

template <typename T>
Tensor<T> stack_volumes(std::span<const FrameVolume> all, std::span<const std::size_t> order) {
  const Shape vs = all[order[0]].data.shape();
  Shape bs{order.size()};
  bs.insert(bs.end(), vs.begin(), vs.end());
  Tensor<T> batch(bs);
  const std::size_t n = shape_size(vs);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& v = all[order[i]].data;
    if (v.shape() != vs) throw ShapeError("volumes in one batch must share a shape");
    std::copy(v.values().begin(), v.values().end(), batch.data() + i * n);
  }
  return batch;
}

inline std::size_t argmax3(const float* p) { return static_cast<std::size_t>(std::max_element(p, p + 3) - p); }
inline std::size_t argmax3(const double* p) { return static_cast<std::size_t>(std::max_element(p, p + 3) - p); }

}  // namespace detail

template <typename T>
Tensor<T> predict_probabilities(const Network<T>& net, std::span<const FrameVolume> volumes,
                                std::size_t chunk = 32) {
  Tensor<T> out(Shape{std::max<std::size_t>(volumes.size(), 1), kCategoryCount});
  std::vector<std::size_t> idx;
  for (std::size_t s = 0; s < volumes.size(); s += chunk) {
    idx.clear();
    for (std::size_t i = s; i < std::min(volumes.size(), s + chunk); ++i) idx.push_back(i);
    const auto probs = net.forward(detail::stack_volumes<T>(volumes, idx));
    std::copy(probs.values().begin(), probs.values().end(), out.data() + s * kCategoryCount);
  }
  return out;
}

template <typename T>
std::vector<Category> predict_categories(const Network<T>& net, std::span<const FrameVolume> volumes) {
  const auto probs = predict_probabilities(net, volumes);
  std::vector<Category> out;
  for (std::size_t i = 0; i < volumes.size(); ++i) out.push_back(category_from_index(detail::argmax3(probs.data() + 3 * i)));
  return out;
}

inline Metrics metrics_from(std::span<const Category> pred, std::span<const Category> truth) {
  Metrics m;
  m.confusion = confusion_matrix(pred, truth);
  m.prf = prf1(m.confusion);
  m.accuracy = m.confusion.accuracy();
  return m;
}

/// Argmax predictions scored against the volumes' labels.
template <typename T>
Metrics evaluate(const Network<T>& net, std::span<const FrameVolume> volumes) {
  if (volumes.empty()) throw InvariantError("cannot evaluate on an empty dataset");
  std::vector<Category> truth;
  for (const auto& v : volumes) {
    if (!v.category) throw InvariantError("evaluation volume is unlabeled");
    truth.push_back(*v.category);
  }
  const auto pred = predict_categories(net, volumes);
  return metrics_from(pred, truth);
}

/// Mini-batch SGD with momentum. Epoch e visits the data in a permutation
/// drawn from mix_seed(shuffle_seed, e), so results are a pure function of
/// (initial weights, data order, config).
template <typename T>
History train(Network<T>& net, std::span<const FrameVolume> data, const TrainConfig& cfg,
              std::span<const FrameVolume> validation = {},
              const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  if (data.empty()) throw InvariantError("training set is empty");
  const Shape expected = net.volume_shape();
  for (const auto& v : data) {
    if (v.data.shape() != expected) {
      throw ShapeError("training volume shape " + to_string(v.data.shape()) + " != network input " + to_string(expected));
    }
  }
  const auto hist = category_histogram(data);
  Tensor<T> cw(Shape{3}, T{1});
  if (cfg.weighting == Weighting::InverseFrequency) {
    const auto w = category_weights(hist);
    for (std::size_t c = 0; c < 3; ++c) cw[c] = static_cast<T>(w[c]);
  }

  History history;
  Weights<T> velocity = Weights<T>::zeros_like(net.weights());
  std::vector<std::size_t> order(data.size());
  std::vector<std::size_t> targets;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 rng(mix_seed(cfg.shuffle_seed, epoch));
    shuffle(std::span<std::size_t>(order), rng);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + s, std::min(cfg.batch_size, order.size() - s));
      targets.clear();
      for (std::size_t i : idx) targets.push_back(index_of(*data[i].category));
      const auto batch = detail::stack_volumes<T>(data, idx);
      auto r = net.backward(batch, targets, cw);
      loss_sum += static_cast<double>(r.loss) * static_cast<double>(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) correct += detail::argmax3(r.probs.data() + 3 * i) == targets[i];
      sgd_step(net.weights(), r.grads, velocity, static_cast<T>(cfg.learning_rate), static_cast<T>(cfg.momentum));
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.mean_loss = loss_sum / static_cast<double>(data.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    if (!validation.empty()) rec.validation = evaluate(net, validation);
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    // Judged on the weights as they stand after the epoch, not the running
    // accuracy collected before each step.
    if (cfg.stop_at_accuracy && rec.train_accuracy >= *cfg.stop_at_accuracy &&
        evaluate(net, data).accuracy >= *cfg.stop_at_accuracy) {
      break;
    }
  }
  return history;
}

}  // namespace slidenet
