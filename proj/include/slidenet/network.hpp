#pragma once

// Spatio-temporal residual network: a 3D conv stem followed by residual
// blocks of two 3D convs with identity (zero-padded) shortcuts, max pooling
// after the stem and each block, and a stack of fully connected layers
// ending in the three frame-volume categories.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "slidenet/errors.hpp"
#include "slidenet/ops.hpp"
#include "slidenet/random.hpp"
#include "slidenet/tensor.hpp"

namespace slidenet {

inline constexpr std::size_t kCategoryCount = 3;

struct InputShape {
  std::size_t channels = 1;
  std::size_t frames = 16;
  std::size_t height = 112;
  std::size_t width = 112;
  friend bool operator==(const InputShape&, const InputShape&) = default;
};

struct ConvSpec {
  std::size_t out_channels = 16;
  Extent3 kernel{3, 3, 3};
  ConvParams params{{1, 1, 1}, {1, 1, 1}};
  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

struct ResidualBlockSpec {
  ConvSpec first;
  ConvSpec second;
  friend bool operator==(const ResidualBlockSpec&, const ResidualBlockSpec&) = default;
};

struct NetworkConfig {
  std::string name = "custom";
  InputShape input;
  ConvSpec stem;
  std::vector<ResidualBlockSpec> blocks;
  // One pooling stage after the stem and one after each block.
  std::vector<PoolParams> pools;
  // Fully connected widths; the first layer's input is the flattened volume.
  std::vector<std::size_t> fc_widths;
  std::uint64_t init_seed = 0;
  // Reject configurations that are not 7 conv + 4 fully connected layers.
  bool require_standard_topology = true;
  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

namespace detail {

inline ConvSpec conv3x3x3(std::size_t channels) { return ConvSpec{channels, {3, 3, 3}, {{1, 1, 1}, {1, 1, 1}}}; }

inline NetworkConfig residual_preset(std::string name, InputShape input,
                                     std::vector<std::size_t> channels, std::vector<PoolParams> pools,
                                     std::vector<std::size_t> fc, std::uint64_t seed) {
  NetworkConfig c;
  c.name = std::move(name);
  c.input = input;
  c.stem = conv3x3x3(channels[0]);
  for (std::size_t i = 1; i < channels.size(); ++i) {
    c.blocks.push_back({conv3x3x3(channels[i]), conv3x3x3(channels[i])});
  }
  c.pools = std::move(pools);
  c.fc_widths = std::move(fc);
  c.init_seed = seed;
  return c;
}

}  // namespace detail

/// 1x16x112x112 input, channels 16/32/64/64, fc 512-128-32-3.
inline NetworkConfig full_preset(std::uint64_t seed = 1) {
  const PoolParams p2{{2, 2, 2}, {2, 2, 2}};
  return detail::residual_preset("full", {1, 16, 112, 112}, {16, 32, 64, 64}, {p2, p2, p2, p2},
                                 {512, 128, 32, 3}, seed);
}

/// Same topology at desk scale: 1x8x32x32 input, channels 4/8/8/8, fc 64-32-16-3.
/// The last pool keeps depth (already 1 frame deep by then).
inline NetworkConfig tiny_preset(std::uint64_t seed = 1) {
  const PoolParams p2{{2, 2, 2}, {2, 2, 2}};
  const PoolParams spatial{{1, 2, 2}, {1, 2, 2}};
  return detail::residual_preset("tiny", {1, 8, 32, 32}, {4, 8, 8, 8}, {p2, p2, p2, spatial},
                                 {64, 32, 16, 3}, seed);
}

inline NetworkConfig preset_by_name(const std::string& name, std::uint64_t seed = 1) {
  if (name == "full") return full_preset(seed);
  if (name == "tiny") return tiny_preset(seed);
  throw ConfigError("unknown network preset '" + name + "' (expected full or tiny)");
}

// ---------------------------------------------------------------------------
// Introspection

enum class LayerKind { Conv3d, Relu, MaxPool3d, ResidualAdd, Flatten, Linear, Softmax };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv3d: return "conv3d";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool3d: return "maxpool3d";
    case LayerKind::ResidualAdd: return "residual_add";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Linear: return "linear";
    case LayerKind::Softmax: return "softmax";
  }
  return "?";
}

struct LayerInfo {
  LayerKind kind;
  std::string name;
  Shape output;
};

struct ParameterSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0;  // 0 for biases
};

/// Validates the shape chain and returns the full layer sequence.
inline std::vector<LayerInfo> describe(const NetworkConfig& c) {
  if (c.input.channels == 0 || c.input.frames == 0 || c.input.height == 0 || c.input.width == 0) {
    throw ConfigError("network input dimensions must be positive");
  }
  if (c.pools.size() != c.blocks.size() + 1) {
    throw ConfigError("need one pooling stage after the stem and after each block (" +
                      std::to_string(c.blocks.size() + 1) + "), got " +
                      std::to_string(c.pools.size()));
  }
  if (c.fc_widths.empty() || c.fc_widths.back() != kCategoryCount) {
    throw ConfigError("final fully connected width must be " + std::to_string(kCategoryCount));
  }
  if (c.require_standard_topology) {
    const std::size_t convs = 1 + 2 * c.blocks.size();
    if (convs != 7 || c.fc_widths.size() != 4) {
      throw ConfigError("topology must be 7 conv + 4 fully connected layers, got " +
                        std::to_string(convs) + " conv + " + std::to_string(c.fc_widths.size()) +
                        " fc");
    }
  }

  std::vector<LayerInfo> layers;
  Shape cur{c.input.channels, c.input.frames, c.input.height, c.input.width};
  auto conv = [&](const ConvSpec& s, const std::string& name) {
    if (s.out_channels == 0) throw ConfigError(name + ": out_channels must be positive");
    const Shape w{s.out_channels, cur[0], s.kernel.d, s.kernel.h, s.kernel.w};
    try {
      cur = conv3d_output_shape(cur, w, s.params);
    } catch (const ShapeError& e) {
      throw ConfigError(name + ": " + e.what());
    }
    layers.push_back({LayerKind::Conv3d, name, cur});
    layers.push_back({LayerKind::Relu, name + ".relu", cur});
  };
  auto pool = [&](const PoolParams& p, const std::string& name) {
    try {
      cur = maxpool3d_output_shape(cur, p);
    } catch (const ShapeError& e) {
      throw ConfigError(name + ": " + e.what());
    }
    layers.push_back({LayerKind::MaxPool3d, name, cur});
  };

  conv(c.stem, "stem.conv");
  pool(c.pools[0], "stem.pool");
  for (std::size_t i = 0; i < c.blocks.size(); ++i) {
    const std::string prefix = "block" + std::to_string(i + 1);
    const Shape in = cur;
    conv(c.blocks[i].first, prefix + ".conv1");
    const auto& b = c.blocks[i].second;
    const Shape w{b.out_channels, cur[0], b.kernel.d, b.kernel.h, b.kernel.w};
    try {
      cur = conv3d_output_shape(cur, w, b.params);
    } catch (const ShapeError& e) {
      throw ConfigError(prefix + ".conv2: " + e.what());
    }
    layers.push_back({LayerKind::Conv3d, prefix + ".conv2", cur});
    if (cur[1] != in[1] || cur[2] != in[2] || cur[3] != in[3]) {
      throw ConfigError(prefix + ": residual branch changes spatial shape " + to_string(in) +
                        " -> " + to_string(cur) + "; identity shortcut needs it preserved");
    }
    if (in[0] > cur[0]) {
      throw ConfigError(prefix + ": identity shortcut cannot shrink channels " +
                        std::to_string(in[0]) + " -> " + std::to_string(cur[0]));
    }
    layers.push_back({LayerKind::ResidualAdd, prefix + ".add", cur});
    layers.push_back({LayerKind::Relu, prefix + ".relu", cur});
    pool(c.pools[i + 1], prefix + ".pool");
  }
  const std::size_t flat = shape_size(cur);
  layers.push_back({LayerKind::Flatten, "flatten", {1, flat}});
  for (std::size_t j = 0; j < c.fc_widths.size(); ++j) {
    if (c.fc_widths[j] == 0) throw ConfigError("fully connected widths must be positive");
    const std::string name = "fc" + std::to_string(j + 1);
    layers.push_back({LayerKind::Linear, name, {1, c.fc_widths[j]}});
    if (j + 1 < c.fc_widths.size()) layers.push_back({LayerKind::Relu, name + ".relu", {1, c.fc_widths[j]}});
  }
  layers.push_back({LayerKind::Softmax, "softmax", {1, kCategoryCount}});
  return layers;
}

inline std::size_t count_layers(const NetworkConfig& c, LayerKind kind) {
  std::size_t n = 0;
  for (const auto& l : describe(c)) n += l.kind == kind;
  return n;
}

/// Names, shapes and fan-ins of all parameters, in storage order.
inline std::vector<ParameterSpec> parameter_specs(const NetworkConfig& c) {
  const auto layers = describe(c);
  std::vector<ParameterSpec> specs;
  std::size_t channels = c.input.channels;
  auto conv = [&](const ConvSpec& s, const std::string& name) {
    const std::size_t fan_in = channels * s.kernel.d * s.kernel.h * s.kernel.w;
    specs.push_back({name + ".weight", {s.out_channels, channels, s.kernel.d, s.kernel.h, s.kernel.w}, fan_in});
    specs.push_back({name + ".bias", {s.out_channels}, 0});
    channels = s.out_channels;
  };
  conv(c.stem, "stem.conv");
  for (std::size_t i = 0; i < c.blocks.size(); ++i) {
    const std::string prefix = "block" + std::to_string(i + 1);
    conv(c.blocks[i].first, prefix + ".conv1");
    conv(c.blocks[i].second, prefix + ".conv2");
  }
  std::size_t width = 0;
  for (const auto& l : layers) {
    if (l.kind == LayerKind::Flatten) width = l.output[1];
  }
  for (std::size_t j = 0; j < c.fc_widths.size(); ++j) {
    const std::string name = "fc" + std::to_string(j + 1);
    specs.push_back({name + ".weight", {c.fc_widths[j], width}, width});
    specs.push_back({name + ".bias", {c.fc_widths[j]}, 0});
    width = c.fc_widths[j];
  }
  return specs;
}

// ---------------------------------------------------------------------------
// Weights

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
};

template <typename T>
struct Weights {
  std::vector<Parameter<T>> params;

  std::size_t size() const { return params.size(); }
  Tensor<T>& operator[](std::size_t i) { return params[i].value; }
  const Tensor<T>& operator[](std::size_t i) const { return params[i].value; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value.size();
    return n;
  }

  static Weights zeros_like(const Weights& other) {
    Weights w;
    for (const auto& p : other.params) w.params.push_back({p.name, Tensor<T>(p.value.shape())});
    return w;
  }

  template <typename U>
  Weights<U> cast() const {
    Weights<U> w;
    for (const auto& p : params) w.params.push_back({p.name, p.value.template cast<U>()});
    return w;
  }

  friend bool operator==(const Weights& a, const Weights& b) {
    if (a.params.size() != b.params.size()) return false;
    for (std::size_t i = 0; i < a.params.size(); ++i) {
      if (a.params[i].name != b.params[i].name || !(a.params[i].value == b.params[i].value)) return false;
    }
    return true;
  }
};

/// Scaled normal init (std = sqrt(2 / fan_in)), zero biases, drawn in
/// parameter order from SplitMix64(init_seed).
template <typename T>
Weights<T> initial_weights(const NetworkConfig& c) {
  SplitMix64 rng(c.init_seed);
  Weights<T> w;
  for (const auto& spec : parameter_specs(c)) {
    Tensor<T> t(spec.shape);
    if (spec.fan_in > 0) {
      const double stddev = std::sqrt(2.0 / static_cast<double>(spec.fan_in));
      for (auto& v : t.values()) v = static_cast<T>(rng.normal() * stddev);
    }
    w.params.push_back({spec.name, std::move(t)});
  }
  return w;
}

template <typename T>
void check_conformance(const NetworkConfig& c, const Weights<T>& w) {
  const auto specs = parameter_specs(c);
  if (specs.size() != w.size()) {
    throw ShapeError("network expects " + std::to_string(specs.size()) + " parameter tensors, got " +
                     std::to_string(w.size()));
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].name != w.params[i].name || specs[i].shape != w[i].shape()) {
      throw ShapeError("parameter " + std::to_string(i) + " expected " + specs[i].name + " " +
                       to_string(specs[i].shape) + ", got " + w.params[i].name + " " +
                       to_string(w[i].shape()));
    }
    for (T v : w[i].values()) {
      if (!std::isfinite(static_cast<double>(v))) throw InvariantError("parameter " + specs[i].name + " is not finite");
    }
  }
}

// ---------------------------------------------------------------------------
// Per-sample activations kept for backward.

template <typename T>
struct BlockTrace {
  Tensor<T> input;
  Tensor<T> first_pre;
  Tensor<T> first_act;
  Tensor<T> sum;     // branch + shortcut, before relu
  Tensor<T> output;  // relu(sum), before pooling
  PoolResult<T> pooled;
};

template <typename T>
struct SampleTrace {
  Tensor<T> input;
  Tensor<T> stem_pre;
  PoolResult<T> stem_pooled;
  std::vector<BlockTrace<T>> blocks;
  std::vector<Tensor<T>> fc_inputs;  // [1, fin] per fc layer
  std::vector<Tensor<T>> fc_pre;     // [1, fout] per fc layer
  Tensor<T> logits;                  // [1, 3]
};

template <typename T>
struct BackwardResult {
  T loss{};
  Tensor<T> probs;
  Weights<T> grads;
};

template <typename T>
class Network {
 public:
  using value_type = T;

  explicit Network(NetworkConfig config)
      : config_(std::move(config)), weights_(initial_weights<T>(config_)) {}

  Network(NetworkConfig config, Weights<T> weights)
      : config_(std::move(config)), weights_(std::move(weights)) {
    check_conformance(config_, weights_);
  }

  const NetworkConfig& config() const noexcept { return config_; }
  const Weights<T>& weights() const noexcept { return weights_; }
  // Mutable access for optimizers; shapes must not change.
  Weights<T>& weights() noexcept { return weights_; }

  Shape volume_shape() const {
    return {config_.input.channels, config_.input.frames, config_.input.height, config_.input.width};
  }

  std::size_t batch_size_of(const Tensor<T>& batch) const {
    const Shape v = volume_shape();
    const auto& s = batch.shape();
    if (s.size() != 5 || s[1] != v[0] || s[2] != v[1] || s[3] != v[2] || s[4] != v[3]) {
      throw ShapeError("batch shape " + to_string(s) + " does not match network input [B," +
                       std::to_string(v[0]) + "," + std::to_string(v[1]) + "," + std::to_string(v[2]) +
                       "," + std::to_string(v[3]) + "]");
    }
    return s[0];
  }

  Tensor<T> sample(const Tensor<T>& batch, std::size_t i) const {
    const Shape v = volume_shape();
    const std::size_t n = shape_size(v);
    std::vector<T> data(batch.data() + i * n, batch.data() + (i + 1) * n);
    return Tensor<T>(v, std::move(data));
  }

  /// Runs one volume [C, N, H, W] through the network keeping every activation.
  SampleTrace<T> trace(const Tensor<T>& volume) const {
    if (volume.shape() != volume_shape()) {
      throw ShapeError("volume shape " + to_string(volume.shape()) + " != " + to_string(volume_shape()));
    }
    SampleTrace<T> t;
    t.input = volume;
    std::size_t p = 0;
    t.stem_pre = conv3d(volume, weights_[p], weights_[p + 1], config_.stem.params);
    p += 2;
    t.stem_pooled = maxpool3d(relu(t.stem_pre), config_.pools[0]);
    const Tensor<T>* cur = &t.stem_pooled.y;
    t.blocks.reserve(config_.blocks.size());
    for (std::size_t i = 0; i < config_.blocks.size(); ++i) {
      const auto& spec = config_.blocks[i];
      BlockTrace<T> b;
      b.input = *cur;
      b.first_pre = conv3d(b.input, weights_[p], weights_[p + 1], spec.first.params);
      b.first_act = relu(b.first_pre);
      const Tensor<T> branch = conv3d(b.first_act, weights_[p + 2], weights_[p + 3], spec.second.params);
      p += 4;
      b.sum = residual_add(b.input, branch);
      b.output = relu(b.sum);
      b.pooled = maxpool3d(b.output, config_.pools[i + 1]);
      t.blocks.push_back(std::move(b));
      cur = &t.blocks.back().pooled.y;
    }
    Tensor<T> h = cur->reshaped({1, cur->size()});
    for (std::size_t j = 0; j < config_.fc_widths.size(); ++j) {
      Tensor<T> z = linear(h, weights_[p], weights_[p + 1]);
      p += 2;
      t.fc_inputs.push_back(std::move(h));
      const bool last = j + 1 == config_.fc_widths.size();
      if (!last) h = relu(z);
      t.fc_pre.push_back(std::move(z));
    }
    t.logits = t.fc_pre.back();
    return t;
  }

  /// Logits [B, 3] for a batch [B, C, N, H, W].
  Tensor<T> logits(const Tensor<T>& batch) const {
    const std::size_t B = batch_size_of(batch);
    Tensor<T> out(Shape{B, kCategoryCount});
    for (std::size_t i = 0; i < B; ++i) {
      const auto t = trace(sample(batch, i));
      std::copy_n(t.logits.data(), kCategoryCount, out.data() + i * kCategoryCount);
    }
    return out;
  }

  /// Category probabilities [B, 3] over {unchanged, switch, transition}.
  Tensor<T> forward(const Tensor<T>& batch) const { return softmax(logits(batch)); }

  /// Weighted mean cross-entropy over the batch and its exact gradient.
  BackwardResult<T> backward(const Tensor<T>& batch, std::span<const std::size_t> targets,
                             const Tensor<T>& category_weights) const {
    const std::size_t B = batch_size_of(batch);
    std::vector<SampleTrace<T>> traces;
    traces.reserve(B);
    Tensor<T> logits_all(Shape{B, kCategoryCount});
    for (std::size_t i = 0; i < B; ++i) {
      traces.push_back(trace(sample(batch, i)));
      std::copy_n(traces.back().logits.data(), kCategoryCount, logits_all.data() + i * kCategoryCount);
    }
    auto ce = softmax_cross_entropy(logits_all, targets, category_weights);
    BackwardResult<T> r{ce.loss, std::move(ce.probs), Weights<T>::zeros_like(weights_)};
    for (std::size_t i = 0; i < B; ++i) {
      Tensor<T> dl(Shape{1, kCategoryCount});
      std::copy_n(ce.dlogits.data() + i * kCategoryCount, kCategoryCount, dl.data());
      accumulate_sample_gradient(traces[i], std::move(dl), r.grads);
    }
    return r;
  }

  template <typename U>
  Network<U> cast() const {
    return Network<U>(config_, weights_.template cast<U>());
  }

 private:
  void accumulate_sample_gradient(const SampleTrace<T>& t, Tensor<T> dout, Weights<T>& g) const {
    const std::size_t nfc = config_.fc_widths.size();
    std::size_t p = 2 + 4 * config_.blocks.size() + 2 * (nfc - 1);
    for (std::size_t jj = nfc; jj-- > 0;) {
      if (jj + 1 < nfc) dout = relu_backward(t.fc_pre[jj], dout);
      auto lg = linear_backward(t.fc_inputs[jj], weights_[p], dout);
      g[p] += lg.dw;
      g[p + 1] += lg.db;
      dout = std::move(lg.dx);
      if (jj > 0) p -= 2;
    }
    const Tensor<T>& last_pooled = config_.blocks.empty() ? t.stem_pooled.y : t.blocks.back().pooled.y;
    dout.reshape(last_pooled.shape());
    p = 2 + 4 * config_.blocks.size();
    for (std::size_t ii = config_.blocks.size(); ii-- > 0;) {
      p -= 4;
      const auto& b = t.blocks[ii];
      const auto& spec = config_.blocks[ii];
      Tensor<T> d = maxpool3d_backward(b.output.shape(), b.pooled.argmax, dout);
      d = relu_backward(b.sum, d);
      auto rg = residual_add_backward(b.input.shape(), d);
      auto g2 = conv3d_backward(b.first_act, weights_[p + 2], rg.dbranch, spec.second.params);
      g[p + 2] += g2.dw;
      g[p + 3] += g2.db;
      Tensor<T> d1 = relu_backward(b.first_pre, g2.dx);
      auto g1 = conv3d_backward(b.input, weights_[p], d1, spec.first.params);
      g[p] += g1.dw;
      g[p + 1] += g1.db;
      g1.dx += rg.dshortcut;
      dout = std::move(g1.dx);
    }
    Tensor<T> d = maxpool3d_backward(t.stem_pre.shape(), t.stem_pooled.argmax, dout);
    d = relu_backward(t.stem_pre, d);
    auto gs = conv3d_backward(t.input, weights_[0], d, config_.stem.params);
    g[0] += gs.dw;
    g[1] += gs.db;
  }

  NetworkConfig config_;
  Weights<T> weights_;
};

template <typename T = float>
Network<T> build_network(const NetworkConfig& config) {
  describe(config);
  return Network<T>(config);
}

}  // namespace slidenet
