#pragma once

// Central-difference gradient verification. Works in double precision only;
// each layer check scalarizes the layer output as L = sum(y * r) for a fixed
// random r, so the analytic path is the layer backward with dy = r.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "slidenet/ops.hpp"
#include "slidenet/random.hpp"
#include "slidenet/tensor.hpp"

namespace slidenet {

struct GradCheckOptions {
  double eps = 1e-6;
  // 0 probes every element; otherwise a seeded random subset per tensor.
  std::size_t max_probes_per_tensor = 0;
  std::uint64_t probe_seed = 7;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

/// Max relative error between analytic gradients and central differences of
/// `loss` taken with respect to every tensor in `params` (perturbed in place
/// and restored).
inline double grad_check(std::span<Tensor<double>* const> params,
                         std::span<const Tensor<double>> analytic,
                         const std::function<double()>& loss, const GradCheckOptions& opts = {}) {
  if (params.size() != analytic.size()) throw ShapeError("grad_check: params/gradients misaligned");
  SplitMix64 rng(opts.probe_seed);
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor<double>& p = *params[t];
    p.require_same_shape(analytic[t]);
    std::vector<std::size_t> probes(p.size());
    for (std::size_t i = 0; i < probes.size(); ++i) probes[i] = i;
    if (opts.max_probes_per_tensor != 0 && probes.size() > opts.max_probes_per_tensor) {
      shuffle(std::span<std::size_t>(probes), rng);
      probes.resize(opts.max_probes_per_tensor);
    }
    for (std::size_t i : probes) {
      const double saved = p[i];
      p[i] = saved + opts.eps;
      const double up = loss();
      p[i] = saved - opts.eps;
      const double down = loss();
      p[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.eps);
      worst = std::max(worst, relative_error(analytic[t][i], numeric));
    }
  }
  return worst;
}

namespace detail {

inline Tensor<double> random_like(const Shape& shape, SplitMix64& rng) {
  Tensor<double> r(shape);
  for (auto& v : r.values()) v = rng.uniform(-1.0, 1.0);
  return r;
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

inline double grad_check_conv3d(Tensor<double> x, Tensor<double> w, Tensor<double> b,
                                const ConvParams& params, const GradCheckOptions& opts = {}) {
  SplitMix64 rng(opts.probe_seed ^ 0xC0);
  const Tensor<double> r = detail::random_like(conv3d_output_shape(x.shape(), w.shape(), params), rng);
  auto g = conv3d_backward(x, w, r, params);
  Tensor<double>* ps[] = {&x, &w, &b};
  const Tensor<double> gs[] = {g.dx, g.dw, g.db};
  return grad_check(ps, gs, [&] { return detail::dot(conv3d(x, w, b, params), r); }, opts);
}

inline double grad_check_maxpool3d(Tensor<double> x, const PoolParams& params,
                                   const GradCheckOptions& opts = {}) {
  SplitMix64 rng(opts.probe_seed ^ 0xB0);
  auto fwd = maxpool3d(x, params);
  const Tensor<double> r = detail::random_like(fwd.y.shape(), rng);
  Tensor<double>* ps[] = {&x};
  const Tensor<double> gs[] = {maxpool3d_backward(x.shape(), fwd.argmax, r)};
  return grad_check(ps, gs, [&] { return detail::dot(maxpool3d(x, params).y, r); }, opts);
}

inline double grad_check_relu(Tensor<double> x, const GradCheckOptions& opts = {}) {
  SplitMix64 rng(opts.probe_seed ^ 0xA0);
  const Tensor<double> r = detail::random_like(x.shape(), rng);
  Tensor<double>* ps[] = {&x};
  const Tensor<double> gs[] = {relu_backward(x, r)};
  return grad_check(ps, gs, [&] { return detail::dot(relu(x), r); }, opts);
}

inline double grad_check_linear(Tensor<double> x, Tensor<double> w, Tensor<double> b,
                                const GradCheckOptions& opts = {}) {
  SplitMix64 rng(opts.probe_seed ^ 0x90);
  const Tensor<double> r = detail::random_like(Shape{x.dim(0), w.dim(0)}, rng);
  auto g = linear_backward(x, w, r);
  Tensor<double>* ps[] = {&x, &w, &b};
  const Tensor<double> gs[] = {g.dx, g.dw, g.db};
  return grad_check(ps, gs, [&] { return detail::dot(linear(x, w, b), r); }, opts);
}

inline double grad_check_residual_add(Tensor<double> shortcut, Tensor<double> branch,
                                      const GradCheckOptions& opts = {}) {
  SplitMix64 rng(opts.probe_seed ^ 0x80);
  const Tensor<double> r = detail::random_like(branch.shape(), rng);
  auto g = residual_add_backward(shortcut.shape(), r);
  Tensor<double>* ps[] = {&shortcut, &branch};
  const Tensor<double> gs[] = {g.dshortcut, g.dbranch};
  return grad_check(ps, gs, [&] { return detail::dot(residual_add(shortcut, branch), r); }, opts);
}

inline double grad_check_softmax_cross_entropy(Tensor<double> logits,
                                               std::span<const std::size_t> targets,
                                               const Tensor<double>& weights,
                                               const GradCheckOptions& opts = {}) {
  auto fwd = softmax_cross_entropy(logits, targets, weights);
  Tensor<double>* ps[] = {&logits};
  const Tensor<double> gs[] = {fwd.dlogits};
  return grad_check(ps, gs, [&] { return softmax_cross_entropy(logits, targets, weights).loss; },
                    opts);
}

}  // namespace slidenet
