#pragma once

// Forward and hand-derived backward passes for every layer type used by the
// spatio-temporal residual network. Volumes are laid out [C, D, H, W] and
// fully connected activations [B, F], all row-major.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "slidenet/errors.hpp"
#include "slidenet/tensor.hpp"

namespace slidenet {

/// Per spatial axis sizes in (depth, height, width) order.
struct Extent3 {
  std::size_t d = 1;
  std::size_t h = 1;
  std::size_t w = 1;
  friend bool operator==(const Extent3&, const Extent3&) = default;
};

struct ConvParams {
  Extent3 stride{1, 1, 1};
  Extent3 padding{0, 0, 0};
  friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

struct PoolParams {
  Extent3 window{2, 2, 2};
  Extent3 stride{2, 2, 2};
  friend bool operator==(const PoolParams&, const PoolParams&) = default;
};

/// floor((in + 2*pad - kernel) / stride) + 1, or ShapeError when < 1.
inline std::size_t conv_output_length(std::size_t in, std::size_t kernel, std::size_t stride,
                                      std::size_t pad) {
  if (stride == 0) throw ShapeError("stride must be >= 1");
  if (kernel == 0) throw ShapeError("kernel extent must be >= 1");
  if (in + 2 * pad < kernel) {
    throw ShapeError("kernel " + std::to_string(kernel) + " does not fit padded input " +
                     std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

inline std::size_t pool_output_length(std::size_t in, std::size_t window, std::size_t stride) {
  if (window > in) {
    throw ShapeError("pool window " + std::to_string(window) + " larger than input axis " +
                     std::to_string(in));
  }
  return conv_output_length(in, window, stride, 0);
}

namespace detail {

// Output positions o in [lo, hi) for which o*stride - pad + k lands inside [0, in).
struct ValidRange {
  std::ptrdiff_t lo;
  std::ptrdiff_t hi;
};

inline ValidRange valid_range(std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                              std::size_t pad) {
  const auto s = static_cast<std::ptrdiff_t>(stride);
  const auto shift = static_cast<std::ptrdiff_t>(pad) - static_cast<std::ptrdiff_t>(k);
  // o*s >= shift  and  o*s <= in - 1 + shift
  std::ptrdiff_t lo = shift <= 0 ? 0 : (shift + s - 1) / s;
  const std::ptrdiff_t top = static_cast<std::ptrdiff_t>(in) - 1 + shift;
  std::ptrdiff_t hi = top < 0 ? 0 : top / s + 1;
  hi = std::min(hi, static_cast<std::ptrdiff_t>(out));
  if (hi < lo) hi = lo;
  return {lo, hi};
}

inline void require_rank(const Shape& shape, std::size_t rank, const char* what) {
  if (shape.size() != rank) {
    throw ShapeError(std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                     to_string(shape));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv3d

template <typename T>
struct Conv3dGrads {
  Tensor<T> dx;
  Tensor<T> dw;
  Tensor<T> db;
};

inline Shape conv3d_output_shape(const Shape& x, const Shape& w, const ConvParams& p) {
  detail::require_rank(x, 4, "conv3d input");
  detail::require_rank(w, 5, "conv3d kernel");
  if (x[0] != w[1]) {
    throw ShapeError("conv3d input channels " + std::to_string(x[0]) + " != kernel channels " +
                     std::to_string(w[1]));
  }
  return {w[0], conv_output_length(x[1], w[2], p.stride.d, p.padding.d),
          conv_output_length(x[2], w[3], p.stride.h, p.padding.h),
          conv_output_length(x[3], w[4], p.stride.w, p.padding.w)};
}

namespace detail {

// Visits every (output row, input row, kernel tap) triple of a 3D convolution.
// fn(weight_offset, y_row_offset, x_row_offset, ow_lo, ow_hi, kw) is invoked
// with row offsets pointing at element 0 of the respective W-rows.
template <typename Fn>
void for_each_conv_row(const Shape& xs, const Shape& ws, const Shape& ys, const ConvParams& p,
                       Fn&& fn) {
  const std::size_t cout = ws[0], cin = ws[1], kd = ws[2], kh = ws[3], kw = ws[4];
  const std::size_t D = xs[1], H = xs[2], W = xs[3];
  const std::size_t OD = ys[1], OH = ys[2], OW = ys[3];
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t ci = 0; ci < cin; ++ci) {
      for (std::size_t a = 0; a < kd; ++a) {
        const auto rd = valid_range(D, OD, a, p.stride.d, p.padding.d);
        for (std::size_t b = 0; b < kh; ++b) {
          const auto rh = valid_range(H, OH, b, p.stride.h, p.padding.h);
          for (std::size_t c = 0; c < kw; ++c) {
            const auto rw = valid_range(W, OW, c, p.stride.w, p.padding.w);
            if (rw.lo >= rw.hi) continue;
            const std::size_t woff = (((co * cin + ci) * kd + a) * kh + b) * kw + c;
            for (auto od = rd.lo; od < rd.hi; ++od) {
              const auto id = static_cast<std::size_t>(od * static_cast<std::ptrdiff_t>(p.stride.d) -
                                                       static_cast<std::ptrdiff_t>(p.padding.d) +
                                                       static_cast<std::ptrdiff_t>(a));
              for (auto oh = rh.lo; oh < rh.hi; ++oh) {
                const auto ih = static_cast<std::size_t>(
                    oh * static_cast<std::ptrdiff_t>(p.stride.h) -
                    static_cast<std::ptrdiff_t>(p.padding.h) + static_cast<std::ptrdiff_t>(b));
                const std::size_t yrow = ((co * OD + static_cast<std::size_t>(od)) * OH +
                                          static_cast<std::size_t>(oh)) * OW;
                const std::size_t xrow = ((ci * D + id) * H + ih) * W;
                fn(woff, yrow, xrow, rw.lo, rw.hi, c);
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const ConvParams& p) {
  const Shape ys = conv3d_output_shape(x.shape(), w.shape(), p);
  if (b.shape() != Shape{w.dim(0)}) {
    throw ShapeError("conv3d bias shape " + to_string(b.shape()) + " != [" +
                     std::to_string(w.dim(0)) + "]");
  }
  Tensor<T> y(ys);
  const std::size_t per_channel = ys[1] * ys[2] * ys[3];
  for (std::size_t co = 0; co < ys[0]; ++co) {
    std::fill_n(y.data() + co * per_channel, per_channel, b[co]);
  }
  const T* xd = x.data();
  const T* wd = w.data();
  T* yd = y.data();
  const auto sw = static_cast<std::ptrdiff_t>(p.stride.w);
  const auto pw = static_cast<std::ptrdiff_t>(p.padding.w);
  detail::for_each_conv_row(
      x.shape(), w.shape(), ys, p,
      [&](std::size_t woff, std::size_t yrow, std::size_t xrow, std::ptrdiff_t lo, std::ptrdiff_t hi,
          std::size_t c) {
        const T wv = wd[woff];
        const std::ptrdiff_t n = hi - lo;
        T* yr = yd + yrow + lo;
        const T* xr = xd + xrow + (lo * sw + static_cast<std::ptrdiff_t>(c) - pw);
        if (sw == 1) {
          for (std::ptrdiff_t j = 0; j < n; ++j) yr[j] += wv * xr[j];
        } else {
          for (std::ptrdiff_t j = 0; j < n; ++j) yr[j] += wv * xr[j * sw];
        }
      });
  return y;
}

template <typename T>
Conv3dGrads<T> conv3d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                               const ConvParams& p) {
  const Shape ys = conv3d_output_shape(x.shape(), w.shape(), p);
  if (dy.shape() != ys) {
    throw ShapeError("conv3d upstream gradient shape " + to_string(dy.shape()) + " != output " +
                     to_string(ys));
  }
  Conv3dGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>(Shape{w.dim(0)})};
  const std::size_t per_channel = ys[1] * ys[2] * ys[3];
  for (std::size_t co = 0; co < ys[0]; ++co) {
    T acc{0};
    const T* r = dy.data() + co * per_channel;
    for (std::size_t i = 0; i < per_channel; ++i) acc += r[i];
    g.db[co] = acc;
  }
  const T* xd = x.data();
  const T* wd = w.data();
  const T* dyd = dy.data();
  T* dxd = g.dx.data();
  T* dwd = g.dw.data();
  const auto sw = static_cast<std::ptrdiff_t>(p.stride.w);
  const auto pw = static_cast<std::ptrdiff_t>(p.padding.w);
  detail::for_each_conv_row(
      x.shape(), w.shape(), ys, p,
      [&](std::size_t woff, std::size_t yrow, std::size_t xrow, std::ptrdiff_t lo, std::ptrdiff_t hi,
          std::size_t c) {
        const T wv = wd[woff];
        const std::ptrdiff_t n = hi - lo;
        const T* dyr = dyd + yrow + lo;
        const std::ptrdiff_t start = lo * sw + static_cast<std::ptrdiff_t>(c) - pw;
        const T* xr = xd + xrow + start;
        T* dxr = dxd + xrow + start;
        T acc{0};
        if (sw == 1) {
          for (std::ptrdiff_t j = 0; j < n; ++j) {
            dxr[j] += wv * dyr[j];
            acc += dyr[j] * xr[j];
          }
        } else {
          for (std::ptrdiff_t j = 0; j < n; ++j) {
            dxr[j * sw] += wv * dyr[j];
            acc += dyr[j] * xr[j * sw];
          }
        }
        dwd[woff] += acc;
      });
  return g;
}

// ---------------------------------------------------------------------------
// maxpool3d

template <typename T>
struct PoolResult {
  Tensor<T> y;
  // Flat index into the pooled input of each output element's maximum.
  std::vector<std::size_t> argmax;
};

inline Shape maxpool3d_output_shape(const Shape& x, const PoolParams& p) {
  detail::require_rank(x, 4, "maxpool3d input");
  return {x[0], pool_output_length(x[1], p.window.d, p.stride.d),
          pool_output_length(x[2], p.window.h, p.stride.h),
          pool_output_length(x[3], p.window.w, p.stride.w)};
}

/// Per-window maximum. Ties resolve to the lowest linear input index, so the
/// backward routing is deterministic.
template <typename T>
PoolResult<T> maxpool3d(const Tensor<T>& x, const PoolParams& p) {
  const Shape ys = maxpool3d_output_shape(x.shape(), p);
  const std::size_t D = x.dim(1), H = x.dim(2), W = x.dim(3);
  PoolResult<T> r{Tensor<T>(ys), std::vector<std::size_t>(shape_size(ys))};
  std::size_t out = 0;
  for (std::size_t c = 0; c < ys[0]; ++c) {
    for (std::size_t od = 0; od < ys[1]; ++od) {
      for (std::size_t oh = 0; oh < ys[2]; ++oh) {
        for (std::size_t ow = 0; ow < ys[3]; ++ow, ++out) {
          std::size_t best = ((c * D + od * p.stride.d) * H + oh * p.stride.h) * W + ow * p.stride.w;
          T best_v = x[best];
          for (std::size_t a = 0; a < p.window.d; ++a) {
            for (std::size_t b = 0; b < p.window.h; ++b) {
              const std::size_t row =
                  ((c * D + od * p.stride.d + a) * H + oh * p.stride.h + b) * W + ow * p.stride.w;
              for (std::size_t e = 0; e < p.window.w; ++e) {
                if (x[row + e] > best_v) {
                  best_v = x[row + e];
                  best = row + e;
                }
              }
            }
          }
          r.y[out] = best_v;
          r.argmax[out] = best;
        }
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool3d_backward(const Shape& x_shape, std::span<const std::size_t> argmax,
                             const Tensor<T>& dy) {
  if (argmax.size() != dy.size()) throw ShapeError("maxpool3d argmax/gradient size mismatch");
  Tensor<T> dx(x_shape);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

// ---------------------------------------------------------------------------
// relu

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.values()) v = v > T{0} ? v : T{0};
  return y;
}

/// Derivative at exactly zero is zero.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  x.require_same_shape(dy);
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T{0} ? dy[i] : T{0};
  return dx;
}

// ---------------------------------------------------------------------------
// linear

template <typename T>
struct LinearGrads {
  Tensor<T> dx;
  Tensor<T> dw;
  Tensor<T> db;
};

/// y = x * w^T + b with x [B, Fin], w [Fout, Fin], b [Fout].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  detail::require_rank(x.shape(), 2, "linear input");
  detail::require_rank(w.shape(), 2, "linear weight");
  const std::size_t B = x.dim(0), fin = x.dim(1), fout = w.dim(0);
  if (w.dim(1) != fin) {
    throw ShapeError("linear input width " + std::to_string(fin) + " != weight width " +
                     std::to_string(w.dim(1)));
  }
  if (b.shape() != Shape{fout}) throw ShapeError("linear bias shape " + to_string(b.shape()));
  Tensor<T> y(Shape{B, fout});
  for (std::size_t i = 0; i < B; ++i) {
    const T* xr = x.data() + i * fin;
    for (std::size_t o = 0; o < fout; ++o) {
      const T* wr = w.data() + o * fin;
      T acc = b[o];
      for (std::size_t k = 0; k < fin; ++k) acc += xr[k] * wr[k];
      y[i * fout + o] = acc;
    }
  }
  return y;
}

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy) {
  const std::size_t B = x.dim(0), fin = x.dim(1), fout = w.dim(0);
  if (dy.shape() != Shape{B, fout}) throw ShapeError("linear upstream gradient shape mismatch");
  LinearGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>(Shape{fout})};
  for (std::size_t i = 0; i < B; ++i) {
    const T* xr = x.data() + i * fin;
    T* dxr = g.dx.data() + i * fin;
    for (std::size_t o = 0; o < fout; ++o) {
      const T d = dy[i * fout + o];
      g.db[o] += d;
      const T* wr = w.data() + o * fin;
      T* dwr = g.dw.data() + o * fin;
      for (std::size_t k = 0; k < fin; ++k) {
        dxr[k] += d * wr[k];
        dwr[k] += d * xr[k];
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// softmax + weighted cross-entropy

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  detail::require_rank(logits.shape(), 2, "softmax logits");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  Tensor<T> probs(logits.shape());
  for (std::size_t i = 0; i < B; ++i) {
    const T* z = logits.data() + i * K;
    T* p = probs.data() + i * K;
    const T m = *std::max_element(z, z + K);
    T sum{0};
    for (std::size_t k = 0; k < K; ++k) {
      p[k] = std::exp(z[k] - m);
      sum += p[k];
    }
    for (std::size_t k = 0; k < K; ++k) p[k] /= sum;
  }
  return probs;
}

template <typename T>
struct SoftmaxCrossEntropy {
  T loss{};
  Tensor<T> probs;
  Tensor<T> dlogits;
};

/// loss = (1/B) * sum_i weight[t_i] * -log p_i[t_i];  dlogits is its exact gradient.
template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits,
                                             std::span<const std::size_t> targets,
                                             const Tensor<T>& category_weights) {
  detail::require_rank(logits.shape(), 2, "softmax logits");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  if (targets.size() != B) throw ShapeError("target count != batch size");
  if (category_weights.shape() != Shape{K}) throw ShapeError("category weight count != K");
  SoftmaxCrossEntropy<T> r{T{0}, softmax(logits), Tensor<T>(logits.shape())};
  const T inv_b = T{1} / static_cast<T>(B);
  for (std::size_t i = 0; i < B; ++i) {
    const std::size_t t = targets[i];
    if (t >= K) {
      throw ShapeError("target " + std::to_string(t) + " out of range [0," + std::to_string(K) + ")");
    }
    const T wt = category_weights[t];
    const T* z = logits.data() + i * K;
    const T m = *std::max_element(z, z + K);
    T sum{0};
    for (std::size_t k = 0; k < K; ++k) sum += std::exp(z[k] - m);
    const T nll = std::log(sum) + m - z[t];
    r.loss += wt * nll * inv_b;
    for (std::size_t k = 0; k < K; ++k) {
      const T onehot = k == t ? T{1} : T{0};
      r.dlogits[i * K + k] = wt * (r.probs[i * K + k] - onehot) * inv_b;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// residual add with zero-padded identity shortcut

template <typename T>
struct ResidualGrads {
  Tensor<T> dshortcut;
  Tensor<T> dbranch;
};

/// y = branch + shortcut, the shortcut zero-padded along channels from Cs to Cb.
template <typename T>
Tensor<T> residual_add(const Tensor<T>& shortcut, const Tensor<T>& branch) {
  detail::require_rank(shortcut.shape(), 4, "residual shortcut");
  detail::require_rank(branch.shape(), 4, "residual branch");
  const auto& s = shortcut.shape();
  const auto& b = branch.shape();
  if (s[1] != b[1] || s[2] != b[2] || s[3] != b[3]) {
    throw ShapeError("residual spatial mismatch: " + to_string(s) + " vs " + to_string(b));
  }
  if (s[0] > b[0]) {
    throw ShapeError("residual shortcut has more channels (" + std::to_string(s[0]) +
                     ") than branch (" + std::to_string(b[0]) + ")");
  }
  Tensor<T> y = branch;
  for (std::size_t i = 0; i < shortcut.size(); ++i) y[i] += shortcut[i];
  return y;
}

template <typename T>
ResidualGrads<T> residual_add_backward(const Shape& shortcut_shape, const Tensor<T>& dy) {
  Tensor<T> ds(shortcut_shape);
  if (ds.size() > dy.size()) throw ShapeError("residual shortcut larger than output");
  std::copy_n(dy.data(), ds.size(), ds.data());
  return {std::move(ds), dy};
}

}  // namespace slidenet
