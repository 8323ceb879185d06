#pragma once

// Independent reference implementations used to check the library. They are
// deliberately naive and share no code with the code under test.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "slidenet/random.hpp"
#include "slidenet/tensor.hpp"

namespace oracle {

using slidenet::Shape;
using slidenet::Tensor;

template <typename T>
Tensor<T> random_tensor(const Shape& shape, slidenet::SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

/// Direct seven-loop convolution with explicit zero padding.
inline std::vector<double> conv3d(const std::vector<double>& x, std::array<std::size_t, 4> xs,
                                  const std::vector<double>& w, std::array<std::size_t, 5> ws,
                                  const std::vector<double>& b, std::array<std::size_t, 3> stride,
                                  std::array<std::size_t, 3> pad, std::array<std::size_t, 4>& ys) {
  const auto [cin, D, H, W] = xs;
  const auto [cout, wcin, kd, kh, kw] = ws;
  (void)wcin;
  const std::size_t od = (D + 2 * pad[0] - kd) / stride[0] + 1;
  const std::size_t oh = (H + 2 * pad[1] - kh) / stride[1] + 1;
  const std::size_t ow = (W + 2 * pad[2] - kw) / stride[2] + 1;
  ys = {cout, od, oh, ow};
  std::vector<double> y(cout * od * oh * ow, 0.0);
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t z = 0; z < od; ++z)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t c = 0; c < ow; ++c) {
          double acc = b[co];
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t a = 0; a < kd; ++a)
              for (std::size_t e = 0; e < kh; ++e)
                for (std::size_t f = 0; f < kw; ++f) {
                  const long zi = static_cast<long>(z * stride[0] + a) - static_cast<long>(pad[0]);
                  const long ri = static_cast<long>(r * stride[1] + e) - static_cast<long>(pad[1]);
                  const long fi = static_cast<long>(c * stride[2] + f) - static_cast<long>(pad[2]);
                  if (zi < 0 || ri < 0 || fi < 0 || zi >= long(D) || ri >= long(H) || fi >= long(W)) continue;
                  acc += x[((ci * D + zi) * H + ri) * W + fi] * w[(((co * cin + ci) * kd + a) * kh + e) * kw + f];
                }
          y[((co * od + z) * oh + r) * ow + c] = acc;
        }
  return y;
}

/// Per-window maximum and the flat index of its first occurrence.
inline std::pair<std::vector<double>, std::vector<std::size_t>> maxpool3d(const std::vector<double>& x,
                                                                         std::array<std::size_t, 4> xs,
                                                                         std::array<std::size_t, 3> win,
                                                                         std::array<std::size_t, 3> stride) {
  const auto [C, D, H, W] = xs;
  const std::size_t od = (D - win[0]) / stride[0] + 1, oh = (H - win[1]) / stride[1] + 1,
                    ow = (W - win[2]) / stride[2] + 1;
  std::vector<double> y;
  std::vector<std::size_t> arg;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t z = 0; z < od; ++z)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t q = 0; q < ow; ++q) {
          std::vector<std::pair<std::size_t, double>> cells;
          for (std::size_t a = 0; a < win[0]; ++a)
            for (std::size_t e = 0; e < win[1]; ++e)
              for (std::size_t f = 0; f < win[2]; ++f) {
                const std::size_t i = ((c * D + z * stride[0] + a) * H + r * stride[1] + e) * W + q * stride[2] + f;
                cells.emplace_back(i, x[i]);
              }
          std::sort(cells.begin(), cells.end());
          auto best = cells.front();
          for (const auto& cell : cells) {
            if (cell.second > best.second) best = cell;
          }
          y.push_back(best.second);
          arg.push_back(best.first);
        }
  return {y, arg};
}

inline std::vector<double> matmul_bias(const std::vector<double>& x, std::size_t B, std::size_t Fin,
                                       const std::vector<double>& w, std::size_t Fout, const std::vector<double>& b) {
  std::vector<double> y(B * Fout);
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t o = 0; o < Fout; ++o) {
      double acc = b[o];
      for (std::size_t k = 0; k < Fin; ++k) acc += x[i * Fin + k] * w[o * Fin + k];
      y[i * Fout + o] = acc;
    }
  return y;
}

/// Category of each volume by scanning every event against every volume.
/// 0 unchanged, 1 switch, 2 transition; events are (frame, is_transition).
inline std::vector<int> label_scan(const std::vector<std::pair<std::size_t, std::size_t>>& ranges,
                                   const std::vector<std::pair<std::size_t, bool>>& events) {
  std::vector<int> out;
  for (const auto& [s, e] : ranges) {
    int label = 0;
    for (std::size_t f = s; f <= e; ++f) {
      for (const auto& [frame, transition] : events) {
        if (frame != f) continue;
        label = std::max(label, transition ? 2 : 1);
      }
    }
    out.push_back(label);
  }
  return out;
}

/// Run-length encode a category sequence and keep the runs of `value`.
inline std::vector<std::pair<std::size_t, std::size_t>> runs_of(const std::vector<int>& seq, int value) {
  std::vector<std::pair<int, std::size_t>> rle;
  for (int v : seq) {
    if (!rle.empty() && rle.back().first == v) {
      ++rle.back().second;
    } else {
      rle.emplace_back(v, 1);
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  std::size_t pos = 0;
  for (const auto& [v, n] : rle) {
    if (v == value) runs.emplace_back(pos, pos + n - 1);
    pos += n;
  }
  return runs;
}

/// Sliding categorical majority; windows truncated at the ends; ties -> 0.
inline std::vector<int> sliding_majority(const std::vector<int>& seq, std::size_t window) {
  std::vector<int> out;
  const long half = static_cast<long>(window / 2);
  for (long i = 0; i < static_cast<long>(seq.size()); ++i) {
    int counts[3] = {0, 0, 0};
    for (long j = i - half; j <= i + half; ++j) {
      if (j >= 0 && j < static_cast<long>(seq.size())) ++counts[seq[j]];
    }
    const int top = std::max({counts[0], counts[1], counts[2]});
    const int at_top = (counts[0] == top) + (counts[1] == top) + (counts[2] == top);
    int best = 0;
    while (counts[best] != top) ++best;
    out.push_back(at_top > 1 ? 0 : best);
  }
  return out;
}

/// Maximum-cardinality one-to-one matching within tolerance by exhaustive
/// search over assignments (small inputs only).
inline std::size_t max_matching(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& truth,
                                std::size_t tol) {
  std::vector<bool> used(pred.size(), false);
  std::size_t best = 0;
  auto dist = [](std::size_t a, std::size_t b) { return a > b ? a - b : b - a; };
  auto rec = [&](auto&& self, std::size_t t, std::size_t count) -> void {
    if (t == truth.size()) {
      best = std::max(best, count);
      return;
    }
    if (count + (truth.size() - t) <= best) return;
    self(self, t + 1, count);
    for (std::size_t j = 0; j < pred.size(); ++j) {
      if (used[j] || dist(pred[j], truth[t]) > tol) continue;
      used[j] = true;
      self(self, t + 1, count + 1);
      used[j] = false;
    }
  };
  rec(rec, 0, 0);
  return best;
}

}  // namespace oracle
