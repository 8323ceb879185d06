#pragma once

// Classification metrics, temporally tolerant event matching and the naive
// pixel-difference detector used as a baseline.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "slidenet/category.hpp"
#include "slidenet/errors.hpp"
#include "slidenet/frames.hpp"

namespace slidenet {

/// Rows are truth, columns prediction.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, 3>, 3> counts{};

  std::uint64_t& at(Category truth, Category pred) { return counts[index_of(truth)][index_of(pred)]; }
  std::uint64_t at(Category truth, Category pred) const { return counts[index_of(truth)][index_of(pred)]; }

  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (const auto& row : counts) {
      for (auto v : row) n += v;
    }
    return n;
  }

  std::uint64_t correct() const { return counts[0][0] + counts[1][1] + counts[2][2]; }

  double accuracy() const { return total() == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(total()); }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion_matrix(std::span<const Category> pred, std::span<const Category> truth) {
  if (pred.size() != truth.size()) {
    throw InvariantError("prediction count " + std::to_string(pred.size()) + " != truth count " +
                         std::to_string(truth.size()));
  }
  if (pred.empty()) throw InvariantError("confusion matrix over an empty sample");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < pred.size(); ++i) ++m.at(truth[i], pred[i]);
  return m;
}

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct PrfReport {
  std::array<Prf, 3> per_category{};
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;

  const Prf& operator[](Category c) const { return per_category[index_of(c)]; }
};

namespace detail {
inline double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }
inline double f1_of(double p, double r) { return safe_ratio(2.0 * p * r, p + r); }
}  // namespace detail

/// Standard definitions; every 0/0 is taken as 0.
inline PrfReport prf1(const ConfusionMatrix& m) {
  PrfReport r;
  for (std::size_t c = 0; c < 3; ++c) {
    double predicted = 0.0, actual = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      predicted += static_cast<double>(m.counts[k][c]);
      actual += static_cast<double>(m.counts[c][k]);
    }
    const double tp = static_cast<double>(m.counts[c][c]);
    Prf& p = r.per_category[c];
    p.precision = detail::safe_ratio(tp, predicted);
    p.recall = detail::safe_ratio(tp, actual);
    p.f1 = detail::f1_of(p.precision, p.recall);
    r.macro_precision += p.precision / 3.0;
    r.macro_recall += p.recall / 3.0;
    r.macro_f1 += p.f1 / 3.0;
  }
  return r;
}

struct EventMatchReport {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // (predicted frame, true frame)
  std::vector<std::pair<std::size_t, std::size_t>> matched;
};

inline EventMatchReport make_event_report(std::size_t tp, std::size_t n_pred, std::size_t n_truth) {
  EventMatchReport r;
  r.true_positives = tp;
  r.false_positives = n_pred - tp;
  r.false_negatives = n_truth - tp;
  r.precision = detail::safe_ratio(static_cast<double>(tp), static_cast<double>(n_pred));
  r.recall = detail::safe_ratio(static_cast<double>(tp), static_cast<double>(n_truth));
  r.f1 = detail::f1_of(r.precision, r.recall);
  return r;
}

/// Greedy one-to-one matching: truths are visited in increasing order and each
/// takes the nearest still-unmatched prediction within +-tolerance (the earlier
/// prediction on a distance tie). Equals maximum matching whenever
/// consecutive events are at least 2*tolerance apart.
inline EventMatchReport match_transitions(std::span<const std::size_t> pred, std::span<const std::size_t> truth,
                                          std::size_t tolerance) {
  auto require_sorted = [](std::span<const std::size_t> v, const char* what) {
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (v[i] < v[i - 1]) throw InvariantError(std::string(what) + " events are not sorted");
    }
  };
  require_sorted(pred, "predicted");
  require_sorted(truth, "true");
  std::vector<bool> used(pred.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> matched;
  for (std::size_t t : truth) {
    std::size_t best = pred.size();
    std::size_t best_dist = std::numeric_limits<std::size_t>::max();
    for (std::size_t j = 0; j < pred.size(); ++j) {
      if (used[j]) continue;
      const std::size_t dist = pred[j] > t ? pred[j] - t : t - pred[j];
      if (dist <= tolerance && dist < best_dist) {
        best = j;
        best_dist = dist;
      }
    }
    if (best < pred.size()) {
      used[best] = true;
      matched.emplace_back(pred[best], t);
    }
  }
  auto r = make_event_report(matched.size(), pred.size(), truth.size());
  r.matched = std::move(matched);
  return r;
}

inline std::vector<std::size_t> frames_of(std::span<const TransitionEvent> events) {
  std::vector<std::size_t> f;
  f.reserve(events.size());
  for (const auto& e : events) f.push_back(e.frame_index);
  return f;
}

inline double mean_absolute_difference(const Frame& a, const Frame& b) {
  if (a.width != b.width || a.height != b.height) throw ShapeError("frame dimensions differ");
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    s += static_cast<std::uint64_t>(std::abs(int(a.pixels[i]) - int(b.pixels[i])));
  }
  return static_cast<double>(s) / static_cast<double>(a.pixels.size());
}

/// Flags frame i when its mean absolute difference from frame i-1 exceeds the
/// threshold, merges consecutive flags into runs and emits one event per run
/// at the run center.
inline std::vector<TransitionEvent> pixel_diff_baseline(const FrameSequence& seq, double threshold) {
  if (seq.size() < 2) throw InvariantError("pixel-difference baseline needs at least 2 frames");
  std::vector<TransitionEvent> events;
  std::size_t i = 1;
  while (i < seq.size()) {
    if (mean_absolute_difference(seq.frames[i], seq.frames[i - 1]) <= threshold) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i + 1 < seq.size() && mean_absolute_difference(seq.frames[i + 1], seq.frames[i]) > threshold) ++i;
    events.push_back({(start + i) / 2, 1.0, start, i});
    ++i;
  }
  return events;
}

// ---------------------------------------------------------------------------
// Reporting

inline nlohmann::json to_json(const ConfusionMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : m.counts) rows.push_back(row);
  return rows;
}

inline nlohmann::json to_json(const PrfReport& r) {
  nlohmann::json per = nlohmann::json::object();
  for (Category c : kAllCategories) {
    const auto& p = r[c];
    per[std::string(to_string(c))] = {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}};
  }
  return {{"per_category", per},
          {"macro", {{"precision", r.macro_precision}, {"recall", r.macro_recall}, {"f1", r.macro_f1}}}};
}

inline nlohmann::json to_json(const EventMatchReport& r) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [p, t] : r.matched) pairs.push_back({p, t});
  return {{"true_positives", r.true_positives},
          {"false_positives", r.false_positives},
          {"false_negatives", r.false_negatives},
          {"precision", r.precision},
          {"recall", r.recall},
          {"f1", r.f1},
          {"matched", pairs}};
}

inline std::string format_table(const EventMatchReport& r) {
  char buf[256];
  std::ostringstream os;
  os << "metric      value\n";
  std::snprintf(buf, sizeof buf, "tp          %zu\nfp          %zu\nfn          %zu\n", r.true_positives,
                r.false_positives, r.false_negatives);
  os << buf;
  std::snprintf(buf, sizeof buf, "precision   %.4f\nrecall      %.4f\nf1          %.4f\n", r.precision, r.recall, r.f1);
  os << buf;
  return os.str();
}

inline std::string format_table(const ConfusionMatrix& m, const PrfReport& r) {
  char buf[256];
  std::ostringstream os;
  os << "truth\\pred   unchanged     switch transition\n";
  for (Category t : kAllCategories) {
    std::snprintf(buf, sizeof buf, "%-10s %10llu %10llu %10llu\n", std::string(to_string(t)).c_str(),
                  static_cast<unsigned long long>(m.at(t, Category::Unchanged)),
                  static_cast<unsigned long long>(m.at(t, Category::Switch)),
                  static_cast<unsigned long long>(m.at(t, Category::Transition)));
    os << buf;
  }
  os << "\ncategory    precision     recall         f1\n";
  for (Category c : kAllCategories) {
    std::snprintf(buf, sizeof buf, "%-10s %10.4f %10.4f %10.4f\n", std::string(to_string(c)).c_str(), r[c].precision,
                  r[c].recall, r[c].f1);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "%-10s %10.4f %10.4f %10.4f\naccuracy   %10.4f\n", "macro", r.macro_precision,
                r.macro_recall, r.macro_f1, m.accuracy());
  os << buf;
  return os.str();
}

}  // namespace slidenet
