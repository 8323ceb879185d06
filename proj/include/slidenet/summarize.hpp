#pragma once

// Per-volume probabilities -> categories -> transition events -> keyframe
// manifest -> outline.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "slidenet/category.hpp"
#include "slidenet/errors.hpp"
#include "slidenet/frames.hpp"
#include "slidenet/weights_io.hpp"

namespace slidenet {

struct VolumeRange {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  friend bool operator==(const VolumeRange&, const VolumeRange&) = default;
};

/// Network output over one video, in retained-frame coordinates.
struct PredictionTrack {
  std::string video_id;
  Rational fps{1, 1};  // retained frame rate
  std::size_t frame_count = 0;  // retained frames
  std::size_t temporal_rate = 1;
  std::vector<std::array<double, 3>> probs;
  std::vector<VolumeRange> ranges;

  std::size_t size() const { return probs.size(); }

  void validate() const {
    if (probs.size() != ranges.size()) throw InvariantError("track has mismatched probability and range counts");
    for (std::size_t i = 0; i < probs.size(); ++i) {
      double s = 0.0;
      for (double p : probs[i]) {
        if (!(p >= 0.0 && p <= 1.0)) throw InvariantError("track probability outside [0,1]");
        s += p;
      }
      if (std::abs(s - 1.0) > 1e-3) throw InvariantError("track row " + std::to_string(i) + " does not sum to 1");
      if (ranges[i].start > ranges[i].end || ranges[i].end >= frame_count) throw InvariantError("track range out of bounds");
      if (i > 0 && ranges[i].start <= ranges[i - 1].start) throw InvariantError("track ranges are not ordered");
    }
  }
};

struct SummaryOptions {
  double min_confidence = 0.5;
  std::size_t median_window = 3;
};

/// Argmax with a low-confidence fallback to unchanged, then a sliding
/// categorical majority (windows truncated at the ends; ties -> unchanged).
inline std::vector<Category> decode_categories(const PredictionTrack& track, double min_confidence = 0.5,
                                               std::size_t median_window = 3) {
  if (median_window == 0 || median_window % 2 == 0) throw ConfigError("median window must be odd and >= 1");
  std::vector<Category> raw;
  raw.reserve(track.size());
  for (const auto& p : track.probs) {
    const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    raw.push_back(p[best] < min_confidence ? Category::Unchanged : category_from_index(best));
  }
  const std::size_t half = median_window / 2;
  std::vector<Category> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    std::array<std::size_t, 3> counts{};
    for (std::size_t j = i > half ? i - half : 0; j < std::min(raw.size(), i + half + 1); ++j) ++counts[index_of(raw[j])];
    const std::size_t top = *std::max_element(counts.begin(), counts.end());
    const auto winners = std::count(counts.begin(), counts.end(), top);
    out[i] = winners == 1 ? category_from_index(static_cast<std::size_t>(
                                std::find(counts.begin(), counts.end(), top) - counts.begin()))
                          : Category::Unchanged;
  }
  return out;
}

/// One event per maximal run of transition volumes, placed at the center of
/// the run's frame union. Confidence is the largest transition probability in
/// the run when probabilities are given, 1 otherwise.
inline std::vector<TransitionEvent> merge_transitions(std::span<const Category> categories,
                                                      std::span<const VolumeRange> ranges,
                                                      std::span<const std::array<double, 3>> probs = {}) {
  if (categories.size() != ranges.size()) throw InvariantError("categories and ranges differ in length");
  if (!probs.empty() && probs.size() != categories.size()) throw InvariantError("probabilities and categories differ in length");
  std::vector<TransitionEvent> events;
  std::size_t i = 0;
  while (i < categories.size()) {
    if (categories[i] != Category::Transition) {
      ++i;
      continue;
    }
    const std::size_t first = i;
    double conf = probs.empty() ? 1.0 : 0.0;
    while (i < categories.size() && categories[i] == Category::Transition) {
      if (!probs.empty()) conf = std::max(conf, probs[i][index_of(Category::Transition)]);
      ++i;
    }
    const std::size_t lo = ranges[first].start, hi = ranges[i - 1].end;
    events.push_back({(lo + hi) / 2, conf, lo, hi});
  }
  return events;
}

struct Keyframe {
  std::size_t frame_index = 0;  // retained coordinates
  double time_s = 0.0;
  double confidence = 1.0;
  std::size_t segment_start = 0;
  std::size_t segment_end = 0;  // exclusive
  friend bool operator==(const Keyframe&, const Keyframe&) = default;
};

struct SummaryManifest {
  std::string video_id;
  Rational fps{1, 1};
  std::size_t frame_count = 0;
  std::size_t temporal_rate = 1;
  std::vector<Keyframe> keyframes;
  friend bool operator==(const SummaryManifest&, const SummaryManifest&) = default;
};

/// An initial keyframe for the opening slide plus one per event. A keyframe is
/// the first frame of the first unchanged volume that starts after the event's
/// run and before the next event (fallback: the run's last frame). Segments
/// are [event_i, event_{i+1}) with the first starting at 0 and the last
/// ending at the frame count.
inline SummaryManifest extract_keyframes(std::span<const TransitionEvent> events, const PredictionTrack& track,
                                         std::span<const Category> categories) {
  if (track.frame_count == 0) throw InvariantError("cannot summarize an empty sequence");
  if (categories.size() != track.ranges.size()) throw InvariantError("categories and track ranges differ in length");
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].frame_index >= track.frame_count) throw InvariantError("event beyond the sequence end");
    if (i > 0 && events[i].frame_index <= events[i - 1].frame_index) throw InvariantError("events are not strictly increasing");
  }
  const std::size_t T = track.frame_count;
  auto first_unchanged = [&](std::size_t after_exclusive, bool any_start, std::size_t before) -> std::optional<std::size_t> {
    for (std::size_t v = 0; v < categories.size(); ++v) {
      const std::size_t s = track.ranges[v].start;
      if (categories[v] != Category::Unchanged || s >= before) continue;
      if (any_start || s > after_exclusive) return s;
    }
    return std::nullopt;
  };

  SummaryManifest m;
  m.video_id = track.video_id;
  m.fps = track.fps;
  m.frame_count = T;
  m.temporal_rate = track.temporal_rate;
  const double fps = track.fps.value();
  const std::size_t first_boundary = events.empty() ? T : events.front().frame_index;
  Keyframe k0;
  k0.frame_index = first_unchanged(0, true, first_boundary).value_or(0);
  k0.segment_start = 0;
  k0.segment_end = first_boundary;
  if (first_boundary > 0) m.keyframes.push_back(k0);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    const std::size_t next = i + 1 < events.size() ? events[i + 1].frame_index : T;
    Keyframe k;
    const std::size_t fallback = std::clamp(e.run_end, e.frame_index, next - 1);
    k.frame_index = first_unchanged(e.run_end, false, next).value_or(fallback);
    k.confidence = e.confidence;
    k.segment_start = e.frame_index;
    k.segment_end = next;
    m.keyframes.push_back(k);
  }
  for (auto& k : m.keyframes) k.time_s = static_cast<double>(k.frame_index) / fps;
  return m;
}

struct OutlineSegment {
  std::size_t keyframe = 0;  // index into the manifest
  std::size_t start_frame = 0;
  std::size_t end_frame = 0;  // exclusive
  double start_s = 0.0;
  double end_s = 0.0;
  std::string title;
  friend bool operator==(const OutlineSegment&, const OutlineSegment&) = default;
};

struct Outline {
  std::vector<OutlineSegment> segments;
  friend bool operator==(const Outline&, const Outline&) = default;
};

inline std::string format_mmss(double seconds) {
  const auto total = static_cast<long long>(std::floor(seconds + 1e-9));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02lld:%02lld", total / 60, total % 60);
  return buf;
}

inline Outline build_outline(const SummaryManifest& m) {
  if (m.keyframes.empty()) throw InvariantError("cannot outline an empty manifest");
  const double fps = m.fps.value();
  Outline o;
  for (std::size_t i = 0; i < m.keyframes.size(); ++i) {
    const auto& k = m.keyframes[i];
    OutlineSegment s;
    s.keyframe = i;
    s.start_frame = k.segment_start;
    s.end_frame = k.segment_end;
    s.start_s = static_cast<double>(k.segment_start) / fps;
    s.end_s = static_cast<double>(k.segment_end) / fps;
    s.title = "Slide " + std::to_string(i + 1) + ", " + format_mmss(s.start_s) + "–" + format_mmss(s.end_s);
    o.segments.push_back(std::move(s));
  }
  return o;
}

struct Summary {
  std::vector<Category> categories;
  std::vector<TransitionEvent> events;
  SummaryManifest manifest;
  Outline outline;
};

/// decode -> merge -> extract -> outline.
inline Summary summarize(const PredictionTrack& track, const SummaryOptions& opt = {}) {
  track.validate();
  Summary s;
  s.categories = decode_categories(track, opt.min_confidence, opt.median_window);
  s.events = merge_transitions(s.categories, track.ranges, track.probs);
  s.manifest = extract_keyframes(s.events, track, s.categories);
  s.outline = build_outline(s.manifest);
  return s;
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {
inline nlohmann::json rational_json(const Rational& r) {
  return r.den == 1 ? nlohmann::json(r.num) : nlohmann::json(r.to_string());
}
inline Rational rational_from(const nlohmann::json& j) {
  return j.is_string() ? parse_rational(j.get<std::string>()) : parse_rational(j.dump());
}
}  // namespace detail

inline nlohmann::json to_json(const PredictionTrack& t) {
  nlohmann::json vols = nlohmann::json::array();
  for (std::size_t i = 0; i < t.size(); ++i) {
    vols.push_back({{"start", t.ranges[i].start}, {"end", t.ranges[i].end}, {"probs", t.probs[i]}});
  }
  return {{"video_id", t.video_id},
          {"fps", detail::rational_json(t.fps)},
          {"frame_count", t.frame_count},
          {"temporal_rate", t.temporal_rate},
          {"volumes", vols}};
}

inline PredictionTrack track_from_json(const nlohmann::json& j) {
  try {
    PredictionTrack t;
    t.video_id = j.value("video_id", std::string());
    t.fps = detail::rational_from(j.at("fps"));
    t.frame_count = j.at("frame_count").get<std::size_t>();
    t.temporal_rate = j.value("temporal_rate", std::size_t{1});
    for (const auto& v : j.at("volumes")) {
      t.ranges.push_back({v.at("start").get<std::size_t>(), v.at("end").get<std::size_t>()});
      t.probs.push_back(v.at("probs").get<std::array<double, 3>>());
    }
    t.validate();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed prediction track: ") + e.what());
  }
}

inline nlohmann::json to_json(const SummaryManifest& m) {
  nlohmann::json ks = nlohmann::json::array();
  for (const auto& k : m.keyframes) {
    ks.push_back({{"frame", k.frame_index},
                  {"time_s", k.time_s},
                  {"confidence", k.confidence},
                  {"segment", {k.segment_start, k.segment_end}}});
  }
  return {{"video_id", m.video_id},
          {"fps", detail::rational_json(m.fps)},
          {"frame_count", m.frame_count},
          {"temporal_rate", m.temporal_rate},
          {"keyframes", ks}};
}

inline SummaryManifest summary_manifest_from_json(const nlohmann::json& j) {
  try {
    SummaryManifest m;
    m.video_id = j.value("video_id", std::string());
    m.fps = detail::rational_from(j.at("fps"));
    m.frame_count = j.at("frame_count").get<std::size_t>();
    m.temporal_rate = j.value("temporal_rate", std::size_t{1});
    for (const auto& k : j.at("keyframes")) {
      const auto seg = k.at("segment").get<std::array<std::size_t, 2>>();
      m.keyframes.push_back({k.at("frame").get<std::size_t>(), k.at("time_s").get<double>(),
                             k.value("confidence", 1.0), seg[0], seg[1]});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed summary manifest: ") + e.what());
  }
}

inline nlohmann::json to_json(const Outline& o) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : o.segments) {
    segs.push_back({{"keyframe", s.keyframe},
                    {"start_frame", s.start_frame},
                    {"end_frame", s.end_frame},
                    {"start_s", s.start_s},
                    {"end_s", s.end_s},
                    {"title", s.title}});
  }
  return {{"segments", segs}};
}

inline Outline outline_from_json(const nlohmann::json& j) {
  try {
    Outline o;
    for (const auto& s : j.at("segments")) {
      o.segments.push_back({s.at("keyframe").get<std::size_t>(), s.at("start_frame").get<std::size_t>(),
                            s.at("end_frame").get<std::size_t>(), s.at("start_s").get<double>(),
                            s.at("end_s").get<double>(), s.at("title").get<std::string>()});
    }
    return o;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed outline: ") + e.what());
  }
}

inline nlohmann::json to_json(std::span<const TransitionEvent> events) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& e : events) {
    a.push_back({{"frame_index", e.frame_index}, {"confidence", e.confidence}, {"run", {e.run_start, e.run_end}}});
  }
  return a;
}

/// Keyframe k's image is source frame frame_index * temporal_rate.
inline std::vector<Frame> keyframe_images(const SummaryManifest& m, const FrameSequence& source) {
  std::vector<Frame> out;
  for (const auto& k : m.keyframes) {
    const std::size_t src = k.frame_index * m.temporal_rate;
    if (src >= source.size()) throw InvariantError("keyframe maps past the end of the source sequence");
    out.push_back(source.frames[src]);
  }
  return out;
}

inline std::string keyframe_file_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "key_%04zu.pgm", i);
  return buf;
}

}  // namespace slidenet
