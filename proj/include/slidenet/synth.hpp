#pragma once

// Procedural lecture footage with exact ground truth: slides with cuts and
// short dissolves, speaker cut-aways, camera pan/zoom and sensor noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "slidenet/category.hpp"
#include "slidenet/errors.hpp"
#include "slidenet/frames.hpp"
#include "slidenet/ingest.hpp"
#include "slidenet/random.hpp"

namespace slidenet {

enum class TransitionStyle { Cut, Dissolve };

struct SlideEntry {
  std::uint64_t slide_id = 0;
  std::size_t start_frame = 0;
  TransitionStyle style = TransitionStyle::Cut;
  std::size_t dissolve_length = 0;  // blended frames, 1..3 for dissolves
};

/// Half-open frame range [start, end).
struct FrameRange {
  std::size_t start = 0;
  std::size_t end = 0;
};

struct MotionSegment {
  std::size_t start = 0;
  std::size_t end = 0;
  double pan_x = 0.0;  // px per frame
  double pan_y = 0.0;
  double zoom = 0.0;  // relative scale change per frame
};

struct SynthSpec {
  std::size_t total_frames = 0;
  Rational fps{30, 1};
  std::size_t width = 64;
  std::size_t height = 64;
  std::vector<SlideEntry> slides;
  std::vector<FrameRange> switches;
  std::vector<MotionSegment> motions;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  // Frames [start, start + dissolve_length] are affected by entry j's change.
  static std::size_t change_span_end(const SlideEntry& e) {
    return e.start_frame + (e.style == TransitionStyle::Dissolve ? e.dissolve_length : 0);
  }

  static std::size_t event_frame(const SlideEntry& e) {
    if (e.style == TransitionStyle::Dissolve) return e.start_frame + (e.dissolve_length - 1) / 2;
    return e.start_frame;
  }

  void validate() const {
    if (total_frames == 0) throw ConfigError("synth: total_frames must be positive");
    if (width == 0 || height == 0) throw ConfigError("synth: frame dimensions must be positive");
    if (fps.num <= 0 || fps.den <= 0) throw ConfigError("synth: fps must be positive");
    if (noise_sigma < 0) throw ConfigError("synth: noise sigma must be non-negative");
    if (slides.empty() || slides.front().start_frame != 0) throw ConfigError("synth: slide schedule must start at frame 0");
    for (std::size_t j = 0; j < slides.size(); ++j) {
      const auto& e = slides[j];
      if (e.start_frame >= total_frames) throw ConfigError("synth: slide starts beyond the last frame");
      if (j > 0 && e.start_frame <= slides[j - 1].start_frame) throw ConfigError("synth: slide starts must increase");
      if (j > 0 && e.style == TransitionStyle::Dissolve) {
        if (e.dissolve_length < 1 || e.dissolve_length > 3) throw ConfigError("synth: dissolve length must be in [1,3]");
        if (change_span_end(e) >= total_frames) throw ConfigError("synth: dissolve runs past the last frame");
        if (j + 1 < slides.size() && change_span_end(e) >= slides[j + 1].start_frame) {
          throw ConfigError("synth: dissolve overlaps the next slide change");
        }
      }
    }
    for (std::size_t i = 0; i < switches.size(); ++i) {
      const auto& s = switches[i];
      if (s.start == 0 || s.start >= s.end || s.end >= total_frames) {
        throw ConfigError("synth: switch segment must satisfy 0 < start < end < total_frames");
      }
      if (i > 0 && s.start <= switches[i - 1].end) throw ConfigError("synth: switch segments must be sorted and disjoint");
      for (std::size_t j = 1; j < slides.size(); ++j) {
        const std::size_t a = slides[j].start_frame, b = change_span_end(slides[j]);
        if (a <= s.end && s.start <= b) {
          throw ConfigError("synth: slide change at frame " + std::to_string(a) + " overlaps switch segment [" +
                            std::to_string(s.start) + "," + std::to_string(s.end) + ")");
        }
      }
    }
    for (const auto& m : motions) {
      if (m.start >= m.end || m.end > total_frames) throw ConfigError("synth: motion segment out of range");
      if (m.zoom <= -1.0) throw ConfigError("synth: zoom rate must be > -1");
    }
  }
};

struct SynthResult {
  FrameSequence sequence;
  std::vector<EventLabel> events;  // source-frame coordinates, sorted
};

// ---------------------------------------------------------------------------
// Procedural content

/// Deterministic slide: light background, a dark title band and pseudo-text
/// line bars whose layout comes from a generator seeded by slide_id.
inline Frame render_slide(std::uint64_t slide_id, std::size_t width, std::size_t height) {
  SplitMix64 rng(mix_seed(slide_id, 0x5117DE));
  const auto W = static_cast<double>(width), H = static_cast<double>(height);
  Frame f(width, height, static_cast<std::uint8_t>(rng.uniform_int(215, 245)));
  auto fill = [&](double x0, double y0, double x1, double y1, std::uint8_t v) {
    const auto xa = static_cast<std::size_t>(std::clamp(std::floor(x0), 0.0, W));
    const auto xb = static_cast<std::size_t>(std::clamp(std::ceil(x1), 0.0, W));
    const auto ya = static_cast<std::size_t>(std::clamp(std::floor(y0), 0.0, H));
    const auto yb = static_cast<std::size_t>(std::clamp(std::ceil(y1), 0.0, H));
    for (std::size_t y = ya; y < yb; ++y) {
      for (std::size_t x = xa; x < xb; ++x) f.at(x, y) = v;
    }
  };
  // title band
  const double title_top = H * rng.uniform(0.05, 0.10);
  const double title_h = std::max(2.0, H * rng.uniform(0.09, 0.14));
  fill(W * rng.uniform(0.06, 0.12), title_top, W * rng.uniform(0.45, 0.92), title_top + title_h,
       static_cast<std::uint8_t>(rng.uniform_int(30, 90)));
  // text lines
  const double thickness = std::max(1.0, H * 0.05);
  double y = title_top + title_h + H * rng.uniform(0.08, 0.14);
  const auto lines = rng.uniform_int(3, 6);
  const bool figure = rng.bernoulli(0.45);
  const double right = figure ? 0.58 : 0.92;
  for (std::int64_t i = 0; i < lines && y + thickness < H * 0.95; ++i) {
    const double indent = W * (rng.bernoulli(0.3) ? rng.uniform(0.14, 0.22) : rng.uniform(0.06, 0.10));
    const double len = W * rng.uniform(0.25, right - 0.08);
    fill(indent, y, std::min(indent + len, W * right), y + thickness, static_cast<std::uint8_t>(rng.uniform_int(20, 80)));
    y += thickness + H * rng.uniform(0.06, 0.11);
  }
  if (figure) {
    const double top = H * rng.uniform(0.30, 0.45);
    fill(W * 0.64, top, W * rng.uniform(0.85, 0.94), top + H * rng.uniform(0.25, 0.45),
         static_cast<std::uint8_t>(rng.uniform_int(110, 170)));
  }
  return f;
}

/// Speaker view: dark gradient backdrop with a bright torso/head blob that
/// sways slowly over time.
inline std::vector<double> render_speaker(std::size_t width, std::size_t height, std::size_t frame,
                                          std::uint64_t seed) {
  SplitMix64 rng(mix_seed(seed, 0x5BEA4E8));
  const auto W = static_cast<double>(width), H = static_cast<double>(height);
  const double base = rng.uniform(45.0, 75.0);
  const double tone = rng.uniform(160.0, 195.0);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double cx = W * (0.5 + 0.04 * std::sin(2.0 * std::numbers::pi * static_cast<double>(frame) / 60.0 + phase));
  std::vector<double> img(width * height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      double v = base + 25.0 * py / H;
      const double bx = (px - cx) / (W * 0.22), by = (py - H * 0.85) / (H * 0.35);
      const double hx = (px - cx) / (W * 0.11), hy = (py - H * 0.38) / (H * 0.14);
      if (bx * bx + by * by <= 1.0) v = tone - 40.0;
      if (hx * hx + hy * hy <= 1.0) v = tone;
      img[y * width + x] = v;
    }
  }
  return img;
}

namespace detail {

struct CameraState {
  double offset_x = 0.0;
  double offset_y = 0.0;
  double scale = 1.0;
};

inline CameraState camera_at(const SynthSpec& spec, std::size_t t) {
  CameraState c;
  for (const auto& m : spec.motions) {
    if (t <= m.start) continue;
    const auto n = static_cast<double>(std::min(t, m.end) - m.start);
    c.offset_x += m.pan_x * n;
    c.offset_y += m.pan_y * n;
    c.scale *= std::pow(1.0 + m.zoom, n);
  }
  return c;
}

inline double sample_clamped(const std::vector<double>& img, std::size_t w, std::size_t h, double u, double v) {
  u = std::clamp(u, 0.0, static_cast<double>(w - 1));
  v = std::clamp(v, 0.0, static_cast<double>(h - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(u)), y0 = static_cast<std::size_t>(std::floor(v));
  const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = u - static_cast<double>(x0), fy = v - static_cast<double>(y0);
  const double top = img[y0 * w + x0] * (1.0 - fx) + img[y0 * w + x1] * fx;
  const double bottom = img[y1 * w + x0] * (1.0 - fx) + img[y1 * w + x1] * fx;
  return fx == 0.0 && fy == 0.0 ? img[y0 * w + x0] : top * (1.0 - fy) + bottom * fy;
}

inline std::vector<double> to_doubles(const Frame& f) { return {f.pixels.begin(), f.pixels.end()}; }

}  // namespace detail

/// Renders the spec frame by frame. Transition events sit at each slide start
/// (dissolves at their midpoint); switch events at each cut-away entry and
/// exit; camera motion produces no events.
inline SynthResult generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t W = spec.width, H = spec.height;
  std::map<std::uint64_t, std::vector<double>> canvases;
  auto canvas = [&](std::uint64_t id) -> const std::vector<double>& {
    auto it = canvases.find(id);
    if (it == canvases.end()) it = canvases.emplace(id, detail::to_doubles(render_slide(id, W, H))).first;
    return it->second;
  };

  std::vector<Frame> frames;
  frames.reserve(spec.total_frames);
  std::size_t j = 0;
  const double cx = (static_cast<double>(W) - 1.0) / 2.0, cy = (static_cast<double>(H) - 1.0) / 2.0;
  for (std::size_t t = 0; t < spec.total_frames; ++t) {
    while (j + 1 < spec.slides.size() && spec.slides[j + 1].start_frame <= t) ++j;
    std::vector<double> img;
    const auto sw = std::find_if(spec.switches.begin(), spec.switches.end(),
                                 [t](const FrameRange& r) { return t >= r.start && t < r.end; });
    if (sw != spec.switches.end()) {
      img = render_speaker(W, H, t, mix_seed(spec.seed, static_cast<std::uint64_t>(sw - spec.switches.begin())));
    } else {
      const auto& e = spec.slides[j];
      const auto& cur = canvas(e.slide_id);
      std::vector<double> content = cur;
      if (j > 0 && e.style == TransitionStyle::Dissolve && t < e.start_frame + e.dissolve_length) {
        const auto& prev = canvas(spec.slides[j - 1].slide_id);
        const double alpha = static_cast<double>(t - e.start_frame + 1) / static_cast<double>(e.dissolve_length + 1);
        for (std::size_t i = 0; i < content.size(); ++i) content[i] = (1.0 - alpha) * prev[i] + alpha * cur[i];
      }
      const auto cam = detail::camera_at(spec, t);
      if (cam.offset_x == 0.0 && cam.offset_y == 0.0 && cam.scale == 1.0) {
        img = std::move(content);
      } else {
        img.resize(W * H);
        for (std::size_t y = 0; y < H; ++y) {
          for (std::size_t x = 0; x < W; ++x) {
            const double u = cx + (static_cast<double>(x) - cx) / cam.scale + cam.offset_x;
            const double v = cy + (static_cast<double>(y) - cy) / cam.scale + cam.offset_y;
            img[y * W + x] = detail::sample_clamped(content, W, H, u, v);
          }
        }
      }
    }
    Frame f(W, H);
    SplitMix64 noise(mix_seed(spec.seed, 0x9015E000 + t));
    for (std::size_t i = 0; i < img.size(); ++i) {
      const double v = spec.noise_sigma > 0 ? img[i] + spec.noise_sigma * noise.normal() : img[i];
      f.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
    frames.push_back(std::move(f));
  }

  SynthResult r;
  r.sequence = FrameSequence::from_frames(std::move(frames), spec.fps);
  for (std::size_t k = 1; k < spec.slides.size(); ++k) r.events.push_back({SynthSpec::event_frame(spec.slides[k]), EventKind::Transition});
  for (const auto& s : spec.switches) {
    r.events.push_back({s.start, EventKind::Switch});
    r.events.push_back({s.end, EventKind::Switch});
  }
  std::stable_sort(r.events.begin(), r.events.end(),
                   [](const EventLabel& a, const EventLabel& b) { return a.frame_index < b.frame_index; });
  return r;
}

// ---------------------------------------------------------------------------
// Lecture presets

enum class LecturePreset { Static, PanHeavy, SwitchHeavy };

inline const char* to_string(LecturePreset p) {
  switch (p) {
    case LecturePreset::Static: return "static";
    case LecturePreset::PanHeavy: return "pan-heavy";
    case LecturePreset::SwitchHeavy: return "switch-heavy";
  }
  return "?";
}

inline LecturePreset lecture_preset_from_string(const std::string& s) {
  if (s == "static") return LecturePreset::Static;
  if (s == "pan-heavy") return LecturePreset::PanHeavy;
  if (s == "switch-heavy") return LecturePreset::SwitchHeavy;
  throw ConfigError("unknown lecture preset '" + s + "' (static, pan-heavy, switch-heavy)");
}

struct LectureOptions {
  std::size_t total_frames = 1200;
  std::size_t width = 64;
  std::size_t height = 64;
  double noise_sigma = 2.0;
  std::uint64_t slide_id_base = 0;
  bool transitions = true;
};

/// Randomized but seed-determined lecture layout for one preset.
inline SynthSpec make_lecture_spec(LecturePreset preset, std::uint64_t seed, const LectureOptions& opt = {}) {
  SplitMix64 rng(mix_seed(seed, 0x1EC7));
  SynthSpec s;
  s.total_frames = opt.total_frames;
  s.width = opt.width;
  s.height = opt.height;
  s.noise_sigma = opt.noise_sigma;
  s.seed = seed;
  const std::size_t T = opt.total_frames;
  const std::uint64_t id_base = opt.slide_id_base ? opt.slide_id_base : mix_seed(seed, 0x51D) & 0xFFFFFFFFu;

  s.slides.push_back({id_base, 0, TransitionStyle::Cut, 0});
  if (opt.transitions) {
    std::size_t t = static_cast<std::size_t>(rng.uniform_int(60, 130));
    while (t + 40 < T) {
      SlideEntry e{id_base + s.slides.size(), t, TransitionStyle::Cut, 0};
      if (rng.bernoulli(0.35)) {
        e.style = TransitionStyle::Dissolve;
        e.dissolve_length = static_cast<std::size_t>(rng.uniform_int(1, 3));
      }
      s.slides.push_back(e);
      t += static_cast<std::size_t>(rng.uniform_int(70, 150));
    }
  }

  const std::size_t n_switch = preset == LecturePreset::SwitchHeavy ? 4 : 1;
  const std::size_t margin = 20;
  for (std::size_t attempt = 0; attempt < 400 && s.switches.size() < n_switch; ++attempt) {
    const auto len = static_cast<std::size_t>(rng.uniform_int(30, 70));
    if (T < len + 2 * margin + 2) break;
    const auto start = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(margin),
                                                                static_cast<std::int64_t>(T - len - margin - 1)));
    const std::size_t end = start + len;
    bool ok = true;
    for (std::size_t k = 1; k < s.slides.size() && ok; ++k) {
      const std::size_t a = s.slides[k].start_frame, b = SynthSpec::change_span_end(s.slides[k]);
      ok = b + margin < start || a > end + margin;
    }
    for (const auto& o : s.switches) ok = ok && (end + margin < o.start || start > o.end + margin);
    if (ok) s.switches.push_back({start, end});
  }
  std::sort(s.switches.begin(), s.switches.end(), [](const FrameRange& a, const FrameRange& b) { return a.start < b.start; });

  // Motion comes in out-and-back pairs so the camera never drifts far.
  const double busy = preset == LecturePreset::PanHeavy ? 0.75 : 0.15;
  const double vmax = preset == LecturePreset::PanHeavy ? 0.8 : 0.4;
  std::size_t t = static_cast<std::size_t>(rng.uniform_int(5, 40));
  while (t + 20 < T) {
    const auto len = static_cast<std::size_t>(rng.uniform_int(12, 40));
    if (rng.uniform() < busy && t + 2 * len < T) {
      MotionSegment out{t, t + len};
      if (rng.bernoulli(0.7)) {
        const double v = rng.uniform(0.2, vmax) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
        (rng.bernoulli(0.6) ? out.pan_x : out.pan_y) = v;
      } else {
        out.zoom = rng.uniform(0.002, 0.005) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
      }
      MotionSegment back{t + len, t + 2 * len, -out.pan_x, -out.pan_y, -out.zoom / (1.0 + out.zoom)};
      s.motions.push_back(out);
      s.motions.push_back(back);
      t += 2 * len;
    }
    t += static_cast<std::size_t>(rng.uniform_int(10, 60));
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// JSON and corpus files

inline nlohmann::json to_json(const SynthSpec& s) {
  nlohmann::json slides = nlohmann::json::array(), switches = nlohmann::json::array(), motions = nlohmann::json::array();
  for (const auto& e : s.slides) {
    nlohmann::json j = {{"slide_id", e.slide_id}, {"start_frame", e.start_frame},
                        {"style", e.style == TransitionStyle::Cut ? "cut" : "dissolve"}};
    if (e.style == TransitionStyle::Dissolve) j["dissolve_length"] = e.dissolve_length;
    slides.push_back(j);
  }
  for (const auto& r : s.switches) switches.push_back({{"start", r.start}, {"end", r.end}});
  for (const auto& m : s.motions) {
    motions.push_back({{"start", m.start}, {"end", m.end}, {"pan_x", m.pan_x}, {"pan_y", m.pan_y}, {"zoom", m.zoom}});
  }
  return {{"total_frames", s.total_frames}, {"fps", s.fps.to_string()}, {"width", s.width}, {"height", s.height},
          {"slides", slides}, {"switches", switches}, {"motions", motions}, {"noise_sigma", s.noise_sigma},
          {"seed", s.seed}};
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  try {
    SynthSpec s;
    s.total_frames = j.at("total_frames").get<std::size_t>();
    if (j.contains("fps")) s.fps = j["fps"].is_string() ? parse_rational(j["fps"].get<std::string>()) : parse_rational(j["fps"].dump());
    s.width = j.value("width", std::size_t{64});
    s.height = j.value("height", std::size_t{64});
    for (const auto& e : j.at("slides")) {
      SlideEntry se{e.at("slide_id").get<std::uint64_t>(), e.at("start_frame").get<std::size_t>()};
      if (e.value("style", std::string("cut")) == "dissolve") {
        se.style = TransitionStyle::Dissolve;
        se.dissolve_length = e.at("dissolve_length").get<std::size_t>();
      }
      s.slides.push_back(se);
    }
    for (const auto& r : j.value("switches", nlohmann::json::array())) s.switches.push_back({r.at("start").get<std::size_t>(), r.at("end").get<std::size_t>()});
    for (const auto& m : j.value("motions", nlohmann::json::array())) {
      s.motions.push_back({m.at("start").get<std::size_t>(), m.at("end").get<std::size_t>(), m.value("pan_x", 0.0),
                           m.value("pan_y", 0.0), m.value("zoom", 0.0)});
    }
    s.noise_sigma = j.value("noise_sigma", 0.0);
    s.seed = j.value("seed", std::uint64_t{0});
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed synth spec: ") + e.what());
  }
}

/// Writes manifest.json, events.json and frames/frame_NNNNN.pgm under dir.
inline void write_corpus(const SynthResult& r, const std::filesystem::path& dir, const std::string& video_id) {
  std::filesystem::create_directories(dir / "frames");
  SequenceManifest m;
  m.video_id = video_id;
  m.fps = r.sequence.fps;
  m.width = r.sequence.width();
  m.height = r.sequence.height();
  char name[64];
  for (std::size_t i = 0; i < r.sequence.size(); ++i) {
    std::snprintf(name, sizeof name, "frames/frame_%05zu.pgm", i);
    detail::write_file(dir / name, write_pgm(r.sequence.frames[i]));
    m.frames.emplace_back(name);
  }
  detail::write_file(dir / "manifest.json", to_json(m).dump(2) + "\n");
  detail::write_file(dir / "events.json", events_to_json(r.events).dump(2) + "\n");
}

}  // namespace slidenet
