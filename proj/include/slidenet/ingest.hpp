#pragma once

// Frame sequences from disk, temporal/spatial downsampling, frame volumes
// and their category labels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "slidenet/category.hpp"
#include "slidenet/errors.hpp"
#include "slidenet/frames.hpp"
#include "slidenet/tensor.hpp"
#include "slidenet/weights_io.hpp"

namespace slidenet {

struct VolumeConfig {
  std::size_t frames_per_volume = 16;  // N
  std::size_t stride = 8;
  std::size_t temporal_rate = 5;  // keep every k-th frame
  std::size_t target_height = 112;
  std::size_t target_width = 112;

  void validate() const {
    if (frames_per_volume < 2) throw ConfigError("frames per volume must be >= 2");
    if (stride < 1) throw ConfigError("volume stride must be >= 1");
    if (temporal_rate < 1) throw ConfigError("temporal rate must be >= 1");
    if (target_height < 1 || target_width < 1) throw ConfigError("target dimensions must be positive");
  }
};

inline nlohmann::json to_json(const VolumeConfig& c) {
  return {{"frames_per_volume", c.frames_per_volume},
          {"stride", c.stride},
          {"temporal_rate", c.temporal_rate},
          {"target_height", c.target_height},
          {"target_width", c.target_width}};
}

/// Missing keys keep their defaults.
inline VolumeConfig volume_config_from_json(const nlohmann::json& j, VolumeConfig c = {}) {
  try {
    c.frames_per_volume = j.value("frames_per_volume", c.frames_per_volume);
    c.stride = j.value("stride", c.stride);
    c.temporal_rate = j.value("temporal_rate", c.temporal_rate);
    c.target_height = j.value("target_height", c.target_height);
    c.target_width = j.value("target_width", c.target_width);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed volume config: ") + e.what());
  }
  c.validate();
  return c;
}

/// N consecutive retained frames scaled to [0, 1], laid out [1, N, H, W].
struct FrameVolume {
  Tensor<float> data;
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  std::optional<Category> category;
};

// ---------------------------------------------------------------------------
// Manifest + events files

struct SequenceManifest {
  std::string video_id;
  Rational fps;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::string> frames;
};

inline nlohmann::json to_json(const SequenceManifest& m) {
  nlohmann::json j = {{"fps", m.fps.den == 1 ? nlohmann::json(m.fps.num) : nlohmann::json(m.fps.to_string())},
                      {"width", m.width},
                      {"height", m.height},
                      {"frames", m.frames}};
  if (!m.video_id.empty()) j["video_id"] = m.video_id;
  return j;
}

inline SequenceManifest manifest_from_json(const nlohmann::json& j) {
  try {
    SequenceManifest m;
    m.video_id = j.value("video_id", std::string());
    const auto& fps = j.at("fps");
    m.fps = fps.is_string() ? parse_rational(fps.get<std::string>()) : parse_rational(fps.dump());
    if (m.fps.num <= 0 || m.fps.den <= 0) throw FormatError("manifest fps must be positive");
    m.width = j.at("width").get<std::size_t>();
    m.height = j.at("height").get<std::size_t>();
    m.frames = j.at("frames").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
}

inline SequenceManifest read_manifest(const std::filesystem::path& path) {
  try {
    return manifest_from_json(nlohmann::json::parse(detail::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
}

/// Loads every frame listed in the manifest; relative names resolve against
/// the manifest's directory.
inline FrameSequence load_sequence(const std::filesystem::path& manifest_path) {
  const SequenceManifest m = read_manifest(manifest_path);
  if (m.frames.empty()) throw FormatError("manifest " + manifest_path.string() + " lists no frames");
  const auto base = manifest_path.parent_path();
  std::vector<Frame> frames;
  frames.reserve(m.frames.size());
  for (const auto& name : m.frames) {
    const std::filesystem::path p = std::filesystem::path(name).is_absolute() ? std::filesystem::path(name) : base / name;
    if (!std::filesystem::exists(p)) throw IoError("frame file missing: " + p.string());
    Frame f = parse_pgm(detail::read_file(p));
    if (f.width != m.width || f.height != m.height) {
      throw ShapeError("frame " + p.string() + " is " + std::to_string(f.width) + "x" + std::to_string(f.height) +
                       ", manifest declares " + std::to_string(m.width) + "x" + std::to_string(m.height));
    }
    frames.push_back(std::move(f));
  }
  return FrameSequence::from_frames(std::move(frames), m.fps);
}

inline nlohmann::json events_to_json(std::span<const EventLabel> events) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& e : events) a.push_back({{"frame_index", e.frame_index}, {"kind", std::string(to_string(e.kind))}});
  return a;
}

inline std::vector<EventLabel> events_from_json(const nlohmann::json& j) {
  try {
    std::vector<EventLabel> out;
    for (const auto& e : j) out.push_back({e.at("frame_index").get<std::size_t>(), event_kind_from_string(e.at("kind").get<std::string>())});
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed events file: ") + e.what());
  }
}

inline std::vector<EventLabel> read_events(const std::filesystem::path& path) {
  try {
    return events_from_json(nlohmann::json::parse(detail::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("events file " + path.string() + " is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Downsampling

namespace detail {

struct Tap {
  std::size_t src;
  double weight;
};

// Box-filter taps mapping `in` samples onto `out` samples with fractional coverage.
inline std::vector<std::vector<Tap>> area_taps(std::size_t in, std::size_t out) {
  std::vector<std::vector<Tap>> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double lo = static_cast<double>(o) * scale;
    const double hi = static_cast<double>(o + 1) * scale;
    for (auto s = static_cast<std::size_t>(std::floor(lo)); s < in && static_cast<double>(s) < hi; ++s) {
      const double cover = std::min(hi, static_cast<double>(s + 1)) - std::max(lo, static_cast<double>(s));
      if (cover > 1e-12) taps[o].push_back({s, cover / scale});
    }
  }
  return taps;
}

}  // namespace detail

/// Area-averaged resize to (width, height); target must not exceed the source.
inline Frame area_resize(const Frame& f, std::size_t width, std::size_t height) {
  if (width > f.width || height > f.height) throw ConfigError("downsampling cannot upscale");
  if (width == f.width && height == f.height) return f;
  const auto tx = detail::area_taps(f.width, width);
  const auto ty = detail::area_taps(f.height, height);
  std::vector<double> rows(f.height * width);
  for (std::size_t y = 0; y < f.height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double acc = 0.0;
      for (const auto& t : tx[x]) acc += t.weight * f.pixels[y * f.width + t.src];
      rows[y * width + x] = acc;
    }
  }
  Frame out(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double acc = 0.0;
      for (const auto& t : ty[y]) acc += t.weight * rows[t.src * width + x];
      out.pixels[y * width + x] = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
    }
  }
  return out;
}

/// Keeps frames whose position is a multiple of temporal_rate and area-averages
/// them onto the target dimensions.
inline FrameSequence downsample(const FrameSequence& seq, const VolumeConfig& cfg) {
  cfg.validate();
  if (cfg.target_width > seq.width() || cfg.target_height > seq.height()) {
    throw ConfigError("target " + std::to_string(cfg.target_width) + "x" + std::to_string(cfg.target_height) +
                      " exceeds source " + std::to_string(seq.width()) + "x" + std::to_string(seq.height()));
  }
  FrameSequence out;
  out.fps = seq.fps.divided_by(static_cast<std::int64_t>(cfg.temporal_rate));
  for (std::size_t i = 0; i < seq.size(); i += cfg.temporal_rate) {
    out.frames.push_back(area_resize(seq.frames[i], cfg.target_width, cfg.target_height));
    out.source_indices.push_back(seq.source_indices[i]);
  }
  return out;
}

/// Source frame f maps to retained frame floor(f / k).
inline std::vector<EventLabel> remap_events(std::span<const EventLabel> events, std::size_t temporal_rate) {
  std::vector<EventLabel> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back({e.frame_index / temporal_rate, e.kind});
  return out;
}

// ---------------------------------------------------------------------------
// Volumes

inline std::size_t volume_count(std::size_t frames, std::size_t n, std::size_t stride) {
  return frames < n ? 0 : (frames - n) / stride + 1;
}

inline Tensor<float> volume_tensor(const FrameSequence& seq, std::size_t start, std::size_t n) {
  const std::size_t h = seq.height(), w = seq.width();
  Tensor<float> t(Shape{1, n, h, w});
  float* out = t.data();
  for (std::size_t k = 0; k < n; ++k) {
    for (std::uint8_t px : seq.frames[start + k].pixels) *out++ = static_cast<float>(px) / 255.0f;
  }
  return t;
}

/// Volume i covers retained frames [i*stride, i*stride + N - 1].
inline std::vector<FrameVolume> build_volumes(const FrameSequence& seq, const VolumeConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.frames_per_volume;
  if (seq.size() < n) {
    throw InvariantError("sequence of " + std::to_string(seq.size()) + " frames is shorter than one volume (" +
                         std::to_string(n) + ")");
  }
  std::vector<FrameVolume> vols;
  const std::size_t count = volume_count(seq.size(), n, cfg.stride);
  vols.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t start = i * cfg.stride;
    vols.push_back({volume_tensor(seq, start, n), start, start + n - 1, std::nullopt});
  }
  return vols;
}

/// A volume containing a transition event is a transition; otherwise one
/// containing a switch event is a switch; otherwise unchanged. Events are in
/// retained-frame coordinates and must be < retained_length.
inline void label_volumes(std::span<FrameVolume> volumes, std::span<const EventLabel> events,
                          std::size_t retained_length) {
  for (const auto& e : events) {
    if (e.frame_index >= retained_length) {
      throw InvariantError("event at frame " + std::to_string(e.frame_index) + " outside sequence of " +
                           std::to_string(retained_length));
    }
  }
  for (auto& v : volumes) {
    bool transition = false, sw = false;
    for (const auto& e : events) {
      if (e.frame_index < v.start || e.frame_index > v.end) continue;
      (e.kind == EventKind::Transition ? transition : sw) = true;
    }
    v.category = transition ? Category::Transition : sw ? Category::Switch : Category::Unchanged;
  }
}

// ---------------------------------------------------------------------------
// Volumes file: "STRV1\n" | u32 header length | JSON header | f32le data

inline constexpr std::string_view kVolumesMagic = "STRV1\n";

inline std::string serialize_volumes(std::span<const FrameVolume> vols, const nlohmann::json& meta = {}) {
  if (vols.empty()) throw InvariantError("no volumes to write");
  const Shape shape = vols.front().data.shape();
  nlohmann::json list = nlohmann::json::array();
  std::string payload;
  for (const auto& v : vols) {
    if (v.data.shape() != shape) throw ShapeError("volumes in one file must share a shape");
    list.push_back({{"start", v.start},
                    {"end", v.end},
                    {"category", v.category ? nlohmann::json(std::string(to_string(*v.category))) : nlohmann::json()}});
    detail::put_f32le<float>(payload, v.data.values());
  }
  nlohmann::json header = {{"format", "STRV1"}, {"shape", shape}, {"dtype", "f32le"}, {"volumes", list}};
  if (!meta.is_null()) header["meta"] = meta;
  return detail::join_container(kVolumesMagic, header, payload);
}

struct VolumesFile {
  std::vector<FrameVolume> volumes;
  nlohmann::json meta;
};

inline VolumesFile deserialize_volumes(std::string_view bytes) {
  auto c = detail::split_container(bytes, kVolumesMagic);
  VolumesFile out;
  try {
    const Shape shape = c.header.at("shape").get<Shape>();
    const auto& list = c.header.at("volumes");
    const std::size_t per = shape_size(shape);
    if (c.payload.size() != 4 * per * list.size()) {
      throw LengthMismatchError("volumes payload holds " + std::to_string(c.payload.size()) + " bytes, header needs " +
                                std::to_string(4 * per * list.size()));
    }
    std::size_t pos = 0;
    for (const auto& v : list) {
      std::vector<float> data(per);
      for (auto& x : data) {
        x = detail::get_f32le(c.payload, pos);
        pos += 4;
      }
      FrameVolume fv{Tensor<float>(shape, std::move(data)), v.at("start").get<std::size_t>(),
                     v.at("end").get<std::size_t>(), std::nullopt};
      if (!v.at("category").is_null()) fv.category = category_from_string(v.at("category").get<std::string>());
      out.volumes.push_back(std::move(fv));
    }
    out.meta = c.header.value("meta", nlohmann::json());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed volumes header: ") + e.what());
  }
  return out;
}

}  // namespace slidenet
