#pragma once

// Library composition of the file-mediated stages: ingest -> detect ->
// summarize. The CLI calls exactly these functions.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "slidenet/ingest.hpp"
#include "slidenet/network.hpp"
#include "slidenet/summarize.hpp"
#include "slidenet/trainer.hpp"
#include "slidenet/weights_io.hpp"

namespace slidenet {

/// Volume geometry implied by a network: N and the frame size come from its
/// input, stride and temporal rate from the caller.
template <typename T>
VolumeConfig volume_config_for(const Network<T>& net, std::size_t stride, std::size_t temporal_rate) {
  VolumeConfig v;
  v.frames_per_volume = net.config().input.frames;
  v.target_height = net.config().input.height;
  v.target_width = net.config().input.width;
  v.stride = stride;
  v.temporal_rate = temporal_rate;
  v.validate();
  return v;
}

template <typename T>
PredictionTrack predict_track(const Network<T>& net, std::span<const FrameVolume> volumes, std::size_t frame_count,
                              Rational retained_fps, std::size_t temporal_rate, std::string video_id) {
  PredictionTrack track;
  track.video_id = std::move(video_id);
  track.fps = retained_fps;
  track.frame_count = frame_count;
  track.temporal_rate = temporal_rate;
  const auto probs = predict_probabilities(net, volumes);
  for (std::size_t i = 0; i < volumes.size(); ++i) {
    track.probs.push_back({static_cast<double>(probs[3 * i]), static_cast<double>(probs[3 * i + 1]),
                           static_cast<double>(probs[3 * i + 2])});
    track.ranges.push_back({volumes[i].start, volumes[i].end});
  }
  return track;
}

/// Downsamples a source sequence, cuts it into volumes and classifies them.
template <typename T>
PredictionTrack detect(const Network<T>& net, const FrameSequence& source, std::size_t stride,
                       std::size_t temporal_rate, const std::string& video_id) {
  const auto cfg = volume_config_for(net, stride, temporal_rate);
  const auto retained = downsample(source, cfg);
  const auto volumes = build_volumes(retained, cfg);
  return predict_track(net, volumes, retained.size(), retained.fps, temporal_rate, video_id);
}

/// Transition events mapped back to source-frame coordinates.
inline std::vector<EventLabel> source_events(const Summary& s, std::size_t temporal_rate) {
  std::vector<EventLabel> out;
  for (const auto& e : s.events) out.push_back({e.frame_index * temporal_rate, EventKind::Transition});
  return out;
}

/// Serialized forms of every summarize output; the same bytes the CLI writes.
struct SummaryDocuments {
  std::string summary_json;
  std::string outline_json;
  std::string events_json;
};

inline SummaryDocuments render_documents(const Summary& s) {
  return {to_json(s.manifest).dump(2) + "\n", to_json(s.outline).dump(2) + "\n",
          events_to_json(source_events(s, s.manifest.temporal_rate)).dump(2) + "\n"};
}

/// Writes summary.json, outline.json, events.json and key_NNNN.pgm into dir.
inline void write_summary(const Summary& s, const FrameSequence& source, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto docs = render_documents(s);
  detail::write_file(dir / "summary.json", docs.summary_json);
  detail::write_file(dir / "outline.json", docs.outline_json);
  detail::write_file(dir / "events.json", docs.events_json);
  const auto images = keyframe_images(s.manifest, source);
  for (std::size_t i = 0; i < images.size(); ++i) detail::write_file(dir / keyframe_file_name(i), write_pgm(images[i]));
}

}  // namespace slidenet
