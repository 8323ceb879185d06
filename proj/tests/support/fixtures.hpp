#pragma once

// Small labeled datasets shared by the trainer tests and the acceptance suite.

#include <vector>

#include "slidenet/ingest.hpp"
#include "slidenet/synth.hpp"

namespace fixtures {

using namespace slidenet;

struct LabeledLecture {
  std::vector<FrameVolume> volumes;
  std::vector<EventLabel> events;  // retained coordinates
};

/// Labeled tiny-preset volumes cut from one synthetic switch-heavy lecture.
inline LabeledLecture lecture_volumes(std::uint64_t seed, std::size_t stride = 4) {
  LectureOptions opt;
  opt.total_frames = 900;
  const auto r = generate(make_lecture_spec(LecturePreset::SwitchHeavy, seed, opt));
  const VolumeConfig vc{8, stride, 5, 32, 32};
  const auto retained = downsample(r.sequence, vc);
  LabeledLecture out{build_volumes(retained, vc), remap_events(r.events, vc.temporal_rate)};
  label_volumes(out.volumes, out.events, retained.size());
  return out;
}

/// True when every event inside the volume sits strictly between its first
/// and last frame, so the visible change is inside the volume whichever
/// retained frame it lands on.
inline bool change_is_interior(const FrameVolume& v, const std::vector<EventLabel>& events) {
  for (const auto& e : events) {
    if (e.frame_index == v.start || e.frame_index == v.end) return false;
  }
  return true;
}

/// Eight volumes with mixed categories: 3 unchanged, 2 switches and 3
/// transitions when the lecture has them, topped up in frame order.
inline std::vector<FrameVolume> overfit_set(std::uint64_t seed) {
  const auto lecture = lecture_volumes(seed);
  const auto& all = lecture.volumes;
  std::vector<FrameVolume> out;
  const std::size_t quota[3] = {3, 2, 3};  // unchanged, switch, transition
  std::size_t taken[3] = {0, 0, 0};
  std::vector<bool> used(all.size(), false);
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto c = index_of(*all[i].category);
    if (!change_is_interior(all[i], lecture.events)) {
      used[i] = true;
      continue;
    }
    if (taken[c] < quota[c]) {
      out.push_back(all[i]);
      used[i] = true;
      ++taken[c];
    }
  }
  for (std::size_t i = 0; i < all.size() && out.size() < 8; ++i) {
    if (!used[i]) out.push_back(all[i]);
  }
  out.resize(std::min<std::size_t>(out.size(), 8));
  return out;
}

}  // namespace fixtures
