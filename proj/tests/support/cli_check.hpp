#pragma once

// Runs the slidenet executable and compares its file outputs with the same
// stages composed in-process.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "slidenet/pipeline.hpp"
#include "slidenet/synth.hpp"
#include "slidenet/trainer.hpp"
#include "slidenet/weights_io.hpp"

namespace cli {

namespace fs = std::filesystem;
using namespace slidenet;

struct Result {
  int status = -1;
  std::string out;
};

inline std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

/// Runs `exe args...` through the shell with stderr folded into stdout,
/// optionally from `cwd`.
inline Result run(const std::string& exe, const std::vector<std::string>& args, const fs::path& cwd = {}) {
  std::string cmd = cwd.empty() ? "" : "cd " + quote(cwd.string()) + " && ";
  cmd += quote(exe);
  for (const auto& a : args) cmd += " " + quote(a);
  cmd += " 2>&1";
  Result r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int st = ::pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

/// A seeded random network whose output layer is recentred on the corpus so
/// that its decisions split across categories instead of collapsing onto one,
/// then sharpened so that probabilities clear the decoding threshold.
inline Network<float> calibrated_net(const FrameSequence& source, std::uint64_t seed, std::size_t stride, std::size_t rate) {
  Network<float> net(tiny_preset(seed));
  const auto vc = volume_config_for(net, stride, rate);
  const auto vols = build_volumes(downsample(source, vc), vc);
  const auto probs = predict_probabilities(net, vols);
  auto& w = net.weights();
  auto& bias = w[w.size() - 1];
  auto& weight = w[w.size() - 2];
  for (std::size_t c = 1; c < kCategoryCount; ++c) {
    std::vector<double> gap;
    for (std::size_t i = 0; i < vols.size(); ++i) gap.push_back(std::log(probs[3 * i + c]) - std::log(probs[3 * i]));
    std::nth_element(gap.begin(), gap.begin() + gap.size() / 2, gap.end());
    bias[c] -= static_cast<float>(gap[gap.size() / 2]);
  }
  const float gain = 50.0f;
  for (auto& v : weight.values()) v *= gain;
  for (auto& v : bias.values()) v *= gain;
  return net;
}

/// One seeded corpus: synth, detect and summarize through the executable,
/// then the same composition in-process. Returns the first difference.
inline std::optional<std::string> detect_summarize_matches(const std::string& exe, const fs::path& dir,
                                                           std::uint64_t seed, std::size_t* keyframes = nullptr) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::size_t stride = 2, rate = 5;
  const char* presets[] = {"static", "pan-heavy", "switch-heavy"};
  const std::string preset = presets[seed % 3];
  auto r = run(exe, {"synth", "--preset", preset, "--seed", std::to_string(seed), "--frames", "300", "--out",
                     (dir / "corpus").string()});
  if (r.status != 0) return "synth exited " + std::to_string(r.status) + ": " + r.out;

  LectureOptions opt;
  opt.total_frames = 300;
  const auto corpus = generate(make_lecture_spec(lecture_preset_from_string(preset), seed, opt));
  const auto source = load_sequence(dir / "corpus" / "manifest.json");
  if (source.frames != corpus.sequence.frames) return "synth frames differ from the in-process generator";

  const auto net = calibrated_net(corpus.sequence, seed, stride, rate);
  save_weights(net, dir / "w.strn");
  r = run(exe, {"detect", "--weights", (dir / "w.strn").string(), "--manifest", (dir / "corpus" / "manifest.json").string(),
                "--stride", std::to_string(stride), "--rate", std::to_string(rate), "--out", (dir / "track.json").string()});
  if (r.status != 0) return "detect exited " + std::to_string(r.status) + ": " + r.out;
  r = run(exe, {"summarize", "--track", (dir / "track.json").string(), "--manifest",
                (dir / "corpus" / "manifest.json").string(), "--out", (dir / "summary").string()});
  if (r.status != 0) return "summarize exited " + std::to_string(r.status) + ": " + r.out;

  const auto reloaded = load_weights(dir / "w.strn");
  const auto track = detect(reloaded, corpus.sequence, stride, rate, read_manifest(dir / "corpus" / "manifest.json").video_id);
  if (detail::read_file(dir / "track.json") != to_json(track).dump(2) + "\n") return "track.json differs";
  const auto s = summarize(track);
  const auto docs = render_documents(s);
  if (detail::read_file(dir / "summary" / "summary.json") != docs.summary_json) return "summary.json differs";
  if (detail::read_file(dir / "summary" / "outline.json") != docs.outline_json) return "outline.json differs";
  if (detail::read_file(dir / "summary" / "events.json") != docs.events_json) return "events.json differs";
  const auto images = keyframe_images(s.manifest, corpus.sequence);
  if (keyframes) *keyframes = images.size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (detail::read_file(dir / "summary" / keyframe_file_name(i)) != write_pgm(images[i])) {
      return "keyframe image " + std::to_string(i) + " differs";
    }
  }
  if (fs::exists(dir / "summary" / keyframe_file_name(images.size()))) return "extra keyframe image written";
  return std::nullopt;
}

}  // namespace cli
