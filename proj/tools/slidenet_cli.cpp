// slidenet: command-line front end for the lecture summarization pipeline.
//
// Exit status: 0 success, 1 runtime failure, 2 usage error.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "slidenet/evalkit.hpp"
#include "slidenet/ingest.hpp"
#include "slidenet/network.hpp"
#include "slidenet/pipeline.hpp"
#include "slidenet/service.hpp"
#include "slidenet/session.hpp"
#include "slidenet/summarize.hpp"
#include "slidenet/synth.hpp"
#include "slidenet/trainer.hpp"
#include "slidenet/weights_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace slidenet;

namespace {

json read_json(const fs::path& p) {
  try {
    return json::parse(detail::read_file(p));
  } catch (const json::parse_error& e) {
    throw FormatError(p.string() + " is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  detail::write_file(p, text);
}

// Accepts event arrays whose items carry frame_index and optionally kind.
std::vector<std::size_t> transition_frames(const json& j) {
  std::vector<std::size_t> out;
  for (const auto& e : j) {
    if (e.contains("kind") && e.at("kind").get<std::string>() != "transition") continue;
    out.push_back(e.at("frame_index").get<std::size_t>());
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct SynthArgs {
  std::string config, preset = "static", out, video_id;
  std::uint64_t seed = 0;
  std::size_t frames = 1200, width = 64, height = 64;
  double noise = 2.0;
};

int run_synth(const SynthArgs& a) {
  SynthSpec spec;
  if (!a.config.empty()) {
    spec = synth_spec_from_json(read_json(a.config));
  } else {
    LectureOptions opt;
    opt.total_frames = a.frames;
    opt.width = a.width;
    opt.height = a.height;
    opt.noise_sigma = a.noise;
    spec = make_lecture_spec(lecture_preset_from_string(a.preset), a.seed, opt);
  }
  const auto r = generate(spec);
  const std::string id = a.video_id.empty() ? fs::path(a.out).filename().string() : a.video_id;
  write_corpus(r, a.out, id);
  write_text(fs::path(a.out) / "spec.json", to_json(spec).dump(2) + "\n");
  std::cout << "wrote " << r.sequence.size() << " frames and " << r.events.size() << " events to " << a.out << "\n";
  return 0;
}

struct IngestArgs {
  std::string manifest, events, config, out;
  VolumeConfig vc;
};

int run_ingest(IngestArgs a) {
  if (!a.config.empty()) a.vc = volume_config_from_json(read_json(a.config), a.vc);
  a.vc.validate();
  const auto source = load_sequence(a.manifest);
  const auto retained = downsample(source, a.vc);
  auto vols = build_volumes(retained, a.vc);
  if (!a.events.empty()) {
    const auto events = remap_events(read_events(a.events), a.vc.temporal_rate);
    label_volumes(vols, events, retained.size());
  }
  const auto m = read_manifest(a.manifest);
  json meta = {{"video_id", m.video_id}, {"frame_count", retained.size()}, {"fps", retained.fps.to_string()},
               {"volume_config", to_json(a.vc)}};
  write_text(a.out, serialize_volumes(vols, meta));
  std::cout << "wrote " << vols.size() << " volumes to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::vector<std::string> volumes;
  std::string preset = "tiny", config, out, history, weighting = "inverse";
  std::uint64_t seed = 0;
  TrainConfig tc;
};

int run_train(TrainArgs a) {
  std::vector<FrameVolume> data;
  for (const auto& v : a.volumes) {
    auto f = deserialize_volumes(detail::read_file(v));
    for (auto& vol : f.volumes) data.push_back(std::move(vol));
  }
  NetworkConfig cfg = a.config.empty() ? preset_by_name(a.preset, a.seed) : config_from_json(read_json(a.config));
  cfg.init_seed = a.seed;
  a.tc.shuffle_seed = a.seed;
  if (a.weighting == "uniform") {
    a.tc.weighting = Weighting::Uniform;
  } else if (a.weighting == "inverse") {
    a.tc.weighting = Weighting::InverseFrequency;
  } else {
    throw ConfigError("weighting must be 'uniform' or 'inverse'");
  }
  Network<float> net(cfg);
  const auto h = train(net, data, a.tc, {}, [](const EpochRecord& r) {
    std::cerr << "epoch " << r.epoch << " loss " << r.mean_loss << " accuracy " << r.train_accuracy << "\n";
  });
  save_weights(net, a.out);
  if (!a.history.empty()) write_text(a.history, h.to_table());
  std::cout << "trained " << h.size() << " epochs on " << data.size() << " volumes; weights in " << a.out << "\n";
  return 0;
}

struct DetectArgs {
  std::string weights, manifest, out;
  std::size_t stride = 8, rate = 5;
};

int run_detect(const DetectArgs& a) {
  const auto net = load_weights(a.weights);
  const auto source = load_sequence(a.manifest);
  const auto m = read_manifest(a.manifest);
  const auto track = detect(net, source, a.stride, a.rate, m.video_id);
  write_text(a.out, to_json(track).dump(2) + "\n");
  std::cout << "classified " << track.size() << " volumes; track in " << a.out << "\n";
  return 0;
}

struct SummarizeArgs {
  std::string track, manifest, out;
  SummaryOptions opt;
};

int run_summarize(const SummarizeArgs& a) {
  const auto track = track_from_json(read_json(a.track));
  const auto s = summarize(track, a.opt);
  const auto source = load_sequence(a.manifest);
  write_summary(s, source, a.out);
  std::cout << s.events.size() << " transitions, " << s.manifest.keyframes.size() << " keyframes; written to " << a.out
            << "\n";
  return 0;
}

struct EvalArgs {
  std::string pred, truth, out;
  std::size_t tol = 16;
};

int run_eval(const EvalArgs& a) {
  const auto pred = transition_frames(read_json(a.pred));
  const auto truth = transition_frames(read_json(a.truth));
  const auto r = match_transitions(pred, truth, a.tol);
  std::cout << format_table(r);
  if (!a.out.empty()) write_text(a.out, to_json(r).dump(2) + "\n");
  return 0;
}

struct BaselineArgs {
  std::string manifest, out;
  double threshold = 5.0;
  std::size_t rate = 1;
};

int run_baseline(const BaselineArgs& a) {
  const auto source = load_sequence(a.manifest);
  VolumeConfig vc;
  vc.temporal_rate = a.rate;
  vc.target_width = source.width();
  vc.target_height = source.height();
  const auto retained = downsample(source, vc);
  const auto events = pixel_diff_baseline(retained, a.threshold);
  std::vector<EventLabel> labels;
  for (const auto& e : events) labels.push_back({e.frame_index * a.rate, EventKind::Transition});
  write_text(a.out, events_to_json(labels).dump(2) + "\n");
  std::cout << labels.size() << " events written to " << a.out << "\n";
  return 0;
}

struct ServeArgs {
  std::string store, bind;
};

httplib::Server* g_server = nullptr;

int run_serve(ServeArgs a) {
  if (a.store.empty()) {
    const char* env = std::getenv("SLIDENET_STORE");
    a.store = env ? env : "slidenet-store";
  }
  if (a.bind.empty()) {
    const char* env = std::getenv("SLIDENET_BIND");
    a.bind = env ? env : "127.0.0.1:8080";
  }
  const auto colon = a.bind.rfind(':');
  if (colon == std::string::npos) throw ConfigError("bind address must be host:port");
  const std::string host = a.bind.substr(0, colon);
  const int port = std::stoi(a.bind.substr(colon + 1));
  SessionService svc(std::make_shared<DirectoryStore>(a.store));
  httplib::Server server;
  mount_routes(server, svc);
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  std::cout << "serving " << a.store << " on " << host << ":" << port << std::endl;
  if (!server.listen(host, port)) throw IoError("cannot listen on " + a.bind);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slidenet: slide transition detection and lecture summarization"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic lecture corpus");
  s->add_option("--config", synth.config, "synthesis spec JSON")->check(CLI::ExistingFile);
  s->add_option("--preset", synth.preset, "static | pan-heavy | switch-heavy");
  s->add_option("--seed", synth.seed, "generator seed");
  s->add_option("--frames", synth.frames, "frames per lecture");
  s->add_option("--width", synth.width);
  s->add_option("--height", synth.height);
  s->add_option("--noise", synth.noise, "noise sigma in intensity units");
  s->add_option("--video-id", synth.video_id);
  s->add_option("--out", synth.out, "output directory")->required();

  IngestArgs ingest;
  auto* i = app.add_subcommand("ingest", "cut a frame sequence into labeled volumes");
  i->add_option("--manifest", ingest.manifest)->required()->check(CLI::ExistingFile);
  i->add_option("--events", ingest.events, "ground-truth events (source frames)")->check(CLI::ExistingFile);
  i->add_option("--config", ingest.config, "volume config JSON")->check(CLI::ExistingFile);
  i->add_option("--frames-per-volume", ingest.vc.frames_per_volume);
  i->add_option("--stride", ingest.vc.stride);
  i->add_option("--rate", ingest.vc.temporal_rate, "keep every k-th frame");
  i->add_option("--height", ingest.vc.target_height);
  i->add_option("--width", ingest.vc.target_width);
  i->add_option("--out", ingest.out, "volumes file")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a network on volumes files");
  t->add_option("--volumes", tr.volumes, "labeled volumes files")->required()->check(CLI::ExistingFile);
  t->add_option("--preset", tr.preset, "tiny | full");
  t->add_option("--config", tr.config, "network config JSON")->check(CLI::ExistingFile);
  t->add_option("--seed", tr.seed, "init and shuffle seed");
  t->add_option("--epochs", tr.tc.epochs);
  t->add_option("--lr", tr.tc.learning_rate);
  t->add_option("--momentum", tr.tc.momentum);
  t->add_option("--batch", tr.tc.batch_size);
  t->add_option("--weighting", tr.weighting, "uniform | inverse");
  t->add_option("--out", tr.out, "weights file")->required();
  t->add_option("--history", tr.history, "per-epoch table (TSV)");

  DetectArgs det;
  auto* d = app.add_subcommand("detect", "classify the volumes of a frame sequence");
  d->add_option("--weights", det.weights)->required()->check(CLI::ExistingFile);
  d->add_option("--manifest", det.manifest)->required()->check(CLI::ExistingFile);
  d->add_option("--stride", det.stride);
  d->add_option("--rate", det.rate, "keep every k-th frame");
  d->add_option("--out", det.out, "prediction track JSON")->required();

  SummarizeArgs sum;
  auto* m = app.add_subcommand("summarize", "turn a prediction track into keyframes and an outline");
  m->add_option("--track", sum.track)->required()->check(CLI::ExistingFile);
  m->add_option("--manifest", sum.manifest, "source sequence for keyframe images")->required()->check(CLI::ExistingFile);
  m->add_option("--min-confidence", sum.opt.min_confidence);
  m->add_option("--window", sum.opt.median_window, "odd median window");
  m->add_option("--out", sum.out, "output directory")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "score predicted transitions against ground truth");
  e->add_option("--pred", ev.pred)->required()->check(CLI::ExistingFile);
  e->add_option("--truth", ev.truth)->required()->check(CLI::ExistingFile);
  e->add_option("--tol", ev.tol, "matching tolerance in frames");
  e->add_option("--out", ev.out, "report JSON");

  BaselineArgs bl;
  auto* b = app.add_subcommand("baseline", "pixel-difference transition detector");
  b->add_option("--manifest", bl.manifest)->required()->check(CLI::ExistingFile);
  b->add_option("--threshold", bl.threshold, "mean absolute difference threshold");
  b->add_option("--rate", bl.rate, "keep every k-th frame");
  b->add_option("--out", bl.out, "events JSON")->required();

  ServeArgs sv;
  auto* v = app.add_subcommand("serve", "run the session service");
  v->add_option("--store", sv.store, "store directory (env SLIDENET_STORE)");
  v->add_option("--bind", sv.bind, "host:port (env SLIDENET_BIND)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex, std::cerr, std::cerr);
    std::cerr << app.help();
    return 2;
  }

  try {
    if (*s) return run_synth(synth);
    if (*i) return run_ingest(ingest);
    if (*t) return run_train(tr);
    if (*d) return run_detect(det);
    if (*m) return run_summarize(sum);
    if (*e) return run_eval(ev);
    if (*b) return run_baseline(bl);
    if (*v) return run_serve(sv);
  } catch (const ConfigError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 2;
}
