// Acceptance suite: one PASS/FAIL line per primary criterion. Exit status is
// nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "slidenet/gradcheck.hpp"
#include "slidenet/network.hpp"
#include "slidenet/ops.hpp"
#include "slidenet/session.hpp"
#include "slidenet/summarize.hpp"
#include "slidenet/trainer.hpp"
#include "slidenet/weights_io.hpp"
#include "support/cli_check.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "support/session_model.hpp"
#include "support/study.hpp"

using namespace slidenet;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (!pass) detail << "; ";
      detail << "failed: " << what;
      pass = false;
    }
  }
};

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

double max_rel(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], b[i]));
  return worst;
}

template <typename T>
Tensor<T> random_batch(const NetworkConfig& c, std::size_t B, SplitMix64& rng) {
  const auto& in = c.input;
  return oracle::random_tensor<T>({B, in.channels, in.frames, in.height, in.width}, rng, 0.0, 1.0);
}

fs::path scratch(const std::string& tag) {
  return fs::temp_directory_path() / ("slidenet_accept_" + tag + "_" + std::to_string(::getpid()));
}

// ---------------------------------------------------------------------------

void numeric_correctness(Verdict& v) {
  const double t0 = cpu_seconds();
  SplitMix64 rng(1001);
  double conv_err = 0, pool_mismatch = 0, lin_err = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t cin = rng.uniform_int(1, 3), cout = rng.uniform_int(1, 3);
    const std::size_t kd = rng.uniform_int(1, 3), kh = rng.uniform_int(1, 3), kw = rng.uniform_int(1, 3);
    const std::array<std::size_t, 3> st{std::size_t(rng.uniform_int(1, 2)), std::size_t(rng.uniform_int(1, 2)),
                                        std::size_t(rng.uniform_int(1, 2))};
    const std::array<std::size_t, 3> pad{std::size_t(rng.uniform_int(0, 1)), std::size_t(rng.uniform_int(0, 1)),
                                         std::size_t(rng.uniform_int(0, 1))};
    const std::size_t D = kd + rng.uniform_int(0, 3), H = kh + rng.uniform_int(0, 4), W = kw + rng.uniform_int(0, 4);
    auto x = oracle::random_tensor<double>({cin, D, H, W}, rng);
    auto w = oracle::random_tensor<double>({cout, cin, kd, kh, kw}, rng);
    auto b = oracle::random_tensor<double>({cout}, rng);
    auto y = conv3d(x, w, b, {{st[0], st[1], st[2]}, {pad[0], pad[1], pad[2]}});
    std::array<std::size_t, 4> ys{};
    const auto ref = oracle::conv3d(x.buffer(), {cin, D, H, W}, w.buffer(), {cout, cin, kd, kh, kw}, b.buffer(), st, pad, ys);
    v.require(y.shape() == Shape({ys[0], ys[1], ys[2], ys[3]}), "conv3d output shape");
    conv_err = std::max(conv_err, max_rel(y.values(), ref));
  }
  for (int trial = 0; trial < 120; ++trial) {
    const std::array<std::size_t, 3> win{std::size_t(rng.uniform_int(1, 3)), std::size_t(rng.uniform_int(1, 3)),
                                         std::size_t(rng.uniform_int(1, 3))};
    const std::array<std::size_t, 3> st{std::size_t(rng.uniform_int(1, 3)), std::size_t(rng.uniform_int(1, 3)),
                                        std::size_t(rng.uniform_int(1, 3))};
    const std::size_t C = rng.uniform_int(1, 3), D = win[0] + rng.uniform_int(0, 4), H = win[1] + rng.uniform_int(0, 4),
                      W = win[2] + rng.uniform_int(0, 4);
    auto x = oracle::random_tensor<double>({C, D, H, W}, rng);
    if (trial % 2) {
      for (auto& e : x.values()) e = std::round(e * 3.0);
    }
    const auto r = maxpool3d(x, {{win[0], win[1], win[2]}, {st[0], st[1], st[2]}});
    const auto [y, arg] = oracle::maxpool3d(x.buffer(), {C, D, H, W}, win, st);
    pool_mismatch = std::max(pool_mismatch, max_rel(r.y.values(), y));
    v.require(r.argmax == arg, "maxpool3d argmax");
  }
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t B = rng.uniform_int(1, 5), Fin = rng.uniform_int(1, 9), Fout = rng.uniform_int(1, 7);
    auto x = oracle::random_tensor<double>({B, Fin}, rng);
    auto w = oracle::random_tensor<double>({Fout, Fin}, rng);
    auto b = oracle::random_tensor<double>({Fout}, rng);
    lin_err = std::max(lin_err, max_rel(linear(x, w, b).values(), oracle::matmul_bias(x.buffer(), B, Fin, w.buffer(), Fout, b.buffer())));
  }
  v.require(conv_err < 1e-6, "conv3d vs oracle");
  v.require(pool_mismatch < 1e-6, "maxpool3d vs oracle");
  v.require(lin_err < 1e-6, "linear vs oracle");

  double grad_err = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t cin = rng.uniform_int(1, 2), cout = rng.uniform_int(1, 2);
    grad_err = std::max(grad_err, grad_check_conv3d(oracle::random_tensor<double>({cin, 4, 4, 4}, rng),
                                                    oracle::random_tensor<double>({cout, cin, 3, 3, 3}, rng),
                                                    oracle::random_tensor<double>({cout}, rng),
                                                    {{std::size_t(rng.uniform_int(1, 2)), 1, 1}, {1, 1, 1}}));
    Tensor<double> px(Shape{2, 4, 4, 4});
    std::vector<double> vals(px.size());
    std::iota(vals.begin(), vals.end(), 0.0);
    shuffle(std::span<double>(vals), rng);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = vals[i] * 0.01;
    grad_err = std::max(grad_err, grad_check_maxpool3d(px, {}));
    const std::size_t B = rng.uniform_int(1, 4), Fin = rng.uniform_int(1, 8), Fout = rng.uniform_int(1, 6);
    grad_err = std::max(grad_err, grad_check_linear(oracle::random_tensor<double>({B, Fin}, rng),
                                                    oracle::random_tensor<double>({Fout, Fin}, rng),
                                                    oracle::random_tensor<double>({Fout}, rng)));
    Tensor<double> rx(Shape{3, 7});
    for (auto& e : rx.values()) e = (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(0.1, 1.0);
    grad_err = std::max(grad_err, grad_check_relu(rx));
    const std::size_t targets[] = {2, 0, 1};
    grad_err = std::max(grad_err, grad_check_softmax_cross_entropy(oracle::random_tensor<double>({3, 3}, rng, -2, 2), targets,
                                                                   Tensor<double>(Shape{3}, std::vector<double>{1.0, 0.7, 3.0})));
    grad_err = std::max(grad_err, grad_check_residual_add(oracle::random_tensor<double>({2, 2, 3, 3}, rng),
                                                          oracle::random_tensor<double>({4, 2, 3, 3}, rng)));
  }
  v.require(grad_err < 1e-4, "per-operation finite differences");

  Network<double> net(tiny_preset(21));
  for (auto& p : net.weights().params) {
    if (p.value.rank() == 1) {
      for (auto& e : p.value.values()) e = rng.uniform(-0.05, 0.05);
    }
  }
  const auto batch = random_batch<double>(net.config(), 2, rng);
  const std::vector<std::size_t> targets{2, 0};
  const Tensor<double> cw(Shape{3}, std::vector<double>{1.0, 2.0, 0.5});
  const auto r = net.backward(batch, targets, cw);
  std::vector<Tensor<double>*> params;
  for (auto& p : net.weights().params) params.push_back(&p.value);
  std::vector<Tensor<double>> grads;
  for (const auto& g : r.grads.params) grads.push_back(g.value);
  GradCheckOptions opts;
  opts.max_probes_per_tensor = 12;
  const double net_err = grad_check(params, grads, [&] { return net.backward(batch, targets, cw).loss; }, opts);
  v.require(net_err < 1e-3, "whole tiny network gradient check");
  const double cpu = cpu_seconds() - t0;
  v.require(cpu < 120.0, "runtime under 2 min CPU");
  v.detail << (v.pass ? "" : " | ") << "conv " << conv_err << ", pool " << pool_mismatch << ", linear " << lin_err
           << " (120 each); op grads " << grad_err << "; tiny net " << net_err << "; " << cpu << " s CPU";
}

void architecture(Verdict& v) {
  SplitMix64 rng(1002);
  for (const auto& c : {tiny_preset(3), full_preset(3)}) {
    v.require(count_layers(c, LayerKind::Conv3d) == 7, c.name + " has 7 conv layers");
    v.require(count_layers(c, LayerKind::Linear) == 4, c.name + " has 4 fc layers");
    Network<float> net(c);
    const auto p = net.forward(random_batch<float>(c, 2, rng));
    v.require(p.shape() == Shape({2, 3}), c.name + " returns 2 rows");
    for (std::size_t i = 0; i < 2; ++i) {
      double s = 0;
      for (std::size_t k = 0; k < 3; ++k) {
        v.require(p.at({i, k}) >= 0.0f, c.name + " nonnegative probabilities");
        s += p.at({i, k});
      }
      v.require(std::abs(s - 1.0) <= 1e-5, c.name + " rows sum to 1");
    }

    Network<double> zeroed(c);
    for (auto& prm : zeroed.weights().params) {
      if (prm.name.find(".conv2.") != std::string::npos) prm.value.fill(0.0);
    }
    const auto t = zeroed.trace(zeroed.sample(random_batch<double>(c, 1, rng), 0));
    bool exact = true;
    for (const auto& b : t.blocks) {
      const auto& in = b.input;
      for (std::size_t ch = 0; ch < b.output.dim(0); ++ch)
        for (std::size_t d = 0; d < in.dim(1); ++d)
          for (std::size_t h = 0; h < in.dim(2); ++h)
            for (std::size_t w = 0; w < in.dim(3); ++w) {
              exact &= b.output.at({ch, d, h, w}) == (ch < in.dim(0) ? in.at({ch, d, h, w}) : 0.0);
            }
    }
    v.require(exact, c.name + " zeroed branches reduce to identity/zero-pad shortcuts");
  }
  v.detail << (v.pass ? "" : " | ") << "tiny and full presets: 7 conv, 4 fc, 2-row distributions, exact shortcuts";
}

void persistence(Verdict& v) {
  Network<float> net(tiny_preset(17));
  net.weights()[1][0] = -0.0f;
  net.weights()[1][1] = std::numeric_limits<float>::denorm_min();
  const auto path = scratch("weights.strn");
  save_weights(net, path);
  const auto back = load_weights(path);
  fs::remove(path);
  bool exact = back.config() == net.config() && back.weights().size() == net.weights().size();
  for (std::size_t i = 0; exact && i < net.weights().size(); ++i) {
    const auto& a = net.weights()[i];
    const auto& b = back.weights()[i];
    exact = a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
  }
  v.require(exact, "bit-exact round trip");

  const auto bytes = serialize_weights(net);
  auto bad_magic = bytes;
  bad_magic[2] ^= 0x20;
  auto truncated = bytes.substr(0, bytes.size() - 4);
  auto kind_of = [](const std::string& b) -> std::string {
    try {
      deserialize_weights(b);
      return "accepted";
    } catch (const BadMagicError&) {
      return "bad-magic";
    } catch (const LengthMismatchError&) {
      return "length-mismatch";
    } catch (const std::exception& e) {
      return std::string("other: ") + e.what();
    }
  };
  const auto k1 = kind_of(bad_magic), k2 = kind_of(truncated);
  v.require(k1 == "bad-magic", "corrupted magic rejected as bad-magic (got " + k1 + ")");
  v.require(k2 == "length-mismatch", "short payload rejected as length-mismatch (got " + k2 + ")");
  v.detail << (v.pass ? "" : " | ") << "round trip bit-exact over " << net.weights().parameter_count()
           << " floats; corrupted magic -> " << k1 << ", short payload -> " << k2;
}

void pipeline_algebra(Verdict& v) {
  SplitMix64 rng(1004);
  auto constant = [](std::size_t T) {
    std::vector<Frame> frames(T, Frame(1, 1, std::uint8_t{7}));
    return FrameSequence::from_frames(std::move(frames), {30, 1});
  };
  std::size_t bad_counts = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t N = rng.uniform_int(2, 20), stride = rng.uniform_int(1, 24), T = rng.uniform_int(N, 150);
    bad_counts += build_volumes(constant(T), {N, stride, 1, 1, 1}).size() != (T - N) / stride + 1;
  }
  v.require(bad_counts == 0, "build_volumes count formula");

  std::size_t bad_labels = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t N = rng.uniform_int(2, 16), T = rng.uniform_int(N, 200), stride = rng.uniform_int(1, 12);
    auto vols = build_volumes(constant(T), {N, stride, 1, 1, 1});
    std::vector<EventLabel> events;
    std::vector<std::pair<std::size_t, bool>> raw;
    for (std::size_t e = 0, n = rng.uniform_int(0, 12); e < n; ++e) {
      const std::size_t f = rng.uniform_int(0, T - 1);
      const bool tr = rng.bernoulli(0.5);
      events.push_back({f, tr ? EventKind::Transition : EventKind::Switch});
      raw.emplace_back(f, tr);
    }
    label_volumes(vols, events, T);
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (const auto& vol : vols) ranges.emplace_back(vol.start, vol.end);
    const auto expect = oracle::label_scan(ranges, raw);
    for (std::size_t i = 0; i < vols.size(); ++i) bad_labels += index_of(*vols[i].category) != std::size_t(expect[i]);
  }
  v.require(bad_labels == 0, "label_volumes vs exhaustive scan");

  std::size_t bad_merges = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> seq(rng.uniform_int(0, 60));
    std::vector<Category> cats;
    for (auto& s : seq) {
      s = static_cast<int>(rng.uniform_int(0, 2));
      cats.push_back(category_from_index(s));
    }
    const std::size_t N = rng.uniform_int(2, 16), stride = rng.uniform_int(1, N);
    std::vector<VolumeRange> ranges;
    for (std::size_t i = 0; i < seq.size(); ++i) ranges.push_back({i * stride, i * stride + N - 1});
    const auto ev = merge_transitions(cats, ranges);
    const auto runs = oracle::runs_of(seq, 2);
    if (ev.size() != runs.size()) {
      ++bad_merges;
      continue;
    }
    for (std::size_t i = 0; i < runs.size(); ++i) {
      bad_merges += ev[i].frame_index != (ranges[runs[i].first].start + ranges[runs[i].second].end) / 2;
    }
  }
  v.require(bad_merges == 0, "merge_transitions vs run-length oracle");

  std::size_t bad_outlines = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    PredictionTrack t;
    t.fps = {30, 1};
    t.temporal_rate = 1;
    const std::size_t n = rng.uniform_int(1, 60), N = rng.uniform_int(2, 12), stride = rng.uniform_int(1, N);
    for (std::size_t i = 0; i < n; ++i) {
      std::array<double, 3> p{rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
      const double s = p[0] + p[1] + p[2];
      for (auto& e : p) e /= s;
      t.probs.push_back(p);
      t.ranges.push_back({i * stride, i * stride + N - 1});
    }
    t.frame_count = t.ranges.back().end + 1 + rng.uniform_int(0, stride - 1);
    const auto s = summarize(t, {rng.uniform(0.0, 0.6), std::size_t(2 * rng.uniform_int(0, 2) + 1)});
    const auto& segs = s.outline.segments;
    bool ok = !segs.empty() && segs.front().start_frame == 0 && segs.back().end_frame == t.frame_count;
    for (std::size_t i = 0; ok && i < segs.size(); ++i) {
      ok = segs[i].start_frame < segs[i].end_frame && (i == 0 || segs[i].start_frame == segs[i - 1].end_frame);
    }
    bad_outlines += !ok;
  }
  v.require(bad_outlines == 0, "outline partitions [0,T)");
  v.detail << (v.pass ? "" : " | ") << "500 volume counts, 100 label sets, 1000 merges, 1000 outlines; mismatches "
           << bad_counts << "/" << bad_labels << "/" << bad_merges << "/" << bad_outlines;
}

void overfit(Verdict& v) {
  const double t0 = cpu_seconds();
  std::size_t memorized = 0;
  std::ostringstream epochs;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto data = fixtures::overfit_set(100 + s);
    v.require(data.size() == 8, "fixture has 8 volumes");
    Network<float> net(tiny_preset(s + 1));
    const TrainConfig cfg{0.005, 0.9, 300, 8, s, Weighting::InverseFrequency, 1.0};
    const auto h = train(net, data, cfg);
    const bool ok = evaluate(net, data).accuracy == 1.0 && h.size() <= 300;
    memorized += ok;
    epochs << (s ? "," : "") << h.size();
  }
  const double cpu = cpu_seconds() - t0;
  v.require(memorized == 5, "5 of 5 seeds reach 100% training accuracy");
  v.require(cpu < 120.0, "under 2 min CPU");
  v.detail << (v.pass ? "" : " | ") << memorized << "/5 seeds at 100% (epochs " << epochs.str() << "), " << cpu << " s CPU";
}

void end_to_end(Verdict& v) {
  const double t0 = cpu_seconds();
  const auto r = study::run_study(study::StudyConfig{});
  const double cpu = cpu_seconds() - t0;
  const double gap = r.motion_net.f1 - r.motion_baseline.f1;
  v.require(r.volume_metrics.prf.macro_f1 >= 0.85, "per-volume macro-F1 >= 0.85");
  v.require(r.events.f1 >= 0.90, "event F1 >= 0.90");
  v.require(gap >= 0.10, "motion-heavy baseline trails by >= 0.10");
  v.require(cpu < 900.0, "under 15 min CPU");
  char buf[256];
  std::snprintf(buf, sizeof buf, "macro-F1 %.3f, event F1 %.3f, motion net %.3f vs baseline %.3f, %.0f s CPU",
                r.volume_metrics.prf.macro_f1, r.events.f1, r.motion_net.f1, r.motion_baseline.f1, cpu);
  v.detail << (v.pass ? "" : " | ") << buf;
}

void service_properties(Verdict& v) {
  SplitMix64 rng(1007);
  model::RunStats stats;
  std::size_t sequences = 0;
  std::string first_failure;
  for (int round = 0; round < 100 && first_failure.empty(); ++round) {
    auto t = std::make_shared<std::int64_t>(0);
    SessionService svc(std::make_shared<MemoryStore>(), [t] { return ++*t; });
    const std::size_t keyframes = rng.uniform_int(1, 6);
    const auto video = model::register_lecture(svc, keyframes);
    for (int i = 0; i < 100; ++i) {
      const auto bad = model::run_sequence(svc, video, keyframes, rng, rng.uniform_int(5, 40), stats);
      ++sequences;
      if (bad) {
        first_failure = "sequence " + std::to_string(sequences) + ": " + *bad;
        break;
      }
    }
  }
  v.require(first_failure.empty(), first_failure);
  v.require(sequences == 10000, "10,000 sequences run");
  std::string kill_detail;
  const std::size_t trials = 25;
  const auto broken = model::kill_during_write_trials(scratch("kill"), trials, 1007, &kill_detail);
  v.require(broken == 0, "kill-during-write: " + kill_detail);
  v.detail << (v.pass ? "" : " | ") << sequences << " sequences, " << stats.actions << " actions (" << stats.succeeded
           << " applied, " << stats.rejected << " rejected), 0 invariant breaches; kill-during-write " << trials - broken
           << "/" << trials << " whole";
}

void cli_determinism(Verdict& v) {
  const auto dir = scratch("cli");
  std::size_t matched = 0, keyframes_total = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::size_t keyframes = 0;
    const auto diff = cli::detect_summarize_matches(SLIDENET_CLI_PATH, dir, seed, &keyframes);
    v.require(!diff, "seed " + std::to_string(seed) + ": " + diff.value_or(""));
    matched += !diff;
    keyframes_total += keyframes;
  }
  fs::remove_all(dir);
  v.detail << (v.pass ? "" : " | ") << matched << "/10 seeded corpora byte-identical (" << keyframes_total
           << " keyframes in total)";
}

}  // namespace

int main(int argc, char** argv) {
  // Optional arguments name a subset of criteria to run.
  const std::vector<std::string> only(argv + 1, argv + argc);
  const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria{
      {"numeric-correctness", numeric_correctness}, {"architecture-conformance", architecture},
      {"persistence", persistence},                 {"pipeline-algebra", pipeline_algebra},
      {"overfit", overfit},                         {"end-to-end-synthetic-study", end_to_end},
      {"service-properties", service_properties},   {"cli-determinism", cli_determinism},
  };
  int failed = 0;
  std::size_t ran = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    ++ran;
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      run(v);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s  %-28s %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.str().c_str(), wall);
    std::fflush(stdout);
    failed += !v.pass;
  }
  std::printf("%zu/%zu criteria passed\n", ran - failed, ran);
  return failed == 0 && ran > 0 ? 0 : 1;
}
