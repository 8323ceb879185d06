#pragma once

// Interactive summarizing sessions (select -> organize -> integrate) over
// registered videos, with optimistic versioning, an append-only analytics
// log and pluggable durable storage.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <json.hpp>

#include "slidenet/errors.hpp"
#include "slidenet/summarize.hpp"
#include "slidenet/weights_io.hpp"

namespace slidenet {

using nlohmann::json;

// ---------------------------------------------------------------------------
// base64 for keyframe bytes inside JSON documents

inline std::string base64_encode(std::string_view bytes) {
  using namespace boost::archive::iterators;
  using It = base64_from_binary<transform_width<std::string_view::const_iterator, 6, 8>>;
  std::string out(It(bytes.begin()), It(bytes.end()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

inline std::string base64_decode(std::string_view text) {
  using namespace boost::archive::iterators;
  using It = transform_width<binary_from_base64<std::string::const_iterator>, 8, 6>;
  if (text.size() % 4 != 0) throw FormatError("base64 length is not a multiple of 4");
  std::string padded(text);
  std::size_t pad = 0;
  while (!padded.empty() && padded.back() == '=' && pad < 2) {
    padded.pop_back();
    ++pad;
  }
  try {
    std::string out(It(padded.cbegin()), It(padded.cend()));
    return out;
  } catch (const std::exception&) {
    throw FormatError("invalid base64 payload");
  }
}

// ---------------------------------------------------------------------------
// Domain

enum class Stage { Selection, Organization, Integration };
enum class Decision { Undecided, Accepted, Rejected };

inline std::string to_string(Stage s) {
  switch (s) {
    case Stage::Selection: return "selection";
    case Stage::Organization: return "organization";
    case Stage::Integration: return "integration";
  }
  return "?";
}

inline Stage stage_from_string(std::string_view s) {
  if (s == "selection") return Stage::Selection;
  if (s == "organization") return Stage::Organization;
  if (s == "integration") return Stage::Integration;
  throw FormatError("unknown stage '" + std::string(s) + "'");
}

inline std::string to_string(Decision d) {
  switch (d) {
    case Decision::Undecided: return "undecided";
    case Decision::Accepted: return "accepted";
    case Decision::Rejected: return "rejected";
  }
  return "?";
}

inline Decision decision_from_string(std::string_view s) {
  if (s == "undecided") return Decision::Undecided;
  if (s == "accepted") return Decision::Accepted;
  if (s == "rejected") return Decision::Rejected;
  throw FormatError("unknown decision '" + std::string(s) + "'");
}

struct VideoRecord {
  std::string id;
  SummaryManifest manifest;
  Outline outline;
  std::vector<std::string> keyframe_images;  // P5 bytes, one per keyframe or none
};

/// A node is either a keyframe reference or a free-text heading.
struct OutlineNode {
  std::string id;
  std::optional<std::size_t> keyframe;
  std::string title;
  std::string origin = "learner";  // or "machine"
  friend bool operator==(const OutlineNode&, const OutlineNode&) = default;
};

/// Machine-proposed node derived from the automatic outline.
struct Suggestion {
  std::size_t keyframe = 0;
  std::string title;
  friend bool operator==(const Suggestion&, const Suggestion&) = default;
};

struct AnalyticsEvent {
  std::string session_id;
  std::uint64_t seq = 0;
  std::int64_t timestamp_ms = 0;
  std::string kind;
  json payload = json::object();
  friend bool operator==(const AnalyticsEvent&, const AnalyticsEvent&) = default;
};

struct Session {
  std::string id;
  std::string video_id;
  Stage stage = Stage::Selection;
  std::vector<Decision> selections;
  std::vector<Suggestion> suggestions;
  std::vector<OutlineNode> outline;
  std::map<std::string, std::string> summary_blocks;
  std::uint64_t version = 1;
  std::int64_t created_ms = 0;
  std::int64_t updated_ms = 0;
  std::uint64_t next_node = 1;
  std::vector<AnalyticsEvent> events;

  const OutlineNode* find_node(std::string_view node) const {
    auto it = std::find_if(outline.begin(), outline.end(), [&](const OutlineNode& n) { return n.id == node; });
    return it == outline.end() ? nullptr : &*it;
  }
};

// ---------------------------------------------------------------------------
// Serialization

inline json to_json(const AnalyticsEvent& e) {
  return {{"session_id", e.session_id}, {"seq", e.seq}, {"timestamp_ms", e.timestamp_ms}, {"kind", e.kind},
          {"payload", e.payload}};
}

inline AnalyticsEvent event_from_json(const json& j) {
  return {j.at("session_id").get<std::string>(), j.at("seq").get<std::uint64_t>(),
          j.at("timestamp_ms").get<std::int64_t>(), j.at("kind").get<std::string>(), j.at("payload")};
}

/// Client view. The stored document adds the event log and the node counter.
inline json to_json(const Session& s, bool storage = false) {
  json sel = json::array();
  for (auto d : s.selections) sel.push_back(to_string(d));
  json sug = json::array();
  for (const auto& g : s.suggestions) sug.push_back({{"keyframe", g.keyframe}, {"title", g.title}, {"origin", "machine"}});
  json nodes = json::array();
  for (const auto& n : s.outline) {
    nodes.push_back({{"id", n.id}, {"keyframe", n.keyframe ? json(*n.keyframe) : json()}, {"title", n.title},
                     {"origin", n.origin}});
  }
  json j = {{"id", s.id},
            {"video_id", s.video_id},
            {"stage", to_string(s.stage)},
            {"version", s.version},
            {"selections", sel},
            {"suggestions", sug},
            {"outline", nodes},
            {"summary_blocks", s.summary_blocks},
            {"created_ms", s.created_ms},
            {"updated_ms", s.updated_ms},
            {"event_count", s.events.size()}};
  if (storage) {
    json ev = json::array();
    for (const auto& e : s.events) ev.push_back(to_json(e));
    j["events"] = ev;
    j["next_node"] = s.next_node;
  }
  return j;
}

inline Session session_from_json(const json& j) {
  try {
    Session s;
    s.id = j.at("id").get<std::string>();
    s.video_id = j.at("video_id").get<std::string>();
    s.stage = stage_from_string(j.at("stage").get<std::string>());
    s.version = j.at("version").get<std::uint64_t>();
    for (const auto& d : j.at("selections")) s.selections.push_back(decision_from_string(d.get<std::string>()));
    for (const auto& g : j.at("suggestions")) s.suggestions.push_back({g.at("keyframe").get<std::size_t>(), g.at("title").get<std::string>()});
    for (const auto& n : j.at("outline")) {
      OutlineNode node{n.at("id").get<std::string>(), std::nullopt, n.at("title").get<std::string>(),
                       n.at("origin").get<std::string>()};
      if (!n.at("keyframe").is_null()) node.keyframe = n.at("keyframe").get<std::size_t>();
      s.outline.push_back(std::move(node));
    }
    s.summary_blocks = j.at("summary_blocks").get<std::map<std::string, std::string>>();
    s.created_ms = j.at("created_ms").get<std::int64_t>();
    s.updated_ms = j.at("updated_ms").get<std::int64_t>();
    s.next_node = j.value("next_node", std::uint64_t{1});
    for (const auto& e : j.value("events", json::array())) s.events.push_back(event_from_json(e));
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed session document: ") + e.what());
  }
}

inline json to_json(const VideoRecord& v) {
  json images = json::array();
  for (const auto& img : v.keyframe_images) images.push_back(base64_encode(img));
  return {{"id", v.id}, {"manifest", to_json(v.manifest)}, {"outline", to_json(v.outline)}, {"keyframes", images}};
}

inline VideoRecord video_from_json(const json& j) {
  try {
    VideoRecord v;
    v.id = j.value("id", std::string());
    v.manifest = summary_manifest_from_json(j.at("manifest"));
    v.outline = outline_from_json(j.at("outline"));
    for (const auto& img : j.value("keyframes", json::array())) v.keyframe_images.push_back(base64_decode(img.get<std::string>()));
    return v;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed video document: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Event export

inline std::string export_jsonl(const std::vector<AnalyticsEvent>& events) {
  std::string out;
  for (const auto& e : events) out += to_json(e).dump() + "\n";
  return out;
}

namespace detail {
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}
}  // namespace detail

/// RFC 4180 CSV: session_id,seq,timestamp_ms,kind,payload (payload as JSON).
inline std::string export_csv(const std::vector<AnalyticsEvent>& events) {
  std::string out = "session_id,seq,timestamp_ms,kind,payload\r\n";
  for (const auto& e : events) {
    out += detail::csv_field(e.session_id) + "," + std::to_string(e.seq) + "," + std::to_string(e.timestamp_ms) + "," +
           detail::csv_field(e.kind) + "," + detail::csv_field(e.payload.dump()) + "\r\n";
  }
  return out;
}

inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw FormatError("unterminated quoted CSV field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<AnalyticsEvent> events_from_csv(std::string_view text) {
  const auto rows = parse_csv(text);
  if (rows.empty() || rows.front() != std::vector<std::string>{"session_id", "seq", "timestamp_ms", "kind", "payload"}) {
    throw FormatError("event CSV header missing");
  }
  std::vector<AnalyticsEvent> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 5) throw FormatError("event CSV row " + std::to_string(i) + " has " + std::to_string(r.size()) + " fields");
    try {
      out.push_back({r[0], std::stoull(r[1]), std::stoll(r[2]), r[3], json::parse(r[4])});
    } catch (const std::exception& e) {
      throw FormatError("event CSV row " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<AnalyticsEvent> events_from_jsonl(std::string_view text) {
  std::vector<AnalyticsEvent> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(event_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw FormatError(std::string("malformed event line: ") + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Storage

class Store {
 public:
  virtual ~Store() = default;
  virtual std::string allocate_video_id() = 0;
  virtual std::string allocate_session_id() = 0;
  virtual void put_video(const VideoRecord& v) = 0;
  virtual std::optional<VideoRecord> get_video(const std::string& id) const = 0;
  virtual void put_session(const Session& s) = 0;
  virtual std::optional<Session> get_session(const std::string& id) const = 0;
};

inline std::string format_id(const char* prefix, std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%06llu", prefix, static_cast<unsigned long long>(n));
  return buf;
}

class MemoryStore final : public Store {
 public:
  std::string allocate_video_id() override { return format_id("vid", ++videos_issued_); }
  std::string allocate_session_id() override { return format_id("ses", ++sessions_issued_); }

  void put_video(const VideoRecord& v) override {
    std::lock_guard lock(mu_);
    videos_[v.id] = v;
  }
  std::optional<VideoRecord> get_video(const std::string& id) const override {
    std::lock_guard lock(mu_);
    auto it = videos_.find(id);
    return it == videos_.end() ? std::nullopt : std::optional<VideoRecord>(it->second);
  }
  void put_session(const Session& s) override {
    std::lock_guard lock(mu_);
    sessions_[s.id] = s;
  }
  std::optional<Session> get_session(const std::string& id) const override {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? std::nullopt : std::optional<Session>(it->second);
  }

 private:
  mutable std::mutex mu_;
  std::atomic<std::uint64_t> videos_issued_{0};
  std::atomic<std::uint64_t> sessions_issued_{0};
  std::map<std::string, VideoRecord> videos_;
  std::map<std::string, Session> sessions_;
};

/// Writes bytes to a sibling temp file, flushes it to disk and renames it
/// over the destination, so readers only ever see a whole old or new file.
inline void atomic_write(const std::filesystem::path& dest, std::string_view bytes) {
  static std::atomic<std::uint64_t> counter{0};
  const auto tmp = dest.parent_path() / ("." + dest.filename().string() + ".tmp." + std::to_string(::getpid()) + "." +
                                         std::to_string(counter.fetch_add(1)));
  FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
  const bool ok = std::fwrite(bytes.data(), 1, bytes.size(), f) == bytes.size() && std::fflush(f) == 0 &&
                  ::fsync(::fileno(f)) == 0;
  std::fclose(f);
  if (!ok) {
    std::filesystem::remove(tmp);
    throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, dest, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot replace " + dest.string() + ": " + ec.message());
  }
}

/// One JSON document per video and per session under root/{videos,sessions}.
class DirectoryStore final : public Store {
 public:
  explicit DirectoryStore(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_ / "videos");
    std::filesystem::create_directories(root_ / "sessions");
    videos_issued_ = highest_id(root_ / "videos");
    sessions_issued_ = highest_id(root_ / "sessions");
  }

  const std::filesystem::path& root() const { return root_; }

  std::string allocate_video_id() override { return format_id("vid", ++videos_issued_); }
  std::string allocate_session_id() override { return format_id("ses", ++sessions_issued_); }

  void put_video(const VideoRecord& v) override { atomic_write(video_path(v.id), to_json(v).dump()); }
  std::optional<VideoRecord> get_video(const std::string& id) const override {
    const auto doc = read_doc(video_path(id));
    if (!doc) return std::nullopt;
    return video_from_json(*doc);
  }
  void put_session(const Session& s) override { atomic_write(session_path(s.id), to_json(s, true).dump()); }
  std::optional<Session> get_session(const std::string& id) const override {
    const auto doc = read_doc(session_path(id));
    if (!doc) return std::nullopt;
    return session_from_json(*doc);
  }

  std::filesystem::path video_path(const std::string& id) const { return root_ / "videos" / (checked(id) + ".json"); }
  std::filesystem::path session_path(const std::string& id) const { return root_ / "sessions" / (checked(id) + ".json"); }

 private:
  static const std::string& checked(const std::string& id) {
    const bool ok = !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
    });
    if (!ok) throw NotFoundError("invalid id '" + id + "'");
    return id;
  }

  static std::uint64_t highest_id(const std::filesystem::path& dir) {
    std::uint64_t best = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (name.size() < 10 || name[0] == '.' || entry.path().extension() != ".json") continue;
      const auto dash = name.find('-');
      if (dash == std::string::npos) continue;
      try {
        best = std::max<std::uint64_t>(best, std::stoull(name.substr(dash + 1)));
      } catch (const std::exception&) {
      }
    }
    return best;
  }

  static std::optional<json> read_doc(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return std::nullopt;
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      return json::parse(ss.str());
    } catch (const json::parse_error& e) {
      throw FormatError("corrupt document " + p.string() + ": " + e.what());
    }
  }

  std::filesystem::path root_;
  std::atomic<std::uint64_t> videos_issued_{0};
  std::atomic<std::uint64_t> sessions_issued_{0};
};

// ---------------------------------------------------------------------------
// Service

using Clock = std::function<std::int64_t()>;

inline std::int64_t system_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

/// Session logic over a Store. Mutations on one session are serialized by a
/// per-session mutex and guarded by the caller's expected version; distinct
/// sessions proceed independently.
class SessionService {
 public:
  explicit SessionService(std::shared_ptr<Store> store, Clock clock = system_clock_ms)
      : store_(std::move(store)), clock_(std::move(clock)) {}

  Store& store() { return *store_; }

  std::string register_video(SummaryManifest manifest, Outline outline, std::vector<std::string> images = {}) {
    if (manifest.keyframes.empty()) throw InvariantError("manifest has no keyframes");
    if (outline.segments.size() != manifest.keyframes.size()) {
      throw InvariantError("outline has " + std::to_string(outline.segments.size()) + " segments but manifest has " +
                           std::to_string(manifest.keyframes.size()) + " keyframes");
    }
    for (std::size_t i = 0; i < outline.segments.size(); ++i) {
      if (outline.segments[i].keyframe != i) throw InvariantError("outline segment " + std::to_string(i) + " references the wrong keyframe");
    }
    if (!images.empty() && images.size() != manifest.keyframes.size()) {
      throw InvariantError("keyframe image count does not match the manifest");
    }
    VideoRecord v{store_->allocate_video_id(), std::move(manifest), std::move(outline), std::move(images)};
    store_->put_video(v);
    return v.id;
  }

  VideoRecord get_video(const std::string& id) const {
    auto v = store_->get_video(id);
    if (!v) throw NotFoundError("unknown video '" + id + "'");
    return *v;
  }

  Session create_session(const std::string& video_id) {
    const auto v = get_video(video_id);
    Session s;
    s.id = store_->allocate_session_id();
    s.video_id = video_id;
    s.selections.assign(v.manifest.keyframes.size(), Decision::Undecided);
    for (const auto& seg : v.outline.segments) s.suggestions.push_back({seg.keyframe, seg.title});
    s.created_ms = s.updated_ms = clock_();
    store_->put_session(s);
    return s;
  }

  Session get_session(const std::string& id) const {
    auto s = store_->get_session(id);
    if (!s) throw NotFoundError("unknown session '" + id + "'");
    return *s;
  }

  Session apply_selection(const std::string& id, std::size_t keyframe, Decision decision, std::uint64_t expected_version) {
    return mutate(id, expected_version, Stage::Selection, [&](Session& s) {
      if (keyframe >= s.selections.size()) throw InvariantError("unknown keyframe " + std::to_string(keyframe));
      s.selections[keyframe] = decision;
      json demoted = json::array();
      if (decision != Decision::Accepted) {
        for (auto& n : s.outline) {
          if (n.keyframe == keyframe) {
            n.keyframe.reset();
            demoted.push_back(n.id);
          }
        }
      }
      return std::pair<std::string, json>{"keyframe_" + to_string(decision),
                                          {{"keyframe", keyframe}, {"decision", to_string(decision)}, {"demoted", demoted}}};
    });
  }

  /// ops: add_node {position?, keyframe?, title?, suggestion?}, move_node
  /// {node, position}, rename_node {node, title}, remove_node {node}.
  Session apply_outline_op(const std::string& id, const std::string& op, const json& args, std::uint64_t expected_version) {
    return mutate(id, expected_version, Stage::Organization, [&](Session& s) {
      try {
        return outline_op(s, op, args);
      } catch (const json::exception& e) {
        throw InvariantError("bad arguments for " + op + ": " + e.what());
      }
    });
  }

  Session set_summary_block(const std::string& id, const std::string& node, const std::string& text,
                            std::uint64_t expected_version) {
    return mutate(id, expected_version, Stage::Integration, [&](Session& s) {
      if (!s.find_node(node)) throw InvariantError("unknown node '" + node + "'");
      if (text.empty()) {
        s.summary_blocks.erase(node);
      } else {
        s.summary_blocks[node] = text;
      }
      return std::pair<std::string, json>{"text_edited", {{"node", node}, {"length", text.size()}}};
    });
  }

  Session set_stage(const std::string& id, Stage stage, std::uint64_t expected_version) {
    return mutate(id, expected_version, std::nullopt, [&](Session& s) {
      const Stage from = s.stage;
      s.stage = stage;
      return std::pair<std::string, json>{"stage_changed", {{"from", to_string(from)}, {"to", to_string(stage)}}};
    });
  }

  /// Appends a client-reported event; does not change the session version.
  AnalyticsEvent record_event(const std::string& id, const std::string& kind, const json& payload) {
    if (kind.empty()) throw InvariantError("event kind must be non-empty");
    auto lock = lock_session(id);
    Session s = get_session(id);
    append_event(s, kind, payload.is_null() ? json::object() : payload);
    store_->put_session(s);
    return s.events.back();
  }

  std::vector<AnalyticsEvent> list_events(const std::string& id) const { return get_session(id).events; }

  std::string export_events(const std::string& id, const std::string& format) const {
    const auto events = list_events(id);
    if (format == "jsonl") return export_jsonl(events);
    if (format == "csv") return export_csv(events);
    throw InvariantError("unknown export format '" + format + "' (jsonl, csv)");
  }

 private:
  std::unique_lock<std::mutex> lock_session(const std::string& id) {
    std::shared_ptr<std::mutex> m;
    {
      std::lock_guard g(locks_mu_);
      auto& slot = locks_[id];
      if (!slot) slot = std::make_shared<std::mutex>();
      m = slot;
    }
    return std::unique_lock<std::mutex>(*m);
  }

  void append_event(Session& s, const std::string& kind, json payload) {
    const std::int64_t now = clock_();
    s.events.push_back({s.id, s.events.size() + 1, now, kind, std::move(payload)});
  }

  template <typename F>
  Session mutate(const std::string& id, std::uint64_t expected_version, std::optional<Stage> required, F&& change) {
    auto lock = lock_session(id);
    Session s = get_session(id);
    if (s.version != expected_version) {
      throw ConflictError("version conflict: session is at " + std::to_string(s.version) + ", request expected " +
                          std::to_string(expected_version));
    }
    if (required && s.stage != *required) {
      throw ConflictError("operation requires stage " + to_string(*required) + ", session is in " + to_string(s.stage));
    }
    auto [kind, payload] = change(s);
    ++s.version;
    s.updated_ms = clock_();
    append_event(s, kind, std::move(payload));
    store_->put_session(s);
    return s;
  }

  static std::size_t node_index(const Session& s, const std::string& node) {
    for (std::size_t i = 0; i < s.outline.size(); ++i) {
      if (s.outline[i].id == node) return i;
    }
    throw InvariantError("unknown node '" + node + "'");
  }

  static std::pair<std::string, json> outline_op(Session& s, const std::string& op, const json& args) {
    const std::size_t n = s.outline.size();
    if (op == "add_node") {
      OutlineNode node;
      node.id = "n" + std::to_string(s.next_node);
      if (args.contains("suggestion")) {
        const auto k = args.at("suggestion").get<std::size_t>();
        if (k >= s.suggestions.size()) throw InvariantError("unknown suggestion " + std::to_string(k));
        node.keyframe = s.suggestions[k].keyframe;
        node.title = s.suggestions[k].title;
        node.origin = "machine";
      }
      if (args.contains("keyframe") && !args.at("keyframe").is_null()) node.keyframe = args.at("keyframe").get<std::size_t>();
      if (args.contains("title")) node.title = args.at("title").get<std::string>();
      if (node.keyframe) {
        if (*node.keyframe >= s.selections.size()) throw InvariantError("unknown keyframe " + std::to_string(*node.keyframe));
        if (s.selections[*node.keyframe] != Decision::Accepted) {
          throw InvariantError("keyframe " + std::to_string(*node.keyframe) + " is not accepted");
        }
      }
      if (node.title.empty()) node.title = node.keyframe ? "Keyframe " + std::to_string(*node.keyframe + 1) : "Heading";
      const auto pos = args.contains("position") ? args.at("position").get<std::size_t>() : n;
      if (pos > n) throw InvariantError("position " + std::to_string(pos) + " out of range [0," + std::to_string(n) + "]");
      ++s.next_node;
      s.outline.insert(s.outline.begin() + static_cast<std::ptrdiff_t>(pos), node);
      return {"node_added", {{"node", node.id}, {"position", pos}, {"keyframe", node.keyframe ? json(*node.keyframe) : json()}}};
    }
    if (op == "move_node") {
      const auto node = args.at("node").get<std::string>();
      const auto from = node_index(s, node);
      const auto to = args.at("position").get<std::size_t>();
      if (to >= n) throw InvariantError("position " + std::to_string(to) + " out of range");
      OutlineNode moved = s.outline[from];
      s.outline.erase(s.outline.begin() + static_cast<std::ptrdiff_t>(from));
      s.outline.insert(s.outline.begin() + static_cast<std::ptrdiff_t>(to), std::move(moved));
      return {"node_moved", {{"node", node}, {"from", from}, {"to", to}}};
    }
    if (op == "rename_node") {
      const auto node = args.at("node").get<std::string>();
      const auto title = args.at("title").get<std::string>();
      s.outline[node_index(s, node)].title = title;
      return {"node_renamed", {{"node", node}, {"title", title}}};
    }
    if (op == "remove_node") {
      const auto node = args.at("node").get<std::string>();
      const auto at = node_index(s, node);
      s.outline.erase(s.outline.begin() + static_cast<std::ptrdiff_t>(at));
      s.summary_blocks.erase(node);
      return {"node_removed", {{"node", node}, {"position", at}}};
    }
    throw InvariantError("unknown outline op '" + op + "'");
  }

  std::shared_ptr<Store> store_;
  Clock clock_;
  std::mutex locks_mu_;
  std::map<std::string, std::shared_ptr<std::mutex>> locks_;
};

}  // namespace slidenet
