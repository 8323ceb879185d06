#pragma once

// HTTP/JSON front end for SessionService.
//
//   POST /videos                               {manifest, outline, keyframes?: [base64 P5]} -> {id}
//   GET  /videos/:id/summary                   -> {id, manifest, outline, keyframe_count}
//   GET  /videos/:id/keyframes/:k              -> image/x-portable-graymap
//   POST /sessions                             {video_id} -> session
//   GET  /sessions/:id                         -> session
//   POST /sessions/:id/selection               {keyframe, decision, expected_version}
//   POST /sessions/:id/outline                 {op, args, expected_version}
//   POST /sessions/:id/summary-block           {node, text, expected_version}
//   POST /sessions/:id/stage                   {stage, expected_version}
//   POST /sessions/:id/events                  {kind, payload} -> event
//   GET  /sessions/:id/events?format=jsonl|csv
//
// 400 malformed request, 404 unknown id, 409 version conflict or wrong stage,
// 422 invariant violation.

#include <functional>
#include <memory>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "slidenet/errors.hpp"
#include "slidenet/session.hpp"

namespace slidenet {

inline int http_status_for(const std::exception& e) {
  if (dynamic_cast<const NotFoundError*>(&e)) return 404;
  if (dynamic_cast<const ConflictError*>(&e)) return 409;
  if (dynamic_cast<const InvariantError*>(&e)) return 422;
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const ConfigError*>(&e)) return 400;
  if (dynamic_cast<const json::exception*>(&e)) return 400;
  return 500;
}

namespace detail {

inline void reply_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F&& f) {
  return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const std::exception& e) {
      const int status = http_status_for(e);
      reply_json(res, {{"error", e.what()}, {"status", status}}, status);
    }
  };
}

inline json body_of(const httplib::Request& req) {
  try {
    auto j = json::parse(req.body);
    if (!j.is_object()) throw FormatError("request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("request body is not valid JSON: ") + e.what());
  }
}

inline std::uint64_t expected_version(const json& body) {
  if (!body.contains("expected_version")) throw FormatError("expected_version is required");
  return body.at("expected_version").get<std::uint64_t>();
}

}  // namespace detail

inline void mount_routes(httplib::Server& server, SessionService& svc) {
  using detail::body_of;
  using detail::guarded;
  using detail::reply_json;
  using Req = httplib::Request;
  using Res = httplib::Response;

  server.Post("/videos", guarded([&svc](const Req& req, Res& res) {
    const auto body = body_of(req);
    auto v = video_from_json(body);
    reply_json(res, {{"id", svc.register_video(std::move(v.manifest), std::move(v.outline), std::move(v.keyframe_images))}}, 201);
  }));
  server.Get("/videos/:id/summary", guarded([&svc](const Req& req, Res& res) {
    const auto v = svc.get_video(req.path_params.at("id"));
    reply_json(res, {{"id", v.id},
                     {"manifest", to_json(v.manifest)},
                     {"outline", to_json(v.outline)},
                     {"keyframe_count", v.manifest.keyframes.size()}});
  }));
  server.Get("/videos/:id/keyframes/:k", guarded([&svc](const Req& req, Res& res) {
    const auto v = svc.get_video(req.path_params.at("id"));
    std::size_t k = 0;
    try {
      k = std::stoul(req.path_params.at("k"));
    } catch (const std::exception&) {
      throw NotFoundError("keyframe index must be a number");
    }
    if (k >= v.keyframe_images.size()) throw NotFoundError("no image for keyframe " + std::to_string(k));
    res.set_content(v.keyframe_images[k], "image/x-portable-graymap");
  }));
  server.Post("/sessions", guarded([&svc](const Req& req, Res& res) {
    const auto body = body_of(req);
    reply_json(res, to_json(svc.create_session(body.at("video_id").get<std::string>())), 201);
  }));
  server.Get("/sessions/:id", guarded([&svc](const Req& req, Res& res) {
    reply_json(res, to_json(svc.get_session(req.path_params.at("id"))));
  }));
  server.Post("/sessions/:id/selection", guarded([&svc](const Req& req, Res& res) {
    const auto body = body_of(req);
    reply_json(res, to_json(svc.apply_selection(req.path_params.at("id"), body.at("keyframe").get<std::size_t>(),
                                                decision_from_string(body.at("decision").get<std::string>()),
                                                detail::expected_version(body))));
  }));
  server.Post("/sessions/:id/outline", guarded([&svc](const Req& req, Res& res) {
    const auto body = body_of(req);
    reply_json(res, to_json(svc.apply_outline_op(req.path_params.at("id"), body.at("op").get<std::string>(),
                                                 body.value("args", json::object()), detail::expected_version(body))));
  }));
  server.Post("/sessions/:id/summary-block", guarded([&svc](const Req& req, Res& res) {
    const auto body = body_of(req);
    reply_json(res, to_json(svc.set_summary_block(req.path_params.at("id"), body.at("node").get<std::string>(),
                                                  body.value("text", std::string()), detail::expected_version(body))));
  }));
  server.Post("/sessions/:id/stage", guarded([&svc](const Req& req, Res& res) {
    const auto body = body_of(req);
    reply_json(res, to_json(svc.set_stage(req.path_params.at("id"), stage_from_string(body.at("stage").get<std::string>()),
                                          detail::expected_version(body))));
  }));
  server.Post("/sessions/:id/events", guarded([&svc](const Req& req, Res& res) {
    const auto body = body_of(req);
    reply_json(res, to_json(svc.record_event(req.path_params.at("id"), body.at("kind").get<std::string>(),
                                             body.value("payload", json::object()))),
               201);
  }));
  server.Get("/sessions/:id/events", guarded([&svc](const Req& req, Res& res) {
    const std::string format = req.has_param("format") ? req.get_param_value("format") : "jsonl";
    const auto text = svc.export_events(req.path_params.at("id"), format);
    res.set_content(text, format == "csv" ? "text/csv" : "application/x-ndjson");
  }));
}

/// Owns a server running on a background thread; stops it on destruction.
class BackgroundServer {
 public:
  BackgroundServer(SessionService& svc, const std::string& host = "127.0.0.1", int port = 0) {
    mount_routes(server_, svc);
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~BackgroundServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }
  BackgroundServer(const BackgroundServer&) = delete;
  BackgroundServer& operator=(const BackgroundServer&) = delete;

  int port() const { return port_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace slidenet
