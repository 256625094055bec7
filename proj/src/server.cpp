#include "keepsake/server.hpp"

#include <httplib.h>
#include <json.hpp>

#include <sys/socket.h>

#include "keepsake/error.hpp"

namespace keepsake::shell {

using nlohmann::json;

namespace {

json optional_string(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

json action_json(const dialogue::LoggedAction& a) {
  return {{"seq", a.seq},
          {"t", a.at},
          {"time", format_timestamp(a.at)},
          {"kind", dialogue::to_string(a.action.kind)},
          {"addressee", optional_string(a.action.addressee)},
          {"ref", a.ref},
          {"text", optional_string(a.action.text)}};
}

json turn_json(const store::TranscriptTurn& t, const diarization::SpeakerRegistry& registry) {
  const auto* p = registry.find(t.speaker);
  return {{"session", t.session_id}, {"turn_id", t.turn_id},
          {"speaker", t.speaker},    {"name", p ? json(p->name) : json(nullptr)},
          {"text", t.text},          {"t_start", t.t_start},
          {"t_end", t.t_end},        {"tags", t.tags}};
}

json hit_json(const memory::RetrievalHit& h) {
  return {{"item_id", h.item.item_id},
          {"similarity", h.similarity},
          {"text", h.item.text},
          {"source", memory::to_string(h.item.source)},
          {"created_at", h.item.created_at},
          {"expires_at", h.item.expires_at ? json(*h.item.expires_at) : json(nullptr)}};
}

json stats_json(const EngineStats& s) {
  json rooms = json::object();
  for (const auto& [room, secs] : s.room_seconds) rooms[room] = secs;
  return {{"now", s.now},
          {"time", format_timestamp(s.now)},
          {"sessions", s.sessions},
          {"turns", s.turns},
          {"speakers", s.speakers},
          {"anonymous_clusters", s.anonymous_clusters},
          {"permanent_items", s.permanent_items},
          {"temporary_items", s.temporary_items},
          {"workspace_items", s.workspace_items},
          {"readings", s.readings},
          {"edge_labels", s.edge_labels},
          {"cloud_labels", s.cloud_labels},
          {"actions", s.actions},
          {"triggers", s.triggers},
          {"egress", s.egress},
          {"room_seconds", rooms},
          {"sedentarization", s.sedentarization},
          {"last_pose", s.last_pose ? json(fusion::to_string(*s.last_pose)) : json(nullptr)}};
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::PermissionDenied: return 403;
    case ErrorCode::UnknownSession:
    case ErrorCode::UnknownSpeaker:
    case ErrorCode::UnknownCluster: return 404;
    case ErrorCode::IoError:
    case ErrorCode::CorruptRecord: return 500;
    default: return 400;
  }
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  send_json(res, {{"error", to_string(e.code())}, {"message", e.what()}}, status_for(e.code()));
}

std::size_t size_param(const httplib::Request& req, const char* key, std::size_t fallback) {
  if (!req.has_param(key)) return fallback;
  const std::string v = req.get_param_value(key);
  try {
    std::size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used != v.size() || n < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, std::string(key) + " must be a non-negative integer");
  }
}

json parse_body(const std::string& body) {
  try {
    json j = json::parse(body);
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "body must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

// Builds a scenario line from request fields so the API and scenario files
// share one validator.
ScenarioEvent to_event(json j, const char* kind, Timestamp now) {
  j["kind"] = kind;
  if (!j.contains("t")) j["t"] = now;
  auto events = parse_scenario(j.dump());
  return std::move(events.front());
}

std::string cursor_reply(const Engine& engine) {
  return json{{"cursor", engine.actions().entries().size()}, {"now", engine.now()}}.dump();
}

}  // namespace

Server::Server(std::unique_ptr<Engine> engine)
    : engine_(std::move(engine)), http_(std::make_unique<httplib::Server>()) {
  // Plain SO_REUSEADDR: a second server on a taken port must fail to bind.
  http_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  routes();
  worker_ = std::thread([this] { pipeline(); });
}

Server::~Server() {
  try {
    stop();
  } catch (...) {
  }
}

void Server::pipeline() {
  for (;;) {
    std::packaged_task<std::string()> task;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      task = std::move(queue_.front());
      queue_.pop_front();
    }
    task();
  }
}

std::string Server::submit(std::function<std::string(Engine&)> task) {
  std::packaged_task<std::string()> job([this, task = std::move(task)] {
    std::unique_lock lock(engine_mutex_);
    return task(*engine_);
  });
  auto result = job.get_future();
  {
    std::lock_guard lock(queue_mutex_);
    if (stopping_) throw Error(ErrorCode::InvalidArgument, "server is stopping");
    queue_.push_back(std::move(job));
  }
  queue_cv_.notify_one();
  return result.get();
}

void Server::start(const std::string& host, int port) {
  if (port == 0) {
    port_ = http_->bind_to_any_port(host);
    if (port_ < 0) throw Error(ErrorCode::PortInUse, "cannot bind " + host);
  } else {
    if (!http_->bind_to_port(host, port)) {
      throw Error(ErrorCode::PortInUse, "cannot bind " + host + ":" + std::to_string(port));
    }
    port_ = port;
  }
  listener_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
}

void Server::stop() {
  {
    std::lock_guard lock(stop_mutex_);
    if (stopped_) return;
    stopped_ = true;
  }
  http_->stop();
  if (listener_.joinable()) listener_.join();
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
  {
    std::unique_lock lock(engine_mutex_);
    engine_->flush();
  }
  stop_cv_.notify_all();
}

void Server::wait() {
  std::unique_lock lock(stop_mutex_);
  stop_cv_.wait(lock, [&] { return stopped_; });
}

void Server::routes() {
  auto guarded = [](auto handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const std::exception& e) {
        send_json(res, {{"error", "Internal"}, {"message", e.what()}}, 500);
      }
    };
  };

  // Writes.
  auto post_event = [this, guarded](const char* path, const char* kind) {
    http_->Post(path, guarded([this, kind](const httplib::Request& req, httplib::Response& res) {
      json body = parse_body(req.body);
      res.set_content(submit([&](Engine& engine) {
                        engine.process(to_event(body, kind, engine.now()));
                        return cursor_reply(engine);
                      }),
                      "application/json");
    }));
  };
  post_event("/utterance", "utterance");
  post_event("/name", "name");

  http_->Post("/segments", guarded([this](const httplib::Request& req, httplib::Response& res) {
    json body = parse_body(req.body);
    if (!body.contains("segments") || !body["segments"].is_array()) {
      throw Error(ErrorCode::ParseError, "body needs a \"segments\" array");
    }
    res.set_content(submit([&](Engine& engine) {
                      for (json seg : body["segments"]) {
                        if (body.contains("session") && !seg.contains("session")) seg["session"] = body["session"];
                        engine.process(to_event(seg, "segment", engine.now()));
                      }
                      return cursor_reply(engine);
                    }),
                    "application/json");
  }));

  http_->Post("/sensors", guarded([this](const httplib::Request& req, httplib::Response& res) {
    json body = parse_body(req.body);
    json readings = body.contains("readings") ? body["readings"] : json::array({body});
    if (!readings.is_array()) throw Error(ErrorCode::ParseError, "\"readings\" must be an array");
    res.set_content(submit([&](Engine& engine) {
                      for (const auto& r : readings) engine.process(to_event(r, "sensor", engine.now()));
                      return cursor_reply(engine);
                    }),
                    "application/json");
  }));

  http_->Post("/clock", guarded([this](const httplib::Request& req, httplib::Response& res) {
    json body = parse_body(req.body);
    res.set_content(submit([&](Engine& engine) {
                      Timestamp t = engine.now();
                      if (body.contains("advance")) t += body["advance"].get<double>();
                      else if (body.contains("t")) t = to_event(body, "clock", engine.now()).t;
                      else throw Error(ErrorCode::ParseError, "body needs \"t\" or \"advance\"");
                      if (t < engine.now()) throw Error(ErrorCode::InvalidArgument, "the clock never goes back");
                      engine.advance_to(t);
                      return cursor_reply(engine);
                    }),
                    "application/json");
  }));

  http_->Post("/events", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto events = parse_scenario(req.body);
    res.set_content(submit([&](Engine& engine) {
                      for (const auto& e : events) engine.process(e);
                      return cursor_reply(engine);
                    }),
                    "application/json");
  }));

  // Reads.
  http_->Get("/actions", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::size_t cursor = size_param(req, "cursor", 0);
    read([&](const Engine& engine) {
      json out = json::array();
      for (const auto& a : engine.actions().since(cursor)) out.push_back(action_json(a));
      send_json(res, {{"cursor", std::max(cursor, engine.actions().entries().size())}, {"actions", out}});
      return 0;
    });
  }));

  http_->Get("/transcripts", guarded([this](const httplib::Request& req, httplib::Response& res) {
    store::TurnFilter filter;
    if (req.has_param("session")) filter.session = req.get_param_value("session");
    if (req.has_param("speaker")) filter.speaker = req.get_param_value("speaker");
    read([&](const Engine& engine) {
      json out = json::array();
      for (const auto& t : engine.transcripts().query_turns(filter)) out.push_back(turn_json(t, engine.registry()));
      send_json(res, {{"turns", out}});
      return 0;
    });
  }));

  http_->Get("/memory/search", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string q = req.get_param_value("q");
    read([&](const Engine& engine) {
      const std::size_t k = size_param(req, "k", engine.config().top_k);
      json out = json::array();
      for (const auto& h : engine.search(q, k)) out.push_back(hit_json(h));
      send_json(res, {{"query", q}, {"hits", out}});
      return 0;
    });
  }));

  http_->Get("/summary", guarded([this](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("session") || !req.has_param("role")) {
      throw Error(ErrorCode::InvalidArgument, "summary needs session and role");
    }
    const std::string session = req.get_param_value("session");
    const auto role = diarization::parse_role(req.get_param_value("role"));
    read([&](const Engine& engine) {
      send_json(res, {{"session", session},
                      {"role", diarization::to_string(role)},
                      {"summary", engine.summary(session, role)}});
      return 0;
    });
  }));

  http_->Get("/speakers", guarded([this](const httplib::Request&, httplib::Response& res) {
    read([&](const Engine& engine) {
      json speakers = json::array();
      for (const auto& p : engine.registry().profiles()) {
        speakers.push_back({{"speaker_id", p.speaker_id},
                            {"name", p.name},
                            {"role", diarization::to_string(p.role)},
                            {"samples", p.sample_count}});
      }
      json clusters = json::array();
      for (const auto& s : engine.sessions().sessions()) {
        if (const auto* state = engine.clusters(s.session_id)) {
          for (const auto& c : state->clusters()) {
            clusters.push_back({{"session", s.session_id}, {"cluster_id", c.cluster_id}, {"samples", c.sample_count}});
          }
        }
      }
      send_json(res, {{"speakers", speakers}, {"clusters", clusters}});
      return 0;
    });
  }));

  http_->Get("/stats", guarded([this](const httplib::Request&, httplib::Response& res) {
    read([&](const Engine& engine) {
      send_json(res, stats_json(engine.stats()));
      return 0;
    });
  }));

  http_->Get("/config", guarded([this](const httplib::Request&, httplib::Response& res) {
    read([&](const Engine& engine) {
      res.set_content(config_json(engine.config()), "application/json");
      return 0;
    });
  }));
}

}  // namespace keepsake::shell
