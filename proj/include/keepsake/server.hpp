#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <thread>

#include "keepsake/shell.hpp"

namespace httplib {
class Server;
}

namespace keepsake::shell {

// Local HTTP API over one engine. Writes go through a single pipeline thread
// in arrival order; reads take a shared lock and see a consistent state.
//
//   POST /utterance  {"speaker", "text", "session"?, "marker"?, "t"?}
//   POST /segments   {"session"?, "segments": [{"t", "t_end", "vector", "text"?}]}
//   POST /sensors    {"readings": [{"t"?, "sensor_id", "sensor", "room"?, "value"?, ...}]}
//   POST /name       {"speaker", "name", "role"?, "session"?}
//   POST /clock      {"t"} or {"advance": seconds}
//   POST /events     scenario lines (JSON Lines)
//   GET  /actions?cursor=N
//   GET  /transcripts?session=&speaker=
//   GET  /memory/search?q=&k=
//   GET  /summary?session=&role=
//   GET  /speakers, /stats, /config
class Server {
 public:
  explicit Server(std::unique_ptr<Engine> engine);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Port 0 picks a free port. Throws PortInUse when the bind fails.
  void start(const std::string& host, int port);
  int port() const { return port_; }
  // Stops listening, drains the pipeline and flushes the engine.
  void stop();
  // Blocks until stop() is called from elsewhere.
  void wait();

  template <typename F>
  auto read(F&& f) const {
    std::shared_lock lock(engine_mutex_);
    return f(static_cast<const Engine&>(*engine_));
  }

  // Runs `task` on the pipeline thread and returns its result.
  std::string submit(std::function<std::string(Engine&)> task);

 private:
  void routes();
  void pipeline();

  std::unique_ptr<Engine> engine_;
  mutable std::shared_mutex engine_mutex_;
  std::unique_ptr<httplib::Server> http_;
  std::thread listener_;
  std::thread worker_;
  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<std::packaged_task<std::string()>> queue_;
  bool stopping_ = false;
  bool stopped_ = false;
  std::mutex stop_mutex_;
  std::condition_variable stop_cv_;
  int port_ = 0;
};

}  // namespace keepsake::shell
