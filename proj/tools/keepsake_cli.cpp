// keepsake: command-line entry point.
//
// Exit status: 0 success, 1 operational error, 2 usage error.

#include <CLI11.hpp>

#include <csignal>
#include <chrono>
#include <iostream>
#include <map>

#include "keepsake/diarization.hpp"
#include "keepsake/error.hpp"
#include "keepsake/fusion.hpp"
#include "keepsake/server.hpp"
#include "keepsake/shell.hpp"

namespace {

using namespace keepsake;

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool offline = false;
  std::string data_dir;
};

shell::Config effective_config(const GlobalOptions& g) {
  shell::Config c = g.config_path.empty() ? shell::Config{} : shell::load_config(g.config_path);
  if (g.seed) c.seed = *g.seed;
  if (g.offline) c.offline = true;
  if (!g.data_dir.empty()) c.data_dir = g.data_dir;
  c.validate();
  return c;
}

int cmd_replay(const GlobalOptions& g, const std::string& file) {
  const auto scenario = shell::load_scenario(file);
  const auto result = shell::replay(scenario, effective_config(g));
  std::cout << shell::format_action_log(result.engine->actions().entries());
  return 0;
}

int cmd_serve(const GlobalOptions& g, const std::string& host, int port) {
  auto config = effective_config(g);
  if (!host.empty()) config.host = host;
  if (port >= 0) config.port = port;
  const double now = std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  shell::Server server(std::make_unique<shell::Engine>(config, now));
  server.start(config.host, config.port);
  std::cout << "listening on http://" << config.host << ":" << server.port() << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  return 0;
}

int cmd_diarize(const GlobalOptions& g, const std::string& file) {
  const auto config = effective_config(g);
  const auto scenario = shell::load_scenario(file);
  diarization::SpeakerRegistry registry(config.dimension);
  std::vector<std::string> order;
  std::map<std::string, std::vector<diarization::SegmentEmbedding>> segments;
  std::map<std::string, std::vector<diarization::SpeakerTurn>> truth;
  for (const auto& e : scenario) {
    if (!segments.count(e.session) && !truth.count(e.session) &&
        (e.kind == shell::ScenarioKind::segment || e.kind == shell::ScenarioKind::truth)) {
      order.push_back(e.session);
    }
    if (e.kind == shell::ScenarioKind::segment) {
      segments[e.session].push_back({e.vector, e.t, *e.t_end, e.session});
    } else if (e.kind == shell::ScenarioKind::truth) {
      truth[e.session].push_back({e.speaker, e.t, *e.t_end});
    } else if (e.kind == shell::ScenarioKind::enroll) {
      std::vector<diarization::SegmentEmbedding> samples;
      for (const auto& v : e.vectors) samples.push_back({v, e.t, e.t + 1.0, e.session});
      registry.enroll(e.name, e.role.value_or(diarization::Role::guest), samples);
    }
  }
  for (const auto& session : order) {
    diarization::ClusteringState state(config.thresholds);
    segments[session];
    const auto turns = diarization::diarize_session(segments[session], registry, state);
    for (const auto& t : turns) {
      std::cout << session << '\t' << t.speaker << '\t' << format_timestamp(t.t_start) << '\t'
                << format_timestamp(t.t_end) << '\n';
    }
    if (!truth[session].empty()) {
      std::cout << "DER " << session << ' ' << record::format_number(diarization::compute_der(truth[session], turns))
                << '\n';
    }
  }
  return 0;
}

int cmd_fuse(const GlobalOptions& g, const std::string& file) {
  const auto config = effective_config(g);
  std::vector<fusion::SensorReading> readings;
  for (const auto& e : shell::load_scenario(file)) {
    if (e.reading) readings.push_back(*e.reading);
  }
  if (readings.empty()) throw Error(ErrorCode::EmptyWindow, "no sensor readings in " + file);
  const Timestamp t0 = readings.front().timestamp;
  const Timestamp t1 = readings.back().timestamp;
  for (const auto& l : fusion::har_label(readings, t0, t1, config.har)) {
    std::cout << fusion::to_string(l.label) << '\t' << format_timestamp(l.t_start) << '\t'
              << format_timestamp(l.t_end) << '\n';
  }
  const auto rooms = fusion::room_occupancy_stats(readings, t0, t1);
  for (const auto& [room, secs] : rooms) std::cout << "room " << room << ' ' << record::format_number(secs) << '\n';
  std::cout << "sedentarization " << record::format_number(fusion::sedentarization_level(rooms)) << '\n';
  return 0;
}

int cmd_memory_search(const GlobalOptions& g, const std::string& query, std::size_t k,
                      const std::string& scenario_file) {
  const auto config = effective_config(g);
  std::unique_ptr<shell::Engine> engine;
  if (!scenario_file.empty()) {
    const auto scenario = shell::load_scenario(scenario_file);
    engine = shell::replay(scenario, config).engine;
  } else {
    engine = std::make_unique<shell::Engine>(config);
  }
  std::size_t rank = 0;
  for (const auto& h : engine->search(query, k)) {
    std::cout << ++rank << '\t' << h.item.item_id << '\t' << record::format_number(h.similarity) << '\t'
              << h.item.text << '\n';
  }
  return 0;
}

int cmd_rules_check(const std::string& file) {
  const auto rules = automation::load_rules(file);
  for (const auto& r : rules) {
    std::cout << r.rule_id << ": " << r.n_min << " per period, " << r.m_min << " of " << r.window
              << " periods " << format_time_of_day(r.predicate.period.start) << "-"
              << format_time_of_day(r.predicate.period.end) << ", cooldown " << r.cooldown_days
              << " days, " << automation::to_string(r.action) << '\n';
  }
  std::cout << "ok " << rules.size() << " rules\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"keepsake: private local assistant engine"};
  app.require_subcommand(1);
  GlobalOptions g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "Config file (JSON)");
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every stochastic choice");
  app.add_flag("--offline", g.offline, "Never call an outside client");
  app.add_option("--data-dir", g.data_dir, "Store directory (overrides the config)");

  std::string file;
  auto* replay = app.add_subcommand("replay", "Replay a scenario and print the action log");
  replay->add_option("file", file, "Scenario file")->required();

  std::string host;
  int port = -1;
  auto* serve = app.add_subcommand("serve", "Serve the local HTTP API");
  serve->add_option("--host", host, "Bind address (default from config, 127.0.0.1)");
  serve->add_option("--port", port, "Port (default from config)");

  auto* diarize = app.add_subcommand("diarize", "Diarize the segments of a scenario");
  diarize->add_option("file", file, "Scenario file")->required();

  auto* fuse = app.add_subcommand("fuse", "Label activities from the sensor readings of a scenario");
  fuse->add_option("file", file, "Scenario file")->required();

  auto* memory_cmd = app.add_subcommand("memory", "Memory commands");
  memory_cmd->require_subcommand(1);
  std::string query, scenario_file;
  std::size_t k = 5;
  auto* search = memory_cmd->add_subcommand("search", "Top-k workspace items for a query");
  search->add_option("query", query, "Query text")->required();
  search->add_option("-k", k, "Number of hits");
  search->add_option("--scenario", scenario_file, "Replay this scenario first");

  auto* rules = app.add_subcommand("rules", "Watch rule commands");
  rules->require_subcommand(1);
  auto* check = rules->add_subcommand("check", "Validate a rules file");
  check->add_option("file", file, "Rules file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*replay) return cmd_replay(g, file);
    if (*serve) return cmd_serve(g, host, port);
    if (*diarize) return cmd_diarize(g, file);
    if (*fuse) return cmd_fuse(g, file);
    if (*search) return cmd_memory_search(g, query, k, scenario_file);
    if (*check) return cmd_rules_check(file);
  } catch (const keepsake::Error& e) {
    std::cerr << "keepsake: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "keepsake: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
