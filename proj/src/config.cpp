#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

#include "keepsake/error.hpp"
#include "keepsake/shell.hpp"

namespace keepsake::shell {

using nlohmann::json;

void Config::validate() const {
  auto bad = [](const std::string& why) { throw Error(ErrorCode::InvalidConfig, why); };
  if (dimension < 2 || dimension > 4096) bad("dimension must lie in [2, 4096]");
  thresholds.validate();
  if (chunking.max_chars == 0) bad("chunk_chars must be positive");
  if (chunking.overlap >= chunking.max_chars) bad("chunk_overlap must be below chunk_chars");
  if (!(web_ttl_seconds > 0.0) || !(event_ttl_seconds > 0.0)) bad("TTLs must be positive");
  if (!(sync_interval_seconds > 0.0)) bad("sync_interval_seconds must be positive");
  for (double tod : {rollover_time, briefing_time, rules_time, night.start, night.end}) {
    if (!(tod >= 0.0 && tod < kSecondsPerDay)) bad("times of day must lie within a day");
  }
  for (double v : {har.door_link_seconds, har.eating_min_seconds, har.resting_min_seconds,
                   har.other_min_seconds}) {
    if (!(v >= 0.0)) bad("HAR durations must not be negative");
  }
  if (!(pose.walking_step_rate_hz > 0.0)) bad("pose.walking_step_rate_hz must be positive");
  if (!(pose.lying_tilt_deg >= 0.0 && pose.lying_tilt_deg <= 180.0)) bad("pose.lying_tilt_deg must lie in [0, 180]");
  if (!(pose.standing_variance >= 0.0)) bad("pose.standing_variance must not be negative");
  if (top_k == 0) bad("top_k must be positive");
  if (port < 0 || port > 65535) bad("port out of range");
  if (cloud_port < 0 || cloud_port > 65535) bad("cloud_port out of range");
  if (cloud_port != 0 && cloud_host.empty()) bad("cloud_port needs cloud_host");
}

namespace {

const std::set<std::string> kKeys = {
    "dimension", "theta_registered", "theta_anonymous", "tau_owner", "chunk_chars",
    "chunk_overlap", "web_ttl_seconds", "event_ttl_seconds", "rollover_time", "briefing_time",
    "rules_time", "sync_interval_seconds", "har", "pose", "night", "rules_path", "data_dir",
    "sync_writes", "offline", "seed", "top_k", "owner_name", "small_template", "large_template",
    "search_before_answer", "wake_on_alert", "corpus_dir", "weather", "cloud_host", "cloud_port", "lexicon", "host",
    "port"};

const std::set<std::string> kHarKeys = {"kitchen", "dining_room", "bedroom", "bathroom",
                                        "door_link_seconds", "eating_min_seconds",
                                        "resting_min_seconds", "other_min_seconds"};
const std::set<std::string> kPoseKeys = {"walking_step_rate_hz", "lying_tilt_deg", "standing_variance"};

void check_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw Error(ErrorCode::InvalidConfig, "unknown key '" + where + k + "'");
  }
}

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void take_time(const json& j, const char* key, double& out) {
  if (j.contains(key)) out = parse_time_of_day(j.at(key).get<std::string>());
}

}  // namespace

Config parse_config(std::string_view json_text) {
  Config c;
  try {
    const json j = json::parse(json_text);
    check_keys(j, kKeys, "");
    take(j, "dimension", c.dimension);
    take(j, "theta_registered", c.thresholds.registered);
    take(j, "theta_anonymous", c.thresholds.anonymous);
    take(j, "tau_owner", c.thresholds.owner);
    take(j, "chunk_chars", c.chunking.max_chars);
    take(j, "chunk_overlap", c.chunking.overlap);
    take(j, "web_ttl_seconds", c.web_ttl_seconds);
    take(j, "event_ttl_seconds", c.event_ttl_seconds);
    take_time(j, "rollover_time", c.rollover_time);
    take_time(j, "briefing_time", c.briefing_time);
    take_time(j, "rules_time", c.rules_time);
    take(j, "sync_interval_seconds", c.sync_interval_seconds);
    if (j.contains("har")) {
      const auto& h = j["har"];
      check_keys(h, kHarKeys, "har.");
      take(h, "kitchen", c.har.kitchen);
      take(h, "dining_room", c.har.dining_room);
      take(h, "bedroom", c.har.bedroom);
      take(h, "bathroom", c.har.bathroom);
      take(h, "door_link_seconds", c.har.door_link_seconds);
      take(h, "eating_min_seconds", c.har.eating_min_seconds);
      take(h, "resting_min_seconds", c.har.resting_min_seconds);
      take(h, "other_min_seconds", c.har.other_min_seconds);
    }
    if (j.contains("pose")) {
      const auto& p = j["pose"];
      check_keys(p, kPoseKeys, "pose.");
      take(p, "walking_step_rate_hz", c.pose.walking_step_rate_hz);
      take(p, "lying_tilt_deg", c.pose.lying_tilt_deg);
      take(p, "standing_variance", c.pose.standing_variance);
    }
    if (j.contains("night")) {
      const auto& n = j["night"];
      if (!n.is_array() || n.size() != 2) throw Error(ErrorCode::InvalidConfig, "night needs [start, end]");
      c.night = {parse_time_of_day(n[0].get<std::string>()), parse_time_of_day(n[1].get<std::string>())};
    }
    take(j, "rules_path", c.rules_path);
    take(j, "data_dir", c.data_dir);
    take(j, "sync_writes", c.sync_writes);
    take(j, "offline", c.offline);
    take(j, "seed", c.seed);
    take(j, "top_k", c.top_k);
    take(j, "owner_name", c.owner_name);
    take(j, "small_template", c.small_template);
    take(j, "large_template", c.large_template);
    take(j, "search_before_answer", c.search_before_answer);
    take(j, "wake_on_alert", c.wake_on_alert);
    take(j, "corpus_dir", c.corpus_dir);
    take(j, "weather", c.weather);
    take(j, "cloud_host", c.cloud_host);
    take(j, "cloud_port", c.cloud_port);
    if (j.contains("lexicon")) {
      const auto& l = j["lexicon"];
      check_keys(l, {"persons", "locations"}, "lexicon.");
      take(l, "persons", c.lexicon.persons);
      take(l, "locations", c.lexicon.locations);
    }
    take(j, "host", c.host);
    take(j, "port", c.port);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidConfig) throw;
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  c.validate();
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_json(const Config& c) {
  json j;
  j["dimension"] = c.dimension;
  j["theta_registered"] = c.thresholds.registered;
  j["theta_anonymous"] = c.thresholds.anonymous;
  j["tau_owner"] = c.thresholds.owner;
  j["chunk_chars"] = c.chunking.max_chars;
  j["chunk_overlap"] = c.chunking.overlap;
  j["web_ttl_seconds"] = c.web_ttl_seconds;
  j["event_ttl_seconds"] = c.event_ttl_seconds;
  j["rollover_time"] = format_time_of_day(c.rollover_time);
  j["briefing_time"] = format_time_of_day(c.briefing_time);
  j["rules_time"] = format_time_of_day(c.rules_time);
  j["sync_interval_seconds"] = c.sync_interval_seconds;
  j["har"] = {{"kitchen", c.har.kitchen},
              {"dining_room", c.har.dining_room},
              {"bedroom", c.har.bedroom},
              {"bathroom", c.har.bathroom},
              {"door_link_seconds", c.har.door_link_seconds},
              {"eating_min_seconds", c.har.eating_min_seconds},
              {"resting_min_seconds", c.har.resting_min_seconds},
              {"other_min_seconds", c.har.other_min_seconds}};
  j["pose"] = {{"walking_step_rate_hz", c.pose.walking_step_rate_hz},
               {"lying_tilt_deg", c.pose.lying_tilt_deg},
               {"standing_variance", c.pose.standing_variance}};
  j["night"] = {format_time_of_day(c.night.start), format_time_of_day(c.night.end)};
  j["rules_path"] = c.rules_path;
  j["data_dir"] = c.data_dir;
  j["sync_writes"] = c.sync_writes;
  j["offline"] = c.offline;
  j["seed"] = c.seed;
  j["top_k"] = c.top_k;
  j["owner_name"] = c.owner_name;
  j["small_template"] = c.small_template;
  j["large_template"] = c.large_template;
  j["search_before_answer"] = c.search_before_answer;
  j["wake_on_alert"] = c.wake_on_alert;
  j["corpus_dir"] = c.corpus_dir;
  j["weather"] = c.weather;
  j["cloud_host"] = c.cloud_host;
  j["cloud_port"] = c.cloud_port;
  j["lexicon"] = {{"persons", c.lexicon.persons}, {"locations", c.lexicon.locations}};
  j["host"] = c.host;
  j["port"] = c.port;
  return j.dump(2);
}

}  // namespace keepsake::shell
