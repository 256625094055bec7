#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include "keepsake/error.hpp"
#include "keepsake/shell.hpp"

namespace keepsake::shell {

using nlohmann::json;

std::string_view to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::segment: return "segment";
    case ScenarioKind::utterance: return "utterance";
    case ScenarioKind::name: return "name";
    case ScenarioKind::enroll: return "enroll";
    case ScenarioKind::sensor: return "sensor";
    case ScenarioKind::wake: return "wake";
    case ScenarioKind::agenda: return "agenda";
    case ScenarioKind::clock: return "clock";
    case ScenarioKind::truth: return "truth";
    case ScenarioKind::health: return "health";
    case ScenarioKind::document: return "document";
    case ScenarioKind::search: return "search";
    case ScenarioKind::summary: return "summary";
    case ScenarioKind::recall: return "recall";
  }
  return "clock";
}

namespace {

constexpr ScenarioKind kAllKinds[] = {
    ScenarioKind::segment, ScenarioKind::utterance, ScenarioKind::name,     ScenarioKind::enroll,
    ScenarioKind::sensor,  ScenarioKind::wake,      ScenarioKind::agenda,   ScenarioKind::clock,
    ScenarioKind::truth,   ScenarioKind::health,    ScenarioKind::document, ScenarioKind::search,
    ScenarioKind::summary, ScenarioKind::recall};

struct LineError {
  std::string message;
};

[[noreturn]] void fail(const std::string& message) { throw LineError{message}; }

Timestamp time_value(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) return parse_timestamp(v.get<std::string>());
  fail("time must be a number or an ISO timestamp");
}

std::string str(const json& j, const char* key, bool required = false) {
  if (!j.contains(key)) {
    if (required) fail(std::string("missing \"") + key + "\"");
    return {};
  }
  if (!j[key].is_string()) fail(std::string("\"") + key + "\" must be a string");
  return j[key].get<std::string>();
}

Embedding unit_vector(const json& v) {
  if (!v.is_array() || v.empty()) fail("vector must be a non-empty array");
  Embedding out;
  double n2 = 0.0;
  for (const auto& x : v) {
    if (!x.is_number()) fail("vector entries must be numbers");
    out.push_back(x.get<double>());
    n2 += out.back() * out.back();
  }
  if (!(n2 > 0.0) || !std::isfinite(n2)) fail("vector has zero or non-finite norm");
  const double n = std::sqrt(n2);
  for (auto& x : out) x /= n;
  return out;
}

ScenarioEvent parse_line(const json& j) {
  if (!j.is_object()) fail("record must be a JSON object");
  if (!j.contains("t")) fail("missing \"t\"");
  ScenarioEvent e;
  e.t = time_value(j["t"]);
  const std::string kind = str(j, "kind", true);
  bool known = false;
  for (auto k : kAllKinds) {
    if (to_string(k) == kind) {
      e.kind = k;
      known = true;
    }
  }
  if (!known) fail("unknown kind '" + kind + "'");
  if (j.contains("session")) e.session = str(j, "session");
  if (e.session.empty()) fail("session must not be empty");
  e.speaker = str(j, "speaker");
  if (j.contains("t_end")) e.t_end = time_value(j["t_end"]);
  if (j.contains("marker")) e.marker = dialogue::parse_marker(str(j, "marker"));
  if (j.contains("role")) e.role = diarization::parse_role(str(j, "role"));

  switch (e.kind) {
    case ScenarioKind::segment:
      if (!j.contains("vector")) fail("segment needs \"vector\"");
      e.vector = unit_vector(j["vector"]);
      if (!e.t_end || !(*e.t_end > e.t)) fail("segment needs t_end after t");
      e.text = str(j, "text");
      break;
    case ScenarioKind::utterance:
      e.text = str(j, "text", true);
      if (e.speaker.empty()) fail("utterance needs \"speaker\"");
      if (e.t_end && !(*e.t_end > e.t)) fail("t_end must follow t");
      break;
    case ScenarioKind::name:
      e.name = str(j, "name", true);
      if (e.speaker.empty()) fail("name needs \"speaker\"");
      break;
    case ScenarioKind::enroll:
      e.name = str(j, "name", true);
      if (!j.contains("vectors") || !j["vectors"].is_array() || j["vectors"].empty()) {
        fail("enroll needs \"vectors\"");
      }
      for (const auto& v : j["vectors"]) e.vectors.push_back(unit_vector(v));
      break;
    case ScenarioKind::sensor: {
      fusion::SensorReading r;
      r.sensor_id = str(j, "sensor_id", true);
      r.kind = fusion::parse_sensor_kind(str(j, "sensor", true));
      if (j.contains("room")) r.room = str(j, "room");
      if (j.contains("value")) {
        if (!j["value"].is_number()) fail("\"value\" must be a number");
        r.value = j["value"].get<double>();
      }
      if (j.contains("imu")) {
        const auto& f = j["imu"];
        r.imu = fusion::ImuFeature{f.value("accel_variance", 0.0), f.value("tilt_deg", 0.0),
                                   f.value("step_rate_hz", 0.0)};
      }
      r.timestamp = e.t;
      fusion::validate_reading(r);
      e.reading = std::move(r);
      e.text = str(j, "alert");
      break;
    }
    case ScenarioKind::agenda:
      if (!j.contains("at")) fail("agenda needs \"at\"");
      e.at = time_value(j["at"]);
      e.text = str(j, "text", true);
      if (e.text.empty()) fail("agenda text is empty");
      break;
    case ScenarioKind::truth:
      if (e.speaker.empty()) fail("truth needs \"speaker\"");
      if (!e.t_end || !(*e.t_end > e.t)) fail("truth needs t_end after t");
      break;
    case ScenarioKind::health:
      e.status = dialogue::normalize_health_status(str(j, "status", true));
      break;
    case ScenarioKind::document:
      e.text = str(j, "text", true);
      break;
    case ScenarioKind::search:
      e.text = str(j, "query", true);
      break;
    case ScenarioKind::summary:
      if (e.speaker.empty() && !e.role) fail("summary needs \"speaker\" or \"role\"");
      break;
    case ScenarioKind::recall:
      e.metric = str(j, "metric", true);
      if (j.contains("wake_day")) e.wake_day = parse_date(str(j, "wake_day"));
      if (j.contains("anchor")) e.at = time_value(j["anchor"]);
      break;
    case ScenarioKind::wake:
    case ScenarioKind::clock:
      break;
  }
  return e;
}

}  // namespace

std::vector<ScenarioEvent> parse_scenario(std::string_view text) {
  std::vector<ScenarioEvent> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string_view::npos || line[first] == '#') continue;
    ScenarioEvent e;
    try {
      e = parse_line(json::parse(line));
    } catch (const LineError& err) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + err.message);
    } catch (const json::exception& err) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + err.what());
    } catch (const Error& err) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + err.what());
    }
    e.line = line_no;
    if (!out.empty() && e.t < out.back().t) {
      throw Error(ErrorCode::UnorderedScenario,
                  "line " + std::to_string(line_no) + ": time goes back from line " +
                      std::to_string(out.back().line));
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ScenarioEvent> load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read scenario file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

}  // namespace keepsake::shell
