#include "keepsake/automation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "keepsake/error.hpp"
#include "keepsake/memory.hpp"

namespace keepsake::automation {

bool TimeRange::contains(double s) const {
  if (start == end) return true;
  if (wraps()) return s >= start || s < end;
  return s >= start && s < end;
}

std::optional<std::int64_t> period_of(Timestamp t, const TimeRange& r) {
  const double s = seconds_of_day(t);
  const std::int64_t day = day_index(t);
  if (r.start < r.end) {
    if (s >= r.start && s < r.end) return day;
    return std::nullopt;
  }
  if (s >= r.start) return day;
  if (r.start == r.end || s < r.end) return day - 1;
  return std::nullopt;
}

Timestamp period_end(std::int64_t period, const TimeRange& r) {
  if (r.start < r.end) return day_start(period) + r.end;
  return day_start(period + 1) + r.end;
}

std::vector<HistoryEvent> history_from(std::span<const fusion::ActivityLabel> labels,
                                       std::span<const fusion::SensorReading> readings) {
  std::vector<HistoryEvent> out;
  for (const auto& l : labels) out.push_back({l.t_start, "activity", std::string(fusion::to_string(l.label)), ""});
  for (const auto& r : readings) {
    out.push_back({r.timestamp, std::string(fusion::to_string(r.kind)), "", r.room.value_or("")});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  return out;
}

std::string_view to_string(ActionTemplate a) {
  switch (a) {
    case ActionTemplate::recommend_doctor: return "recommend_doctor";
    case ActionTemplate::alert: return "alert";
    case ActionTemplate::custom: return "custom";
  }
  return "custom";
}

ActionTemplate parse_action_template(std::string_view text) {
  for (auto a : {ActionTemplate::recommend_doctor, ActionTemplate::alert, ActionTemplate::custom}) {
    if (to_string(a) == text) return a;
  }
  throw Error(ErrorCode::InvalidRule, "unknown action template '" + std::string(text) + "'");
}

void WatchRule::validate() const {
  auto bad = [&](const std::string& why) { throw Error(ErrorCode::InvalidRule, rule_id + ": " + why); };
  if (rule_id.empty()) bad("rule id is empty");
  if (n_min < 1) bad("n_min must be at least 1");
  if (window < 1 || m_min < 1 || m_min > window) bad("need 1 <= m_min <= window");
  if (cooldown_days < 0) bad("cooldown must not be negative");
  if (action == ActionTemplate::custom && text.empty()) bad("custom action needs text");
  for (double v : {predicate.period.start, predicate.period.end}) {
    if (!(v >= 0.0 && v < kSecondsPerDay)) bad("period bounds must lie within a day");
  }
}

WatchRule default_night_rule() {
  WatchRule r;
  r.rule_id = "night-toileting";
  r.predicate.kind = "activity";
  r.predicate.label = "toileting";
  r.predicate.period = {23 * 3600.0, 6 * 3600.0};
  return r;
}

namespace {

bool matches(const EventPredicate& p, const HistoryEvent& e) {
  if (p.kind && *p.kind != e.kind) return false;
  if (p.label && *p.label != e.label) return false;
  if (p.room && *p.room != e.room) return false;
  return true;
}

std::string action_text(const WatchRule& r) {
  if (!r.text.empty()) return r.text;
  if (r.action == ActionTemplate::recommend_doctor) return std::string(kRecommendDoctorText);
  return "Unusual activity noticed (" + r.rule_id + ").";
}

}  // namespace

std::vector<Triggered> evaluate_watch_rules(std::span<const WatchRule> rules,
                                            std::span<const HistoryEvent> history,
                                            std::span<const TriggerRecord> past, Timestamp now,
                                            std::string_view owner_id) {
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i].t < history[i - 1].t) throw Error(ErrorCode::UnsortedHistory, "history is not time-ordered");
  }
  std::vector<Triggered> out;
  for (const auto& rule : rules) {
    rule.validate();
    const TriggerRecord* last = nullptr;
    for (const auto& rec : past) {
      if (rec.rule_id == rule.rule_id && (!last || rec.at >= last->at)) last = &rec;
    }
    if (last && day_index(now) - day_index(last->at) < rule.cooldown_days) continue;

    const auto& range = rule.predicate.period;
    std::int64_t latest = day_index(now);
    while (period_end(latest, range) > now) --latest;
    std::int64_t first = latest - rule.window + 1;
    if (last) first = std::max(first, last->last_period + 1);
    if (first > latest) continue;

    std::map<std::int64_t, int> counts;
    for (const auto& e : history) {
      if (e.t > now || !matches(rule.predicate, e)) continue;
      const auto p = period_of(e.t, range);
      if (p && *p >= first && *p <= latest) ++counts[*p];
    }
    int qualifying = 0;
    for (const auto& [p, c] : counts) qualifying += c >= rule.n_min ? 1 : 0;
    if (qualifying < rule.m_min) continue;
    out.push_back({rule.rule_id,
                   {dialogue::ActionKind::speak, action_text(rule), std::string(owner_id)},
                   latest,
                   qualifying});
  }
  return out;
}

std::vector<WatchRule> parse_rules(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("rules file: ") + e.what());
  }
  std::vector<WatchRule> rules;
  try {
    for (const auto& j : doc.at("rules")) {
      WatchRule r;
      r.rule_id = j.at("id").get<std::string>();
      auto opt = [&](const char* key) -> std::optional<std::string> {
        if (!j.contains(key) || j[key].is_null()) return std::nullopt;
        return j[key].get<std::string>();
      };
      r.predicate.kind = opt("kind");
      r.predicate.label = opt("label");
      r.predicate.room = opt("room");
      if (j.contains("period") && !j["period"].is_null()) {
        const auto& p = j["period"];
        if (!p.is_array() || p.size() != 2) throw Error(ErrorCode::InvalidRule, r.rule_id + ": period needs [start, end]");
        r.predicate.period = {parse_time_of_day(p[0].get<std::string>()),
                              parse_time_of_day(p[1].get<std::string>())};
      }
      r.n_min = j.value("n_min", r.n_min);
      r.window = j.value("window", r.window);
      r.m_min = j.value("m_min", r.m_min);
      r.cooldown_days = j.value("cooldown_days", r.cooldown_days);
      if (j.contains("action")) r.action = parse_action_template(j["action"].get<std::string>());
      r.text = j.value("text", std::string{});
      r.validate();
      if (std::any_of(rules.begin(), rules.end(), [&](const WatchRule& x) { return x.rule_id == r.rule_id; })) {
        throw Error(ErrorCode::InvalidRule, "duplicate rule id " + r.rule_id);
      }
      rules.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidRule, std::string("rules file: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidRule) throw;
    throw Error(ErrorCode::InvalidRule, e.what());
  }
  return rules;
}

std::vector<WatchRule> load_rules(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read rules file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_rules(ss.str());
}

// ---------------------------------------------------------------------------
// Schedule

void Schedule::add_daily(std::string name, double time_of_day, Timestamp now) {
  actions_.push_back({std::move(name), time_of_day, 0.0, memory::next_rollover(now, time_of_day)});
}

void Schedule::add_interval(std::string name, double seconds, Timestamp first_due) {
  if (!(seconds > 0.0)) throw Error(ErrorCode::InvalidConfig, "interval must be positive");
  actions_.push_back({std::move(name), std::nullopt, seconds, first_due});
}

std::vector<std::string> schedule_tick(Timestamp now, Schedule& schedule) {
  std::vector<ScheduledAction*> due;
  for (auto& a : schedule.actions()) {
    if (a.next_due <= now) due.push_back(&a);
  }
  std::sort(due.begin(), due.end(), [](const auto* a, const auto* b) {
    return a->next_due != b->next_due ? a->next_due < b->next_due : a->name < b->name;
  });
  std::vector<std::string> names;
  for (auto* a : due) {
    names.push_back(a->name);
    if (a->daily_at) {
      a->next_due = memory::next_rollover(now, *a->daily_at);
    } else {
      const double skipped = std::floor((now - a->next_due) / a->interval) + 1.0;
      a->next_due += skipped * a->interval;
    }
  }
  return names;
}

// ---------------------------------------------------------------------------
// Agenda and briefing

Agenda::Agenda(record::AppendLog log) : log_(std::move(log)) {
  for (const auto& f : log_.records()) {
    if (f.size() != 2) throw Error(ErrorCode::CorruptRecord, "agenda record field count");
    items_.push_back({record::parse_number(f[0]), f[1]});
  }
}

void Agenda::add(Appointment a) {
  if (a.text.empty()) throw Error(ErrorCode::InvalidArgument, "appointment text is empty");
  log_.append({record::format_number(a.at), a.text});
  items_.push_back(std::move(a));
}

std::vector<Appointment> Agenda::on_day(std::int64_t day) const {
  std::vector<Appointment> out;
  for (const auto& a : items_) {
    if (day_index(a.at) == day) out.push_back(a);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.at < y.at; });
  return out;
}

std::string Briefing::text() const {
  std::string out = "Good morning. Today is " + format_date(date) + ". Weather: " + weather + ".";
  if (appointments.empty()) {
    out += " No appointments today.";
  } else {
    out += " Appointments:";
    for (std::size_t i = 0; i < appointments.size(); ++i) {
      out += (i ? "; " : " ") + format_time_of_day(seconds_of_day(appointments[i].at)) + " " +
             appointments[i].text;
    }
    out += ".";
  }
  if (vitals) out += " " + *vitals + ".";
  return out;
}

Briefing morning_briefing(std::int64_t day, const Agenda& agenda, gateway::Gateway& gateway,
                          const diarization::SpeakerRegistry& registry,
                          const fusion::SensorHistory& history, Timestamp now) {
  Briefing b;
  b.date = day;
  b.weather = gateway.weather(registry, now).value_or(std::string(kWeatherUnavailable));
  b.appointments = agenda.on_day(day);
  const Timestamp from = day_start(day) + 5 * 3600.0;
  const fusion::SensorReading* first = nullptr;
  for (const auto& r : history.readings()) {
    if (r.kind != fusion::SensorKind::heart_rate || r.timestamp < from || r.timestamp > now) continue;
    if (day_index(r.timestamp) != day) continue;
    if (!first || r.timestamp < first->timestamp) first = &r;
  }
  if (first) {
    b.vitals = "Heart rate " + record::format_number(first->value) + " at " +
               format_time_of_day(seconds_of_day(first->timestamp));
  }
  return b;
}

}  // namespace keepsake::automation
