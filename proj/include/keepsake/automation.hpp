#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "keepsake/dialogue.hpp"
#include "keepsake/fusion.hpp"
#include "keepsake/gateway.hpp"
#include "keepsake/record.hpp"
#include "keepsake/time.hpp"

namespace keepsake::automation {

// [start, end) in seconds after midnight. start > end wraps past midnight;
// start == end covers the whole day.
struct TimeRange {
  double start = 0.0;
  double end = 0.0;

  bool wraps() const { return start > end; }
  bool contains(double seconds_of_day) const;
};

// Index of the period containing t (the day it starts on), or nullopt when t
// falls outside the range.
std::optional<std::int64_t> period_of(Timestamp t, const TimeRange& range);
Timestamp period_end(std::int64_t period, const TimeRange& range);

// One observation in the rule history. Activity labels use kind "activity"
// and their start time; sensor readings use the sensor kind name.
struct HistoryEvent {
  Timestamp t = 0.0;
  std::string kind;
  std::string label;
  std::string room;
};

std::vector<HistoryEvent> history_from(std::span<const fusion::ActivityLabel> labels,
                                       std::span<const fusion::SensorReading> readings);

struct EventPredicate {
  std::optional<std::string> kind;
  std::optional<std::string> label;
  std::optional<std::string> room;
  TimeRange period{};  // the "night"; defaults to whole days
};

enum class ActionTemplate { recommend_doctor, alert, custom };
std::string_view to_string(ActionTemplate a);
ActionTemplate parse_action_template(std::string_view text);

struct WatchRule {
  std::string rule_id;
  EventPredicate predicate;
  int n_min = 3;   // matching events per period
  int window = 7;  // periods looked at
  int m_min = 5;   // qualifying periods needed
  int cooldown_days = 3;
  ActionTemplate action = ActionTemplate::recommend_doctor;
  std::string text;  // custom text, or an override for the templates

  // n_min >= 1, 1 <= m_min <= window, cooldown >= 0, id non-empty.
  // Throws InvalidRule.
  void validate() const;
};

// The nightly toileting rule: 3 visits, 5 of 7 nights of 23:00-06:00,
// cooldown 3 days.
WatchRule default_night_rule();

inline constexpr std::string_view kRecommendDoctorText =
    "You have been up at night a lot lately. It may be worth seeing a doctor.";

struct TriggerRecord {
  std::string rule_id;
  Timestamp at = 0.0;
  std::int64_t last_period = 0;  // evidence up to this period is used up
};

struct Triggered {
  std::string rule_id;
  dialogue::Action action;
  std::int64_t last_period = 0;
  int qualifying = 0;
};

// A rule fires when at least m_min of its last `window` completed periods
// hold n_min matching events each. Periods already used by the rule's
// previous trigger do not count again, and cooldown_days must have passed
// since that trigger. Actions are addressed to the owner only. Pure: the
// caller records what fired. Throws UnsortedHistory.
std::vector<Triggered> evaluate_watch_rules(std::span<const WatchRule> rules,
                                            std::span<const HistoryEvent> history,
                                            std::span<const TriggerRecord> past, Timestamp now,
                                            std::string_view owner_id);

// Rules file: {"rules": [{"id", "kind", "label", "room", "period": ["23:00",
// "06:00"], "n_min", "window", "m_min", "cooldown_days", "action", "text"}]}
// Throws InvalidRule (ParseError for malformed JSON).
std::vector<WatchRule> parse_rules(std::string_view json_text);
std::vector<WatchRule> load_rules(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Schedule

struct ScheduledAction {
  std::string name;
  std::optional<double> daily_at;  // seconds after midnight
  double interval = 0.0;           // used when daily_at is empty
  Timestamp next_due = 0.0;
};

class Schedule {
 public:
  // First due at the next occurrence strictly after `now`.
  void add_daily(std::string name, double time_of_day, Timestamp now);
  void add_interval(std::string name, double seconds, Timestamp first_due);

  const std::vector<ScheduledAction>& actions() const { return actions_; }
  std::vector<ScheduledAction>& actions() { return actions_; }

 private:
  std::vector<ScheduledAction> actions_;
};

// Names of actions due at `now` (next_due <= now), ordered by due time then
// name. Each fires at most once per tick however many occurrences were
// missed; its next_due moves to the first occurrence after now.
std::vector<std::string> schedule_tick(Timestamp now, Schedule& schedule);

// ---------------------------------------------------------------------------
// Agenda and briefing

struct Appointment {
  Timestamp at = 0.0;
  std::string text;

  bool operator==(const Appointment&) const = default;
};

// agenda.log: timestamp, text
class Agenda {
 public:
  Agenda() = default;
  explicit Agenda(record::AppendLog log);

  void add(Appointment a);
  // Sorted by time; equal times keep insertion order.
  std::vector<Appointment> on_day(std::int64_t day) const;
  const std::vector<Appointment>& all() const { return items_; }

 private:
  record::AppendLog log_;
  std::vector<Appointment> items_;
};

inline constexpr std::string_view kWeatherUnavailable = "weather unavailable";

struct Briefing {
  std::int64_t date = 0;
  std::string weather;
  std::vector<Appointment> appointments;
  std::optional<std::string> vitals;

  std::string text() const;
};

// Weather comes through the gateway; offline it reads "weather unavailable".
// Vitals: the first heart-rate reading between 05:00 and now on that day.
Briefing morning_briefing(std::int64_t day, const Agenda& agenda, gateway::Gateway& gateway,
                          const diarization::SpeakerRegistry& registry,
                          const fusion::SensorHistory& history, Timestamp now);

}  // namespace keepsake::automation
