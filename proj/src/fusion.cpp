#include "keepsake/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "keepsake/error.hpp"

namespace keepsake::fusion {

std::string_view to_string(SensorKind kind) {
  switch (kind) {
    case SensorKind::motion: return "motion";
    case SensorKind::door: return "door";
    case SensorKind::temperature: return "temperature";
    case SensorKind::heart_rate: return "heart_rate";
    case SensorKind::imu: return "imu";
  }
  return "motion";
}

SensorKind parse_sensor_kind(std::string_view text) {
  for (auto k : {SensorKind::motion, SensorKind::door, SensorKind::temperature,
                 SensorKind::heart_rate, SensorKind::imu}) {
    if (to_string(k) == text) return k;
  }
  throw Error(ErrorCode::NoSuchMetric, "unknown sensor kind '" + std::string(text) + "'");
}

std::string_view to_string(Activity a) {
  switch (a) {
    case Activity::cooking: return "cooking";
    case Activity::eating: return "eating";
    case Activity::resting: return "resting";
    case Activity::toileting: return "toileting";
    case Activity::other: return "other";
  }
  return "other";
}

Activity parse_activity(std::string_view text) {
  for (auto a : {Activity::cooking, Activity::eating, Activity::resting, Activity::toileting,
                 Activity::other}) {
    if (to_string(a) == text) return a;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown activity '" + std::string(text) + "'");
}

std::string_view to_string(Origin o) { return o == Origin::edge ? "edge" : "cloud"; }

std::string_view to_string(Pose p) {
  switch (p) {
    case Pose::standing: return "standing";
    case Pose::sitting: return "sitting";
    case Pose::lying: return "lying";
    case Pose::walking: return "walking";
  }
  return "sitting";
}

Pose parse_pose(std::string_view text) {
  for (auto p : {Pose::standing, Pose::sitting, Pose::lying, Pose::walking}) {
    if (to_string(p) == text) return p;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown pose '" + std::string(text) + "'");
}

std::string_view to_string(TimeOfDay t) {
  switch (t) {
    case TimeOfDay::morning: return "morning";
    case TimeOfDay::afternoon: return "afternoon";
    case TimeOfDay::evening: return "evening";
    case TimeOfDay::night: return "night";
  }
  return "night";
}

TimeOfDay parse_time_of_day_label(std::string_view text) {
  for (auto t : {TimeOfDay::morning, TimeOfDay::afternoon, TimeOfDay::evening, TimeOfDay::night}) {
    if (to_string(t) == text) return t;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown time of day '" + std::string(text) + "'");
}

TimeOfDay time_of_day_of(Timestamp t) {
  const double h = seconds_of_day(t) / 3600.0;
  if (h >= 5.0 && h < 12.0) return TimeOfDay::morning;
  if (h >= 12.0 && h < 17.0) return TimeOfDay::afternoon;
  if (h >= 17.0 && h < 22.0) return TimeOfDay::evening;
  return TimeOfDay::night;
}

void validate_reading(const SensorReading& r) {
  if (!std::isfinite(r.timestamp) || !std::isfinite(r.value)) {
    throw Error(ErrorCode::InvalidArgument, "reading has a non-finite field");
  }
  if ((r.kind == SensorKind::motion || r.kind == SensorKind::door) && (!r.room || r.room->empty())) {
    throw Error(ErrorCode::InvalidArgument, std::string(to_string(r.kind)) + " reading needs a room");
  }
  if (r.kind == SensorKind::heart_rate && !(r.value > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "heart rate must be positive");
  }
  if (r.kind == SensorKind::imu && !r.imu) {
    throw Error(ErrorCode::InvalidArgument, "imu reading needs a feature triple");
  }
}

// ---------------------------------------------------------------------------
// Occupancy

std::vector<OccupancyInterval> occupancy_intervals(std::span<const SensorReading> readings,
                                                   Timestamp t0, Timestamp t1) {
  if (!(t1 > t0)) throw Error(ErrorCode::EmptyWindow, "window end must follow its start");
  std::vector<const SensorReading*> motions;
  for (const auto& r : readings) {
    if (r.kind == SensorKind::motion && r.room && r.timestamp < t1) motions.push_back(&r);
  }
  std::stable_sort(motions.begin(), motions.end(),
                   [](const auto* a, const auto* b) { return a->timestamp < b->timestamp; });

  std::vector<OccupancyInterval> runs;
  for (const auto* m : motions) {
    if (!runs.empty() && runs.back().room == *m->room) {
      runs.back().motions.push_back(m->timestamp);
      continue;
    }
    if (!runs.empty()) runs.back().end = m->timestamp;
    runs.push_back({*m->room, m->timestamp, std::numeric_limits<double>::infinity(), {m->timestamp}});
  }

  std::vector<OccupancyInterval> out;
  for (auto& run : runs) {
    run.start = std::max(run.start, t0);
    run.end = std::min(run.end, t1);
    if (run.end > run.start) out.push_back(std::move(run));
  }
  return out;
}

RoomSeconds room_occupancy_stats(std::span<const SensorReading> readings, Timestamp t0,
                                 Timestamp t1) {
  RoomSeconds stats;
  for (const auto& iv : occupancy_intervals(readings, t0, t1)) stats[iv.room] += iv.end - iv.start;
  return stats;
}

double sedentarization_level(const RoomSeconds& stats) {
  double total = 0.0, top = 0.0;
  for (const auto& [room, secs] : stats) {
    total += secs;
    top = std::max(top, secs);
  }
  return total > 0.0 ? top / total : 0.0;
}

// ---------------------------------------------------------------------------
// HAR

std::vector<ActivityLabel> har_label(std::span<const SensorReading> readings, Timestamp t0,
                                     Timestamp t1, const HarOptions& opt) {
  for (std::size_t i = 1; i < readings.size(); ++i) {
    if (readings[i].timestamp < readings[i - 1].timestamp) {
      throw Error(ErrorCode::UnsortedInput, "readings are not time-ordered");
    }
  }
  const auto intervals = occupancy_intervals(readings, t0, t1);
  std::vector<Timestamp> kitchen_doors;
  for (const auto& r : readings) {
    if (r.kind == SensorKind::door && r.room == opt.kitchen) kitchen_doors.push_back(r.timestamp);
  }

  std::vector<ActivityLabel> labels;
  std::optional<Timestamp> last_cooking_end;
  for (const auto& iv : intervals) {
    const double duration = iv.end - iv.start;
    std::optional<Activity> label;
    if (iv.room == opt.bathroom) {
      label = Activity::toileting;
    } else if (iv.room == opt.kitchen) {
      const bool linked = std::any_of(kitchen_doors.begin(), kitchen_doors.end(), [&](Timestamp d) {
        if (d < iv.start || d >= iv.end) return false;
        return std::any_of(iv.motions.begin(), iv.motions.end(),
                           [&](Timestamp m) { return std::abs(d - m) <= opt.door_link_seconds; });
      });
      if (linked) label = Activity::cooking;
    } else if (iv.room == opt.dining_room) {
      if (duration >= opt.eating_min_seconds && last_cooking_end &&
          iv.start - *last_cooking_end <= opt.door_link_seconds) {
        label = Activity::eating;
      }
    } else if (iv.room == opt.bedroom) {
      if (duration >= opt.resting_min_seconds) label = Activity::resting;
    }
    if (!label) continue;
    if (*label == Activity::cooking) last_cooking_end = iv.end;
    labels.push_back({*label, iv.start, iv.end, Origin::edge});
  }

  if (intervals.empty()) return labels;
  // Fill uncovered stretches of the occupied span with "other".
  std::vector<ActivityLabel> out;
  Timestamp cursor = intervals.front().start;
  auto gap = [&](Timestamp until) {
    if (until - cursor >= opt.other_min_seconds) out.push_back({Activity::other, cursor, until, Origin::edge});
  };
  for (const auto& l : labels) {
    gap(l.t_start);
    out.push_back(l);
    cursor = l.t_end;
  }
  gap(intervals.back().end);
  return out;
}

Pose pose_classify(const ImuFeature& f, const PoseOptions& opt) {
  if (!std::isfinite(f.accel_variance) || !std::isfinite(f.tilt_deg) ||
      !std::isfinite(f.step_rate_hz) || f.accel_variance < 0.0 || f.step_rate_hz < 0.0 ||
      f.tilt_deg < 0.0 || f.tilt_deg > 180.0) {
    throw Error(ErrorCode::InvalidFeature, "imu feature out of range");
  }
  if (f.step_rate_hz >= opt.walking_step_rate_hz) return Pose::walking;
  if (f.tilt_deg >= opt.lying_tilt_deg) return Pose::lying;
  if (f.accel_variance >= opt.standing_variance) return Pose::standing;
  return Pose::sitting;
}

namespace {

// Mode of one component; ties go to the value whose latest occurrence is the
// most recent (timestamp, then position in the log).
template <typename T, typename Get>
T component_mode(std::span<const std::pair<Timestamp, ContextSnapshot>> log, Get get) {
  struct Tally {
    std::size_t count = 0;
    Timestamp last = -std::numeric_limits<double>::infinity();
    std::size_t last_index = 0;
  };
  std::vector<std::pair<T, Tally>> tallies;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const T& v = get(log[i].second);
    auto it = std::find_if(tallies.begin(), tallies.end(), [&](const auto& p) { return p.first == v; });
    if (it == tallies.end()) {
      tallies.push_back({v, {}});
      it = tallies.end() - 1;
    }
    auto& t = it->second;
    ++t.count;
    if (log[i].first > t.last || (log[i].first == t.last && i >= t.last_index)) {
      t.last = log[i].first;
      t.last_index = i;
    }
  }
  auto best = tallies.begin();
  for (auto it = tallies.begin(); it != tallies.end(); ++it) {
    const auto& a = it->second;
    const auto& b = best->second;
    if (a.count != b.count ? a.count > b.count
                           : (a.last != b.last ? a.last > b.last : a.last_index > b.last_index)) {
      best = it;
    }
  }
  return best->first;
}

}  // namespace

std::optional<ContextSnapshot> preferred_context(
    std::span<const std::pair<Timestamp, ContextSnapshot>> log) {
  if (log.empty()) return std::nullopt;
  return ContextSnapshot{
      component_mode<std::string>(log, [](const ContextSnapshot& s) -> const std::string& { return s.location; }),
      component_mode<Pose>(log, [](const ContextSnapshot& s) -> const Pose& { return s.pose; }),
      component_mode<TimeOfDay>(log, [](const ContextSnapshot& s) -> const TimeOfDay& { return s.time_of_day; })};
}

// ---------------------------------------------------------------------------
// LabelStore
//
// labels.log: origin, label, t_start, t_end

LabelStore::LabelStore(record::AppendLog log) : log_(std::move(log)) {
  for (const auto& f : log_.records()) {
    if (f.size() != 4) throw Error(ErrorCode::CorruptRecord, "label record field count");
    labels_.push_back({parse_activity(f[1]), record::parse_number(f[2]), record::parse_number(f[3]),
                       f[0] == "cloud" ? Origin::cloud : Origin::edge});
  }
}

std::size_t LabelStore::add(std::span<const ActivityLabel> batch, Origin origin) {
  std::size_t added = 0;
  for (ActivityLabel l : batch) {
    l.origin = origin;
    if (!(l.t_end > l.t_start)) throw Error(ErrorCode::InvalidArgument, "label with t_end <= t_start");
    bool clash = false;
    for (const auto& existing : labels_) {
      if (existing.origin != origin) continue;
      if (existing == l || (l.t_start < existing.t_end && existing.t_start < l.t_end)) {
        clash = true;
        break;
      }
    }
    if (clash) continue;
    log_.append({std::string(to_string(origin)), std::string(to_string(l.label)),
                 record::format_number(l.t_start), record::format_number(l.t_end)});
    labels_.push_back(l);
    ++added;
  }
  return added;
}

std::size_t LabelStore::add_edge(std::span<const ActivityLabel> labels) {
  return add(labels, Origin::edge);
}

std::size_t LabelStore::merge_cloud(std::span<const ActivityLabel> labels) {
  return add(labels, Origin::cloud);
}

std::vector<ActivityLabel> LabelStore::labels(Origin origin) const {
  std::vector<ActivityLabel> out;
  for (const auto& l : labels_) {
    if (l.origin == origin) out.push_back(l);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.t_start < b.t_start; });
  return out;
}

std::vector<ActivityLabel> parse_label_payload(std::string_view payload) {
  std::vector<ActivityLabel> out;
  std::size_t line_no = 0;
  while (!payload.empty()) {
    const auto nl = payload.find('\n');
    std::string_view line = payload.substr(0, nl);
    payload.remove_prefix(nl == std::string_view::npos ? payload.size() : nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      parts.push_back(line.substr(start, tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    try {
      if (parts.size() != 3) throw Error(ErrorCode::ParseError, "expected 3 fields");
      ActivityLabel l{parse_activity(parts[0]), parse_timestamp(parts[1]), parse_timestamp(parts[2]),
                      Origin::cloud};
      if (!(l.t_end > l.t_start)) throw Error(ErrorCode::ParseError, "t_end <= t_start");
      out.push_back(l);
    } catch (const Error& e) {
      throw Error(ErrorCode::MalformedPayload,
                  "label line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string format_label_payload(std::span<const ActivityLabel> labels) {
  std::string out;
  for (const auto& l : labels) {
    out += std::string(to_string(l.label)) + '\t' + record::format_number(l.t_start) + '\t' +
           record::format_number(l.t_end) + '\n';
  }
  return out;
}

SyncResult sync_cloud_labels(CloudLabelClient& client, Timestamp since, LabelStore& store,
                             Timestamp now, double retry_seconds) {
  const auto payload = client.fetch_since(since);
  if (!payload) return {0, true, now + retry_seconds};
  auto labels = parse_label_payload(*payload);
  std::erase_if(labels, [&](const ActivityLabel& l) { return l.t_start < since; });
  return {store.merge_cloud(labels), false, std::nullopt};
}

// ---------------------------------------------------------------------------
// SensorHistory
//
// sensors.log: "R", sensor_id, kind, room|"-", value, imu "a,b,c"|"-", timestamp
//              "W", timestamp

namespace {

std::string format_imu(const std::optional<ImuFeature>& f) {
  if (!f) return "-";
  return record::format_number(f->accel_variance) + "," + record::format_number(f->tilt_deg) + "," +
         record::format_number(f->step_rate_hz);
}

std::optional<ImuFeature> parse_imu(std::string_view s) {
  if (s == "-") return std::nullopt;
  const auto a = s.find(',');
  const auto b = s.find(',', a + 1);
  if (a == std::string_view::npos || b == std::string_view::npos) {
    throw Error(ErrorCode::CorruptRecord, "imu field");
  }
  return ImuFeature{record::parse_number(s.substr(0, a)), record::parse_number(s.substr(a + 1, b - a - 1)),
                    record::parse_number(s.substr(b + 1))};
}

}  // namespace

SensorHistory::SensorHistory(record::AppendLog log) : log_(std::move(log)) {
  for (const auto& f : log_.records()) {
    if (f.size() == 2 && f[0] == "W") {
      wakes_.push_back(record::parse_number(f[1]));
    } else if (f.size() == 7 && f[0] == "R") {
      SensorReading r;
      r.sensor_id = f[1];
      r.kind = parse_sensor_kind(f[2]);
      if (f[3] != "-") r.room = f[3];
      r.value = record::parse_number(f[4]);
      r.imu = parse_imu(f[5]);
      r.timestamp = record::parse_number(f[6]);
      apply(std::move(r));
    } else {
      throw Error(ErrorCode::CorruptRecord, "sensor history record");
    }
  }
}

void SensorHistory::apply(SensorReading reading) {
  last_by_sensor_[reading.sensor_id] = reading.timestamp;
  readings_.push_back(std::move(reading));
}

void SensorHistory::append(SensorReading reading) {
  validate_reading(reading);
  auto it = last_by_sensor_.find(reading.sensor_id);
  if (it != last_by_sensor_.end() && reading.timestamp < it->second) {
    throw Error(ErrorCode::InvalidArgument, "sensor " + reading.sensor_id + " went back in time");
  }
  log_.append({"R", reading.sensor_id, std::string(to_string(reading.kind)), reading.room.value_or("-"),
               record::format_number(reading.value), format_imu(reading.imu),
               record::format_number(reading.timestamp)});
  apply(std::move(reading));
}

void SensorHistory::mark_wake(Timestamp t) {
  log_.append({"W", record::format_number(t)});
  wakes_.push_back(t);
}

std::optional<Timestamp> SensorHistory::wake_on(std::int64_t day) const {
  std::optional<Timestamp> first;
  for (Timestamp w : wakes_) {
    if (day_index(w) == day && (!first || w < *first)) first = w;
  }
  return first;
}

}  // namespace keepsake::fusion
