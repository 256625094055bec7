#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "keepsake/record.hpp"
#include "keepsake/time.hpp"

namespace keepsake::fusion {

enum class SensorKind { motion, door, temperature, heart_rate, imu };
std::string_view to_string(SensorKind kind);
SensorKind parse_sensor_kind(std::string_view text);  // NoSuchMetric when unknown

struct ImuFeature {
  double accel_variance = 0.0;
  double tilt_deg = 0.0;  // from vertical
  double step_rate_hz = 0.0;

  bool operator==(const ImuFeature&) const = default;
};

struct SensorReading {
  std::string sensor_id;
  SensorKind kind = SensorKind::motion;
  std::optional<std::string> room;
  double value = 0.0;  // °C for temperature, bpm for heart_rate
  std::optional<ImuFeature> imu;
  Timestamp timestamp = 0.0;

  bool operator==(const SensorReading&) const = default;
};

// Motion/door need a room, heart rate must be positive, imu needs a feature.
void validate_reading(const SensorReading& reading);

enum class Activity { cooking, eating, resting, toileting, other };
enum class Origin { edge, cloud };
std::string_view to_string(Activity a);
Activity parse_activity(std::string_view text);
std::string_view to_string(Origin o);

struct ActivityLabel {
  Activity label = Activity::other;
  Timestamp t_start = 0.0;
  Timestamp t_end = 0.0;
  Origin origin = Origin::edge;

  bool operator==(const ActivityLabel&) const = default;
};

enum class Pose { standing, sitting, lying, walking };
std::string_view to_string(Pose p);
Pose parse_pose(std::string_view text);

struct PoseLabel {
  Pose pose = Pose::sitting;
  Timestamp t_start = 0.0;
  Timestamp t_end = 0.0;
};

enum class TimeOfDay { morning, afternoon, evening, night };
std::string_view to_string(TimeOfDay t);
TimeOfDay parse_time_of_day_label(std::string_view text);
// morning [05:00, 12:00), afternoon [12:00, 17:00), evening [17:00, 22:00),
// night otherwise.
TimeOfDay time_of_day_of(Timestamp t);

struct ContextSnapshot {
  std::string location;
  Pose pose = Pose::sitting;
  TimeOfDay time_of_day = TimeOfDay::morning;

  bool operator==(const ContextSnapshot&) const = default;
};

// ---------------------------------------------------------------------------
// Occupancy

using RoomSeconds = std::map<std::string, double>;

struct OccupancyInterval {
  std::string room;
  Timestamp start = 0.0;
  Timestamp end = 0.0;
  std::vector<Timestamp> motions;  // motion times of the run, including any before the window
};

// Last-motion-wins: the user is in room r from a motion in r until the next
// motion in another room. Intervals are clipped to [t0, t1); a run started
// before t0 still places the user at t0.
std::vector<OccupancyInterval> occupancy_intervals(std::span<const SensorReading> readings,
                                                   Timestamp t0, Timestamp t1);

// Seconds per room over [t0, t1). Rooms with no attributed time are absent;
// no motion at all gives an empty map.
RoomSeconds room_occupancy_stats(std::span<const SensorReading> readings, Timestamp t0,
                                 Timestamp t1);

// Share of attributed time spent in the most-occupied room, 0 when nothing is
// attributed.
double sedentarization_level(const RoomSeconds& stats);

// ---------------------------------------------------------------------------
// Activity recognition

struct HarOptions {
  std::string kitchen = "kitchen";
  std::string dining_room = "dining_room";
  std::string bedroom = "bedroom";
  std::string bathroom = "bathroom";
  double door_link_seconds = 600.0;   // kitchen door within this of a kitchen motion
  double eating_min_seconds = 900.0;  // dining stay after cooking
  double resting_min_seconds = 1800.0;
  double other_min_seconds = 300.0;   // shortest gap worth an "other" label
};

// Rules, evaluated per occupancy interval:
//   bathroom                                       -> toileting
//   kitchen with a kitchen door event inside the interval and within
//   door_link_seconds of one of its motions        -> cooking
//   dining room >= eating_min, starting no later than door_link_seconds
//   after a cooking label ended                    -> eating
//   bedroom >= resting_min                         -> resting
// Uncovered spans between the first and last occupied instant become
// "other" when at least other_min long. Throws UnsortedInput if readings are
// not time-ordered.
std::vector<ActivityLabel> har_label(std::span<const SensorReading> readings, Timestamp t0,
                                     Timestamp t1, const HarOptions& options = {});

struct PoseOptions {
  double walking_step_rate_hz = 0.5;
  double lying_tilt_deg = 60.0;
  double standing_variance = 0.05;
};

// walking > lying > standing > sitting.
Pose pose_classify(const ImuFeature& feature, const PoseOptions& options = {});

using InteractionLog = std::vector<std::pair<Timestamp, ContextSnapshot>>;

// Componentwise mode; a tie goes to the value seen most recently.
std::optional<ContextSnapshot> preferred_context(std::span<const std::pair<Timestamp, ContextSnapshot>> log);

// ---------------------------------------------------------------------------
// Labels from the edge and the cloud

// Edge and cloud labels are kept apart; within an origin labels never
// overlap. Cloud labels never replace edge labels.
class LabelStore {
 public:
  LabelStore() = default;
  explicit LabelStore(record::AppendLog log);

  // Adds edge labels, skipping exact duplicates and any label overlapping a
  // stored edge label. Returns the number added.
  std::size_t add_edge(std::span<const ActivityLabel> labels);
  // Same rule for cloud labels: idempotent, conflicts skipped.
  std::size_t merge_cloud(std::span<const ActivityLabel> labels);

  std::vector<ActivityLabel> labels(Origin origin) const;
  const std::vector<ActivityLabel>& all() const { return labels_; }

 private:
  std::size_t add(std::span<const ActivityLabel> labels, Origin origin);

  record::AppendLog log_;
  std::vector<ActivityLabel> labels_;
};

// One label per line: "label TAB t_start TAB t_end". Times are seconds or
// ISO timestamps. Blank lines are ignored; anything else malformed throws
// MalformedPayload.
std::vector<ActivityLabel> parse_label_payload(std::string_view payload);
std::string format_label_payload(std::span<const ActivityLabel> labels);

class CloudLabelClient {
 public:
  virtual ~CloudLabelClient() = default;
  // Raw payload of labels newer than `since`, or nullopt when offline.
  virtual std::optional<std::string> fetch_since(Timestamp since) = 0;
};

struct SyncResult {
  std::size_t merged = 0;
  bool offline = false;
  std::optional<Timestamp> retry_at;
};

// Fetches and merges cloud labels starting at or after `since`. Offline is
// not an error: nothing merges and a retry is scheduled. A malformed batch
// throws MalformedPayload and leaves the store untouched.
SyncResult sync_cloud_labels(CloudLabelClient& client, Timestamp since, LabelStore& store,
                             Timestamp now, double retry_seconds = 6 * 3600.0);

// ---------------------------------------------------------------------------
// Sensor history

// Readings and wake anchors, append-only. Readings of one sensor must not go
// back in time.
class SensorHistory {
 public:
  SensorHistory() = default;
  explicit SensorHistory(record::AppendLog log);

  void append(SensorReading reading);
  void mark_wake(Timestamp t);

  const std::vector<SensorReading>& readings() const { return readings_; }
  const std::vector<Timestamp>& wake_times() const { return wakes_; }
  // First wake anchor on the given day, if any.
  std::optional<Timestamp> wake_on(std::int64_t day) const;

 private:
  void apply(SensorReading reading);

  record::AppendLog log_;
  std::vector<SensorReading> readings_;
  std::vector<Timestamp> wakes_;
  std::map<std::string, Timestamp> last_by_sensor_;
};

}  // namespace keepsake::fusion
