#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "keepsake/record.hpp"
#include "keepsake/time.hpp"

namespace keepsake::store {

// Opens `<dir>/<name>` as an append log, or an in-memory log when dir is
// empty.
record::AppendLog open_log(const std::filesystem::path& dir, std::string_view name,
                           bool sync = true);

struct TranscriptTurn {
  std::string session_id;
  std::string speaker;  // speaker_id or session-scoped cluster id
  std::string text;
  Timestamp t_start = 0.0;
  Timestamp t_end = 0.0;
  std::vector<std::string> tags;
  std::size_t turn_id = 0;  // 1-based within the session, assigned on append

  bool operator==(const TranscriptTurn&) const = default;
};

struct TurnFilter {
  std::optional<std::string> session;
  std::optional<std::string> speaker;  // matched after alias resolution
  std::optional<Timestamp> from;       // turns overlapping [from, to)
  std::optional<Timestamp> to;
  std::optional<std::string> tag;
};

// Speaker-attributed transcripts. Cluster promotion is recorded as an alias
// (session, cluster_id) -> speaker_id; turns are never rewritten.
class TranscriptStore {
 public:
  TranscriptStore() = default;
  TranscriptStore(record::AppendLog turns, record::AppendLog aliases);

  // Throws OutOfOrderTurn when the turn starts before the previous turn of
  // its session ends, InvalidArgument when t_end <= t_start.
  std::size_t append_turn(TranscriptTurn turn);

  void add_alias(std::string_view session_id, std::string_view cluster_id,
                 std::string_view speaker_id);
  std::string resolve(std::string_view session_id, std::string_view speaker) const;

  // Matching turns with speakers resolved, ordered by t_start (ties by
  // append order).
  std::vector<TranscriptTurn> query_turns(const TurnFilter& filter = {}) const;

  // Raw turns as stored, in append order.
  const std::vector<TranscriptTurn>& raw_turns() const { return turns_; }
  bool has_session(std::string_view session_id) const;

 private:
  void apply(const TranscriptTurn& turn);

  record::AppendLog turn_log_;
  record::AppendLog alias_log_;
  std::vector<TranscriptTurn> turns_;
  std::map<std::string, std::pair<std::size_t, Timestamp>, std::less<>> last_by_session_;
  std::map<std::pair<std::string, std::string>, std::string> aliases_;
};

struct LifelineEntry {
  std::string entry_id;  // assigned on append ("L-1", ...)
  std::int64_t date = 0; // days since epoch
  std::string topic;
  std::string text;
  std::string source_session;
  std::optional<std::string> supersedes;

  bool operator==(const LifelineEntry&) const = default;
};

class LifelineStore {
 public:
  LifelineStore() = default;
  explicit LifelineStore(record::AppendLog log);

  std::string append(LifelineEntry entry);
  // Date-ordered; equal dates keep insertion order. Superseded entries are
  // left out.
  std::vector<LifelineEntry> timeline() const;
  const std::vector<LifelineEntry>& entries() const { return entries_; }

 private:
  record::AppendLog log_;
  std::vector<LifelineEntry> entries_;
};

struct SessionInfo {
  std::string session_id;
  Timestamp started_at = 0.0;
  std::optional<std::string> health_status;
};

class SessionStore {
 public:
  SessionStore() = default;
  explicit SessionStore(record::AppendLog log);

  // Idempotent.
  void open(std::string_view session_id, Timestamp started_at);
  void set_health_status(std::string_view session_id, std::string_view status);
  const SessionInfo* find(std::string_view session_id) const;
  const std::vector<SessionInfo>& sessions() const { return sessions_; }

 private:
  SessionInfo* find_mutable(std::string_view session_id);

  record::AppendLog log_;
  std::vector<SessionInfo> sessions_;
};

}  // namespace keepsake::store
