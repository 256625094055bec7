#include "keepsake/store.hpp"

#include <algorithm>
#include <numeric>

#include "keepsake/error.hpp"

namespace keepsake::store {

using record::Fields;
using record::format_number;
using record::parse_number;

record::AppendLog open_log(const std::filesystem::path& dir, std::string_view name, bool sync) {
  if (dir.empty()) return {};
  return record::AppendLog::open(dir / std::string(name), sync);
}

namespace {

std::string join_tags(const std::vector<std::string>& tags) {
  std::string out;
  for (const auto& t : tags) {
    if (!out.empty()) out += ',';
    out += t;
  }
  return out;
}

std::vector<std::string> split_tags(std::string_view s) {
  std::vector<std::string> out;
  while (!s.empty()) {
    const auto comma = s.find(',');
    out.emplace_back(s.substr(0, comma));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

void expect_fields(const Fields& f, std::size_t n, std::string_view what) {
  if (f.size() != n) {
    throw Error(ErrorCode::CorruptRecord, std::string(what) + " record has " +
                                              std::to_string(f.size()) + " fields");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// TranscriptStore
//
// turns.log:   session, turn_id, speaker, t_start, t_end, tags, text
// aliases.log: session, cluster_id, speaker_id

TranscriptStore::TranscriptStore(record::AppendLog turns, record::AppendLog aliases)
    : turn_log_(std::move(turns)), alias_log_(std::move(aliases)) {
  for (const auto& f : turn_log_.records()) {
    expect_fields(f, 7, "turn");
    TranscriptTurn t;
    t.session_id = f[0];
    t.turn_id = static_cast<std::size_t>(parse_number(f[1]));
    t.speaker = f[2];
    t.t_start = parse_number(f[3]);
    t.t_end = parse_number(f[4]);
    t.tags = split_tags(f[5]);
    t.text = f[6];
    apply(t);
  }
  for (const auto& f : alias_log_.records()) {
    expect_fields(f, 3, "alias");
    aliases_[{f[0], f[1]}] = f[2];
  }
}

void TranscriptStore::apply(const TranscriptTurn& turn) {
  auto& last = last_by_session_[turn.session_id];
  last = {turn.turn_id, turn.t_end};
  turns_.push_back(turn);
}

std::size_t TranscriptStore::append_turn(TranscriptTurn turn) {
  if (!(turn.t_end > turn.t_start)) {
    throw Error(ErrorCode::InvalidArgument, "turn must have t_end > t_start");
  }
  auto it = last_by_session_.find(turn.session_id);
  if (it != last_by_session_.end() && turn.t_start < it->second.second) {
    throw Error(ErrorCode::OutOfOrderTurn, "turn starts at " + format_timestamp(turn.t_start) +
                                               " before the previous turn ends at " +
                                               format_timestamp(it->second.second));
  }
  std::sort(turn.tags.begin(), turn.tags.end());
  turn.tags.erase(std::unique(turn.tags.begin(), turn.tags.end()), turn.tags.end());
  turn.turn_id = it == last_by_session_.end() ? 1 : it->second.first + 1;
  turn_log_.append({turn.session_id, std::to_string(turn.turn_id), turn.speaker,
                    format_number(turn.t_start), format_number(turn.t_end), join_tags(turn.tags),
                    turn.text});
  apply(turn);
  return turn.turn_id;
}

void TranscriptStore::add_alias(std::string_view session_id, std::string_view cluster_id,
                                std::string_view speaker_id) {
  alias_log_.append({std::string(session_id), std::string(cluster_id), std::string(speaker_id)});
  aliases_[{std::string(session_id), std::string(cluster_id)}] = std::string(speaker_id);
}

std::string TranscriptStore::resolve(std::string_view session_id, std::string_view speaker) const {
  auto it = aliases_.find({std::string(session_id), std::string(speaker)});
  return it == aliases_.end() ? std::string(speaker) : it->second;
}

std::vector<TranscriptTurn> TranscriptStore::query_turns(const TurnFilter& filter) const {
  std::vector<TranscriptTurn> out;
  for (const auto& t : turns_) {
    if (filter.session && t.session_id != *filter.session) continue;
    if (filter.from && !(t.t_end > *filter.from)) continue;
    if (filter.to && !(t.t_start < *filter.to)) continue;
    if (filter.tag && std::find(t.tags.begin(), t.tags.end(), *filter.tag) == t.tags.end()) continue;
    TranscriptTurn resolved = t;
    resolved.speaker = resolve(t.session_id, t.speaker);
    if (filter.speaker && resolved.speaker != *filter.speaker) continue;
    out.push_back(std::move(resolved));
  }
  std::stable_sort(out.begin(), out.end(), [](const TranscriptTurn& a, const TranscriptTurn& b) {
    return a.t_start < b.t_start;
  });
  return out;
}

bool TranscriptStore::has_session(std::string_view session_id) const {
  return last_by_session_.find(session_id) != last_by_session_.end();
}

// ---------------------------------------------------------------------------
// LifelineStore
//
// lifeline.log: entry_id, date, topic, source_session, supersedes ("-"), text

LifelineStore::LifelineStore(record::AppendLog log) : log_(std::move(log)) {
  for (const auto& f : log_.records()) {
    expect_fields(f, 6, "lifeline");
    LifelineEntry e{f[0], parse_date(f[1]), f[2], f[5], f[3], std::nullopt};
    if (f[4] != "-") e.supersedes = f[4];
    entries_.push_back(std::move(e));
  }
}

std::string LifelineStore::append(LifelineEntry entry) {
  if (entry.text.empty()) throw Error(ErrorCode::InvalidArgument, "lifeline entry text is empty");
  if (entry.supersedes &&
      std::none_of(entries_.begin(), entries_.end(),
                   [&](const LifelineEntry& e) { return e.entry_id == *entry.supersedes; })) {
    throw Error(ErrorCode::InvalidArgument, "superseded entry " + *entry.supersedes + " not found");
  }
  entry.entry_id = "L-" + std::to_string(entries_.size() + 1);
  log_.append({entry.entry_id, format_date(entry.date), entry.topic, entry.source_session,
               entry.supersedes.value_or("-"), entry.text});
  entries_.push_back(entry);
  return entry.entry_id;
}

std::vector<LifelineEntry> LifelineStore::timeline() const {
  std::vector<LifelineEntry> out;
  for (const auto& e : entries_) {
    const bool superseded = std::any_of(entries_.begin(), entries_.end(), [&](const LifelineEntry& x) {
      return x.supersedes && *x.supersedes == e.entry_id;
    });
    if (!superseded) out.push_back(e);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const LifelineEntry& a, const LifelineEntry& b) { return a.date < b.date; });
  return out;
}

// ---------------------------------------------------------------------------
// SessionStore
//
// sessions.log: "open", session, started_at  |  "status", session, value

SessionStore::SessionStore(record::AppendLog log) : log_(std::move(log)) {
  for (const auto& f : log_.records()) {
    expect_fields(f, 3, "session");
    if (f[0] == "open") {
      if (!find(f[1])) sessions_.push_back({f[1], parse_number(f[2]), std::nullopt});
    } else if (f[0] == "status") {
      if (auto* s = find_mutable(f[1])) s->health_status = f[2];
    } else {
      throw Error(ErrorCode::CorruptRecord, "unknown session record '" + f[0] + "'");
    }
  }
}

void SessionStore::open(std::string_view session_id, Timestamp started_at) {
  if (find(session_id)) return;
  log_.append({"open", std::string(session_id), format_number(started_at)});
  sessions_.push_back({std::string(session_id), started_at, std::nullopt});
}

void SessionStore::set_health_status(std::string_view session_id, std::string_view status) {
  auto* s = find_mutable(session_id);
  if (!s) throw Error(ErrorCode::UnknownSession, "no session '" + std::string(session_id) + "'");
  log_.append({"status", std::string(session_id), std::string(status)});
  s->health_status = std::string(status);
}

const SessionInfo* SessionStore::find(std::string_view session_id) const {
  for (const auto& s : sessions_) {
    if (s.session_id == session_id) return &s;
  }
  return nullptr;
}

SessionInfo* SessionStore::find_mutable(std::string_view session_id) {
  return const_cast<SessionInfo*>(std::as_const(*this).find(session_id));
}

}  // namespace keepsake::store
