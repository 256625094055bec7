#include "keepsake/dialogue.hpp"

#include <algorithm>
#include <cctype>
#include <future>

#include "keepsake/error.hpp"

namespace keepsake::dialogue {

using diarization::Role;

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::utterance: return "utterance";
    case EventKind::sensor: return "sensor";
    case EventKind::web_result: return "web_result";
    case EventKind::system: return "system";
  }
  return "system";
}

EventKind parse_event_kind(std::string_view text) {
  for (auto k : {EventKind::utterance, EventKind::sensor, EventKind::web_result, EventKind::system}) {
    if (to_string(k) == text) return k;
  }
  throw Error(ErrorCode::InvalidEvent, "unknown event kind '" + std::string(text) + "'");
}

std::string_view to_string(Marker m) {
  switch (m) {
    case Marker::respond: return "respond";
    case Marker::silent: return "silent";
    case Marker::alert: return "alert";
    case Marker::ask_name: return "ask_name";
    case Marker::summary_request: return "summary_request";
    case Marker::recall_request: return "recall_request";
  }
  return "silent";
}

Marker parse_marker(std::string_view text) {
  for (auto m : {Marker::respond, Marker::silent, Marker::alert, Marker::ask_name,
                 Marker::summary_request, Marker::recall_request}) {
    if (to_string(m) == text) return m;
  }
  throw Error(ErrorCode::UnknownMarker, "unknown marker '" + std::string(text) + "'");
}

void validate_event(const Event& e) {
  const bool has_speaker = e.speaker && !e.speaker->empty();
  if (e.kind == EventKind::utterance && !has_speaker) {
    throw Error(ErrorCode::InvalidEvent, "utterance without a speaker");
  }
  if (e.kind == EventKind::sensor && e.marker != Marker::silent && e.marker != Marker::alert) {
    throw Error(ErrorCode::InvalidEvent, "sensor events are silent or alert");
  }
  if (e.marker == Marker::ask_name && !has_speaker) {
    throw Error(ErrorCode::InvalidEvent, "ask_name without a speaker");
  }
  if ((e.marker == Marker::alert || e.marker == Marker::respond) && e.payload.empty()) {
    throw Error(ErrorCode::InvalidEvent, std::string(to_string(e.marker)) + " event without text");
  }
}

std::string_view to_string(ActionKind k) {
  switch (k) {
    case ActionKind::speak: return "speak";
    case ActionKind::stay_silent: return "stay_silent";
    case ActionKind::ask_question: return "ask_question";
    case ActionKind::store_only: return "store_only";
    case ActionKind::run_recall: return "run_recall";
    case ActionKind::run_summary: return "run_summary";
    case ActionKind::run_answer: return "run_answer";
  }
  return "stay_silent";
}

ActionKind parse_action_kind(std::string_view text) {
  for (auto k : {ActionKind::speak, ActionKind::stay_silent, ActionKind::ask_question,
                 ActionKind::store_only, ActionKind::run_recall, ActionKind::run_summary,
                 ActionKind::run_answer}) {
    if (to_string(k) == text) return k;
  }
  throw Error(ErrorCode::ParseError, "unknown action kind '" + std::string(text) + "'");
}

std::string_view to_string(DetailLevel d) {
  switch (d) {
    case DetailLevel::full_medical: return "full_medical";
    case DetailLevel::health_status_only: return "health_status_only";
    case DetailLevel::owner_full: return "owner_full";
    case DetailLevel::none: return "none";
  }
  return "none";
}

DetailLevel parse_detail_level(std::string_view text) {
  for (auto d : {DetailLevel::full_medical, DetailLevel::health_status_only, DetailLevel::owner_full,
                 DetailLevel::none}) {
    if (to_string(d) == text) return d;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown detail level '" + std::string(text) + "'");
}

RolePolicy::RolePolicy()
    : levels_{{Role::owner, DetailLevel::owner_full},
              {Role::caregiver, DetailLevel::full_medical},
              {Role::doctor, DetailLevel::full_medical},
              {Role::housekeeper, DetailLevel::health_status_only},
              {Role::guest, DetailLevel::none}} {}

DetailLevel RolePolicy::level(Role role) const { return levels_.at(role); }

void RolePolicy::set(Role role, DetailLevel level) {
  if (role == Role::owner && level != DetailLevel::owner_full) {
    throw Error(ErrorCode::InvalidConfig, "the owner always gets owner_full");
  }
  if (role != Role::owner && level == DetailLevel::owner_full) {
    throw Error(ErrorCode::InvalidConfig, "owner_full is reserved for the owner");
  }
  levels_[role] = level;
}

std::string TemplateGenerator::generate(std::string_view prompt,
                                        std::span<const std::string> context) const {
  std::string joined;
  for (const auto& c : context) {
    if (!joined.empty()) joined += " | ";
    joined += c;
  }
  std::string out;
  for (std::size_t i = 0; i < template_.size();) {
    auto sub = [&](std::string_view key, std::string_view value) {
      if (template_.compare(i, key.size(), key) != 0) return false;
      out += value;
      i += key.size();
      return true;
    };
    if (sub("{q}", prompt) || sub("{n}", std::to_string(context.size())) || sub("{context}", joined) ||
        sub("{first}", context.empty() ? std::string_view{} : std::string_view(context.front()))) {
      continue;
    }
    out += template_[i++];
  }
  if (out.find_first_not_of(" \t\r\n") == std::string::npos) return std::string(prompt);
  return out;
}

// ---------------------------------------------------------------------------
// Routing

Action Router::route(const Event& e, const diarization::SpeakerRegistry& registry) {
  validate_event(e);
  const std::optional<std::string> to = e.speaker;
  auto speak = [&](std::string text) { return Action{ActionKind::speak, std::move(text), to}; };

  if (e.kind == EventKind::sensor) {
    return e.marker == Marker::alert ? speak(e.payload) : Action{ActionKind::store_only, {}, {}};
  }
  const bool registered = e.speaker && registry.find(*e.speaker) != nullptr;
  if (e.speaker && !registered && (e.kind == EventKind::utterance || e.marker == Marker::ask_name)) {
    if (asked_.insert({e.session_id, *e.speaker}).second) {
      return {ActionKind::ask_question, std::string(kAskNameText), to};
    }
    return {ActionKind::store_only, {}, {}};
  }
  switch (e.marker) {
    case Marker::ask_name: return {ActionKind::stay_silent, {}, {}};
    case Marker::respond:
      if (e.kind == EventKind::utterance) return {ActionKind::run_answer, e.payload, to};
      return speak(e.payload);
    case Marker::silent: return {ActionKind::store_only, {}, {}};
    case Marker::alert: return speak(e.payload);
    case Marker::summary_request: return {ActionKind::run_summary, e.payload, to};
    case Marker::recall_request: return {ActionKind::run_recall, e.payload, to};
  }
  return {ActionKind::stay_silent, {}, {}};
}

bool Router::asked(std::string_view session_id, std::string_view speaker) const {
  return asked_.contains({std::string(session_id), std::string(speaker)});
}

void Router::reset_session(std::string_view session_id) {
  std::erase_if(asked_, [&](const auto& p) { return p.first == session_id; });
}

// ---------------------------------------------------------------------------
// Rephrase / answer

namespace {

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

}  // namespace

std::string rephrase(std::string_view question, const Generator& small) {
  if (blank(question)) throw Error(ErrorCode::EmptyQuestion, "question is empty");
  return small.generate(question, {});
}

Answer answer(std::string_view question, const memory::VectorBase& workspace,
              const memory::EmbeddingProvider& provider, const Generator& large, std::size_t k,
              std::optional<Timestamp> now) {
  if (blank(question)) throw Error(ErrorCode::EmptyQuestion, "question is empty");
  Answer out;
  std::vector<std::string> context;
  if (!workspace.empty()) {
    const auto q = provider.embed(question);
    for (const auto& hit : memory::retrieve(q, workspace, k, now)) {
      out.supporting_ids.push_back(hit.item.item_id);
      context.push_back(hit.item.text);
    }
  }
  out.text = large.generate(question, context);
  return out;
}

// ---------------------------------------------------------------------------
// Summaries

std::string normalize_health_status(std::string_view text) {
  std::string words;
  for (char c : text) {
    const char l = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    words += (l == '_' || l == '-') ? ' ' : l;
  }
  std::vector<std::string> parts;
  std::string cur;
  for (char c : words + ",") {
    if (c == ',') {
      const auto a = cur.find_first_not_of(' ');
      const auto b = cur.find_last_not_of(' ');
      if (a != std::string::npos) parts.push_back(cur.substr(a, b - a + 1));
      cur.clear();
    } else {
      cur += c;
    }
  }
  std::string joined;
  for (const auto& p : parts) joined += (joined.empty() ? "" : ", ") + p;
  for (auto s : kHealthStatuses) {
    if (joined == s) return joined;
  }
  throw Error(ErrorCode::InvalidArgument, "'" + std::string(text) + "' is not a health status");
}

std::string summarize_session(std::string_view session_id, Role requester, const RolePolicy& policy,
                              const SummaryInputs& in, const Generator& large) {
  const DetailLevel level = policy.level(requester);
  if (level == DetailLevel::none) {
    throw Error(ErrorCode::PermissionDenied,
                "role " + std::string(diarization::to_string(requester)) + " may not see summaries");
  }
  const store::SessionInfo* session = in.sessions ? in.sessions->find(session_id) : nullptr;
  if (!session) throw Error(ErrorCode::UnknownSession, "no session '" + std::string(session_id) + "'");

  if (level == DetailLevel::health_status_only) {
    const std::string status = session->health_status ? normalize_health_status(*session->health_status)
                                                       : std::string("good health");
    return format_date(day_index(session->started_at)) + ": " + status;
  }

  std::vector<std::string> lines;
  if (in.transcripts) {
    store::TurnFilter f;
    f.session = std::string(session_id);
    for (const auto& t : in.transcripts->query_turns(f)) {
      std::string who = t.speaker;
      if (in.registry) {
        if (const auto* p = in.registry->find(t.speaker)) who = p->name;
      }
      lines.push_back(who + ": " + t.text);
    }
  }
  std::string out = large.generate("Summary of session " + std::string(session_id), lines);
  if (level == DetailLevel::owner_full) {
    for (const auto& note : in.owner_notes) out += "\nPrivate: " + note;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Recall

RecallAnswer recall_query(const RecallRequest& req, const fusion::SensorHistory& history,
                          double window_seconds) {
  const fusion::SensorKind kind = fusion::parse_sensor_kind(req.metric);
  Timestamp anchor;
  if (req.anchor_time) {
    anchor = *req.anchor_time;
  } else if (req.wake_day) {
    const auto wake = history.wake_on(*req.wake_day);
    if (!wake) {
      throw Error(ErrorCode::AnchorNotFound, "no wake event on " + format_date(*req.wake_day));
    }
    anchor = *wake;
  } else {
    throw Error(ErrorCode::AnchorNotFound, "recall needs a wake day or an anchor time");
  }
  const fusion::SensorReading* best = nullptr;
  for (const auto& r : history.readings()) {
    if (r.kind != kind || r.timestamp < anchor || r.timestamp > anchor + window_seconds) continue;
    if (!best || r.timestamp < best->timestamp) best = &r;
  }
  if (!best) {
    throw Error(ErrorCode::NoReadingInWindow,
                "no " + req.metric + " reading within " + record::format_number(window_seconds) +
                    " s after " + format_timestamp(anchor));
  }
  RecallAnswer out{best->value, best->timestamp, {}};
  out.text = req.metric + " was " + record::format_number(best->value) + " at " +
             format_time_of_day(seconds_of_day(best->timestamp));
  return out;
}

// ---------------------------------------------------------------------------
// Action log

ActionLog::ActionLog(record::AppendLog log) : log_(std::move(log)) {
  for (const auto& f : log_.records()) {
    if (f.size() != 6) throw Error(ErrorCode::CorruptRecord, "action record field count");
    LoggedAction a;
    a.seq = static_cast<std::size_t>(record::parse_number(f[0]));
    a.at = record::parse_number(f[1]);
    a.action.kind = parse_action_kind(f[2]);
    if (!f[3].empty()) a.action.addressee = f[3];
    a.ref = f[4];
    if (!f[5].empty()) a.action.text = f[5];
    entries_.push_back(std::move(a));
  }
}

std::size_t ActionLog::append(Timestamp at, Action action, std::string ref) {
  if ((action.kind == ActionKind::speak || action.kind == ActionKind::ask_question) &&
      (!action.text || action.text->empty())) {
    throw Error(ErrorCode::InvalidArgument, std::string(to_string(action.kind)) + " needs text");
  }
  if (action.text && action.text->empty()) action.text.reset();
  if (action.addressee && action.addressee->empty()) action.addressee.reset();
  const std::size_t seq = entries_.size() + 1;
  log_.append({std::to_string(seq), record::format_number(at), std::string(to_string(action.kind)),
               action.addressee.value_or(""), ref, action.text.value_or("")});
  entries_.push_back({seq, at, std::move(action), std::move(ref)});
  return seq;
}

std::vector<LoggedAction> ActionLog::since(std::size_t cursor) const {
  if (cursor >= entries_.size()) return {};
  return {entries_.begin() + static_cast<std::ptrdiff_t>(cursor), entries_.end()};
}

QuestionOutcome run_answer_pipeline(std::string_view question_id, std::string_view question,
                                    const std::optional<std::string>& addressee, Timestamp now,
                                    memory::VectorBase workspace_snapshot,
                                    const memory::EmbeddingProvider& provider, const Generator& small,
                                    const Generator& large, std::size_t k, ActionLog& log) {
  QuestionOutcome out;
  out.rephrased = rephrase(question, small);
  const std::string q(question);
  auto pending = std::async(std::launch::async, [&, q, snapshot = std::move(workspace_snapshot)] {
    return answer(q, snapshot, provider, large, k, now);
  });
  log.append(now, {ActionKind::speak, out.rephrased, addressee}, std::string(question_id));
  out.answer = pending.get();
  log.append(now, {ActionKind::speak, out.answer.text, addressee}, std::string(question_id));
  return out;
}

}  // namespace keepsake::dialogue
