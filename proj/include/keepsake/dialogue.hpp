#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "keepsake/diarization.hpp"
#include "keepsake/fusion.hpp"
#include "keepsake/memory.hpp"
#include "keepsake/record.hpp"
#include "keepsake/store.hpp"
#include "keepsake/time.hpp"

namespace keepsake::dialogue {

enum class EventKind { utterance, sensor, web_result, system };
enum class Marker { respond, silent, alert, ask_name, summary_request, recall_request };

std::string_view to_string(EventKind k);
EventKind parse_event_kind(std::string_view text);  // InvalidEvent when unknown
std::string_view to_string(Marker m);
Marker parse_marker(std::string_view text);  // UnknownMarker when unknown

struct Event {
  std::string event_id;
  EventKind kind = EventKind::system;
  Marker marker = Marker::silent;
  std::optional<std::string> speaker;  // speaker_id or cluster id
  std::string payload;
  Timestamp timestamp = 0.0;
  std::string session_id;
};

// Utterances need a speaker; sensor events are silent or alert only;
// ask_name needs a speaker; respond and alert need a payload. Throws
// InvalidEvent.
void validate_event(const Event& e);

// run_answer hands the payload to the rephrase/answer pipeline.
enum class ActionKind { speak, stay_silent, ask_question, store_only, run_recall, run_summary, run_answer };
std::string_view to_string(ActionKind k);
ActionKind parse_action_kind(std::string_view text);

struct Action {
  ActionKind kind = ActionKind::stay_silent;
  std::optional<std::string> text;
  std::optional<std::string> addressee;

  bool operator==(const Action&) const = default;
};

enum class DetailLevel { full_medical, health_status_only, owner_full, none };
std::string_view to_string(DetailLevel d);
DetailLevel parse_detail_level(std::string_view text);

class RolePolicy {
 public:
  // owner: owner_full, caregiver and doctor: full_medical,
  // housekeeper: health_status_only, guest: none.
  RolePolicy();
  DetailLevel level(diarization::Role role) const;
  // The owner's level is fixed; anything else throws InvalidConfig.
  void set(diarization::Role role, DetailLevel level);

 private:
  std::map<diarization::Role, DetailLevel> levels_;
};

class Generator {
 public:
  virtual ~Generator() = default;
  virtual std::string generate(std::string_view prompt, std::span<const std::string> context) const = 0;
};

// Deterministic template stub. {q} is the prompt, {n} the number of context
// items, {context} the items joined by " | ", {first} the first item or "".
// Falls back to the prompt itself when the filled template is blank.
class TemplateGenerator final : public Generator {
 public:
  explicit TemplateGenerator(std::string tmpl = "{q}") : template_(std::move(tmpl)) {}
  std::string generate(std::string_view prompt, std::span<const std::string> context) const override;

 private:
  std::string template_;
};

inline constexpr std::string_view kAskNameText = "May I ask your name?";

// Stateful because an unregistered speaker is asked for a name at most once
// per session.
class Router {
 public:
  // Rules in order:
  //   sensor: silent -> store_only, alert -> speak(payload)
  //   utterance / ask_name from a speaker not in the registry -> ask_question
  //     the first time in the session, store_only afterwards
  //   ask_name for a registered speaker -> stay_silent
  //   respond: utterance -> run_answer, other kinds -> speak(payload)
  //   silent -> store_only, alert -> speak(payload)
  //   summary_request -> run_summary, recall_request -> run_recall
  // Speech-bearing actions are addressed to the event's speaker when it has
  // one.
  Action route(const Event& event, const diarization::SpeakerRegistry& registry);

  bool asked(std::string_view session_id, std::string_view speaker) const;
  void reset_session(std::string_view session_id);

 private:
  std::set<std::pair<std::string, std::string>> asked_;
};

// Throws EmptyQuestion for a blank question.
std::string rephrase(std::string_view question, const Generator& small);

struct Answer {
  std::string text;
  std::vector<std::string> supporting_ids;  // retrieval rank order
};

// Top-k workspace items for the question embedding go to the large
// generator as context; their ids are returned with the text.
Answer answer(std::string_view question, const memory::VectorBase& workspace,
              const memory::EmbeddingProvider& provider, const Generator& large, std::size_t k,
              std::optional<Timestamp> now = std::nullopt);

// ---------------------------------------------------------------------------
// Summaries

// Status lines use only these words plus the date.
inline constexpr std::string_view kHealthStatuses[] = {"good health", "ill", "ill, contagious",
                                                       "ill, not contagious"};
// Accepts the statuses above; "not_contagious" style spellings map to them.
// Throws InvalidArgument otherwise.
std::string normalize_health_status(std::string_view text);

struct SummaryInputs {
  const store::TranscriptStore* transcripts = nullptr;
  const store::SessionStore* sessions = nullptr;
  const diarization::SpeakerRegistry* registry = nullptr;  // display names, optional
  std::span<const std::string> owner_notes;  // owner-only material, e.g. recommendations
};

// full_medical: generator summary over every turn of the session.
// owner_full: the same followed by the owner notes.
// health_status_only: "YYYY-MM-DD: <status>", status defaulting to
// "good health" when none was recorded.
// Throws PermissionDenied for roles mapped to none, UnknownSession.
std::string summarize_session(std::string_view session_id, diarization::Role requester,
                              const RolePolicy& policy, const SummaryInputs& inputs,
                              const Generator& large);

// ---------------------------------------------------------------------------
// Recall

struct RecallRequest {
  std::string metric;                      // sensor kind name
  std::optional<std::int64_t> wake_day;    // anchor: first wake of that day
  std::optional<Timestamp> anchor_time;    // or an explicit instant
};

struct RecallAnswer {
  double value = 0.0;
  Timestamp timestamp = 0.0;
  std::string text;
};

// Earliest reading of the metric in [anchor, anchor + window]. Throws
// NoSuchMetric, AnchorNotFound, NoReadingInWindow.
RecallAnswer recall_query(const RecallRequest& request, const fusion::SensorHistory& history,
                          double window_seconds = 1800.0);

// ---------------------------------------------------------------------------
// Action log

struct LoggedAction {
  std::size_t seq = 0;  // 1-based, dense
  Timestamp at = 0.0;
  Action action;
  std::string ref;  // originating event or question id
};

// actions.log: seq, timestamp, kind, addressee, ref, text. An empty
// addressee or text reads back as absent.
class ActionLog {
 public:
  ActionLog() = default;
  explicit ActionLog(record::AppendLog log);

  // Rejects speak/ask_question without text (InvalidArgument).
  std::size_t append(Timestamp at, Action action, std::string ref);
  const std::vector<LoggedAction>& entries() const { return entries_; }
  // Entries with seq > cursor.
  std::vector<LoggedAction> since(std::size_t cursor) const;

 private:
  record::AppendLog log_;
  std::vector<LoggedAction> entries_;
};

struct QuestionOutcome {
  std::string rephrased;
  Answer answer;
};

// Speaks the rephrased question at once, builds the answer on a worker
// thread over a workspace snapshot, then speaks the answer. Both actions
// carry question_id as ref; the rephrase is always logged first.
QuestionOutcome run_answer_pipeline(std::string_view question_id, std::string_view question,
                                    const std::optional<std::string>& addressee, Timestamp now,
                                    memory::VectorBase workspace_snapshot,
                                    const memory::EmbeddingProvider& provider, const Generator& small,
                                    const Generator& large, std::size_t k, ActionLog& log);

}  // namespace keepsake::dialogue
