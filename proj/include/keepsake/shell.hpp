#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "keepsake/automation.hpp"
#include "keepsake/dialogue.hpp"
#include "keepsake/diarization.hpp"
#include "keepsake/fusion.hpp"
#include "keepsake/gateway.hpp"
#include "keepsake/memory.hpp"
#include "keepsake/store.hpp"

namespace keepsake::shell {

// Every tunable. The JSON key set is documented in docs/formats.md; unknown
// keys are rejected.
struct Config {
  std::size_t dimension = 64;
  diarization::Thresholds thresholds;
  memory::ChunkingOptions chunking;
  double web_ttl_seconds = 7 * 86400.0;
  double event_ttl_seconds = 86400.0;
  double rollover_time = 4 * 3600.0;
  double briefing_time = 7 * 3600.0;
  double rules_time = 7.5 * 3600.0;
  double sync_interval_seconds = 6 * 3600.0;
  fusion::HarOptions har;
  fusion::PoseOptions pose;
  automation::TimeRange night{23 * 3600.0, 6 * 3600.0};
  std::string rules_path;  // empty: the default night rule over `night`
  std::string data_dir;    // empty: nothing touches the disk
  bool sync_writes = true;
  bool offline = false;
  std::uint64_t seed = 0;
  std::size_t top_k = 5;
  std::string owner_name = "Owner";  // registered at start when no owner exists
  std::string small_template = "You asked: {q}";
  std::string large_template = "{q}: {context}";
  bool search_before_answer = true;
  bool wake_on_alert = false;  // an alert runs the watch rules at once
  std::string corpus_dir;  // local search corpus; empty: no search client
  std::string weather;     // fixed forecast text; empty: no weather client
  std::string cloud_host;
  int cloud_port = 0;  // 0: no cloud label client
  gateway::PiiLexicon lexicon;
  std::string host = "127.0.0.1";
  int port = 8765;

  // Throws InvalidConfig.
  void validate() const;
};

// Throws InvalidConfig (malformed JSON included).
Config parse_config(std::string_view json_text);
Config load_config(const std::filesystem::path& path);
std::string config_json(const Config& config);

// ---------------------------------------------------------------------------
// Scenarios

enum class ScenarioKind {
  segment, utterance, name, enroll, sensor, wake, agenda, clock, truth, health, document, search,
  summary, recall
};
std::string_view to_string(ScenarioKind k);

struct ScenarioEvent {
  std::size_t line = 0;
  Timestamp t = 0.0;
  ScenarioKind kind = ScenarioKind::clock;
  std::string session = "default";
  std::string speaker;  // hint, cluster id or requester
  std::string text;     // utterance, agenda, document, search query, alert
  std::string name;     // name, enroll
  std::optional<diarization::Role> role;
  std::optional<dialogue::Marker> marker;
  std::optional<Timestamp> t_end;
  Embedding vector;
  std::vector<Embedding> vectors;
  std::optional<fusion::SensorReading> reading;
  std::optional<Timestamp> at;  // agenda time, recall anchor
  std::optional<std::int64_t> wake_day;
  std::string metric;
  std::string status;
};

// JSON Lines, one object per line with "t" and "kind". Blank lines and lines
// starting with '#' are skipped. Vectors are normalized on load. Throws
// ParseError naming the line, UnorderedScenario when "t" goes backwards.
std::vector<ScenarioEvent> parse_scenario(std::string_view text);
std::vector<ScenarioEvent> load_scenario(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Engine

struct EngineStats {
  Timestamp now = 0.0;
  std::size_t sessions = 0;
  std::size_t turns = 0;
  std::size_t speakers = 0;
  std::size_t anonymous_clusters = 0;
  std::size_t permanent_items = 0;
  std::size_t temporary_items = 0;
  std::size_t workspace_items = 0;
  std::size_t readings = 0;
  std::size_t edge_labels = 0;
  std::size_t cloud_labels = 0;
  std::size_t actions = 0;
  std::size_t triggers = 0;
  std::size_t egress = 0;
  fusion::RoomSeconds room_seconds;  // last 24 hours
  double sedentarization = 0.0;
  std::optional<fusion::Pose> last_pose;
};

// The whole pipeline under a virtual clock. Not thread-safe; the server
// serializes access.
class Engine {
 public:
  // Opens (or creates) the stores under config.data_dir. `start` seeds the
  // clock and the schedule when nothing later is known.
  explicit Engine(Config config, Timestamp start = 0.0);
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  // Runs scheduled work due up to e.t, then the event.
  void process(const ScenarioEvent& e);
  // Moves the clock forward, running every scheduled occurrence on the way.
  void advance_to(Timestamp t);
  // Saves the vector bases.
  void flush();

  Timestamp now() const { return now_; }
  const Config& config() const { return config_; }

  const dialogue::ActionLog& actions() const { return actions_; }
  const store::TranscriptStore& transcripts() const { return transcripts_; }
  const store::SessionStore& sessions() const { return sessions_; }
  const diarization::SpeakerRegistry& registry() const { return registry_; }
  const memory::VectorBase& permanent() const { return permanent_; }
  const memory::VectorBase& temporary() const { return temporary_; }
  const memory::VectorBase& workspace() const { return workspace_; }
  const memory::EmbeddingProvider& provider() const { return provider_; }
  const fusion::SensorHistory& history() const { return history_; }
  const fusion::LabelStore& labels() const { return labels_; }
  const automation::Agenda& agenda() const { return agenda_; }
  const std::vector<automation::TriggerRecord>& triggers() const { return triggers_; }
  const std::vector<std::string>& owner_notes() const { return owner_notes_; }
  const gateway::Gateway& gateway() const { return gateway_; }
  const diarization::ClusteringState* clusters(std::string_view session) const;
  const std::vector<diarization::SpeakerTurn>& truth(std::string_view session) const;

  // retrieve() over the workspace.
  std::vector<memory::RetrievalHit> search(std::string_view query, std::size_t k) const;
  // summarize_session() for the role. Throws PermissionDenied, UnknownSession.
  std::string summary(std::string_view session, diarization::Role role) const;
  EngineStats stats() const;

 private:
  void run_scheduled(const std::string& name);
  void update_har();
  void evaluate_rules();
  void log(dialogue::Action action, std::string ref);
  std::string next_event_id();
  std::string resolve_hint(std::string_view session, std::string_view hint) const;
  void remember_speaker(const diarization::SpeakerProfile& p);
  void add_memory(std::vector<memory::MemoryItem> items, bool permanent);
  void dispatch(const dialogue::Action& action, const dialogue::Event& event,
                const ScenarioEvent& e);
  void on_segment(const ScenarioEvent& e);
  void on_utterance(const ScenarioEvent& e);
  void on_name(const ScenarioEvent& e);
  void on_enroll(const ScenarioEvent& e);
  void on_sensor(const ScenarioEvent& e);

  Config config_;
  Timestamp now_ = 0.0;
  std::uint64_t event_counter_ = 0;
  memory::HashingEmbeddingProvider provider_;
  dialogue::TemplateGenerator small_;
  dialogue::TemplateGenerator large_;
  dialogue::RolePolicy policy_;
  dialogue::Router router_;
  diarization::SpeakerRegistry registry_;
  record::AppendLog speaker_log_;
  std::map<std::string, diarization::ClusteringState, std::less<>> clusters_;
  std::map<std::string, Timestamp, std::less<>> turn_end_;
  std::map<std::string, std::vector<diarization::SpeakerTurn>, std::less<>> truth_;
  store::TranscriptStore transcripts_;
  store::SessionStore sessions_;
  memory::VectorBase permanent_{memory::BaseKind::permanent};
  memory::VectorBase temporary_{memory::BaseKind::temporary};
  memory::VectorBase workspace_{memory::BaseKind::workspace};
  fusion::SensorHistory history_;
  fusion::LabelStore labels_;
  Timestamp har_from_ = 0.0;
  Timestamp sync_since_ = 0.0;
  std::vector<automation::WatchRule> rules_;
  std::vector<automation::TriggerRecord> triggers_;
  std::vector<std::string> owner_notes_;
  record::AppendLog trigger_log_;
  automation::Schedule schedule_;
  automation::Agenda agenda_;
  gateway::Gateway gateway_;
  dialogue::ActionLog actions_;
};

struct ReplayResult {
  std::unique_ptr<Engine> engine;
  std::size_t events = 0;
};

// Feeds every event through a fresh engine; the clock starts at the first
// event. Flushes before returning.
ReplayResult replay(std::span<const ScenarioEvent> scenario, const Config& config);

// One line per action: seq, timestamp, kind, addressee, ref, text, tab
// separated, absent fields as "-".
std::string format_action_log(std::span<const dialogue::LoggedAction> actions);

}  // namespace keepsake::shell
