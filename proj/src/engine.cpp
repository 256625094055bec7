#include <algorithm>
#include <sstream>

#include "keepsake/error.hpp"
#include "keepsake/shell.hpp"

namespace keepsake::shell {

namespace fs = std::filesystem;
using dialogue::Action;
using dialogue::ActionKind;
using dialogue::Event;
using dialogue::EventKind;
using dialogue::Marker;

namespace {

std::string join_vector(const Embedding& v) { return v.empty() ? "" : record::encode_vector(v); }

gateway::GatewayOptions gateway_options(const Config& c) {
  gateway::GatewayOptions o;
  o.offline = c.offline;
  o.web_ttl_seconds = c.web_ttl_seconds;
  if (!c.data_dir.empty()) o.audit_path = fs::path(c.data_dir) / "audit.log";
  return o;
}

std::vector<fusion::SensorReading> sorted_readings(const fusion::SensorHistory& h, Timestamp before) {
  std::vector<fusion::SensorReading> out;
  for (const auto& r : h.readings()) {
    if (r.timestamp < before) out.push_back(r);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  return out;
}

bool overlaps(const fusion::ActivityLabel& a, const fusion::ActivityLabel& b) {
  return a.t_start < b.t_end && b.t_start < a.t_end;
}

}  // namespace

Engine::Engine(Config config, Timestamp start)
    : config_(std::move(config)),
      now_(start),
      provider_((config_.validate(), config_.dimension), config_.seed),
      small_(config_.small_template),
      large_(config_.large_template),
      registry_(config_.dimension),
      gateway_(gateway_options(config_), config_.lexicon) {
  const fs::path dir = config_.data_dir;
  if (!dir.empty()) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create data directory " + dir.string());
  }
  const bool sync = config_.sync_writes;

  speaker_log_ = store::open_log(dir, "speakers.log", sync);
  for (const auto& f : speaker_log_.records()) {
    if (f.size() != 5) throw Error(ErrorCode::CorruptRecord, "speaker record field count");
    const auto role = diarization::parse_role(f[2]);
    const auto count = static_cast<std::size_t>(record::parse_number(f[3]));
    Embedding centroid = f[4].empty() ? Embedding{} : record::decode_vector(f[4]);
    if (auto* p = registry_.find_mutable(f[0])) {
      p->centroid = std::move(centroid);
      p->sample_count = count;
      continue;
    }
    const auto& p = count == 0 ? registry_.add_named(f[1], role)
                               : registry_.adopt(f[1], role, std::move(centroid), count);
    if (p.speaker_id != f[0]) throw Error(ErrorCode::CorruptRecord, "speaker ids out of sequence");
  }

  transcripts_ = store::TranscriptStore(store::open_log(dir, "turns.log", sync),
                                        store::open_log(dir, "aliases.log", sync));
  for (const auto& t : transcripts_.raw_turns()) {
    auto& end = turn_end_[t.session_id];
    end = std::max(end, t.t_end);
  }
  sessions_ = store::SessionStore(store::open_log(dir, "sessions.log", sync));
  if (!dir.empty() && fs::exists(dir / "permanent.base")) {
    permanent_ = memory::load_base(dir / "permanent.base", memory::BaseKind::permanent);
  }
  if (!dir.empty() && fs::exists(dir / "temporary.base")) {
    temporary_ = memory::load_base(dir / "temporary.base", memory::BaseKind::temporary);
  }
  history_ = fusion::SensorHistory(store::open_log(dir, "sensors.log", sync));
  labels_ = fusion::LabelStore(store::open_log(dir, "labels.log", sync));
  agenda_ = automation::Agenda(store::open_log(dir, "agenda.log", sync));
  actions_ = dialogue::ActionLog(store::open_log(dir, "actions.log", sync));
  trigger_log_ = store::open_log(dir, "triggers.log", sync);
  for (const auto& f : trigger_log_.records()) {
    if (f.size() != 4) throw Error(ErrorCode::CorruptRecord, "trigger record field count");
    triggers_.push_back({f[0], record::parse_number(f[1]),
                         static_cast<std::int64_t>(record::parse_number(f[2]))});
    owner_notes_.push_back(f[3]);
  }

  if (config_.rules_path.empty()) {
    auto rule = automation::default_night_rule();
    rule.predicate.period = config_.night;
    rules_.push_back(std::move(rule));
  } else {
    rules_ = automation::load_rules(config_.rules_path);
  }

  if (!config_.corpus_dir.empty()) {
    gateway_.set_search_client(std::make_unique<gateway::LocalCorpusSearchClient>(config_.corpus_dir));
  }
  if (!config_.weather.empty()) {
    gateway_.set_weather_client(std::make_unique<gateway::FixedWeatherClient>(config_.weather));
  }
  if (config_.cloud_port != 0) {
    gateway_.set_cloud_label_client(
        std::make_unique<gateway::HttpCloudLabelClient>(config_.cloud_host, config_.cloud_port));
  }

  if (!registry_.owner() && !config_.owner_name.empty()) {
    remember_speaker(registry_.add_named(config_.owner_name, diarization::Role::owner));
  }

  // Resume after whatever the stores already hold.
  std::optional<Timestamp> stored;
  auto seen = [&](Timestamp t) { stored = std::max(stored.value_or(t), t); };
  for (const auto& a : actions_.entries()) seen(a.at);
  for (const auto& r : history_.readings()) seen(r.timestamp);
  for (const auto& [s, end] : turn_end_) seen(end);
  const Timestamp resumed = stored.value_or(start);
  now_ = std::max(start, resumed);
  har_from_ = resumed;
  if (!history_.readings().empty()) {
    har_from_ = sorted_readings(history_, resumed + 1.0).front().timestamp;
  }
  for (const auto& l : labels_.labels(fusion::Origin::edge)) har_from_ = std::max(har_from_, l.t_end);
  for (const auto& l : labels_.labels(fusion::Origin::cloud)) sync_since_ = std::max(sync_since_, l.t_end);

  workspace_ = memory::merge_into_workspace(
      std::vector<const memory::VectorBase*>{&permanent_, &temporary_}, now_);

  schedule_.add_daily("rollover", config_.rollover_time, resumed);
  schedule_.add_daily("briefing", config_.briefing_time, resumed);
  schedule_.add_daily("rules", config_.rules_time, resumed);
  schedule_.add_interval("sync", config_.sync_interval_seconds, resumed + config_.sync_interval_seconds);
  // Downtime: whatever was missed runs once.
  for (const auto& name : automation::schedule_tick(now_, schedule_)) run_scheduled(name);
}

Engine::~Engine() = default;

void Engine::flush() {
  if (config_.data_dir.empty()) return;
  const fs::path dir = config_.data_dir;
  memory::save_base(permanent_, dir / "permanent.base");
  memory::save_base(temporary_, dir / "temporary.base");
}

const diarization::ClusteringState* Engine::clusters(std::string_view session) const {
  const auto it = clusters_.find(session);
  return it == clusters_.end() ? nullptr : &it->second;
}

const std::vector<diarization::SpeakerTurn>& Engine::truth(std::string_view session) const {
  static const std::vector<diarization::SpeakerTurn> kNone;
  const auto it = truth_.find(session);
  return it == truth_.end() ? kNone : it->second;
}

// ---------------------------------------------------------------------------
// Clock and schedule

void Engine::advance_to(Timestamp t) {
  for (;;) {
    Timestamp due = t;
    bool any = false;
    for (const auto& a : schedule_.actions()) {
      if (a.next_due <= due) {
        due = a.next_due;
        any = true;
      }
    }
    if (!any) break;
    now_ = std::max(now_, due);
    for (const auto& name : automation::schedule_tick(now_, schedule_)) run_scheduled(name);
  }
  now_ = std::max(now_, t);
}

void Engine::run_scheduled(const std::string& name) {
  if (name == "rollover") {
    update_har();
    std::vector<memory::VectorBase*> temps{&temporary_};
    workspace_ = memory::rollover_day(permanent_, temps, now_);
    flush();
  } else if (name == "briefing") {
    const auto b = automation::morning_briefing(day_index(now_), agenda_, gateway_, registry_,
                                                history_, now_);
    const auto* owner = registry_.owner();
    log({ActionKind::speak, b.text(),
         owner ? std::optional<std::string>(owner->speaker_id) : std::nullopt},
        "briefing:" + format_date(b.date));
  } else if (name == "rules") {
    update_har();
    evaluate_rules();
  } else if (name == "sync") {
    try {
      const auto r = gateway_.sync_labels(sync_since_, labels_, now_);
      if (!r.offline) {
        for (const auto& l : labels_.labels(fusion::Origin::cloud)) sync_since_ = std::max(sync_since_, l.t_end);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MalformedPayload && e.code() != ErrorCode::ClientFailure) throw;
    }
  }
}

void Engine::update_har() {
  // Label up to the start of the run still open, so no run is ever split.
  Timestamp boundary = har_from_;
  for (const auto& r : history_.readings()) {
    if (r.kind == fusion::SensorKind::motion && r.timestamp <= now_) boundary = std::max(boundary, r.timestamp);
  }
  if (!(boundary > har_from_)) return;
  const auto readings = sorted_readings(history_, boundary);
  const auto found = fusion::har_label(readings, har_from_, boundary, config_.har);
  labels_.add_edge(found);
  har_from_ = boundary;
}

void Engine::evaluate_rules() {
  auto labels = labels_.labels(fusion::Origin::edge);
  for (const auto& c : labels_.labels(fusion::Origin::cloud)) {
    if (std::none_of(labels.begin(), labels.end(), [&](const auto& e) {
          return e.origin == fusion::Origin::edge && overlaps(e, c);
        })) {
      labels.push_back(c);
    }
  }
  const auto readings = sorted_readings(history_, now_ + 1e-9);
  const auto hist = automation::history_from(labels, readings);
  const auto* owner = registry_.owner();
  const std::string owner_id = owner ? owner->speaker_id : "";
  for (auto& t : automation::evaluate_watch_rules(rules_, hist, triggers_, now_, owner_id)) {
    if (owner_id.empty()) t.action.addressee.reset();
    const std::string note = format_date(day_index(now_)) + ": " + t.action.text.value_or("");
    triggers_.push_back({t.rule_id, now_, t.last_period});
    owner_notes_.push_back(note);
    trigger_log_.append({t.rule_id, record::format_number(now_),
                         record::format_number(static_cast<double>(t.last_period)), note});
    log(t.action, "rule:" + t.rule_id);
  }
}

// ---------------------------------------------------------------------------
// Helpers

void Engine::log(Action action, std::string ref) {
  if (action.kind == ActionKind::store_only) return;
  actions_.append(now_, std::move(action), std::move(ref));
}

std::string Engine::next_event_id() {
  return "ev-" + record::format_number(now_) + "-" + std::to_string(++event_counter_);
}

std::string Engine::resolve_hint(std::string_view session, std::string_view hint) const {
  const std::string aliased = transcripts_.resolve(session, hint);
  if (registry_.find(aliased)) return aliased;
  if (const auto* p = registry_.find_by_name(hint)) return p->speaker_id;
  return aliased;
}

void Engine::remember_speaker(const diarization::SpeakerProfile& p) {
  speaker_log_.append({p.speaker_id, p.name, std::string(diarization::to_string(p.role)),
                       std::to_string(p.sample_count), join_vector(p.centroid)});
}

void Engine::add_memory(std::vector<memory::MemoryItem> items, bool permanent) {
  for (auto& item : items) {
    workspace_.insert(item);
    (permanent ? permanent_ : temporary_).insert(std::move(item));
  }
}

// ---------------------------------------------------------------------------
// Events

void Engine::process(const ScenarioEvent& e) {
  if (e.t < now_) throw Error(ErrorCode::InvalidArgument, "event time precedes the engine clock");
  advance_to(e.t);
  switch (e.kind) {
    case ScenarioKind::segment: on_segment(e); break;
    case ScenarioKind::utterance: on_utterance(e); break;
    case ScenarioKind::name: on_name(e); break;
    case ScenarioKind::enroll: on_enroll(e); break;
    case ScenarioKind::sensor: on_sensor(e); break;
    case ScenarioKind::wake: history_.mark_wake(e.t); break;
    case ScenarioKind::agenda: agenda_.add({*e.at, e.text}); break;
    case ScenarioKind::clock: break;
    case ScenarioKind::truth: truth_[e.session].push_back({e.speaker, e.t, *e.t_end}); break;
    case ScenarioKind::health:
      sessions_.open(e.session, e.t);
      sessions_.set_health_status(e.session, e.status);
      break;
    case ScenarioKind::document:
      add_memory(memory::vectorize_document(e.text, memory::Source::domain_doc, provider_, now_,
                                            std::nullopt, config_.chunking),
                 true);
      break;
    case ScenarioKind::search:
      gateway_.web_search(e.text, registry_, provider_, temporary_, workspace_, now_, config_.chunking);
      break;
    case ScenarioKind::summary:
    case ScenarioKind::recall: {
      Event ev;
      ev.event_id = next_event_id();
      ev.kind = EventKind::system;
      ev.marker = e.kind == ScenarioKind::summary ? Marker::summary_request : Marker::recall_request;
      if (!e.speaker.empty()) ev.speaker = resolve_hint(e.session, e.speaker);
      ev.payload = e.kind == ScenarioKind::summary ? e.session : e.metric;
      ev.timestamp = e.t;
      ev.session_id = e.session;
      dispatch(router_.route(ev, registry_), ev, e);
      break;
    }
  }
}

void Engine::on_segment(const ScenarioEvent& e) {
  auto [it, inserted] = clusters_.try_emplace(e.session, config_.thresholds);
  auto& state = it->second;
  sessions_.open(e.session, e.t);
  const diarization::SegmentEmbedding seg{e.vector, e.t, *e.t_end, e.session};
  const auto assignment = diarization::assign_segment(seg, registry_, state);
  if (assignment.kind == diarization::AssignmentKind::registered) {
    remember_speaker(*registry_.find(assignment.id));
  }
  transcripts_.append_turn({e.session, assignment.id, e.text, e.t, *e.t_end, {}, 0});
  auto& end = turn_end_[e.session];
  end = std::max(end, *e.t_end);

  Event ev;
  ev.event_id = next_event_id();
  ev.speaker = assignment.id;
  ev.timestamp = e.t;
  ev.session_id = e.session;
  if (!e.text.empty()) {
    ev.kind = EventKind::utterance;
    ev.marker = e.marker.value_or(Marker::silent);
    ev.payload = e.text;
  } else if (assignment.kind != diarization::AssignmentKind::registered) {
    ev.kind = EventKind::system;
    ev.marker = Marker::ask_name;
  } else {
    return;
  }
  dispatch(router_.route(ev, registry_), ev, e);
  if (!e.text.empty()) {
    add_memory(memory::vectorize_document(e.text, memory::Source::transcript, provider_, now_,
                                          std::nullopt, config_.chunking),
               true);
  }
}

void Engine::on_utterance(const ScenarioEvent& e) {
  sessions_.open(e.session, e.t);
  const std::string speaker = resolve_hint(e.session, e.speaker);
  const double duration = e.t_end ? *e.t_end - e.t : 1.0;
  auto& end = turn_end_[e.session];
  const Timestamp start = std::max(e.t, end);
  transcripts_.append_turn({e.session, speaker, e.text, start, start + duration, {}, 0});
  end = start + duration;

  Event ev;
  ev.event_id = next_event_id();
  ev.kind = EventKind::utterance;
  ev.marker = e.marker.value_or(Marker::silent);
  ev.speaker = speaker;
  ev.payload = e.text;
  ev.timestamp = e.t;
  ev.session_id = e.session;
  dispatch(router_.route(ev, registry_), ev, e);
  add_memory(memory::vectorize_document(e.text, memory::Source::transcript, provider_, now_,
                                        std::nullopt, config_.chunking),
             true);
}

void Engine::on_name(const ScenarioEvent& e) {
  const auto role = e.role.value_or(diarization::Role::guest);
  std::string id;
  auto it = clusters_.find(e.session);
  if (it != clusters_.end() && it->second.find(e.speaker)) {
    const auto profile = diarization::promote_cluster(e.speaker, e.name, role, it->second, registry_);
    remember_speaker(profile);
    id = profile.speaker_id;
  } else if (const auto* known = registry_.find_by_name(e.name)) {
    id = known->speaker_id;
  } else {
    const auto& p = registry_.add_named(e.name, role);
    remember_speaker(p);
    id = p.speaker_id;
  }
  if (id != e.speaker) transcripts_.add_alias(e.session, e.speaker, id);
  log({ActionKind::speak, "Nice to meet you, " + registry_.find(id)->name + ".", id}, next_event_id());
}

void Engine::on_enroll(const ScenarioEvent& e) {
  if (auto* existing = registry_.find_mutable(
          registry_.find_by_name(e.name) ? registry_.find_by_name(e.name)->speaker_id : "")) {
    if (existing->sample_count != 0) {
      throw Error(ErrorCode::InvalidArgument, e.name + " already has voice samples");
    }
    if (existing->centroid.empty()) existing->centroid.assign(config_.dimension, 0.0);
    for (const auto& v : e.vectors) {
      if (v.size() != config_.dimension) throw Error(ErrorCode::DimensionMismatch, "enroll vector dimension");
      diarization::update_centroid(existing->centroid, existing->sample_count, v);
    }
    remember_speaker(*existing);
    return;
  }
  std::vector<diarization::SegmentEmbedding> samples;
  for (const auto& v : e.vectors) samples.push_back({v, e.t, e.t + 1.0, e.session});
  remember_speaker(registry_.enroll(e.name, e.role.value_or(diarization::Role::guest), samples));
}

void Engine::on_sensor(const ScenarioEvent& e) {
  history_.append(*e.reading);
  Event ev;
  ev.event_id = next_event_id();
  ev.kind = EventKind::sensor;
  ev.marker = e.text.empty() ? Marker::silent : Marker::alert;
  ev.payload = e.text;
  ev.timestamp = e.t;
  ev.session_id = e.session;
  if (!e.text.empty()) {
    memory::ingest_event_item(e.text, memory::Source::sensor_event, provider_, now_,
                              config_.event_ttl_seconds, workspace_, temporary_);
  }
  dispatch(router_.route(ev, registry_), ev, e);
  if (ev.marker == Marker::alert && config_.wake_on_alert) {
    update_har();
    evaluate_rules();
  }
}

void Engine::dispatch(const Action& action, const Event& event, const ScenarioEvent& e) {
  switch (action.kind) {
    case ActionKind::run_answer: {
      if (config_.search_before_answer && !config_.offline) {
        gateway_.web_search(event.payload, registry_, provider_, temporary_, workspace_, now_,
                            config_.chunking);
      }
      dialogue::run_answer_pipeline(event.event_id, event.payload, action.addressee, now_, workspace_,
                                    provider_, small_, large_, config_.top_k, actions_);
      return;
    }
    case ActionKind::run_summary: {
      auto role = diarization::Role::guest;
      if (event.speaker) {
        if (const auto* p = registry_.find(*event.speaker)) role = p->role;
      }
      if (e.role) role = *e.role;
      std::string text;
      try {
        text = summary(event.payload, role);
      } catch (const Error& err) {
        if (err.code() == ErrorCode::PermissionDenied) {
          text = "I am not allowed to share that summary.";
        } else if (err.code() == ErrorCode::UnknownSession) {
          text = "I know of no session called " + event.payload + ".";
        } else {
          throw;
        }
      }
      log({ActionKind::speak, text, action.addressee}, event.event_id);
      return;
    }
    case ActionKind::run_recall: {
      dialogue::RecallRequest req{e.metric, e.wake_day, e.at};
      std::string text;
      try {
        text = dialogue::recall_query(req, history_).text;
      } catch (const Error& err) {
        switch (err.code()) {
          case ErrorCode::NoSuchMetric: text = "I do not keep track of " + e.metric + "."; break;
          case ErrorCode::AnchorNotFound: text = "I do not know when you woke up that day."; break;
          case ErrorCode::NoReadingInWindow: text = "I have no " + e.metric + " reading from then."; break;
          default: throw;
        }
      }
      log({ActionKind::speak, text, action.addressee}, event.event_id);
      return;
    }
    default:
      log(action, event.event_id);
  }
}

// ---------------------------------------------------------------------------
// Reads

std::vector<memory::RetrievalHit> Engine::search(std::string_view query, std::size_t k) const {
  if (memory::tokenize(query).empty()) throw Error(ErrorCode::EmptyQuery, "query has no words");
  return memory::retrieve(provider_.embed(query), workspace_, k, now_);
}

std::string Engine::summary(std::string_view session, diarization::Role role) const {
  dialogue::SummaryInputs in;
  in.transcripts = &transcripts_;
  in.sessions = &sessions_;
  in.registry = &registry_;
  in.owner_notes = owner_notes_;
  return dialogue::summarize_session(session, role, policy_, in, large_);
}

EngineStats Engine::stats() const {
  EngineStats s;
  s.now = now_;
  s.sessions = sessions_.sessions().size();
  s.turns = transcripts_.raw_turns().size();
  s.speakers = registry_.profiles().size();
  for (const auto& [id, state] : clusters_) s.anonymous_clusters += state.clusters().size();
  s.permanent_items = permanent_.size();
  s.temporary_items = temporary_.size();
  s.workspace_items = workspace_.size();
  s.readings = history_.readings().size();
  s.edge_labels = labels_.labels(fusion::Origin::edge).size();
  s.cloud_labels = labels_.labels(fusion::Origin::cloud).size();
  s.actions = actions_.entries().size();
  s.triggers = triggers_.size();
  s.egress = gateway_.egress_count();
  if (now_ > 0.0) {
    const auto readings = sorted_readings(history_, now_);
    s.room_seconds = fusion::room_occupancy_stats(readings, now_ - kSecondsPerDay, now_);
    s.sedentarization = fusion::sedentarization_level(s.room_seconds);
  }
  const fusion::SensorReading* last_imu = nullptr;
  for (const auto& r : history_.readings()) {
    if (r.imu && (!last_imu || r.timestamp >= last_imu->timestamp)) last_imu = &r;
  }
  if (last_imu) s.last_pose = fusion::pose_classify(*last_imu->imu, config_.pose);
  return s;
}

// ---------------------------------------------------------------------------

ReplayResult replay(std::span<const ScenarioEvent> scenario, const Config& config) {
  ReplayResult r;
  r.engine = std::make_unique<Engine>(config, scenario.empty() ? 0.0 : scenario.front().t);
  for (const auto& e : scenario) {
    r.engine->process(e);
    ++r.events;
  }
  r.engine->flush();
  return r;
}

std::string format_action_log(std::span<const dialogue::LoggedAction> actions) {
  auto field = [](const std::optional<std::string>& v) {
    if (!v || v->empty()) return std::string("-");
    std::string out;
    for (char c : *v) {
      if (c == '\n') out += "\\n";
      else if (c == '\t') out += "\\t";
      else out += c;
    }
    return out;
  };
  std::ostringstream os;
  for (const auto& a : actions) {
    os << a.seq << '\t' << format_timestamp(a.at) << '\t' << dialogue::to_string(a.action.kind) << '\t'
       << field(a.action.addressee) << '\t' << field(a.ref) << '\t' << field(a.action.text) << '\n';
  }
  return os.str();
}

}  // namespace keepsake::shell
