#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "keepsake/diarization.hpp"
#include "keepsake/fusion.hpp"
#include "keepsake/memory.hpp"
#include "keepsake/record.hpp"
#include "keepsake/time.hpp"

namespace keepsake::gateway {

enum class PiiCategory { person, date, identifier, location };
std::string_view to_string(PiiCategory c);

struct Redaction {
  std::string placeholder;  // "⟨PERSON_1⟩"
  std::string original;
  PiiCategory category = PiiCategory::person;

  bool operator==(const Redaction&) const = default;
};

using RedactionMap = std::vector<Redaction>;

// Configured terms redacted in addition to registry names.
struct PiiLexicon {
  std::vector<std::string> persons;
  std::vector<std::string> locations;
};

// Text that is allowed to leave the process. Only anonymize_query can make
// one, so every client call is gated by redaction.
class RedactedQuery {
 public:
  const std::string& text() const { return text_; }
  const RedactionMap& map() const { return map_; }

 private:
  RedactedQuery(std::string text, RedactionMap map) : text_(std::move(text)), map_(std::move(map)) {}
  friend RedactedQuery anonymize_query(std::string_view, const diarization::SpeakerRegistry&,
                                       const PiiLexicon&);

  std::string text_;
  RedactionMap map_;
};

// Replaces, case-insensitively (ASCII), registry names, lexicon persons and
// locations, calendar dates (YYYY-MM-DD, YYYY/M/D, D/M/YY[YY] with / . or -)
// and runs of six or more digits by ⟨CATEGORY_n⟩ placeholders. Scans left to
// right taking the longest match at each position. Placeholders are
// numbered per category; an identical original reuses its placeholder.
// Throws EmptyQuery for empty or all-blank text.
RedactedQuery anonymize_query(std::string_view text, const diarization::SpeakerRegistry& registry,
                              const PiiLexicon& lexicon = {});

// Placeholders found in the map are replaced by their originals; anything
// else is left as is.
std::string deanonymize_text(std::string_view text, const RedactionMap& map);

// ---------------------------------------------------------------------------
// Clients

struct SearchResult {
  std::string title;
  std::string text;
};

class SearchClient {
 public:
  virtual ~SearchClient() = default;
  virtual std::string_view name() const = 0;
  // Throws ClientFailure on a transient error.
  virtual std::vector<SearchResult> search(const RedactedQuery& query) = 0;
};

class WeatherClient {
 public:
  virtual ~WeatherClient() = default;
  virtual std::string_view name() const = 0;
  virtual std::string forecast(const RedactedQuery& query) = 0;
};

// Search over the .txt files of a directory. A document matches when it
// contains at least one query word (placeholders and words under three
// letters are ignored); results are ranked by the number of distinct
// matched words, then file name.
class LocalCorpusSearchClient final : public SearchClient {
 public:
  explicit LocalCorpusSearchClient(std::filesystem::path dir, std::size_t max_results = 3);
  std::string_view name() const override { return "local-corpus"; }
  std::vector<SearchResult> search(const RedactedQuery& query) override;

 private:
  std::filesystem::path dir_;
  std::size_t max_results_;
};

class FixedWeatherClient final : public WeatherClient {
 public:
  explicit FixedWeatherClient(std::string text) : text_(std::move(text)) {}
  std::string_view name() const override { return "fixed-weather"; }
  std::string forecast(const RedactedQuery&) override { return text_; }

 private:
  std::string text_;
};

// GET http://host:port/labels?since=<seconds>. An unreachable server reads
// as offline; a non-200 answer throws ClientFailure.
class HttpCloudLabelClient final : public fusion::CloudLabelClient {
 public:
  HttpCloudLabelClient(std::string host, int port) : host_(std::move(host)), port_(port) {}
  std::optional<std::string> fetch_since(Timestamp since) override;

 private:
  std::string host_;
  int port_;
};

// ---------------------------------------------------------------------------
// Gateway

// Number of client invocations made by every Gateway in this process.
std::size_t process_egress_count();

struct GatewayOptions {
  bool offline = false;
  double web_ttl_seconds = 7 * 86400.0;
  std::filesystem::path audit_path;  // empty: audit kept in memory only
};

struct AuditEntry {
  Timestamp at = 0.0;
  std::string client;
  std::string query;
};

// The only owner of outside clients. Offline, no client is ever called.
class Gateway {
 public:
  explicit Gateway(GatewayOptions options = {}, PiiLexicon lexicon = {});

  void set_search_client(std::unique_ptr<SearchClient> client);
  void set_weather_client(std::unique_ptr<WeatherClient> client);
  void set_cloud_label_client(std::unique_ptr<fusion::CloudLabelClient> client);

  bool offline() const { return options_.offline; }
  const PiiLexicon& lexicon() const { return lexicon_; }

  // Searches with the anonymized query and ingests the results, with
  // placeholders restored locally, as temporary web_doc items. Offline, no
  // client, or a ClientFailure give an empty result (the failure is logged
  // as a warning). Throws EmptyQuery for a blank query.
  std::vector<memory::MemoryItem> web_search(std::string_view query,
                                             const diarization::SpeakerRegistry& registry,
                                             const memory::EmbeddingProvider& provider,
                                             memory::VectorBase& temporary,
                                             memory::VectorBase& workspace, Timestamp now,
                                             const memory::ChunkingOptions& chunking = {});

  // nullopt when offline, unconfigured or failing.
  std::optional<std::string> weather(const diarization::SpeakerRegistry& registry, Timestamp now);

  // Offline or without a client this reports offline with a retry time.
  fusion::SyncResult sync_labels(Timestamp since, fusion::LabelStore& store, Timestamp now);

  std::size_t egress_count() const { return audit_.size(); }
  const std::vector<AuditEntry>& audit() const { return audit_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  void record_egress(Timestamp now, std::string_view client, std::string_view query);

  GatewayOptions options_;
  PiiLexicon lexicon_;
  std::unique_ptr<SearchClient> search_;
  std::unique_ptr<WeatherClient> weather_;
  std::unique_ptr<fusion::CloudLabelClient> labels_;
  record::AppendLog audit_log_;
  std::vector<AuditEntry> audit_;
  std::vector<std::string> warnings_;
};

}  // namespace keepsake::gateway
