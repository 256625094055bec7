#include "keepsake/gateway.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "keepsake/error.hpp"

namespace keepsake::gateway {

namespace {

constexpr std::string_view kOpen = "\xE2\x9F\xA8";   // ⟨
constexpr std::string_view kClose = "\xE2\x9F\xA9";  // ⟩

std::atomic<std::size_t> g_egress{0};

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool iequal_at(std::string_view text, std::size_t pos, std::string_view lowered_term) {
  if (pos + lowered_term.size() > text.size()) return false;
  for (std::size_t i = 0; i < lowered_term.size(); ++i) {
    if (lower(text[pos + i]) != lowered_term[i]) return false;
  }
  return true;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = lower(c);
  return out;
}

// Date shapes: a digit group or a separator class.
struct Elem {
  int min_digits;  // 0 for a separator
  int max_digits;
};
using Shape = std::vector<Elem>;

const std::vector<Shape>& date_shapes() {
  static const std::vector<Shape> shapes{
      {{4, 4}, {0, 0}, {1, 2}, {0, 0}, {1, 2}},  // 2026-03-01, 2026/3/1
      {{1, 2}, {0, 0}, {1, 2}, {0, 0}, {2, 4}},  // 01/03/2026, 1.3.26
  };
  return shapes;
}

bool is_date_sep(char c) { return c == '-' || c == '/' || c == '.'; }

// Longest match of shape[k..] at pos; -1 when none.
long match_shape(std::string_view text, std::size_t pos, const Shape& shape, std::size_t k) {
  if (k == shape.size()) return 0;
  const Elem& e = shape[k];
  if (e.min_digits == 0) {
    if (pos >= text.size() || !is_date_sep(text[pos])) return -1;
    const long rest = match_shape(text, pos + 1, shape, k + 1);
    return rest < 0 ? -1 : rest + 1;
  }
  long best = -1;
  for (int n = e.min_digits; n <= e.max_digits; ++n) {
    if (pos + n > text.size() || !is_digit(text[pos + n - 1])) break;
    const long rest = match_shape(text, pos + n, shape, k + 1);
    if (rest >= 0) best = std::max(best, rest + n);
  }
  return best;
}

struct Term {
  std::string lowered;
  PiiCategory category;
};

const char* category_tag(PiiCategory c) {
  switch (c) {
    case PiiCategory::person: return "PERSON";
    case PiiCategory::date: return "DATE";
    case PiiCategory::identifier: return "IDENTIFIER";
    case PiiCategory::location: return "LOCATION";
  }
  return "PERSON";
}

}  // namespace

std::string_view to_string(PiiCategory c) {
  switch (c) {
    case PiiCategory::person: return "person";
    case PiiCategory::date: return "date";
    case PiiCategory::identifier: return "identifier";
    case PiiCategory::location: return "location";
  }
  return "person";
}

RedactedQuery anonymize_query(std::string_view text, const diarization::SpeakerRegistry& registry,
                              const PiiLexicon& lexicon) {
  if (std::all_of(text.begin(), text.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); })) {
    throw Error(ErrorCode::EmptyQuery, "query is empty");
  }
  std::vector<Term> terms;
  for (const auto& p : registry.profiles()) {
    if (!p.name.empty()) terms.push_back({lowercase(p.name), PiiCategory::person});
  }
  for (const auto& n : lexicon.persons) {
    if (!n.empty()) terms.push_back({lowercase(n), PiiCategory::person});
  }
  for (const auto& n : lexicon.locations) {
    if (!n.empty()) terms.push_back({lowercase(n), PiiCategory::location});
  }

  std::string out;
  RedactionMap map;
  std::map<PiiCategory, int> counters;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t best_len = 0;
    PiiCategory best_cat = PiiCategory::person;
    auto offer = [&](std::size_t len, PiiCategory cat) {
      if (len > best_len) {
        best_len = len;
        best_cat = cat;
      }
    };
    for (const auto& t : terms) {
      if (iequal_at(text, i, t.lowered)) offer(t.lowered.size(), t.category);
    }
    if (is_digit(text[i])) {
      for (const auto& shape : date_shapes()) {
        const long n = match_shape(text, i, shape, 0);
        if (n > 0) offer(static_cast<std::size_t>(n), PiiCategory::date);
      }
      std::size_t run = 0;
      while (i + run < text.size() && is_digit(text[i + run])) ++run;
      if (run >= 6) offer(run, PiiCategory::identifier);
    }
    if (best_len == 0) {
      out += text[i++];
      continue;
    }
    const std::string original(text.substr(i, best_len));
    auto it = std::find_if(map.begin(), map.end(), [&](const Redaction& r) { return r.original == original; });
    if (it == map.end()) {
      const int n = ++counters[best_cat];
      map.push_back({std::string(kOpen) + category_tag(best_cat) + "_" + std::to_string(n) +
                         std::string(kClose),
                     original, best_cat});
      it = map.end() - 1;
    }
    out += it->placeholder;
    i += best_len;
  }
  return RedactedQuery(std::move(out), std::move(map));
}

std::string deanonymize_text(std::string_view text, const RedactionMap& map) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto open = text.find(kOpen, i);
    if (open == std::string_view::npos) break;
    const auto close = text.find(kClose, open + kOpen.size());
    if (close == std::string_view::npos) break;
    const auto token = text.substr(open, close + kClose.size() - open);
    auto it = std::find_if(map.begin(), map.end(), [&](const Redaction& r) { return r.placeholder == token; });
    out.append(text.substr(i, open - i));
    if (it != map.end()) {
      out += it->original;
      i = close + kClose.size();
    } else {
      out.append(kOpen);
      i = open + kOpen.size();
    }
  }
  out.append(text.substr(std::min(i, text.size())));
  return out;
}

// ---------------------------------------------------------------------------
// Clients

LocalCorpusSearchClient::LocalCorpusSearchClient(std::filesystem::path dir, std::size_t max_results)
    : dir_(std::move(dir)), max_results_(max_results) {}

std::vector<SearchResult> LocalCorpusSearchClient::search(const RedactedQuery& query) {
  std::string plain;
  std::string_view q = query.text();
  while (!q.empty()) {
    const auto open = q.find(kOpen);
    plain.append(q.substr(0, open));
    if (open == std::string_view::npos) break;
    const auto close = q.find(kClose, open);
    if (close == std::string_view::npos) break;
    plain += ' ';
    q.remove_prefix(close + kClose.size());
  }
  std::set<std::string> words;
  for (auto& w : memory::tokenize(plain)) {
    if (w.size() >= 3) words.insert(std::move(w));
  }
  if (words.empty()) return {};

  std::error_code ec;
  if (!std::filesystem::is_directory(dir_, ec)) {
    throw Error(ErrorCode::ClientFailure, "corpus directory " + dir_.string() + " unavailable");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  struct Scored {
    std::size_t score;
    SearchResult result;
  };
  std::vector<Scored> scored;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string body = ss.str();
    while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back()))) body.pop_back();
    const auto tokens = memory::tokenize(body);
    const std::set<std::string> doc(tokens.begin(), tokens.end());
    std::size_t score = 0;
    for (const auto& w : words) score += doc.count(w);
    if (score > 0) scored.push_back({score, {f.stem().string(), std::move(body)}});
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const Scored& a, const Scored& b) { return a.score > b.score; });
  std::vector<SearchResult> out;
  for (auto& s : scored) {
    if (out.size() == max_results_) break;
    out.push_back(std::move(s.result));
  }
  return out;
}

std::optional<std::string> HttpCloudLabelClient::fetch_since(Timestamp since) {
  httplib::Client cli(host_, port_);
  cli.set_connection_timeout(2);
  cli.set_read_timeout(5);
  auto res = cli.Get("/labels", httplib::Params{{"since", record::format_number(since)}},
                     httplib::Headers{});
  if (!res) return std::nullopt;
  if (res->status != 200) {
    throw Error(ErrorCode::ClientFailure, "label server answered " + std::to_string(res->status));
  }
  return res->body;
}

// ---------------------------------------------------------------------------
// Gateway
//
// audit.log: timestamp, client, redacted query

std::size_t process_egress_count() { return g_egress.load(); }

Gateway::Gateway(GatewayOptions options, PiiLexicon lexicon)
    : options_(std::move(options)), lexicon_(std::move(lexicon)) {
  if (!options_.audit_path.empty()) {
    audit_log_ = record::AppendLog::open(options_.audit_path);
    for (const auto& f : audit_log_.records()) {
      if (f.size() != 3) throw Error(ErrorCode::CorruptRecord, "audit record field count");
      audit_.push_back({record::parse_number(f[0]), f[1], f[2]});
    }
  }
}

void Gateway::set_search_client(std::unique_ptr<SearchClient> client) { search_ = std::move(client); }
void Gateway::set_weather_client(std::unique_ptr<WeatherClient> client) { weather_ = std::move(client); }
void Gateway::set_cloud_label_client(std::unique_ptr<fusion::CloudLabelClient> client) {
  labels_ = std::move(client);
}

void Gateway::record_egress(Timestamp now, std::string_view client, std::string_view query) {
  ++g_egress;
  audit_log_.append({record::format_number(now), std::string(client), std::string(query)});
  audit_.push_back({now, std::string(client), std::string(query)});
}

std::vector<memory::MemoryItem> Gateway::web_search(std::string_view query,
                                                    const diarization::SpeakerRegistry& registry,
                                                    const memory::EmbeddingProvider& provider,
                                                    memory::VectorBase& temporary,
                                                    memory::VectorBase& workspace, Timestamp now,
                                                    const memory::ChunkingOptions& chunking) {
  const RedactedQuery redacted = anonymize_query(query, registry, lexicon_);
  if (options_.offline || !search_) return {};
  std::vector<SearchResult> results;
  record_egress(now, search_->name(), redacted.text());
  try {
    results = search_->search(redacted);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ClientFailure) throw;
    warnings_.push_back(format_timestamp(now) + " web search failed: " + e.what());
    return {};
  }
  std::vector<memory::MemoryItem> ingested;
  for (const auto& r : results) {
    const std::string text = deanonymize_text(r.text, redacted.map());
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    for (auto& item : memory::vectorize_document(text, memory::Source::web_doc, provider, now,
                                                 now + options_.web_ttl_seconds, chunking)) {
      if (temporary.insert(item)) {
        workspace.insert(item);
        ingested.push_back(std::move(item));
      }
    }
  }
  return ingested;
}

std::optional<std::string> Gateway::weather(const diarization::SpeakerRegistry& registry, Timestamp now) {
  if (options_.offline || !weather_) return std::nullopt;
  const RedactedQuery q = anonymize_query("weather forecast for today", registry, lexicon_);
  record_egress(now, weather_->name(), q.text());
  try {
    return weather_->forecast(q);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ClientFailure) throw;
    warnings_.push_back(format_timestamp(now) + " weather failed: " + e.what());
    return std::nullopt;
  }
}

fusion::SyncResult Gateway::sync_labels(Timestamp since, fusion::LabelStore& store, Timestamp now) {
  constexpr double kRetry = 6 * 3600.0;
  if (options_.offline || !labels_) return {0, true, now + kRetry};
  // The request carries only the cut-off time, no user text.
  record_egress(now, "cloud-labels", "since=" + record::format_number(since));
  try {
    return fusion::sync_cloud_labels(*labels_, since, store, now, kRetry);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ClientFailure) throw;
    warnings_.push_back(format_timestamp(now) + " label sync failed: " + e.what());
    return {0, true, now + kRetry};
  }
}

}  // namespace keepsake::gateway
