#include "keepsake/memory.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>

#include "keepsake/error.hpp"
#include "keepsake/record.hpp"

namespace keepsake::memory {

std::string_view to_string(Source source) {
  switch (source) {
    case Source::domain_doc: return "domain_doc";
    case Source::web_doc: return "web_doc";
    case Source::sensor_event: return "sensor_event";
    case Source::transcript: return "transcript";
    case Source::system: return "system";
  }
  return "system";
}

Source parse_source(std::string_view text) {
  for (Source s : {Source::domain_doc, Source::web_doc, Source::sensor_event, Source::transcript,
                   Source::system}) {
    if (to_string(s) == text) return s;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown memory source '" + std::string(text) + "'");
}

std::string_view to_string(BaseKind kind) {
  switch (kind) {
    case BaseKind::permanent: return "permanent";
    case BaseKind::temporary: return "temporary";
    case BaseKind::workspace: return "workspace";
  }
  return "workspace";
}

BaseKind parse_base_kind(std::string_view text) {
  for (BaseKind k : {BaseKind::permanent, BaseKind::temporary, BaseKind::workspace}) {
    if (to_string(k) == text) return k;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown base kind '" + std::string(text) + "'");
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

bool is_utf8_continuation(char c) { return (static_cast<unsigned char>(c) & 0xC0) == 0x80; }

}  // namespace

std::string make_item_id(std::string_view text, Source source) {
  std::uint64_t h = fnv1a(to_string(source));
  h = fnv1a(std::string_view("\x1f", 1), h);
  h = fnv1a(text, h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// VectorBase

bool VectorBase::contains(std::string_view id) const { return find(id) != nullptr; }

const MemoryItem* VectorBase::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &items_[it->second];
}

bool VectorBase::insert(MemoryItem item) {
  if (kind_ == BaseKind::permanent && item.expires_at) {
    throw Error(ErrorCode::InvalidArgument, "permanent items never expire");
  }
  if (kind_ == BaseKind::temporary && !item.expires_at) {
    throw Error(ErrorCode::InvalidArgument, "temporary items must carry an expiry");
  }
  if (item.expires_at && !(*item.expires_at > item.created_at)) {
    throw Error(ErrorCode::InvalidArgument, "expires_at must be after created_at");
  }
  if (index_.contains(item.item_id)) return false;
  index_.emplace(item.item_id, items_.size());
  items_.push_back(std::move(item));
  return true;
}

bool VectorBase::erase(std::string_view id) {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return false;
  items_.erase(items_.begin() + static_cast<std::ptrdiff_t>(it->second));
  reindex();
  return true;
}

std::size_t VectorBase::purge_expired(Timestamp now) {
  if (kind_ == BaseKind::permanent) return 0;
  const auto before = items_.size();
  std::erase_if(items_, [&](const MemoryItem& m) { return !m.live_at(now); });
  if (items_.size() != before) reindex();
  return before - items_.size();
}

std::vector<std::string> VectorBase::ids() const {
  std::vector<std::string> out;
  out.reserve(items_.size());
  for (const auto& m : items_) out.push_back(m.item_id);
  return out;
}

void VectorBase::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < items_.size(); ++i) index_.emplace(items_[i].item_id, i);
}

// ---------------------------------------------------------------------------
// Embedding

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      current += static_cast<char>(std::tolower(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Embedding HashingEmbeddingProvider::embed(std::string_view text) const {
  std::map<std::string, int> counts;
  for (auto& t : tokenize(text)) ++counts[t];
  if (counts.empty()) counts[std::string(text)] = 1;

  Embedding v(dimension_, 0.0);
  for (const auto& [token, count] : counts) {
    std::uint64_t state = fnv1a(token) ^ seed_;
    for (std::size_t i = 0; i < dimension_; ++i) {
      // Uniform in [-1, 1).
      const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
      v[i] += count * (2.0 * u - 1.0);
    }
  }
  if (!normalize_in_place(v)) {
    v.assign(dimension_, 0.0);
    v[fnv1a(text) % dimension_] = 1.0;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Chunking and ingestion

std::vector<std::string> chunk_text(std::string_view text, const ChunkingOptions& options) {
  const std::size_t cap = options.max_chars;
  const std::size_t overlap = options.overlap;
  if (cap == 0 || overlap >= cap) {
    throw Error(ErrorCode::InvalidArgument, "chunk overlap must be smaller than chunk size");
  }
  std::vector<std::string> chunks;
  std::size_t start = 0;
  const std::size_t n = text.size();
  while (true) {
    if (n - start <= cap) {
      chunks.emplace_back(text.substr(start));
      break;
    }
    std::size_t end = start + cap;
    const std::size_t floor = start + std::max(overlap + 1, cap - cap / 4);
    for (std::size_t p = end; p > floor; --p) {
      if (std::isspace(static_cast<unsigned char>(text[p - 1]))) {
        end = p;
        break;
      }
    }
    while (end > start + overlap + 1 && end < n && is_utf8_continuation(text[end])) --end;
    chunks.emplace_back(text.substr(start, end - start));
    std::size_t next = end - overlap;
    while (next > start + 1 && is_utf8_continuation(text[next])) --next;
    start = next;
  }
  return chunks;
}

std::vector<MemoryItem> vectorize_document(std::string_view text, Source source,
                                           const EmbeddingProvider& provider, Timestamp created_at,
                                           std::optional<Timestamp> expires_at,
                                           const ChunkingOptions& options) {
  if (text.empty()) throw Error(ErrorCode::EmptyDocument, "document is empty");
  std::vector<MemoryItem> items;
  for (auto& chunk : chunk_text(text, options)) {
    MemoryItem item;
    item.item_id = make_item_id(chunk, source);
    item.vector = provider.embed(chunk);
    item.text = std::move(chunk);
    item.source = source;
    item.created_at = created_at;
    item.expires_at = expires_at;
    items.push_back(std::move(item));
  }
  return items;
}

VectorBase merge_into_workspace(std::span<const VectorBase* const> bases, Timestamp now) {
  VectorBase out(BaseKind::workspace);
  for (const VectorBase* base : bases) {
    for (const auto& item : base->items()) {
      if (item.live_at(now)) out.insert(item);
    }
  }
  return out;
}

MemoryItem ingest_event_item(std::string_view text, Source source,
                             const EmbeddingProvider& provider, Timestamp now, double ttl_seconds,
                             VectorBase& workspace, VectorBase& temporary) {
  if (text.empty()) throw Error(ErrorCode::EmptyDocument, "event text is empty");
  if (!(ttl_seconds > 0.0)) throw Error(ErrorCode::InvalidArgument, "ttl must be positive");
  const std::string id = make_item_id(text, source);
  if (const MemoryItem* existing = temporary.find(id)) {
    workspace.insert(*existing);
    return *existing;
  }
  MemoryItem item{id, provider.embed(text), std::string(text), source, now, now + ttl_seconds};
  temporary.insert(item);
  workspace.insert(item);
  return item;
}

// ---------------------------------------------------------------------------
// Retrieval

std::vector<RetrievalHit> retrieve(std::span<const double> query, const VectorBase& base,
                                   std::size_t k, std::optional<Timestamp> now) {
  if (k == 0) return {};
  struct Candidate {
    double sim;
    const MemoryItem* item;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(base.size());
  for (const auto& item : base.items()) {
    if (item.vector.size() != query.size()) {
      throw Error(ErrorCode::DimensionMismatch, "query dimension " + std::to_string(query.size()) +
                                                    " vs item dimension " +
                                                    std::to_string(item.vector.size()));
    }
    if (now && !item.live_at(*now)) continue;
    candidates.push_back({cosine_unit(query, item.vector), &item});
  }
  auto ranks_before = [](const Candidate& a, const Candidate& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    if (a.item->created_at != b.item->created_at) return a.item->created_at > b.item->created_at;
    return a.item->item_id < b.item->item_id;
  };
  const std::size_t take = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                    candidates.end(), ranks_before);
  std::vector<RetrievalHit> hits;
  hits.reserve(take);
  for (std::size_t i = 0; i < take; ++i) hits.push_back({*candidates[i].item, candidates[i].sim});
  return hits;
}

// ---------------------------------------------------------------------------
// Rollover

VectorBase rollover_day(const VectorBase& permanent, std::span<VectorBase* const> temporaries,
                        Timestamp now) {
  std::vector<const VectorBase*> sources{&permanent};
  for (VectorBase* t : temporaries) {
    t->purge_expired(now);
    sources.push_back(t);
  }
  return merge_into_workspace(sources, now);
}

Timestamp next_rollover(Timestamp after, double rollover_time_of_day) {
  Timestamp candidate = day_start(day_index(after)) + rollover_time_of_day;
  while (candidate <= after) candidate += kSecondsPerDay;
  return candidate;
}

// ---------------------------------------------------------------------------
// Persistence

void save_base(const VectorBase& base, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp);
    const record::Fields header{"H", "keepsake", "1", std::string(record::kHeaderFlagsPlain)};
    out << record::encode(header);
    for (const auto& m : base.items()) {
      const record::Fields f{m.item_id,
                             std::string(to_string(base.kind())),
                             std::string(to_string(m.source)),
                             record::format_number(m.created_at),
                             m.expires_at ? record::format_number(*m.expires_at) : "-",
                             record::encode_vector(m.vector),
                             m.text};
      out << record::encode(f);
    }
    if (!out.flush()) throw Error(ErrorCode::IoError, "cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

VectorBase load_base(const std::filesystem::path& path, BaseKind kind) {
  VectorBase base(kind);
  if (!std::filesystem::exists(path)) return base;
  auto log = record::AppendLog::open(path, false);
  for (const auto& f : log.records()) {
    if (f.size() != 7) throw Error(ErrorCode::CorruptRecord, "memory record field count");
    MemoryItem m;
    m.item_id = f[0];
    m.source = parse_source(f[2]);
    m.created_at = record::parse_number(f[3]);
    if (f[4] != "-") m.expires_at = record::parse_number(f[4]);
    m.vector = record::decode_vector(f[5]);
    m.text = f[6];
    base.insert(std::move(m));
  }
  return base;
}

}  // namespace keepsake::memory
