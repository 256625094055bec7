#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "keepsake/time.hpp"
#include "keepsake/vecmath.hpp"

namespace keepsake::memory {

enum class Source { domain_doc, web_doc, sensor_event, transcript, system };
enum class BaseKind { permanent, temporary, workspace };

std::string_view to_string(Source source);
Source parse_source(std::string_view text);
std::string_view to_string(BaseKind kind);
BaseKind parse_base_kind(std::string_view text);

// 16 hex digits of FNV-1a 64 over (source, text).
std::string make_item_id(std::string_view text, Source source);

struct MemoryItem {
  std::string item_id;
  Embedding vector;
  std::string text;
  Source source = Source::system;
  Timestamp created_at = 0.0;
  std::optional<Timestamp> expires_at;

  bool live_at(Timestamp now) const { return !expires_at || *expires_at > now; }
};

// Id-keyed collection that remembers insertion order.
class VectorBase {
 public:
  explicit VectorBase(BaseKind kind = BaseKind::workspace) : kind_(kind) {}

  BaseKind kind() const { return kind_; }
  const std::vector<MemoryItem>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  bool contains(std::string_view id) const;
  const MemoryItem* find(std::string_view id) const;

  // First occurrence wins: returns false and keeps the stored item when the
  // id is already present. Permanent bases refuse expiring items and
  // temporary bases refuse non-expiring ones (InvalidArgument).
  bool insert(MemoryItem item);

  // Administrative removal; the only way a permanent item ever leaves.
  bool erase(std::string_view id);

  // Drops items with expires_at <= now. No-op on permanent bases.
  std::size_t purge_expired(Timestamp now);

  std::vector<std::string> ids() const;

 private:
  void reindex();

  BaseKind kind_;
  std::vector<MemoryItem> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  // Unit vector of dimension(); same text, same vector.
  virtual Embedding embed(std::string_view text) const = 0;
  virtual std::size_t dimension() const = 0;
};

// Token counts projected onto seeded pseudo-random directions, then
// normalized. Tokens are lowercased runs of ASCII alphanumerics (bytes >= 0x80
// are kept inside tokens so UTF-8 words stay whole).
class HashingEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashingEmbeddingProvider(std::size_t dimension = 64, std::uint64_t seed = 0)
      : dimension_(dimension), seed_(seed) {}

  Embedding embed(std::string_view text) const override;
  std::size_t dimension() const override { return dimension_; }

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

std::vector<std::string> tokenize(std::string_view text);

struct ChunkingOptions {
  std::size_t max_chars = 512;
  std::size_t overlap = 64;
};

// Chunks of at most max_chars bytes. Each chunk after the first starts
// `overlap` bytes before the previous one ended (moved back further only to
// avoid splitting a UTF-8 sequence). Chunk ends prefer a whitespace boundary
// in the last quarter of the window.
std::vector<std::string> chunk_text(std::string_view text, const ChunkingOptions& options);

std::vector<MemoryItem> vectorize_document(std::string_view text, Source source,
                                           const EmbeddingProvider& provider, Timestamp created_at,
                                           std::optional<Timestamp> expires_at = std::nullopt,
                                           const ChunkingOptions& options = {});

// Union by id in base order, first occurrence wins, items expired at `now`
// left out.
VectorBase merge_into_workspace(std::span<const VectorBase* const> bases, Timestamp now);

// Adds one event-derived item to the temporary base and to the workspace.
// Returns the stored item (the existing one when the text was seen before).
MemoryItem ingest_event_item(std::string_view text, Source source,
                             const EmbeddingProvider& provider, Timestamp now, double ttl_seconds,
                             VectorBase& workspace, VectorBase& temporary);

struct RetrievalHit {
  MemoryItem item;
  double similarity = 0.0;
};

// Exact top-k by cosine; ties go to the newer item, then the smaller id.
// With `now` set, items expired at that instant are not returned.
std::vector<RetrievalHit> retrieve(std::span<const double> query, const VectorBase& base,
                                   std::size_t k, std::optional<Timestamp> now = std::nullopt);

// Purges expired temporaries and rebuilds the workspace from the permanent
// base plus what is still live.
VectorBase rollover_day(const VectorBase& permanent, std::span<VectorBase* const> temporaries,
                        Timestamp now);

// First rollover instant strictly after `after`.
Timestamp next_rollover(Timestamp after, double rollover_time_of_day);

// One item per record: id, kind, source, created_at, expires_at ("-" when
// absent), base64 vector, text.
void save_base(const VectorBase& base, const std::filesystem::path& path);
VectorBase load_base(const std::filesystem::path& path, BaseKind kind);

}  // namespace keepsake::memory
