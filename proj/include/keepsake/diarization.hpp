#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "keepsake/time.hpp"
#include "keepsake/vecmath.hpp"

namespace keepsake::diarization {

enum class Role { owner, caregiver, doctor, housekeeper, guest };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);

struct SegmentEmbedding {
  Embedding vector;
  Timestamp t_start = 0.0;
  Timestamp t_end = 0.0;
  std::string session_id;
};

// Throws InvalidArgument for a bad span or non-unit vector and
// DimensionMismatch for the wrong dimension.
void validate_segment(const SegmentEmbedding& seg, std::size_t dimension);

struct SpeakerProfile {
  std::string speaker_id;
  std::string name;
  Role role = Role::guest;
  Embedding centroid;  // empty when sample_count == 0
  std::size_t sample_count = 0;
};

// Named identities. Ids are allocated sequentially ("spk-1", "spk-2", ...)
// so replays are reproducible.
class SpeakerRegistry {
 public:
  explicit SpeakerRegistry(std::size_t dimension = 64) : dimension_(dimension) {}

  // Centroid is the renormalized mean of the sample vectors.
  const SpeakerProfile& enroll(std::string name, Role role,
                               std::span<const SegmentEmbedding> samples);

  // Identity known only by name (text path); never matched acoustically
  // until it has samples.
  const SpeakerProfile& add_named(std::string name, Role role);

  // Registers a profile built elsewhere (cluster promotion). The id is
  // assigned here.
  const SpeakerProfile& adopt(std::string name, Role role, Embedding centroid,
                              std::size_t sample_count);

  const SpeakerProfile* find(std::string_view speaker_id) const;
  SpeakerProfile* find_mutable(std::string_view speaker_id);
  // Case-insensitive exact name match.
  const SpeakerProfile* find_by_name(std::string_view name) const;
  const SpeakerProfile* owner() const;

  const std::vector<SpeakerProfile>& profiles() const { return profiles_; }
  std::size_t dimension() const { return dimension_; }

 private:
  const SpeakerProfile& insert(SpeakerProfile profile);

  std::size_t dimension_;
  std::size_t next_id_ = 1;
  std::vector<SpeakerProfile> profiles_;
};

struct Thresholds {
  double registered = 0.6;  // cosine, [-1, 1]
  double anonymous = 0.5;   // cosine, [-1, 1]
  double owner = 0.7;       // personal VAD score, [0, 1]

  // Throws InvalidConfig when out of range or registered < anonymous.
  void validate() const;
};

struct AnonymousCluster {
  std::string cluster_id;
  Embedding centroid;
  std::size_t sample_count = 0;
};

// Session-scoped anonymous clusters. Ids restart at "anon-1" on reset().
class ClusteringState {
 public:
  explicit ClusteringState(Thresholds thresholds = {});

  const Thresholds& thresholds() const { return thresholds_; }
  const std::vector<AnonymousCluster>& clusters() const { return clusters_; }
  const AnonymousCluster* find(std::string_view cluster_id) const;
  AnonymousCluster* find_mutable(std::string_view cluster_id);

  const AnonymousCluster& create(Embedding seed);
  AnonymousCluster take(std::string_view cluster_id);
  void reset();

 private:
  Thresholds thresholds_;
  std::size_t next_index_ = 1;
  std::vector<AnonymousCluster> clusters_;
};

enum class AssignmentKind { registered, anonymous, new_cluster };
std::string_view to_string(AssignmentKind kind);

struct SpeakerAssignment {
  AssignmentKind kind = AssignmentKind::new_cluster;
  std::string id;
  std::optional<double> similarity;  // absent for new_cluster

  bool operator==(const SpeakerAssignment&) const = default;
};

// Running-mean centroid update followed by renormalization:
// c <- normalize(n * c + v), n <- n + 1.
void update_centroid(Embedding& centroid, std::size_t& count, std::span<const double> v);

SpeakerAssignment assign_segment(const SegmentEmbedding& seg, SpeakerRegistry& registry,
                                 ClusteringState& state);

// (1 + cos(seg, owner)) / 2.
double personal_vad_score(const SegmentEmbedding& seg, const SpeakerProfile& owner);
inline bool is_owner_voice(double score, const Thresholds& t) { return score >= t.owner; }

struct SpeakerTurn {
  std::string speaker;
  Timestamp t_start = 0.0;
  Timestamp t_end = 0.0;

  bool operator==(const SpeakerTurn&) const = default;
};

// Throws InvalidArgument unless turns are time-ordered, non-overlapping and
// each has t_end > t_start.
void validate_turns(std::span<const SpeakerTurn> turns);

// Back-to-back segments with the same assignee collapse into one turn; a
// silence gap starts a new one.
std::vector<SpeakerTurn> diarize_session(std::span<const SegmentEmbedding> segments,
                                         SpeakerRegistry& registry, ClusteringState& state,
                                         std::vector<SpeakerAssignment>* assignments = nullptr);

// Moves an anonymous cluster into the registry under a name. Relabeling of
// stored turns is the caller's job (see store::AliasTable).
SpeakerProfile promote_cluster(std::string_view cluster_id, std::string name, Role role,
                               ClusteringState& state, SpeakerRegistry& registry);

// Missed + false alarm + confusion over total reference time, under the
// one-to-one speaker mapping that maximizes matched time. Mapping is solved
// exactly by dynamic programming over subsets of the smaller speaker set.
double compute_der(std::span<const SpeakerTurn> reference,
                   std::span<const SpeakerTurn> hypothesis);

}  // namespace keepsake::diarization
