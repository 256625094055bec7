#include "keepsake/diarization.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <utility>

#include "keepsake/error.hpp"

namespace keepsake::diarization {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::owner: return "owner";
    case Role::caregiver: return "caregiver";
    case Role::doctor: return "doctor";
    case Role::housekeeper: return "housekeeper";
    case Role::guest: return "guest";
  }
  return "guest";
}

Role parse_role(std::string_view text) {
  for (Role r : {Role::owner, Role::caregiver, Role::doctor, Role::housekeeper, Role::guest}) {
    if (to_string(r) == text) return r;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown role '" + std::string(text) + "'");
}

std::string_view to_string(AssignmentKind kind) {
  switch (kind) {
    case AssignmentKind::registered: return "registered";
    case AssignmentKind::anonymous: return "anonymous";
    case AssignmentKind::new_cluster: return "new_cluster";
  }
  return "new_cluster";
}

void validate_segment(const SegmentEmbedding& seg, std::size_t dimension) {
  if (seg.vector.size() != dimension) {
    throw Error(ErrorCode::DimensionMismatch, "segment has dimension " +
                                                  std::to_string(seg.vector.size()) +
                                                  ", expected " + std::to_string(dimension));
  }
  if (!(seg.t_end > seg.t_start)) {
    throw Error(ErrorCode::InvalidArgument, "segment t_end must exceed t_start");
  }
  if (!is_unit(seg.vector)) {
    throw Error(ErrorCode::InvalidArgument, "segment vector is not unit norm");
  }
}

// ---------------------------------------------------------------------------
// SpeakerRegistry

namespace {

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i]))) {
      return false;
    }
  }
  return true;
}

}  // namespace

const SpeakerProfile& SpeakerRegistry::insert(SpeakerProfile profile) {
  if (profile.role == Role::owner && owner() != nullptr) {
    throw Error(ErrorCode::DuplicateOwner, "an owner is already registered");
  }
  profile.speaker_id = "spk-" + std::to_string(next_id_++);
  profiles_.push_back(std::move(profile));
  return profiles_.back();
}

const SpeakerProfile& SpeakerRegistry::enroll(std::string name, Role role,
                                              std::span<const SegmentEmbedding> samples) {
  if (samples.empty()) throw Error(ErrorCode::EmptySamples, "enrollment needs samples");
  if (role == Role::owner && owner() != nullptr) {
    throw Error(ErrorCode::DuplicateOwner, "an owner is already registered");
  }
  Embedding mean(dimension_, 0.0);
  for (const auto& s : samples) {
    validate_segment(s, dimension_);
    for (std::size_t i = 0; i < dimension_; ++i) mean[i] += s.vector[i];
  }
  for (auto& x : mean) x /= static_cast<double>(samples.size());
  if (!normalize_in_place(mean)) {
    throw Error(ErrorCode::DegenerateCentroid, "sample mean has near-zero norm");
  }
  return insert({"", std::move(name), role, std::move(mean), samples.size()});
}

const SpeakerProfile& SpeakerRegistry::add_named(std::string name, Role role) {
  return insert({"", std::move(name), role, {}, 0});
}

const SpeakerProfile& SpeakerRegistry::adopt(std::string name, Role role, Embedding centroid,
                                             std::size_t sample_count) {
  if (sample_count > 0 && (centroid.size() != dimension_ || !is_unit(centroid))) {
    throw Error(ErrorCode::DimensionMismatch, "adopted centroid is not a unit vector of the registry dimension");
  }
  return insert({"", std::move(name), role, std::move(centroid), sample_count});
}

const SpeakerProfile* SpeakerRegistry::find(std::string_view speaker_id) const {
  for (const auto& p : profiles_) {
    if (p.speaker_id == speaker_id) return &p;
  }
  return nullptr;
}

SpeakerProfile* SpeakerRegistry::find_mutable(std::string_view speaker_id) {
  return const_cast<SpeakerProfile*>(std::as_const(*this).find(speaker_id));
}

const SpeakerProfile* SpeakerRegistry::find_by_name(std::string_view name) const {
  for (const auto& p : profiles_) {
    if (iequals(p.name, name)) return &p;
  }
  return nullptr;
}

const SpeakerProfile* SpeakerRegistry::owner() const {
  for (const auto& p : profiles_) {
    if (p.role == Role::owner) return &p;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// ClusteringState

void Thresholds::validate() const {
  auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  if (!in(registered, -1.0, 1.0) || !in(anonymous, -1.0, 1.0) || !in(owner, 0.0, 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "diarization threshold out of range");
  }
  if (registered < anonymous) {
    throw Error(ErrorCode::InvalidConfig,
                "registered threshold must not be laxer than the anonymous one");
  }
}

ClusteringState::ClusteringState(Thresholds thresholds) : thresholds_(thresholds) {
  thresholds_.validate();
}

const AnonymousCluster* ClusteringState::find(std::string_view cluster_id) const {
  for (const auto& c : clusters_) {
    if (c.cluster_id == cluster_id) return &c;
  }
  return nullptr;
}

AnonymousCluster* ClusteringState::find_mutable(std::string_view cluster_id) {
  return const_cast<AnonymousCluster*>(std::as_const(*this).find(cluster_id));
}

const AnonymousCluster& ClusteringState::create(Embedding seed) {
  clusters_.push_back({"anon-" + std::to_string(next_index_++), std::move(seed), 1});
  return clusters_.back();
}

AnonymousCluster ClusteringState::take(std::string_view cluster_id) {
  auto it = std::find_if(clusters_.begin(), clusters_.end(),
                         [&](const AnonymousCluster& c) { return c.cluster_id == cluster_id; });
  if (it == clusters_.end()) {
    throw Error(ErrorCode::UnknownCluster, "no anonymous cluster '" + std::string(cluster_id) + "'");
  }
  AnonymousCluster out = std::move(*it);
  clusters_.erase(it);
  return out;
}

void ClusteringState::reset() {
  clusters_.clear();
  next_index_ = 1;
}

// ---------------------------------------------------------------------------
// Assignment

void update_centroid(Embedding& centroid, std::size_t& count, std::span<const double> v) {
  const double n = static_cast<double>(count);
  Embedding next(centroid.size());
  for (std::size_t i = 0; i < centroid.size(); ++i) next[i] = n * centroid[i] + v[i];
  if (!normalize_in_place(next)) {
    throw Error(ErrorCode::DegenerateCentroid, "centroid update cancelled to zero");
  }
  centroid = std::move(next);
  ++count;
}

namespace {

// Higher similarity wins, then higher sample_count, then the smaller id.
bool better(double sim, std::size_t count, const std::string& id, double best_sim,
            std::size_t best_count, const std::string& best_id) {
  if (sim != best_sim) return sim > best_sim;
  if (count != best_count) return count > best_count;
  return id < best_id;
}

}  // namespace

SpeakerAssignment assign_segment(const SegmentEmbedding& seg, SpeakerRegistry& registry,
                                 ClusteringState& state) {
  validate_segment(seg, registry.dimension());
  const Thresholds& th = state.thresholds();

  const SpeakerProfile* best_profile = nullptr;
  double best_sim = -std::numeric_limits<double>::infinity();
  for (const auto& p : registry.profiles()) {
    if (p.sample_count == 0) continue;
    const double sim = cosine_unit(seg.vector, p.centroid);
    if (best_profile == nullptr ||
        better(sim, p.sample_count, p.speaker_id, best_sim, best_profile->sample_count,
               best_profile->speaker_id)) {
      best_profile = &p;
      best_sim = sim;
    }
  }
  if (best_profile != nullptr && best_sim >= th.registered) {
    SpeakerProfile* p = registry.find_mutable(best_profile->speaker_id);
    update_centroid(p->centroid, p->sample_count, seg.vector);
    return {AssignmentKind::registered, p->speaker_id, best_sim};
  }

  const AnonymousCluster* best_cluster = nullptr;
  best_sim = -std::numeric_limits<double>::infinity();
  for (const auto& c : state.clusters()) {
    const double sim = cosine_unit(seg.vector, c.centroid);
    if (best_cluster == nullptr || better(sim, c.sample_count, c.cluster_id, best_sim,
                                          best_cluster->sample_count, best_cluster->cluster_id)) {
      best_cluster = &c;
      best_sim = sim;
    }
  }
  if (best_cluster != nullptr && best_sim >= th.anonymous) {
    AnonymousCluster* c = state.find_mutable(best_cluster->cluster_id);
    update_centroid(c->centroid, c->sample_count, seg.vector);
    return {AssignmentKind::anonymous, c->cluster_id, best_sim};
  }

  const auto& created = state.create(seg.vector);
  return {AssignmentKind::new_cluster, created.cluster_id, std::nullopt};
}

double personal_vad_score(const SegmentEmbedding& seg, const SpeakerProfile& owner) {
  if (owner.sample_count == 0 || owner.centroid.empty()) {
    throw Error(ErrorCode::UnenrolledOwner, "owner has no voice samples");
  }
  if (seg.vector.size() != owner.centroid.size()) {
    throw Error(ErrorCode::DimensionMismatch, "segment and owner centroid differ in dimension");
  }
  const double score = (1.0 + cosine_unit(seg.vector, owner.centroid)) / 2.0;
  return std::clamp(score, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Sessions and turns

void validate_turns(std::span<const SpeakerTurn> turns) {
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (!(turns[i].t_end > turns[i].t_start)) {
      throw Error(ErrorCode::InvalidArgument, "turn with t_end <= t_start");
    }
    if (i > 0 && turns[i].t_start < turns[i - 1].t_end) {
      throw Error(ErrorCode::InvalidArgument, "turns overlap or are out of order");
    }
  }
}

std::vector<SpeakerTurn> diarize_session(std::span<const SegmentEmbedding> segments,
                                         SpeakerRegistry& registry, ClusteringState& state,
                                         std::vector<SpeakerAssignment>* assignments) {
  for (std::size_t i = 1; i < segments.size(); ++i) {
    if (segments[i].t_start < segments[i - 1].t_end) {
      throw Error(ErrorCode::UnsortedInput,
                  "segment " + std::to_string(i) + " starts before the previous one ends");
    }
  }
  std::vector<SpeakerTurn> turns;
  for (const auto& seg : segments) {
    auto a = assign_segment(seg, registry, state);
    if (!turns.empty() && turns.back().speaker == a.id && turns.back().t_end >= seg.t_start) {
      turns.back().t_end = seg.t_end;
    } else {
      turns.push_back({a.id, seg.t_start, seg.t_end});
    }
    if (assignments != nullptr) assignments->push_back(std::move(a));
  }
  return turns;
}

SpeakerProfile promote_cluster(std::string_view cluster_id, std::string name, Role role,
                               ClusteringState& state, SpeakerRegistry& registry) {
  if (state.find(cluster_id) == nullptr) {
    throw Error(ErrorCode::UnknownCluster, "no anonymous cluster '" + std::string(cluster_id) + "'");
  }
  if (role == Role::owner && registry.owner() != nullptr) {
    throw Error(ErrorCode::DuplicateOwner, "an owner is already registered");
  }
  AnonymousCluster c = state.take(cluster_id);
  return registry.adopt(std::move(name), role, std::move(c.centroid), c.sample_count);
}

// ---------------------------------------------------------------------------
// DER

double compute_der(std::span<const SpeakerTurn> reference,
                   std::span<const SpeakerTurn> hypothesis) {
  if (reference.empty()) throw Error(ErrorCode::EmptyReference, "reference has no turns");
  validate_turns(reference);
  validate_turns(hypothesis);

  std::vector<std::string> ref_ids, hyp_ids;
  auto index_of = [](std::vector<std::string>& ids, const std::string& id) {
    auto it = std::find(ids.begin(), ids.end(), id);
    if (it != ids.end()) return static_cast<std::size_t>(it - ids.begin());
    ids.push_back(id);
    return ids.size() - 1;
  };
  std::vector<std::size_t> ref_idx, hyp_idx;
  double ref_total = 0.0, hyp_total = 0.0;
  for (const auto& t : reference) {
    ref_idx.push_back(index_of(ref_ids, t.speaker));
    ref_total += t.t_end - t.t_start;
  }
  for (const auto& t : hypothesis) {
    hyp_idx.push_back(index_of(hyp_ids, t.speaker));
    hyp_total += t.t_end - t.t_start;
  }

  // Pairwise overlap time; both lists are sorted and internally disjoint.
  std::vector<std::vector<double>> overlap(ref_ids.size(), std::vector<double>(hyp_ids.size(), 0.0));
  double both = 0.0;
  for (std::size_t i = 0, j = 0; i < reference.size() && j < hypothesis.size();) {
    const double lo = std::max(reference[i].t_start, hypothesis[j].t_start);
    const double hi = std::min(reference[i].t_end, hypothesis[j].t_end);
    if (hi > lo) {
      overlap[ref_idx[i]][hyp_idx[j]] += hi - lo;
      both += hi - lo;
    }
    if (reference[i].t_end < hypothesis[j].t_end) {
      ++i;
    } else {
      ++j;
    }
  }

  // Best one-to-one mapping: iterate the larger side, DP over subsets of the
  // smaller side.
  const bool ref_small = ref_ids.size() <= hyp_ids.size();
  const std::size_t small = ref_small ? ref_ids.size() : hyp_ids.size();
  const std::size_t large = ref_small ? hyp_ids.size() : ref_ids.size();
  if (small > 16) {
    throw Error(ErrorCode::InvalidArgument, "too many speakers for exact DER mapping");
  }
  auto weight = [&](std::size_t l, std::size_t s) {
    return ref_small ? overlap[s][l] : overlap[l][s];
  };
  const std::size_t states = std::size_t{1} << small;
  std::vector<double> dp(states, -1.0);
  dp[0] = 0.0;
  for (std::size_t l = 0; l < large; ++l) {
    std::vector<double> next = dp;
    for (std::size_t mask = 0; mask < states; ++mask) {
      if (dp[mask] < 0.0) continue;
      for (std::size_t s = 0; s < small; ++s) {
        if (mask & (std::size_t{1} << s)) continue;
        const std::size_t m2 = mask | (std::size_t{1} << s);
        next[m2] = std::max(next[m2], dp[mask] + weight(l, s));
      }
    }
    dp = std::move(next);
  }
  const double matched = *std::max_element(dp.begin(), dp.end());

  // missed = ref - both, false alarm = hyp - both, confusion = both - matched
  const double errors = (ref_total - both) + (hyp_total - both) + (both - matched);
  // Summation order differs between the totals; snap rounding noise to zero.
  if (errors <= 1e-9 * ref_total) return 0.0;
  return errors / ref_total;
}

}  // namespace keepsake::diarization
