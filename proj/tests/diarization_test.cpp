#include "keepsake/diarization.hpp"

#include <gtest/gtest.h>

#include <random>

#include "keepsake/error.hpp"
#include "helpers.hpp"
#include "test_support.hpp"

namespace keepsake::diarization {
namespace {

using keepsake::testing::AssignmentOracle;
using keepsake::testing::noisy;
using keepsake::testing::orthonormal_directions;
using keepsake::testing::random_unit;

constexpr std::size_t kDim = 64;

SegmentEmbedding seg(std::vector<double> v, double t0 = 0.0, double t1 = 1.0) {
  return {std::move(v), t0, t1, "s1"};
}

using keepsake::testing::code_of;

TEST(Enroll, SingleSampleCentroidIsTheSample) {
  std::mt19937_64 rng(1);
  SpeakerRegistry reg(kDim);
  auto v = random_unit(rng, kDim);
  const auto& p = reg.enroll("Ann", Role::owner, std::vector{seg(v)});
  EXPECT_EQ(p.sample_count, 1u);
  for (std::size_t i = 0; i < kDim; ++i) EXPECT_NEAR(p.centroid[i], v[i], 1e-15);
}

TEST(Enroll, AntipodalSamplesAreDegenerate) {
  std::mt19937_64 rng(2);
  SpeakerRegistry reg(kDim);
  auto v = random_unit(rng, kDim);
  auto w = v;
  for (auto& x : w) x = -x;
  EXPECT_EQ(code_of([&] { reg.enroll("Ann", Role::owner, std::vector{seg(v), seg(w)}); }),
            ErrorCode::DegenerateCentroid);
  EXPECT_TRUE(reg.profiles().empty());
}

TEST(Enroll, ManySamplesMatchMeanOracle) {
  std::mt19937_64 rng(3);
  SpeakerRegistry reg(kDim);
  auto truth = random_unit(rng, kDim);
  std::vector<SegmentEmbedding> samples;
  double mean_single_cos = 0.0;
  for (int i = 0; i < 50; ++i) {
    samples.push_back(seg(noisy(rng, truth, 0.1)));
    mean_single_cos += testing::raw_dot(samples.back().vector, truth) / 50.0;
  }
  const auto& p = reg.enroll("Ann", Role::owner, samples);

  std::vector<double> oracle(kDim, 0.0);
  for (const auto& s : samples)
    for (std::size_t i = 0; i < kDim; ++i) oracle[i] += s.vector[i];
  double n2 = 0.0;
  for (double x : oracle) n2 += x * x;
  for (auto& x : oracle) x /= std::sqrt(n2);

  for (std::size_t i = 0; i < kDim; ++i) EXPECT_NEAR(p.centroid[i], oracle[i], 1e-12);
  EXPECT_GE(testing::raw_dot(p.centroid, truth), mean_single_cos);
  EXPECT_EQ(p.sample_count, 50u);
}

TEST(Enroll, Errors) {
  std::mt19937_64 rng(4);
  SpeakerRegistry reg(kDim);
  EXPECT_EQ(code_of([&] { reg.enroll("A", Role::owner, {}); }), ErrorCode::EmptySamples);
  EXPECT_EQ(code_of([&] { reg.enroll("A", Role::owner, std::vector{seg(random_unit(rng, 8))}); }),
            ErrorCode::DimensionMismatch);
  reg.enroll("A", Role::owner, std::vector{seg(random_unit(rng, kDim))});
  EXPECT_EQ(code_of([&] { reg.enroll("B", Role::owner, std::vector{seg(random_unit(rng, kDim))}); }),
            ErrorCode::DuplicateOwner);
}

TEST(Assign, IdenticalToOwnerCentroid) {
  std::mt19937_64 rng(5);
  SpeakerRegistry reg(kDim);
  auto v = random_unit(rng, kDim);
  const auto owner_id = reg.enroll("Ann", Role::owner, std::vector{seg(v)}).speaker_id;
  ClusteringState state;
  auto a = assign_segment(seg(v), reg, state);
  EXPECT_EQ(a.kind, AssignmentKind::registered);
  EXPECT_EQ(a.id, owner_id);
  ASSERT_TRUE(a.similarity);
  EXPECT_NEAR(*a.similarity, 1.0, 1e-12);
  EXPECT_EQ(reg.owner()->sample_count, 2u);
}

TEST(Assign, OrthogonalSegmentOpensNewCluster) {
  std::mt19937_64 rng(6);
  auto dirs = orthonormal_directions(rng, 2, kDim);
  SpeakerRegistry reg(kDim);
  reg.enroll("Ann", Role::owner, std::vector{seg(dirs[0])});
  ClusteringState state({0.6, 0.5, 0.7});
  auto a = assign_segment(seg(dirs[1]), reg, state);
  EXPECT_EQ(a.kind, AssignmentKind::new_cluster);
  EXPECT_EQ(a.id, "anon-1");
  EXPECT_FALSE(a.similarity.has_value());
  ASSERT_EQ(state.clusters().size(), 1u);
}

TEST(Assign, DimensionMismatch) {
  std::mt19937_64 rng(7);
  SpeakerRegistry reg(kDim);
  ClusteringState state;
  EXPECT_EQ(code_of([&] { assign_segment(seg(random_unit(rng, 16)), reg, state); }),
            ErrorCode::DimensionMismatch);
}

TEST(Assign, TiesPreferLargerCountThenSmallerId) {
  std::mt19937_64 rng(8);
  auto v = random_unit(rng, kDim);
  SpeakerRegistry reg(kDim);
  reg.enroll("A", Role::owner, std::vector{seg(v)});
  reg.enroll("B", Role::caregiver, std::vector{seg(v), seg(v)});
  ClusteringState state;
  EXPECT_EQ(assign_segment(seg(v), reg, state).id, "spk-2");

  SpeakerRegistry reg2(kDim);
  reg2.enroll("A", Role::caregiver, std::vector{seg(v)});
  reg2.enroll("B", Role::doctor, std::vector{seg(v)});
  EXPECT_EQ(assign_segment(seg(v), reg2, state).id, "spk-1");
}

TEST(Assign, ThreeSpeakerStreamMatchesExhaustiveOracle) {
  std::mt19937_64 rng(9);
  auto dirs = orthonormal_directions(rng, 3, kDim);
  SpeakerRegistry reg(kDim);
  const auto& owner = reg.enroll("Ann", Role::owner, std::vector{seg(dirs[0])});
  AssignmentOracle oracle(0.6, 0.5);
  oracle.add_registered(owner.speaker_id, owner.centroid, owner.sample_count);
  ClusteringState state;
  std::uniform_int_distribution<int> pick(0, 2);
  for (int i = 0; i < 60; ++i) {
    auto v = noisy(rng, dirs[pick(rng)], 0.06);
    auto expected = oracle.assign(v);
    auto got = assign_segment(seg(v), reg, state);
    EXPECT_EQ(std::string(to_string(got.kind)), expected.kind) << "segment " << i;
    EXPECT_EQ(got.id, expected.id) << "segment " << i;
  }
  EXPECT_EQ(state.clusters().size(), 2u);
}

TEST(AssignProperty, CentroidsStayUnitNorm) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    SpeakerRegistry reg(kDim);
    reg.enroll("Ann", Role::owner, std::vector{seg(random_unit(rng, kDim))});
    ClusteringState state({0.3, 0.1, 0.7});
    auto dirs = orthonormal_directions(rng, 4, kDim);
    for (int i = 0; i < 150; ++i) assign_segment(seg(noisy(rng, dirs[i % 4], 0.2)), reg, state);
    for (const auto& p : reg.profiles()) EXPECT_TRUE(is_unit(p.centroid));
    for (const auto& c : state.clusters()) EXPECT_TRUE(is_unit(c.centroid));
  }
}

TEST(AssignProperty, Deterministic) {
  std::mt19937_64 rng(11);
  std::vector<std::vector<double>> stream;
  for (int i = 0; i < 100; ++i) stream.push_back(random_unit(rng, kDim));
  auto run = [&] {
    SpeakerRegistry reg(kDim);
    ClusteringState state({0.2, 0.05, 0.7});
    std::vector<SpeakerAssignment> out;
    for (const auto& v : stream) out.push_back(assign_segment(seg(v), reg, state));
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(AssignProperty, RaisingAnonymousThresholdNeverReducesNewClusters) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    auto dirs = orthonormal_directions(rng, 5, kDim);
    std::vector<std::vector<double>> stream;
    std::uniform_int_distribution<int> pick(0, 4);
    for (int i = 0; i < 80; ++i) stream.push_back(noisy(rng, dirs[pick(rng)], 0.12));
    std::size_t previous = 0;
    for (double th : {-1.0, 0.0, 0.2, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}) {
      SpeakerRegistry reg(kDim);
      ClusteringState state({1.0, th, 0.7});
      std::size_t created = 0;
      for (const auto& v : stream) {
        if (assign_segment(seg(v), reg, state).kind == AssignmentKind::new_cluster) ++created;
      }
      EXPECT_GE(created, previous) << "threshold " << th;
      previous = created;
    }
  }
}

TEST(Thresholds, RegisteredMustNotBeLaxer) {
  EXPECT_EQ(code_of([] { ClusteringState s({0.4, 0.5, 0.7}); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([] { ClusteringState s({0.6, 0.5, 1.5}); }), ErrorCode::InvalidConfig);
}

TEST(PersonalVad, Extremes) {
  std::mt19937_64 rng(13);
  SpeakerRegistry reg(kDim);
  auto v = random_unit(rng, kDim);
  const auto& owner = reg.enroll("Ann", Role::owner, std::vector{seg(v)});
  EXPECT_NEAR(personal_vad_score(seg(v), owner), 1.0, 1e-12);
  auto w = v;
  for (auto& x : w) x = -x;
  EXPECT_NEAR(personal_vad_score(seg(w), owner), 0.0, 1e-12);
  EXPECT_TRUE(is_owner_voice(0.7, Thresholds{}));
  EXPECT_FALSE(is_owner_voice(0.69, Thresholds{}));
}

TEST(PersonalVad, RandomVectorsAverageOneHalf) {
  std::mt19937_64 rng(14);
  SpeakerRegistry reg(kDim);
  const auto& owner = reg.enroll("Ann", Role::owner, std::vector{seg(random_unit(rng, kDim))});
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) sum += personal_vad_score(seg(random_unit(rng, kDim)), owner);
  EXPECT_NEAR(sum / 10000.0, 0.5, 0.02);
}

TEST(PersonalVad, UnenrolledOwner) {
  SpeakerRegistry reg(kDim);
  const auto& owner = reg.add_named("Ann", Role::owner);
  std::mt19937_64 rng(15);
  EXPECT_EQ(code_of([&] { personal_vad_score(seg(random_unit(rng, kDim)), owner); }),
            ErrorCode::UnenrolledOwner);
}

TEST(DiarizeSession, EmptyInput) {
  SpeakerRegistry reg(kDim);
  ClusteringState state;
  EXPECT_TRUE(diarize_session({}, reg, state).empty());
}

TEST(DiarizeSession, MergesConsecutiveSameSpeaker) {
  std::mt19937_64 rng(16);
  auto dirs = orthonormal_directions(rng, 2, kDim);
  SpeakerRegistry reg(kDim);
  const auto a = reg.enroll("A", Role::owner, std::vector{seg(dirs[0])}).speaker_id;
  const auto b = reg.enroll("B", Role::doctor, std::vector{seg(dirs[1])}).speaker_id;
  ClusteringState state;
  std::vector segs{seg(dirs[0], 0, 1), seg(dirs[0], 1, 2), seg(dirs[1], 2, 3)};
  auto turns = diarize_session(segs, reg, state);
  ASSERT_EQ(turns.size(), 2u);
  EXPECT_EQ(turns[0], (SpeakerTurn{a, 0, 2}));
  EXPECT_EQ(turns[1], (SpeakerTurn{b, 2, 3}));
}

TEST(DiarizeSession, SilenceGapSplitsTurns) {
  std::mt19937_64 rng(21);
  auto dirs = orthonormal_directions(rng, 1, kDim);
  SpeakerRegistry reg(kDim);
  const auto a = reg.enroll("A", Role::owner, std::vector{seg(dirs[0])}).speaker_id;
  ClusteringState state;
  std::vector segs{seg(dirs[0], 0, 1), seg(dirs[0], 1, 2), seg(dirs[0], 2.5, 3)};
  EXPECT_EQ(diarize_session(segs, reg, state),
            (std::vector<SpeakerTurn>{{a, 0, 2}, {a, 2.5, 3}}));
}

TEST(DiarizeSession, RejectsUnsortedInput) {
  std::mt19937_64 rng(17);
  SpeakerRegistry reg(kDim);
  ClusteringState state;
  std::vector segs{seg(random_unit(rng, kDim), 2, 3), seg(random_unit(rng, kDim), 0, 1)};
  EXPECT_EQ(code_of([&] { diarize_session(segs, reg, state); }), ErrorCode::UnsortedInput);
  EXPECT_TRUE(state.clusters().empty());
}

TEST(DiarizeSession, TurnsAlwaysWellFormed) {
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> gap(0.0, 2.0), len(0.1, 3.0);
  for (int trial = 0; trial < 30; ++trial) {
    auto dirs = orthonormal_directions(rng, 3, kDim);
    std::vector<SegmentEmbedding> segs;
    double t = 0.0;
    for (int i = 0; i < 50; ++i) {
      t += gap(rng) * (i % 3 == 0);
      const double t1 = t + len(rng);
      segs.push_back(seg(noisy(rng, dirs[(i / 4) % 3], 0.15), t, t1));
      t = t1;
    }
    SpeakerRegistry reg(kDim);
    ClusteringState state;
    auto turns = diarize_session(segs, reg, state);
    EXPECT_NO_THROW(validate_turns(turns));
    for (std::size_t i = 1; i < turns.size(); ++i) {
      if (turns[i].speaker == turns[i - 1].speaker) EXPECT_GT(turns[i].t_start, turns[i - 1].t_end);
    }
  }
}

TEST(Promote, MovesClusterIntoRegistry) {
  std::mt19937_64 rng(19);
  SpeakerRegistry reg(kDim);
  ClusteringState state;
  auto v = random_unit(rng, kDim);
  assign_segment(seg(v), reg, state);
  assign_segment(seg(random_unit(rng, kDim)), reg, state);
  ASSERT_EQ(state.clusters().size(), 2u);
  auto p = promote_cluster("anon-1", "Dr. Smith", Role::doctor, state, reg);
  EXPECT_EQ(p.name, "Dr. Smith");
  EXPECT_EQ(p.sample_count, 1u);
  EXPECT_EQ(state.clusters().size(), 1u);
  ASSERT_NE(reg.find(p.speaker_id), nullptr);
  // The promoted voice is now matched as registered.
  EXPECT_EQ(assign_segment(seg(v), reg, state).kind, AssignmentKind::registered);
}

TEST(Promote, Errors) {
  std::mt19937_64 rng(20);
  SpeakerRegistry reg(kDim);
  ClusteringState state;
  EXPECT_EQ(code_of([&] { promote_cluster("anon-9", "X", Role::guest, state, reg); }),
            ErrorCode::UnknownCluster);
  reg.enroll("Ann", Role::owner, std::vector{seg(random_unit(rng, kDim))});
  ClusteringState strict({1.0, 1.0, 0.7});
  assign_segment(seg(random_unit(rng, kDim)), reg, strict);
  EXPECT_EQ(code_of([&] { promote_cluster("anon-1", "X", Role::owner, strict, reg); }),
            ErrorCode::DuplicateOwner);
  EXPECT_EQ(strict.clusters().size(), 1u);
}

TEST(Der, IdenticalListsScoreZero) {
  std::vector<SpeakerTurn> x{{"A", 0, 3}, {"B", 3, 5}, {"A", 6, 9}};
  EXPECT_EQ(compute_der(x, x), 0.0);
}

TEST(Der, HalfConfusedSingleTurn) {
  std::vector<SpeakerTurn> ref{{"A", 0, 10}};
  std::vector<SpeakerTurn> hyp{{"A", 0, 5}, {"B", 5, 10}};
  EXPECT_DOUBLE_EQ(testing::der_sweep_oracle(ref, hyp), 0.5);
  EXPECT_DOUBLE_EQ(compute_der(ref, hyp), 0.5);
}

TEST(Der, EmptyHypothesisMissesEverything) {
  std::vector<SpeakerTurn> ref{{"A", 0, 10}, {"B", 12, 15}};
  EXPECT_DOUBLE_EQ(compute_der(ref, {}), 1.0);
}

TEST(Der, EmptyReference) {
  std::vector<SpeakerTurn> hyp{{"A", 0, 10}};
  EXPECT_EQ(code_of([&] { compute_der({}, hyp); }), ErrorCode::EmptyReference);
}

TEST(Der, RandomTurnListsMatchSweepOracle) {
  std::mt19937_64 rng(21);
  auto random_turns = [&](int speakers) {
    std::vector<SpeakerTurn> out;
    std::uniform_int_distribution<int> who(0, speakers - 1), step(0, 4), len(1, 6);
    double t = 0.0;
    for (int i = 0; i < 12; ++i) {
      t += step(rng);
      const double t1 = t + len(rng);
      std::string s(1, static_cast<char>('A' + who(rng)));
      if (!out.empty() && out.back().speaker == s && out.back().t_end == t) {
        out.back().t_end = t1;
      } else {
        out.push_back({s, t, t1});
      }
      t = t1;
    }
    return out;
  };
  for (int trial = 0; trial < 200; ++trial) {
    auto ref = random_turns(3);
    auto hyp = random_turns(4);
    EXPECT_NEAR(compute_der(ref, hyp), testing::der_sweep_oracle(ref, hyp), 1e-12);
    EXPECT_EQ(compute_der(hyp, hyp), 0.0);
  }
}

}  // namespace
}  // namespace keepsake::diarization
