#include "keepsake/memory.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

#include "keepsake/error.hpp"
#include "test_support.hpp"

namespace keepsake::memory {
namespace {

const HashingEmbeddingProvider kProvider(64, 7);

MemoryItem item(std::string text, Timestamp created = 0.0,
                std::optional<Timestamp> expires = std::nullopt) {
  return {make_item_id(text, Source::system), kProvider.embed(text), text, Source::system, created,
          expires};
}

std::set<std::string> id_set(const VectorBase& b) {
  auto ids = b.ids();
  return {ids.begin(), ids.end()};
}

std::string words(std::size_t n_chars, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> letter(0, 25), len(2, 8);
  std::string s;
  while (s.size() < n_chars) {
    const int l = len(rng);
    for (int i = 0; i < l && s.size() < n_chars; ++i) s += static_cast<char>('a' + letter(rng));
    if (s.size() < n_chars) s += ' ';
  }
  return s;
}

TEST(Chunking, ShortTextIsOneItem) {
  auto items = vectorize_document("0123456789", Source::domain_doc, kProvider, 0.0);
  ASSERT_EQ(items.size(), 1u);
  EXPECT_EQ(items[0].text, "0123456789");
  EXPECT_TRUE(is_unit(items[0].vector));
}

TEST(Chunking, ThousandCharsInThreeChunksReconstructs) {
  std::mt19937_64 rng(1);
  const std::string text = words(1000, rng);
  ASSERT_EQ(text.size(), 1000u);
  ChunkingOptions opt{400, 50};
  auto items = vectorize_document(text, Source::domain_doc, kProvider, 0.0, std::nullopt, opt);
  ASSERT_EQ(items.size(), 3u);
  std::string rebuilt = items[0].text;
  for (std::size_t i = 1; i < items.size(); ++i) rebuilt += items[i].text.substr(50);
  EXPECT_EQ(rebuilt, text);
  for (const auto& it : items) EXPECT_LE(it.text.size(), 400u);
}

TEST(Chunking, ReconstructionProperty) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> len(1, 5000), cap(20, 600);
  for (int trial = 0; trial < 200; ++trial) {
    const std::string text = trial % 3 == 0 ? std::string(len(rng), 'x') : words(len(rng), rng);
    const std::size_t c = cap(rng);
    ChunkingOptions opt{c, c / 5};
    auto chunks = chunk_text(text, opt);
    std::string rebuilt = chunks[0];
    for (std::size_t i = 1; i < chunks.size(); ++i) {
      ASSERT_GT(chunks[i].size(), opt.overlap);
      rebuilt += chunks[i].substr(opt.overlap);
    }
    ASSERT_EQ(rebuilt, text);
    for (const auto& ch : chunks) ASSERT_LE(ch.size(), c);
  }
}

TEST(Chunking, DoesNotSplitUtf8Sequences) {
  std::string text;
  for (int i = 0; i < 300; ++i) text += "\xc3\xa9";  // é
  auto chunks = chunk_text(text, {101, 10});
  for (const auto& c : chunks) {
    ASSERT_FALSE(c.empty());
    EXPECT_NE(static_cast<unsigned char>(c.front()) & 0xC0, 0x80);
    EXPECT_EQ(c.size() % 2, 0u);
  }
}

TEST(Vectorize, IdempotentIdsAndErrors) {
  std::mt19937_64 rng(3);
  const std::string text = words(2000, rng);
  auto a = vectorize_document(text, Source::domain_doc, kProvider, 0.0);
  auto b = vectorize_document(text, Source::domain_doc, kProvider, 50.0);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].item_id, b[i].item_id);
  EXPECT_NE(make_item_id("x", Source::web_doc), make_item_id("x", Source::domain_doc));
  EXPECT_THROW(vectorize_document("", Source::domain_doc, kProvider, 0.0), Error);
}

TEST(Provider, DeterministicUnitVectors) {
  HashingEmbeddingProvider p1(64, 11), p2(64, 11);
  EXPECT_EQ(p1.embed("heart rate this morning"), p2.embed("heart rate this morning"));
  EXPECT_TRUE(is_unit(p1.embed("")));
  EXPECT_TRUE(is_unit(p1.embed("!!!")));
  // Shared vocabulary scores higher than unrelated text.
  const auto q = p1.embed("doctor appointment");
  EXPECT_GT(dot(q, p1.embed("appointment with the doctor at ten")),
            dot(q, p1.embed("weather is sunny")));
}

TEST(Base, PermanentAndTemporaryInvariants) {
  VectorBase perm(BaseKind::permanent), temp(BaseKind::temporary);
  EXPECT_THROW(perm.insert(item("a", 0, 10)), Error);
  EXPECT_THROW(temp.insert(item("a")), Error);
  EXPECT_THROW(temp.insert(item("a", 10, 5)), Error);
  EXPECT_TRUE(perm.insert(item("a")));
  EXPECT_FALSE(perm.insert(item("a", 5)));
  EXPECT_EQ(perm.find(make_item_id("a", Source::system))->created_at, 0.0);
  EXPECT_EQ(perm.purge_expired(1e12), 0u);
  EXPECT_EQ(perm.size(), 1u);
}

TEST(Merge, ZeroBasesAndUnion) {
  EXPECT_TRUE(merge_into_workspace({}, 0.0).empty());
  VectorBase p(BaseKind::permanent), t(BaseKind::temporary);
  p.insert(item("a"));
  p.insert(item("b"));
  t.insert(item("b", 0, 100));
  t.insert(item("c", 0, 100));
  std::vector<const VectorBase*> bases{&p, &t};
  auto w = merge_into_workspace(bases, 1.0);
  EXPECT_EQ(w.kind(), BaseKind::workspace);
  EXPECT_EQ(id_set(w), (std::set<std::string>{make_item_id("a", Source::system),
                                              make_item_id("b", Source::system),
                                              make_item_id("c", Source::system)}));
  // First occurrence wins: "b" keeps the permanent (non-expiring) copy.
  EXPECT_FALSE(w.find(make_item_id("b", Source::system))->expires_at.has_value());
  EXPECT_EQ(merge_into_workspace(bases, 100.0).size(), 2u);
}

TEST(MergeProperty, IdempotentAgainstSetUnionOracle) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> n(0, 30), pick(0, 60);
  std::uniform_real_distribution<double> ttl(1.0, 100.0);
  for (int trial = 0; trial < 100; ++trial) {
    VectorBase p(BaseKind::permanent), t(BaseKind::temporary);
    for (int i = n(rng); i > 0; --i) p.insert(item("w" + std::to_string(pick(rng))));
    for (int i = n(rng); i > 0; --i) t.insert(item("w" + std::to_string(pick(rng)), 0, ttl(rng)));
    const double now = 50.0;
    std::vector<const VectorBase*> pt{&p, &t};
    auto once = merge_into_workspace(pt, now);
    std::vector<const VectorBase*> again{&once, &t};
    auto twice = merge_into_workspace(again, now);
    EXPECT_EQ(once.ids(), twice.ids());

    std::set<std::string> oracle;
    for (const auto& m : p.items()) oracle.insert(m.item_id);
    for (const auto& m : t.items())
      if (*m.expires_at > now) oracle.insert(m.item_id);
    EXPECT_EQ(id_set(once), oracle);

    std::vector<const VectorBase*> tp{&t, &p};
    EXPECT_EQ(id_set(merge_into_workspace(tp, now)), oracle);  // commutative as a set
  }
}

TEST(Ingest, ItemVisibleInBothBases) {
  VectorBase ws, temp(BaseKind::temporary);
  auto m = ingest_event_item("kitchen motion at 07:02", Source::sensor_event, kProvider, 100.0,
                             86400.0, ws, temp);
  EXPECT_TRUE(ws.contains(m.item_id));
  EXPECT_TRUE(temp.contains(m.item_id));
  auto hits = retrieve(kProvider.embed("kitchen motion at 07:02"), ws, 1, 101.0);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].item.item_id, m.item_id);

  ingest_event_item("door opened", Source::sensor_event, kProvider, 101.0, 86400.0, ws, temp);
  ingest_event_item("door closed", Source::sensor_event, kProvider, 102.0, 86400.0, ws, temp);
  EXPECT_EQ(ws.size(), 3u);
  ingest_event_item("door closed", Source::sensor_event, kProvider, 103.0, 86400.0, ws, temp);
  EXPECT_EQ(ws.size(), 3u);
  EXPECT_EQ(temp.size(), 3u);
  EXPECT_THROW(ingest_event_item("", Source::system, kProvider, 0, 1, ws, temp), Error);
}

TEST(Retrieve, EdgeCases) {
  VectorBase b;
  b.insert(item("alpha"));
  b.insert(item("beta"));
  EXPECT_TRUE(retrieve(kProvider.embed("alpha"), b, 0).empty());
  auto hits = retrieve(kProvider.embed("alpha"), b, 5);
  ASSERT_EQ(hits.size(), 2u);
  EXPECT_EQ(hits[0].item.text, "alpha");
  EXPECT_NEAR(hits[0].similarity, 1.0, 1e-12);
  std::vector<double> wrong(8, 0.0);
  wrong[0] = 1.0;
  try {
    retrieve(wrong, b, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(Retrieve, TiesPreferNewerThenSmallerId) {
  VectorBase b;
  Embedding v(64, 0.0);
  v[0] = 1.0;
  b.insert({"bbb", v, "x", Source::system, 10.0, std::nullopt});
  b.insert({"aaa", v, "y", Source::system, 10.0, std::nullopt});
  b.insert({"ccc", v, "z", Source::system, 20.0, std::nullopt});
  auto hits = retrieve(v, b, 3);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].item.item_id, "ccc");
  EXPECT_EQ(hits[1].item.item_id, "aaa");
  EXPECT_EQ(hits[2].item.item_id, "bbb");
}

TEST(Retrieve, MatchesFullSortOracle) {
  std::mt19937_64 rng(5);
  VectorBase b;
  std::uniform_int_distribution<int> created(0, 50);
  for (int i = 0; i < 3000; ++i) {
    // Duplicate vectors every so often to exercise the tie order.
    auto v = i % 7 == 0 && i > 0 ? b.items()[i - 1].vector : testing::random_unit(rng, 64);
    b.insert({"id" + std::to_string(i), v, "t", Source::system, double(created(rng)), std::nullopt});
  }
  for (int q = 0; q < 20; ++q) {
    auto query = q % 4 == 0 ? b.items()[q * 13].vector : testing::random_unit(rng, 64);
    auto hits = retrieve(query, b, 25);
    std::vector<std::tuple<double, double, std::string>> all;
    for (const auto& m : b.items()) all.emplace_back(-testing::raw_dot(query, m.vector), -m.created_at, m.item_id);
    std::sort(all.begin(), all.end());
    ASSERT_EQ(hits.size(), 25u);
    for (std::size_t i = 0; i < 25; ++i) EXPECT_EQ(hits[i].item.item_id, std::get<2>(all[i]));
  }
}

TEST(Rollover, Basics) {
  VectorBase p(BaseKind::permanent), t(BaseKind::temporary);
  p.insert(item("a"));
  std::vector<VectorBase*> none;
  EXPECT_EQ(rollover_day(p, none, 10.0).ids(), p.ids());

  t.insert(item("old", 0, 5));
  t.insert(item("new", 0, 50));
  std::vector<VectorBase*> temps{&t};
  auto w = rollover_day(p, temps, 10.0);
  EXPECT_EQ(w.ids(), (std::vector<std::string>{make_item_id("a", Source::system),
                                                make_item_id("new", Source::system)}));
  EXPECT_EQ(t.size(), 1u);
}

TEST(Rollover, ThirtyDaysAgainstSetOracle) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> per_day(0, 6), ttl_days(1, 7);
  VectorBase p(BaseKind::permanent), t(BaseKind::temporary);
  for (int i = 0; i < 10; ++i) p.insert(item("perm" + std::to_string(i)));
  std::vector<std::pair<std::string, double>> oracle_temps;  // id, expiry
  const double rollover = 4 * 3600.0;
  Timestamp now = 0.0;
  int counter = 0;
  for (int day = 0; day < 30; ++day) {
    for (int i = per_day(rng); i > 0; --i) {
      const double created = day * 86400.0 + 8 * 3600.0 + i;
      const double expiry = created + ttl_days(rng) * 86400.0;
      auto m = item("event" + std::to_string(counter++), created, expiry);
      oracle_temps.emplace_back(m.item_id, expiry);
      t.insert(std::move(m));
    }
    now = next_rollover(now, rollover);
    std::vector<VectorBase*> temps{&t};
    auto w = rollover_day(p, temps, now);
    std::set<std::string> expected = id_set(p);
    for (const auto& [id, exp] : oracle_temps)
      if (exp > now) expected.insert(id);
    EXPECT_EQ(id_set(w), expected) << "day " << day;
    EXPECT_EQ(p.size(), 10u);
    for (const auto& m : w.items()) EXPECT_TRUE(m.live_at(now));
  }
}

TEST(Rollover, NextRolloverIsStrictlyLater) {
  const double four = 4 * 3600.0;
  EXPECT_EQ(next_rollover(0.0, four), four);
  EXPECT_EQ(next_rollover(four, four), four + 86400.0);
  EXPECT_EQ(next_rollover(86400.0 + 5 * 3600.0, four), 2 * 86400.0 + four);
}

TEST(Persistence, SaveLoadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "keepsake_memory_test";
  std::filesystem::remove_all(dir);
  VectorBase t(BaseKind::temporary);
  t.insert(item("tab\there\nnewline", 1.25, 99.5));
  t.insert(item("plain", 2.0, 3.0));
  save_base(t, dir / "temporary.log");
  auto back = load_base(dir / "temporary.log", BaseKind::temporary);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.items()[i].item_id, t.items()[i].item_id);
    EXPECT_EQ(back.items()[i].text, t.items()[i].text);
    EXPECT_EQ(back.items()[i].vector, t.items()[i].vector);
    EXPECT_EQ(back.items()[i].expires_at, t.items()[i].expires_at);
    EXPECT_EQ(back.items()[i].created_at, t.items()[i].created_at);
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace keepsake::memory
