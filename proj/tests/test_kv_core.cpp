#include <gtest/gtest.h>

#include <cmath>

#include <random>
#include <thread>

#include "oracles.hpp"
#include "tierkv/error.hpp"
#include "tierkv/kv_core.hpp"
#include "tierkv/mrc.hpp"

using namespace tierkv;
using namespace tierkv::kv;

namespace {

CacheOptions one_shard(std::size_t capacity) {
  CacheOptions o;
  o.capacity_bytes = capacity;
  o.shard_count = 1;
  return o;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kOk;
}

}  // namespace

TEST(Cache, ReadYourWrite) {
  ShardedCache c(CacheOptions{});
  c.put("k", "v");
  auto v = c.get("k");
  ASSERT_TRUE(v);
  EXPECT_EQ(v->value, "v");
  EXPECT_EQ(c.stats().hits, 1u);
}

TEST(Cache, MissCounted) {
  ShardedCache c(CacheOptions{});
  EXPECT_FALSE(c.get("missing"));
  EXPECT_EQ(c.stats().misses, 1u);
}

TEST(Cache, LruVictim) {
  // Two entries of 1+1+64 bytes fit.
  ShardedCache c(one_shard(2 * 66));
  EXPECT_TRUE(c.put("a", "1").empty());
  EXPECT_TRUE(c.put("b", "2").empty());
  c.get("a");
  const auto ev = c.put("c", "3");
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0], "b");
  EXPECT_TRUE(c.contains("a"));
  EXPECT_FALSE(c.contains("b"));
}

TEST(Cache, EntryLargerThanShard) {
  ShardedCache c(one_shard(100));
  EXPECT_EQ(code_of([&] { c.put("k", std::string(100, 'x')); }), ErrorCode::kCapacityExceeded);
  EXPECT_EQ(c.stats().entries, 0u);
}

TEST(Cache, DirtyOverflow) {
  ShardedCache c(one_shard(2 * 66));
  c.put("a", "1", {.dirty = true});
  c.put("b", "2", {.dirty = true});
  EXPECT_EQ(code_of([&] { c.put("c", "3"); }), ErrorCode::kDirtyOverflow);
  EXPECT_TRUE(c.contains("a"));
  EXPECT_TRUE(c.contains("b"));
  EXPECT_FALSE(c.contains("c"));
}

TEST(Cache, DeleteSemantics) {
  ShardedCache c(CacheOptions{});
  c.put("k", "v");
  EXPECT_TRUE(c.erase("k"));
  EXPECT_FALSE(c.erase("k"));
  EXPECT_FALSE(c.get("k"));
  EXPECT_EQ(c.stats().bytes_used, 0u);
}

TEST(Cache, MarkClean) {
  ShardedCache c(CacheOptions{});
  for (const char* k : {"a", "b", "c"}) c.put(k, "v", {.dirty = true});
  std::vector<std::string> keys = {"a", "b", "c", "zz"};
  EXPECT_EQ(c.stats().dirty_entries, 3u);
  EXPECT_EQ(c.mark_clean(keys), 3u);
  EXPECT_EQ(c.mark_clean(keys), 0u);
  EXPECT_EQ(c.stats().dirty_bytes, 0u);
  EXPECT_EQ(c.dirty_bytes(), 0u);
}

TEST(Cache, VersionedMarkCleanSkipsOverwritten) {
  ShardedCache c(CacheOptions{});
  c.put("a", "1", {.dirty = true});
  auto snap = c.dirty_records();
  c.put("a", "2", {.dirty = true});
  EXPECT_EQ(c.mark_clean(std::span<const DirtyRecord>(snap)), 0u);
  EXPECT_TRUE(c.peek("a")->dirty);
  snap = c.dirty_records();
  EXPECT_EQ(c.mark_clean(std::span<const DirtyRecord>(snap)), 1u);
}

TEST(Cache, FlushedTombstoneDropped) {
  ShardedCache c(CacheOptions{});
  c.put("a", "", {.dirty = true, .tombstone = true});
  std::vector<std::string> keys = {"a"};
  c.mark_clean(keys);
  EXPECT_FALSE(c.contains("a"));
}

TEST(Cache, DirtySurvivesPressure) {
  ShardedCache c(one_shard(10 * 70));
  c.put("pinned", "x", {.dirty = true});
  for (int i = 0; i < 1000; ++i) c.put("k" + std::to_string(i), "y");
  EXPECT_TRUE(c.contains("pinned"));
  EXPECT_LE(c.stats().bytes_used, c.stats().bytes_capacity);
}

TEST(Cache, MatchesReferenceModel) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t cap = 300 + rng() % 700;
    ShardedCache c(one_shard(cap));
    oracle::LruModel m(cap);
    std::uint64_t gets = 0;
    for (int step = 0; step < 2000; ++step) {
      const std::string k = "k" + std::to_string(rng() % 20);
      const int op = rng() % 10;
      if (op < 4) {
        ++gets;
        auto got = c.get(k);
        auto want = m.get(k);
        ASSERT_EQ(got.has_value(), want.has_value());
        if (got) ASSERT_EQ(got->value, *want);
      } else if (op < 8) {
        const std::string v(rng() % 80, 'a' + rng() % 26);
        const bool dirty = rng() % 4 == 0;
        const auto want = m.put(k, v, c.charged_bytes(k.size(), v.size()), dirty);
        try {
          const auto ev = c.put(k, v, {.dirty = dirty});
          ASSERT_TRUE(want.has_value());
          ASSERT_EQ(ev, *want);
        } catch (const Error&) {
          ASSERT_FALSE(want.has_value());
        }
      } else if (op < 9) {
        ASSERT_EQ(c.erase(k), m.erase(k));
      } else {
        std::vector<std::string> keys = {k};
        c.mark_clean(keys);
        m.clean(k);
      }
      // Exact byte accounting and LRU order.
      const auto st = c.stats();
      ASSERT_EQ(st.bytes_used, m.used());
      ASSERT_LE(st.bytes_used, st.bytes_capacity);
      ASSERT_EQ(st.hits + st.misses, gets);
      const auto order = c.lru_order(0);
      ASSERT_EQ(std::vector<std::string>(m.order().begin(), m.order().end()), order);
    }
  }
}

TEST(Cache, ConcurrentShardsKeepAccounting) {
  CacheOptions o;
  o.capacity_bytes = 1 << 20;
  ShardedCache c(o);
  std::vector<std::thread> ts;
  for (int t = 0; t < 4; ++t) {
    ts.emplace_back([&, t] {
      for (int i = 0; i < 5000; ++i) {
        const std::string k = std::to_string(t) + ":" + std::to_string(i % 300);
        if (i % 3 == 0) {
          c.erase(k);
        } else {
          c.put(k, std::string(i % 50, 'v'), {.dirty = i % 5 == 0});
        }
        c.get(k);
      }
    });
  }
  for (auto& t : ts) t.join();
  std::uint64_t charged = 0, dirty = 0;
  for (std::size_t s = 0; s < c.shard_count(); ++s) {
    for (const auto& k : c.lru_order(s)) {
      const auto v = c.peek(k);
      charged += c.charged_bytes(k.size(), v->value.size());
      if (v->dirty) dirty += c.charged_bytes(k.size(), v->value.size());
    }
  }
  EXPECT_EQ(c.stats().bytes_used, charged);
  EXPECT_EQ(c.dirty_bytes(), c.stats().dirty_bytes);
}

TEST(Cache, HitRatioEqualsMrcComplement) {
  std::mt19937_64 rng(12);
  std::vector<std::string> keys;
  for (int i = 0; i < 5000; ++i) {
    const auto k = std::min(rng() % 200, rng() % 200);
    char buf[16];
    std::snprintf(buf, sizeof buf, "key%05llu", static_cast<unsigned long long>(k));
    keys.push_back(buf);
  }
  const auto curve = mrc::full_miss_ratio_curve(mrc::stack_distance_histogram(keys));
  for (std::size_t k : {1u, 5u, 17u, 64u, 150u, 200u}) {
    const std::size_t charge = 8 + 16 + kDefaultEntryOverhead;
    ShardedCache c(one_shard(k * charge));
    for (const auto& key : keys) {
      if (!c.get(key)) c.put(key, std::string(16, 'v'));
    }
    const auto st = c.stats();
    EXPECT_EQ(st.misses, static_cast<std::uint64_t>(std::llround(curve.miss_ratio_at(k) * keys.size()))) << k;
    EXPECT_NEAR(static_cast<double>(st.hits) / keys.size(), 1.0 - curve.miss_ratio_at(k), 1e-12) << k;
  }
}
