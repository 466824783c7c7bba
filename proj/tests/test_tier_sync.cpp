#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "tierkv/storage_backend.hpp"
#include "tierkv/tier_sync.hpp"
#include "tierkv/workload.hpp"

using namespace tierkv;
using namespace tierkv::sync;

namespace {

struct Fixture {
  std::shared_ptr<storage::SimulatedBackend> backend = std::make_shared<storage::SimulatedBackend>();
  std::unique_ptr<TieredStore> store;

  explicit Fixture(SyncPolicy policy, std::function<void(StoreOptions&)> tweak = {}) {
    StoreOptions o;
    o.sync.policy = policy;
    o.sync.background_flusher = false;
    o.cache.capacity_bytes = 1 << 20;
    o.cache.shard_count = 4;
    if (tweak) tweak(o);
    backend->set_record_history(true);
    store = std::make_unique<TieredStore>(o, backend);
  }

  void preload(const std::map<std::string, std::string>& kv) {
    std::vector<storage::WriteOp> batch;
    for (const auto& [k, v] : kv) batch.push_back(storage::WriteOp::put(k, v));
    backend->write_batch(batch);
    backend->set_record_history(false);
    backend->set_record_history(true);
  }

  storage::StorageCounters io() const { return backend->counters(); }
};

std::vector<Op> ops(std::initializer_list<Op> l) { return l; }

}  // namespace

TEST(WriteThrough, HealthySet) {
  Fixture f(SyncPolicy::kWriteThrough);
  ASSERT_TRUE(f.store->set("k", "v").ok());
  EXPECT_EQ(f.store->peek("k")->value, "v");
  EXPECT_FALSE(f.store->peek("k")->dirty);
  EXPECT_EQ(f.backend->read("k"), "v");
}

TEST(WriteThrough, FailureInvalidatesCache) {
  Fixture f(SyncPolicy::kWriteThrough);
  f.preload({{"k", "old"}});
  ASSERT_TRUE(f.store->get("k").ok());
  ASSERT_TRUE(f.store->peek("k"));
  f.backend->set_fail_every(1);
  const auto r = f.store->set("k", "new");
  EXPECT_EQ(r.status, ErrorCode::kStorageWriteFailed);
  EXPECT_FALSE(f.store->peek("k"));
  f.backend->set_fail_every(0);
  const auto reads = f.io().reads;
  EXPECT_EQ(f.store->get("k").value, "old");
  EXPECT_EQ(f.io().reads, reads + 1);
}

TEST(WriteThrough, SequentialSets) {
  Fixture f(SyncPolicy::kWriteThrough);
  f.store->set("k", "a");
  f.store->set("k", "b");
  EXPECT_EQ(f.backend->read("k"), "b");
  EXPECT_EQ(f.backend->history("k"), (std::vector<std::optional<std::string>>{"a", "b"}));
}

TEST(WriteThrough, CoalescesOneKey) {
  Fixture f(SyncPolicy::kWriteThrough);
  const auto before = f.io();
  const auto tick = ops({Op::set("k", "v1"), Op::set("k", "v2"), Op::set("k", "v3")});
  const auto res = f.store->execute_tick(tick);
  for (const auto& r : res) EXPECT_TRUE(r.ok());
  EXPECT_EQ(f.io().writes - before.writes, 1u);
  EXPECT_EQ(f.io().batches - before.batches, 1u);
  EXPECT_EQ(f.backend->history("k"), (std::vector<std::optional<std::string>>{"v3"}));
  EXPECT_EQ(f.store->peek("k")->value, "v3");
}

TEST(WriteThrough, TwoKeysOneBatch) {
  Fixture f(SyncPolicy::kWriteThrough);
  const auto tick = ops({Op::set("a", "1"), Op::set("b", "2")});
  f.store->execute_tick(tick);
  EXPECT_EQ(f.io().writes, 2u);
  EXPECT_EQ(f.io().batches, 1u);
}

TEST(WriteThrough, SingleOpTicks) {
  Fixture f(SyncPolicy::kWriteThrough);
  for (int i = 0; i < 3; ++i) f.store->set("k", std::to_string(i));
  EXPECT_EQ(f.io().writes, 3u);
  EXPECT_EQ(f.io().batches, 3u);
}

TEST(WriteThrough, FailureFailsAllCoalescedCallers) {
  Fixture f(SyncPolicy::kWriteThrough);
  f.backend->set_fail_every(1);
  const auto tick = ops({Op::set("k", "1"), Op::set("k", "2"), Op::get("k")});
  const auto res = f.store->execute_tick(tick);
  EXPECT_EQ(res[0].status, ErrorCode::kStorageWriteFailed);
  EXPECT_EQ(res[1].status, ErrorCode::kStorageWriteFailed);
  EXPECT_FALSE(f.store->peek("k"));
}

TEST(WriteThrough, BufferVisibleToIssuingConnectionOnly) {
  Fixture f(SyncPolicy::kWriteThrough);
  f.preload({{"k", "old"}});
  const auto tick = ops({Op::set("k", "new", 1), Op::get("k", 1), Op::get("k", 2)});
  const auto res = f.store->execute_tick(tick);
  EXPECT_EQ(res[1].value, "new");
  EXPECT_EQ(res[2].value, "old");
  EXPECT_EQ(f.store->get("k", 2).value, "new");
}

TEST(WriteThrough, DeleteReachesStorage) {
  Fixture f(SyncPolicy::kWriteThrough);
  f.store->set("k", "v");
  EXPECT_TRUE(f.store->del("k").existed);
  EXPECT_EQ(f.backend->read("k"), std::nullopt);
  EXPECT_FALSE(f.store->peek("k"));
}

TEST(WriteThrough, ConsistentUnderFaults) {
  for (std::uint32_t every : {1u, 3u, 7u}) {
    Fixture f(SyncPolicy::kWriteThrough, [](StoreOptions& o) { o.cache.capacity_bytes = 40 * 100; });
    f.backend->set_fail_every(every);
    std::mt19937_64 rng(every);
    for (int t = 0; t < 300; ++t) {
      std::vector<Op> tick;
      for (int i = 0; i < 1 + static_cast<int>(rng() % 6); ++i) {
        const std::string k = "k" + std::to_string(rng() % 30);
        switch (rng() % 4) {
          case 0: tick.push_back(Op::get(k, rng() % 3)); break;
          case 1: tick.push_back(Op::del(k, rng() % 3)); break;
          case 2: tick.push_back(Op::append(k, "+", rng() % 3)); break;
          default: tick.push_back(Op::set(k, std::to_string(rng()), rng() % 3));
        }
      }
      const auto res = f.store->execute_tick(tick);
      for (std::size_t i = 0; i < tick.size(); ++i) {
        if (tick[i].kind == OpKind::kSet && !res[i].ok()) {
          ASSERT_FALSE(f.store->peek(tick[i].key)) << "stale entry after failed SET";
        }
      }
      for (const auto& k : f.store->resident_keys()) {
        ASSERT_EQ(f.store->peek(k)->value, f.backend->read(k).value_or("<absent>")) << k;
      }
    }
  }
}

TEST(WriteThrough, StorageSeesSubsequenceEndingInFinal) {
  Fixture f(SyncPolicy::kWriteThrough);
  std::mt19937_64 rng(3);
  std::vector<std::string> applied;
  for (int t = 0; t < 100; ++t) {
    std::vector<Op> tick;
    for (int i = 0; i < 1 + static_cast<int>(rng() % 4); ++i) {
      applied.push_back(std::to_string(t) + ":" + std::to_string(i));
      tick.push_back(Op::set("k", applied.back()));
    }
    f.store->execute_tick(tick);
  }
  const auto h = f.backend->history("k");
  ASSERT_FALSE(h.empty());
  EXPECT_EQ(*h.back(), applied.back());
  std::size_t j = 0;
  for (const auto& v : applied) {
    if (j < h.size() && *h[j] == v) ++j;
  }
  EXPECT_EQ(j, h.size());
}

TEST(WriteBack, ImmediateAck) {
  Fixture f(SyncPolicy::kWriteBack);
  ASSERT_TRUE(f.store->set("k", "v").ok());
  EXPECT_EQ(f.io().writes, 0u);
  EXPECT_TRUE(f.store->peek("k")->dirty);
}

TEST(WriteBack, FlushMergesUpdates) {
  Fixture f(SyncPolicy::kWriteBack);
  for (int i = 0; i < 50; ++i) f.store->set("k" + std::to_string(i % 5), std::to_string(i));
  EXPECT_EQ(f.store->flush(), 5u);
  EXPECT_EQ(f.io().writes, 5u);
  EXPECT_EQ(f.io().batches, 1u);
  EXPECT_EQ(f.store->stats().cache.dirty_bytes, 0u);
  EXPECT_EQ(f.backend->read("k3"), "48");
  EXPECT_EQ(f.store->flush(), 0u);
}

TEST(WriteBack, Backpressure) {
  Fixture f(SyncPolicy::kWriteBack, [](StoreOptions& o) {
    o.sync.dirty_max_bytes = 3 * (2 + 10 + 64);
  });
  for (int i = 0; i < 3; ++i) ASSERT_TRUE(f.store->set("k" + std::to_string(i), std::string(10, 'v')).ok());
  EXPECT_EQ(f.store->set("k9", std::string(10, 'v')).status, ErrorCode::kBackpressure);
  EXPECT_EQ(f.store->stats().backpressure, 1u);
  f.store->flush();
  EXPECT_TRUE(f.store->set("k9", std::string(10, 'v')).ok());
}

TEST(WriteBack, OutageRetried) {
  Fixture f(SyncPolicy::kWriteBack);
  f.store->set("a", "1");
  f.store->set("b", "2");
  f.backend->set_unavailable(true);
  EXPECT_EQ(f.store->flush(), 0u);
  EXPECT_EQ(f.store->stats().flush_failures, 1u);
  EXPECT_TRUE(f.store->peek("a")->dirty);
  f.backend->set_unavailable(false);
  EXPECT_EQ(f.store->flush(), 2u);
  EXPECT_EQ(f.backend->read("b"), "2");
  EXPECT_FALSE(f.store->peek("b")->dirty);
}

TEST(WriteBack, DeleteFlushesTombstone) {
  Fixture f(SyncPolicy::kWriteBack);
  f.preload({{"k", "v"}});
  EXPECT_EQ(f.store->get("k").value, "v");
  EXPECT_TRUE(f.store->del("k").existed);
  EXPECT_EQ(f.store->get("k").value, std::nullopt);
  f.store->flush();
  EXPECT_EQ(f.backend->read("k"), std::nullopt);
  EXPECT_FALSE(f.store->peek("k"));
}

TEST(WriteBack, DeferredFetchOneMultiRead) {
  Fixture f(SyncPolicy::kWriteBack);
  f.preload({{"a", "A"}, {"b", "B"}});
  const auto tick = ops({Op::append("a", "1"), Op::append("b", "2"), Op::append("c", "3")});
  const auto res = f.store->execute_tick(tick);
  for (const auto& r : res) EXPECT_TRUE(r.ok());
  EXPECT_EQ(f.io().multi_reads, 1u);
  EXPECT_EQ(f.io().reads, 3u);
  EXPECT_EQ(f.io().read_calls, 0u);
  EXPECT_EQ(f.store->stats().deferred_fetches, 1u);
  EXPECT_EQ(f.store->peek("a")->value, "A1");
  EXPECT_EQ(f.store->peek("c")->value, "3");
  EXPECT_TRUE(f.store->peek("c")->dirty);
}

TEST(WriteBack, ResidentUpdateNoRead) {
  Fixture f(SyncPolicy::kWriteBack);
  f.store->set("a", "x");
  f.store->append("a", "y");
  EXPECT_EQ(f.io().reads, 0u);
  EXPECT_EQ(f.store->peek("a")->value, "xy");
}

TEST(WriteBack, ParkedOpsKeepArrivalOrder) {
  Fixture f(SyncPolicy::kWriteBack);
  f.preload({{"a", "A"}});
  const auto tick = ops({Op::append("a", "1"), Op::set("a", "S"), Op::append("a", "2"), Op::get("a")});
  const auto res = f.store->execute_tick(tick);
  EXPECT_EQ(res[3].value, "S2");
  EXPECT_EQ(f.io().multi_reads, 1u);
}

TEST(WriteBack, FetchBatchLimit) {
  Fixture f(SyncPolicy::kWriteBack, [](StoreOptions& o) { o.sync.deferred_fetch_batch = 2; });
  std::vector<Op> tick;
  for (int i = 0; i < 5; ++i) tick.push_back(Op::append("m" + std::to_string(i), "x"));
  f.store->execute_tick(tick);
  EXPECT_EQ(f.io().multi_reads, 3u);
}

TEST(WriteBack, ConvergesToReferenceMap) {
  Fixture f(SyncPolicy::kWriteBack, [](StoreOptions& o) {
    o.sync.dirty_max_bytes = 4000;
    o.cache.capacity_bytes = 8000;
    o.cache.shard_count = 2;
  });
  std::mt19937_64 rng(13);
  std::map<std::string, std::string> ref;
  std::uint64_t max_entry = 0;
  for (int t = 0; t < 2000; ++t) {
    const std::string k = "key" + std::to_string(rng() % 60);
    const std::string v(rng() % 40, 'a' + rng() % 26);
    max_entry = std::max<std::uint64_t>(max_entry, k.size() + v.size() + 64);
    const auto dirty_before = f.store->cache().dirty_bytes();
    OpResult r;
    if (rng() % 5 == 0) {
      r = f.store->del(k);
      if (r.ok()) ref.erase(k);
    } else {
      r = f.store->set(k, v);
      if (r.ok()) ref[k] = v;
    }
    if (r.status == ErrorCode::kBackpressure) EXPECT_GE(dirty_before, 4000u);
    ASSERT_LE(f.store->cache().dirty_bytes(), 4000 + max_entry);
    if (t % 97 == 0 || r.status == ErrorCode::kBackpressure) {
      std::set<std::string> dirty;
      for (const auto& k2 : f.store->resident_keys()) {
        if (f.store->peek(k2)->dirty) dirty.insert(k2);
      }
      const auto w0 = f.io().writes;
      EXPECT_EQ(f.store->flush(), dirty.size());
      EXPECT_EQ(f.io().writes - w0, dirty.size());
    }
  }
  f.store->flush();
  EXPECT_EQ(f.backend->snapshot(), ref);
}

TEST(TieredRead, MissThenHit) {
  Fixture f(SyncPolicy::kWriteBack);
  f.preload({{"k", "v"}});
  auto r = f.store->get("k");
  EXPECT_EQ(r.value, "v");
  EXPECT_FALSE(r.hit);
  r = f.store->get("k");
  EXPECT_TRUE(r.hit);
  EXPECT_EQ(f.io().reads, 1u);
  EXPECT_FALSE(f.store->peek("k")->dirty);
  EXPECT_GT(f.store->stats().miss_penalty_ns, 0u);
}

TEST(TieredRead, AbsentNotCached) {
  Fixture f(SyncPolicy::kWriteThrough);
  EXPECT_EQ(f.store->get("nope").value, std::nullopt);
  EXPECT_FALSE(f.store->peek("nope"));
  EXPECT_TRUE(f.store->resident_keys().empty());
}

TEST(TieredRead, ReadFailureSurfaces) {
  Fixture f(SyncPolicy::kWriteThrough);
  f.backend->set_unavailable(true);
  EXPECT_EQ(f.store->get("k").status, ErrorCode::kStorageReadFailed);
}

TEST(CacheOnly, NoStorage) {
  StoreOptions o;
  o.sync.policy = SyncPolicy::kCacheOnly;
  TieredStore s(o, nullptr);
  s.set("k", "v");
  EXPECT_EQ(s.get("k").value, "v");
  EXPECT_EQ(s.get("x").value, std::nullopt);
  EXPECT_TRUE(s.del("k").existed);
}

TEST(Compression, StoreRoundTrip) {
  const auto corpus = workload::template_corpus(400, 2);
  Fixture f(SyncPolicy::kWriteBack, [&](StoreOptions& o) {
    o.compression = true;
    o.dictionary = compress::train_dictionary(std::vector<std::string>(corpus.begin(), corpus.begin() + 100));
  });
  for (std::size_t i = 0; i < corpus.size(); ++i) f.store->set("k" + std::to_string(i), corpus[i]);
  const auto st = f.store->stats();
  EXPECT_LT(st.compression.bytes_out, st.compression.bytes_in);
  f.store->flush();
  // Storage holds raw values.
  for (std::size_t i = 0; i < corpus.size(); i += 37) {
    EXPECT_EQ(f.backend->read("k" + std::to_string(i)), corpus[i]);
    EXPECT_EQ(f.store->get("k" + std::to_string(i)).value, corpus[i]);
  }
}

TEST(Policy, Parse) {
  EXPECT_EQ(parse_policy("wt"), SyncPolicy::kWriteThrough);
  EXPECT_EQ(parse_policy("write_back"), SyncPolicy::kWriteBack);
  EXPECT_EQ(parse_policy("cache"), SyncPolicy::kCacheOnly);
  EXPECT_THROW(parse_policy("sometimes"), Error);
}
