#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "tierkv/compression.hpp"
#include "tierkv/error.hpp"
#include "tierkv/kv_core.hpp"
#include "tierkv/storage_backend.hpp"

// Two-tier store: the sharded cache in front of a storage backend, kept in
// sync by one of three policies.
//
//   CacheOnly     no storage tier; misses are absent
//   WriteThrough  writes reach storage before they are acknowledged
//   WriteBack     writes are acknowledged from cache and flushed in batches
//
// Operations are executed in ticks. A tick is one drain of an executor
// queue; write-through coalescing and write-back deferred fetching both use
// it as their window.
namespace tierkv::sync {

enum class SyncPolicy { kCacheOnly, kWriteThrough, kWriteBack };

std::string_view to_string(SyncPolicy p);
SyncPolicy parse_policy(std::string_view s);  // cache|wt|write_through|wb|write_back

struct SyncOptions {
  SyncPolicy policy = SyncPolicy::kWriteBack;
  std::chrono::milliseconds flush_interval{200};
  std::uint64_t dirty_max_bytes = 16ull << 20;
  double dirty_high_watermark = 0.9;
  std::size_t deferred_fetch_batch = 64;
  double replica_factor = 2.0;  // consumed by the evaluator only
  bool background_flusher = true;
};

struct StoreOptions {
  kv::CacheOptions cache;
  SyncOptions sync;
  bool compression = false;
  compress::CompressionManager::Options compression_options;
  std::optional<compress::Dictionary> dictionary;
};

enum class OpKind { kGet, kSet, kDel, kAppend };

// kAppend is an in-process read-modify-write (value += operand). It is the
// update that needs the old value, so it exercises deferred fetching.
struct Op {
  OpKind kind = OpKind::kGet;
  std::string key;
  std::string value;
  std::uint64_t connection = 0;

  static Op get(std::string k, std::uint64_t conn = 0) { return {OpKind::kGet, std::move(k), {}, conn}; }
  static Op set(std::string k, std::string v, std::uint64_t conn = 0) {
    return {OpKind::kSet, std::move(k), std::move(v), conn};
  }
  static Op del(std::string k, std::uint64_t conn = 0) { return {OpKind::kDel, std::move(k), {}, conn}; }
  static Op append(std::string k, std::string v, std::uint64_t conn = 0) {
    return {OpKind::kAppend, std::move(k), std::move(v), conn};
  }
};

struct OpResult {
  ErrorCode status = ErrorCode::kOk;
  std::optional<std::string> value;  // GET result
  bool existed = false;              // DEL: key was present
  bool hit = false;                  // GET served from cache
  std::string message;

  bool ok() const { return status == ErrorCode::kOk; }
};

struct StoreStats {
  kv::CacheStats cache;
  storage::StorageCounters storage;
  std::uint64_t gets = 0;
  std::uint64_t sets = 0;
  std::uint64_t dels = 0;
  std::uint64_t appends = 0;
  std::uint64_t errors = 0;
  std::uint64_t backpressure = 0;
  std::uint64_t wt_batches = 0;
  std::uint64_t wt_failures = 0;  // failed write-through batches
  std::uint64_t flushes = 0;
  std::uint64_t flush_failures = 0;  // retry counter
  std::uint64_t flushed_keys = 0;
  std::uint64_t deferred_fetches = 0;  // multi_read calls for parked updates
  std::uint64_t parked_ops = 0;
  std::uint64_t miss_penalty_ns = 0;  // time spent reading storage on GET misses
  std::uint64_t ticks = 0;
  compress::CompressionStats compression;
  std::uint64_t retrains = 0;
};

class TieredStore {
 public:
  // `backend` may be null only for CacheOnly.
  TieredStore(StoreOptions options, std::shared_ptr<storage::StorageBackend> backend);
  ~TieredStore();

  TieredStore(const TieredStore&) = delete;
  TieredStore& operator=(const TieredStore&) = delete;

  // Executes one tick. Results are in op order. Per-op failures are
  // reported in OpResult; the call itself only throws on programming errors.
  std::vector<OpResult> execute_tick(std::span<const Op> ops);

  OpResult get(std::string_view key, std::uint64_t conn = 0);
  OpResult set(std::string_view key, std::string_view value, std::uint64_t conn = 0);
  OpResult del(std::string_view key, std::uint64_t conn = 0);
  OpResult append(std::string_view key, std::string_view value, std::uint64_t conn = 0);

  // Writes every dirty entry back (write-back). Returns the number of keys
  // flushed; 0 with the retry counter bumped when storage refuses the batch.
  std::size_t flush();

  // Retrains the dictionary if the monitor asks for it.
  bool maybe_retrain();

  // Decoded view of a resident entry without recency side effects.
  struct Resident {
    std::string value;
    bool dirty = false;
    bool tombstone = false;
  };
  std::optional<Resident> peek(std::string_view key) const;
  // All resident keys (for consistency checks; not cheap).
  std::vector<std::string> resident_keys() const;

  StoreStats stats() const;
  void reset_counters();

  std::size_t shard_count() const { return cache_.shard_count(); }
  std::size_t shard_of(std::string_view key) const { return cache_.shard_of(key); }
  const StoreOptions& options() const { return options_; }
  SyncPolicy policy() const { return options_.sync.policy; }
  storage::StorageBackend* backend() const { return backend_.get(); }
  const kv::ShardedCache& cache() const { return cache_; }
  compress::CompressionManager* compression() const { return compression_.get(); }

 private:
  struct Tick;

  void run_cache_only(Tick& t);
  void run_write_through(Tick& t);
  void run_write_back(Tick& t);

  OpResult tiered_read(std::string_view key, bool populate);
  void apply_wb(Tick& t, std::size_t i, const std::optional<std::string>* fetched);
  void resolve_parked(Tick& t);
  void put_clean(std::string_view key, std::string_view raw);
  void put_dirty(std::string_view key, std::string_view raw, bool tombstone);
  std::optional<std::string> resident_value(std::string_view key, bool* tombstone, bool touch);
  std::string decode(const kv::CachedValue& v) const;

  void flusher_loop();
  void maybe_wake_flusher();

  StoreOptions options_;
  std::shared_ptr<storage::StorageBackend> backend_;
  kv::ShardedCache cache_;
  std::unique_ptr<compress::CompressionManager> compression_;
  std::vector<std::unique_ptr<std::mutex>> tick_mu_;

  std::mutex flush_mu_;
  std::mutex flusher_mu_;
  std::condition_variable flusher_cv_;
  bool stop_ = false;
  bool wake_ = false;
  std::thread flusher_;

  std::atomic<std::uint64_t> gets_{0};
  std::atomic<std::uint64_t> sets_{0};
  std::atomic<std::uint64_t> dels_{0};
  std::atomic<std::uint64_t> appends_{0};
  std::atomic<std::uint64_t> errors_{0};
  std::atomic<std::uint64_t> backpressure_{0};
  std::atomic<std::uint64_t> wt_batches_{0};
  std::atomic<std::uint64_t> wt_failures_{0};
  std::atomic<std::uint64_t> flushes_{0};
  std::atomic<std::uint64_t> flush_failures_{0};
  std::atomic<std::uint64_t> flushed_keys_{0};
  std::atomic<std::uint64_t> deferred_fetches_{0};
  std::atomic<std::uint64_t> parked_ops_{0};
  std::atomic<std::uint64_t> miss_penalty_ns_{0};
  std::atomic<std::uint64_t> ticks_{0};
};

}  // namespace tierkv::sync
