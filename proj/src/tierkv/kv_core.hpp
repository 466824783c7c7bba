#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

// Cache tier: a sharded in-memory hash map with per-shard LRU eviction,
// byte-accurate accounting and dirty tracking for write-back.
//
// Every entry is charged key length + stored value length + a fixed
// per-entry overhead. Dirty entries are never evicted. Recency uses a
// per-shard logical clock.
namespace tierkv::kv {

inline constexpr std::size_t kDefaultEntryOverhead = 64;

struct CacheOptions {
  std::size_t capacity_bytes = 64 << 20;
  std::size_t shard_count = 16;  // power of two
  std::size_t entry_overhead = kDefaultEntryOverhead;
};

struct CacheStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t evictions = 0;
  std::uint64_t bytes_used = 0;
  std::uint64_t bytes_capacity = 0;
  std::uint64_t dirty_bytes = 0;
  std::uint64_t entries = 0;
  std::uint64_t dirty_entries = 0;
};

struct PutOptions {
  bool dirty = false;
  bool tombstone = false;         // write-back delete waiting to be flushed
  std::uint32_t dict_version = 0;  // 0 = value stored uncompressed
};

struct CachedValue {
  std::string value;
  std::uint32_t dict_version = 0;
  bool tombstone = false;
  bool dirty = false;
};

// Snapshot of a dirty entry. `version` identifies the write so a flush only
// cleans the entry if it was not overwritten meanwhile.
struct DirtyRecord {
  std::string key;
  std::string value;
  std::uint32_t dict_version = 0;
  bool tombstone = false;
  std::uint64_t version = 0;
};

class ShardedCache {
 public:
  explicit ShardedCache(CacheOptions options);
  ~ShardedCache();

  ShardedCache(const ShardedCache&) = delete;
  ShardedCache& operator=(const ShardedCache&) = delete;

  // Updates recency and hit/miss counters.
  std::optional<CachedValue> get(std::string_view key);

  // No recency or counter side effects.
  std::optional<CachedValue> peek(std::string_view key) const;
  bool contains(std::string_view key) const;

  // Inserts or replaces `key` and returns the keys evicted to make room.
  // Throws kCapacityExceeded if the entry alone exceeds the shard capacity
  // and kDirtyOverflow if only dirty entries are left to evict. On either
  // error the cache is unchanged.
  std::vector<std::string> put(std::string_view key, std::string value, PutOptions options = {});

  bool erase(std::string_view key);

  // Clears the dirty flag of resident keys; flushed tombstones are dropped.
  std::size_t mark_clean(std::span<const std::string> keys);
  // Same, but only for entries whose write version still matches.
  std::size_t mark_clean(std::span<const DirtyRecord> records);

  std::vector<DirtyRecord> dirty_records() const;
  std::vector<DirtyRecord> dirty_records(std::size_t shard) const;

  // Keys of one shard from most to least recently used.
  std::vector<std::string> lru_order(std::size_t shard) const;

  CacheStats stats() const;
  // Lock-free total of dirty bytes across shards.
  std::uint64_t dirty_bytes() const { return dirty_total_.load(std::memory_order_relaxed); }
  void reset_counters();
  void clear();

  std::size_t shard_count() const { return shards_.size(); }
  std::size_t shard_of(std::string_view key) const;
  std::size_t charged_bytes(std::size_t key_len, std::size_t value_len) const {
    return key_len + value_len + options_.entry_overhead;
  }
  const CacheOptions& options() const { return options_; }

 private:
  struct Shard;

  Shard& shard_for(std::string_view key) const;

  CacheOptions options_;
  std::vector<std::unique_ptr<Shard>> shards_;
  std::atomic<std::uint64_t> dirty_total_{0};
};

}  // namespace tierkv::kv
