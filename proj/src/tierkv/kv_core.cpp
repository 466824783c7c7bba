#include "tierkv/kv_core.hpp"

#include <bit>

#include "tierkv/codec.hpp"
#include "tierkv/error.hpp"

namespace tierkv::kv {

namespace {

struct StringHash {
  using is_transparent = void;
  std::size_t operator()(std::string_view s) const noexcept { return std::hash<std::string_view>{}(s); }
};

}  // namespace

struct ShardedCache::Shard {
  struct Entry {
    std::string key;
    std::string value;
    std::uint32_t dict_version = 0;
    bool dirty = false;
    bool tombstone = false;
    std::uint64_t last_touch = 0;
    std::uint64_t version = 0;
    std::size_t charged = 0;
  };
  using List = std::list<Entry>;

  mutable std::mutex mu;
  std::size_t capacity = 0;
  std::size_t used = 0;
  std::size_t dirty_bytes = 0;
  std::size_t dirty_entries = 0;
  std::atomic<std::uint64_t>* dirty_total = nullptr;
  std::uint64_t clock = 0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t evictions = 0;
  List lru;  // front = most recently touched
  std::unordered_map<std::string, List::iterator, StringHash, std::equal_to<>> index;

  void touch(List::iterator it) {
    it->last_touch = ++clock;
    lru.splice(lru.begin(), lru, it);
  }

  void set_dirty(Entry& e, bool dirty) {
    if (e.dirty == dirty) return;
    e.dirty = dirty;
    if (dirty) {
      dirty_bytes += e.charged;
      ++dirty_entries;
      *dirty_total += e.charged;
    } else {
      dirty_bytes -= e.charged;
      --dirty_entries;
      *dirty_total -= e.charged;
    }
  }

  void remove(List::iterator it) {
    set_dirty(*it, false);
    used -= it->charged;
    index.erase(it->key);
    lru.erase(it);
  }

  static CachedValue view(const Entry& e) { return {e.value, e.dict_version, e.tombstone, e.dirty}; }
};

ShardedCache::ShardedCache(CacheOptions options) : options_(options) {
  if (options_.shard_count == 0 || !std::has_single_bit(options_.shard_count)) {
    raise(ErrorCode::kInvalidArgument, "cache shard count must be a power of two");
  }
  const std::size_t base = options_.capacity_bytes / options_.shard_count;
  const std::size_t extra = options_.capacity_bytes % options_.shard_count;
  for (std::size_t i = 0; i < options_.shard_count; ++i) {
    auto s = std::make_unique<Shard>();
    s->capacity = base + (i < extra ? 1 : 0);
    s->dirty_total = &dirty_total_;
    shards_.push_back(std::move(s));
  }
}

ShardedCache::~ShardedCache() = default;

std::size_t ShardedCache::shard_of(std::string_view key) const {
  return codec::fnv1a64(key) & (shards_.size() - 1);
}

ShardedCache::Shard& ShardedCache::shard_for(std::string_view key) const { return *shards_[shard_of(key)]; }

std::optional<CachedValue> ShardedCache::get(std::string_view key) {
  Shard& s = shard_for(key);
  std::lock_guard lock(s.mu);
  auto it = s.index.find(key);
  if (it == s.index.end()) {
    ++s.misses;
    return std::nullopt;
  }
  ++s.hits;
  s.touch(it->second);
  return Shard::view(*it->second);
}

std::optional<CachedValue> ShardedCache::peek(std::string_view key) const {
  Shard& s = shard_for(key);
  std::lock_guard lock(s.mu);
  auto it = s.index.find(key);
  if (it == s.index.end()) return std::nullopt;
  return Shard::view(*it->second);
}

bool ShardedCache::contains(std::string_view key) const {
  Shard& s = shard_for(key);
  std::lock_guard lock(s.mu);
  return s.index.find(key) != s.index.end();
}

std::vector<std::string> ShardedCache::put(std::string_view key, std::string value, PutOptions options) {
  Shard& s = shard_for(key);
  const std::size_t charge = charged_bytes(key.size(), value.size());
  std::lock_guard lock(s.mu);
  if (charge > s.capacity) {
    raise(ErrorCode::kCapacityExceeded, "entry of " + std::to_string(charge) +
                                            " bytes exceeds shard capacity " + std::to_string(s.capacity));
  }

  auto existing = s.index.find(key);
  std::size_t old_charge = 0;
  bool old_clean = false;
  if (existing != s.index.end()) {
    old_charge = existing->second->charged;
    old_clean = !existing->second->dirty;
  }

  const std::size_t after = s.used - old_charge + charge;
  if (after > s.capacity) {
    const std::size_t clean_bytes = (s.used - s.dirty_bytes) - (old_clean ? old_charge : 0);
    if (after - s.capacity > clean_bytes) {
      raise(ErrorCode::kDirtyOverflow, "cache shard is full of dirty entries");
    }
  }

  if (existing != s.index.end()) s.remove(existing->second);

  std::vector<std::string> evicted;
  auto victim = s.lru.end();
  while (s.used + charge > s.capacity && victim != s.lru.begin()) {
    --victim;
    if (victim->dirty) continue;
    auto doomed = victim++;
    evicted.push_back(doomed->key);
    s.remove(doomed);
    ++s.evictions;
  }

  Shard::Entry e;
  e.key = std::string(key);
  e.value = std::move(value);
  e.dict_version = options.dict_version;
  e.tombstone = options.tombstone;
  e.charged = charge;
  e.last_touch = ++s.clock;
  e.version = s.clock;
  s.lru.push_front(std::move(e));
  s.index.emplace(s.lru.front().key, s.lru.begin());
  s.used += charge;
  s.set_dirty(s.lru.front(), options.dirty);
  return evicted;
}

bool ShardedCache::erase(std::string_view key) {
  Shard& s = shard_for(key);
  std::lock_guard lock(s.mu);
  auto it = s.index.find(key);
  if (it == s.index.end()) return false;
  s.remove(it->second);
  return true;
}

std::size_t ShardedCache::mark_clean(std::span<const std::string> keys) {
  std::size_t cleaned = 0;
  for (const auto& key : keys) {
    Shard& s = shard_for(key);
    std::lock_guard lock(s.mu);
    auto it = s.index.find(key);
    if (it == s.index.end() || !it->second->dirty) continue;
    ++cleaned;
    if (it->second->tombstone) {
      s.remove(it->second);
    } else {
      s.set_dirty(*it->second, false);
    }
  }
  return cleaned;
}

std::size_t ShardedCache::mark_clean(std::span<const DirtyRecord> records) {
  std::size_t cleaned = 0;
  for (const auto& rec : records) {
    Shard& s = shard_for(rec.key);
    std::lock_guard lock(s.mu);
    auto it = s.index.find(rec.key);
    if (it == s.index.end() || !it->second->dirty || it->second->version != rec.version) continue;
    ++cleaned;
    if (it->second->tombstone) {
      s.remove(it->second);
    } else {
      s.set_dirty(*it->second, false);
    }
  }
  return cleaned;
}

std::vector<DirtyRecord> ShardedCache::dirty_records(std::size_t shard) const {
  const Shard& s = *shards_.at(shard);
  std::lock_guard lock(s.mu);
  std::vector<DirtyRecord> out;
  out.reserve(s.dirty_entries);
  // Oldest write first so storage sees per-shard writes in cache order.
  for (auto it = s.lru.rbegin(); it != s.lru.rend(); ++it) {
    if (!it->dirty) continue;
    out.push_back({it->key, it->value, it->dict_version, it->tombstone, it->version});
  }
  return out;
}

std::vector<DirtyRecord> ShardedCache::dirty_records() const {
  std::vector<DirtyRecord> out;
  for (std::size_t i = 0; i < shards_.size(); ++i) {
    auto part = dirty_records(i);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

std::vector<std::string> ShardedCache::lru_order(std::size_t shard) const {
  const Shard& s = *shards_.at(shard);
  std::lock_guard lock(s.mu);
  std::vector<std::string> out;
  out.reserve(s.lru.size());
  for (const auto& e : s.lru) out.push_back(e.key);
  return out;
}

CacheStats ShardedCache::stats() const {
  CacheStats st;
  for (const auto& sp : shards_) {
    std::lock_guard lock(sp->mu);
    st.hits += sp->hits;
    st.misses += sp->misses;
    st.evictions += sp->evictions;
    st.bytes_used += sp->used;
    st.bytes_capacity += sp->capacity;
    st.dirty_bytes += sp->dirty_bytes;
    st.entries += sp->index.size();
    st.dirty_entries += sp->dirty_entries;
  }
  return st;
}

void ShardedCache::reset_counters() {
  for (auto& sp : shards_) {
    std::lock_guard lock(sp->mu);
    sp->hits = sp->misses = sp->evictions = 0;
  }
}

void ShardedCache::clear() {
  for (auto& sp : shards_) {
    std::lock_guard lock(sp->mu);
    *sp->dirty_total -= sp->dirty_bytes;
    sp->index.clear();
    sp->lru.clear();
    sp->used = sp->dirty_bytes = sp->dirty_entries = 0;
  }
}

}  // namespace tierkv::kv
