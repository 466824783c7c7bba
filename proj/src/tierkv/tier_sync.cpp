#include "tierkv/tier_sync.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>
#include <unordered_set>

namespace tierkv::sync {

std::string_view to_string(SyncPolicy p) {
  switch (p) {
    case SyncPolicy::kCacheOnly:
      return "cache";
    case SyncPolicy::kWriteThrough:
      return "write_through";
    case SyncPolicy::kWriteBack:
      return "write_back";
  }
  return "?";
}

SyncPolicy parse_policy(std::string_view s) {
  if (s == "cache" || s == "cache_only") return SyncPolicy::kCacheOnly;
  if (s == "wt" || s == "write_through") return SyncPolicy::kWriteThrough;
  if (s == "wb" || s == "write_back") return SyncPolicy::kWriteBack;
  raise(ErrorCode::kConfigError, "unknown sync policy '" + std::string(s) + "'");
}

struct TieredStore::Tick {
  std::span<const Op> ops;
  std::vector<OpResult> results;
  std::vector<std::size_t> parked;
  std::unordered_set<std::string> parked_keys;
};

namespace {

OpResult failure(ErrorCode code, std::string message) {
  OpResult r;
  r.status = code;
  r.message = std::move(message);
  return r;
}

std::uint64_t elapsed_ns(std::chrono::steady_clock::time_point since) {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - since).count());
}

}  // namespace

TieredStore::TieredStore(StoreOptions options, std::shared_ptr<storage::StorageBackend> backend)
    : options_(std::move(options)), backend_(std::move(backend)), cache_(options_.cache) {
  if (options_.sync.policy != SyncPolicy::kCacheOnly && !backend_) {
    raise(ErrorCode::kInvalidArgument, "tiered policy needs a storage backend");
  }
  if (options_.sync.policy == SyncPolicy::kWriteBack && options_.sync.dirty_max_bytes == 0) {
    raise(ErrorCode::kInvalidArgument, "dirty_max_bytes must be > 0 for write-back");
  }
  if (options_.sync.deferred_fetch_batch == 0) options_.sync.deferred_fetch_batch = 1;
  if (options_.compression) {
    if (options_.dictionary) {
      compression_ = std::make_unique<compress::CompressionManager>(options_.compression_options,
                                                                     *options_.dictionary);
    } else {
      compression_ = std::make_unique<compress::CompressionManager>(options_.compression_options);
    }
  }
  for (std::size_t i = 0; i < cache_.shard_count(); ++i) tick_mu_.push_back(std::make_unique<std::mutex>());
  const bool wb = options_.sync.policy == SyncPolicy::kWriteBack;
  if (options_.sync.background_flusher && (wb || compression_)) {
    flusher_ = std::thread([this] { flusher_loop(); });
  }
}

TieredStore::~TieredStore() {
  {
    std::lock_guard lock(flusher_mu_);
    stop_ = true;
  }
  flusher_cv_.notify_all();
  if (flusher_.joinable()) flusher_.join();
  try {
    flush();
  } catch (...) {
  }
}

// ---------------------------------------------------------------------------
// Cache helpers

std::string TieredStore::decode(const kv::CachedValue& v) const {
  if (v.dict_version == 0 || !compression_) return v.value;
  return compression_->decode(v.value, v.dict_version);
}

void TieredStore::put_clean(std::string_view key, std::string_view raw) {
  try {
    if (compression_) {
      auto e = compression_->encode(raw);
      cache_.put(key, std::move(e.blob), {.dict_version = e.version});
    } else {
      cache_.put(key, std::string(raw));
    }
  } catch (const Error& e) {
    // Too large for a shard, or the shard is pinned by dirty entries: the
    // value simply stays uncached.
    if (e.code() != ErrorCode::kCapacityExceeded && e.code() != ErrorCode::kDirtyOverflow) throw;
  }
}

void TieredStore::put_dirty(std::string_view key, std::string_view raw, bool tombstone) {
  try {
    if (compression_ && !tombstone) {
      auto e = compression_->encode(raw);
      cache_.put(key, std::move(e.blob), {.dirty = true, .dict_version = e.version});
    } else {
      cache_.put(key, std::string(raw), {.dirty = true, .tombstone = tombstone});
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kDirtyOverflow) raise(ErrorCode::kBackpressure, e.what());
    throw;
  }
}

std::optional<std::string> TieredStore::resident_value(std::string_view key, bool* tombstone, bool touch) {
  auto v = touch ? cache_.get(key) : cache_.peek(key);
  if (!v) return std::nullopt;
  *tombstone = v->tombstone;
  if (v->tombstone) return std::string();
  return decode(*v);
}

OpResult TieredStore::tiered_read(std::string_view key, bool populate) {
  OpResult r;
  bool tomb = false;
  if (auto v = resident_value(key, &tomb, true)) {
    r.hit = true;
    if (!tomb) r.value = std::move(*v);
    return r;
  }
  if (!backend_ || options_.sync.policy == SyncPolicy::kCacheOnly) return r;
  const auto start = std::chrono::steady_clock::now();
  std::optional<std::string> found;
  try {
    found = backend_->read(key);
  } catch (const Error& e) {
    miss_penalty_ns_ += elapsed_ns(start);
    return failure(ErrorCode::kStorageReadFailed, e.what());
  }
  miss_penalty_ns_ += elapsed_ns(start);
  if (found && populate) put_clean(key, *found);
  r.value = std::move(found);
  return r;
}

// ---------------------------------------------------------------------------
// Ticks

std::vector<OpResult> TieredStore::execute_tick(std::span<const Op> ops) {
  Tick t;
  t.ops = ops;
  t.results.resize(ops.size());
  if (ops.empty()) return std::move(t.results);

  std::vector<std::size_t> shards;
  shards.reserve(ops.size());
  for (const auto& op : ops) shards.push_back(cache_.shard_of(op.key));
  std::sort(shards.begin(), shards.end());
  shards.erase(std::unique(shards.begin(), shards.end()), shards.end());
  std::vector<std::unique_lock<std::mutex>> locks;
  locks.reserve(shards.size());
  for (auto s : shards) locks.emplace_back(*tick_mu_[s]);

  for (const auto& op : ops) {
    switch (op.kind) {
      case OpKind::kGet:
        ++gets_;
        break;
      case OpKind::kSet:
        ++sets_;
        break;
      case OpKind::kDel:
        ++dels_;
        break;
      case OpKind::kAppend:
        ++appends_;
        break;
    }
  }

  switch (options_.sync.policy) {
    case SyncPolicy::kCacheOnly:
      run_cache_only(t);
      break;
    case SyncPolicy::kWriteThrough:
      run_write_through(t);
      break;
    case SyncPolicy::kWriteBack:
      run_write_back(t);
      break;
  }
  ++ticks_;
  for (const auto& r : t.results) {
    if (!r.ok()) ++errors_;
  }
  return std::move(t.results);
}

void TieredStore::run_cache_only(Tick& t) {
  for (std::size_t i = 0; i < t.ops.size(); ++i) {
    const Op& op = t.ops[i];
    OpResult& r = t.results[i];
    try {
      if (op.kind != OpKind::kGet) storage::validate_key(op.key);
      switch (op.kind) {
        case OpKind::kGet:
          r = tiered_read(op.key, false);
          break;
        case OpKind::kSet:
          if (compression_) {
            auto e = compression_->encode(op.value);
            cache_.put(op.key, std::move(e.blob), {.dict_version = e.version});
          } else {
            cache_.put(op.key, op.value);
          }
          break;
        case OpKind::kDel:
          r.existed = cache_.erase(op.key);
          break;
        case OpKind::kAppend: {
          bool tomb = false;
          auto base = resident_value(op.key, &tomb, true).value_or(std::string());
          base += op.value;
          if (compression_) {
            auto e = compression_->encode(base);
            cache_.put(op.key, std::move(e.blob), {.dict_version = e.version});
          } else {
            cache_.put(op.key, std::move(base));
          }
          break;
        }
      }
    } catch (const Error& e) {
      r = failure(e.code(), e.what());
    }
  }
}

void TieredStore::run_write_through(Tick& t) {
  // Temporary update buffer for this tick: the final value per key plus
  // every caller waiting on it. Nothing reaches the main cache until the
  // storage batch succeeds.
  struct Pending {
    std::optional<std::string> value;
    std::vector<std::size_t> callers;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, Pending> pending;
  std::map<std::pair<std::uint64_t, std::string>, std::optional<std::string>> conn_view;

  auto stage = [&](const Op& op, std::size_t i, std::optional<std::string> value) {
    auto [it, fresh] = pending.try_emplace(op.key);
    if (fresh) order.push_back(op.key);
    it->second.value = value;
    it->second.callers.push_back(i);
    conn_view[{op.connection, op.key}] = std::move(value);
  };

  for (std::size_t i = 0; i < t.ops.size(); ++i) {
    const Op& op = t.ops[i];
    OpResult& r = t.results[i];
    try {
      if (op.kind != OpKind::kGet) storage::validate_key(op.key);
      switch (op.kind) {
        case OpKind::kGet: {
          // Read-your-own-write for the issuing connection only.
          auto own = conn_view.find({op.connection, op.key});
          if (own != conn_view.end()) {
            r.value = own->second;
          } else {
            r = tiered_read(op.key, true);
          }
          break;
        }
        case OpKind::kSet:
          stage(op, i, op.value);
          break;
        case OpKind::kDel: {
          auto p = pending.find(op.key);
          if (p != pending.end()) {
            r.existed = p->second.value.has_value();
          } else {
            bool tomb = false;
            r.existed = resident_value(op.key, &tomb, false).has_value() && !tomb;
          }
          stage(op, i, std::nullopt);
          break;
        }
        case OpKind::kAppend: {
          std::string base;
          auto p = pending.find(op.key);
          if (p != pending.end()) {
            base = p->second.value.value_or(std::string());
          } else {
            OpResult cur = tiered_read(op.key, true);
            if (!cur.ok()) {
              r = std::move(cur);
              break;
            }
            base = cur.value.value_or(std::string());
          }
          base += op.value;
          stage(op, i, std::move(base));
          break;
        }
      }
    } catch (const Error& e) {
      r = failure(e.code(), e.what());
    }
  }

  if (order.empty()) return;
  std::vector<storage::WriteOp> batch;
  batch.reserve(order.size());
  for (const auto& key : order) batch.push_back({key, pending[key].value});
  try {
    backend_->write_batch(batch);
  } catch (const Error& e) {
    ++wt_failures_;
    for (const auto& key : order) {
      cache_.erase(key);
      for (auto i : pending[key].callers) t.results[i] = failure(ErrorCode::kStorageWriteFailed, e.what());
    }
    return;
  }
  ++wt_batches_;
  for (const auto& key : order) {
    const auto& v = pending[key].value;
    if (v) {
      put_clean(key, *v);
    } else {
      cache_.erase(key);
    }
  }
}

void TieredStore::apply_wb(Tick& t, std::size_t i, const std::optional<std::string>* fetched) {
  const Op& op = t.ops[i];
  OpResult& r = t.results[i];
  auto admit = [&] {
    if (cache_.dirty_bytes() >= options_.sync.dirty_max_bytes) {
      ++backpressure_;
      raise(ErrorCode::kBackpressure, "dirty data limit reached; retry after flush");
    }
  };
  try {
    if (op.kind != OpKind::kGet) storage::validate_key(op.key);
    switch (op.kind) {
      case OpKind::kGet:
        if (fetched) {
          bool tomb = false;
          if (auto v = resident_value(op.key, &tomb, true)) {
            r.hit = true;
            if (!tomb) r.value = std::move(*v);
          } else {
            r.value = *fetched;
          }
        } else {
          r = tiered_read(op.key, true);
        }
        break;
      case OpKind::kSet:
        admit();
        put_dirty(op.key, op.value, false);
        break;
      case OpKind::kDel: {
        bool tomb = false;
        auto v = resident_value(op.key, &tomb, false);
        r.existed = v ? !tomb : (fetched && fetched->has_value());
        admit();
        put_dirty(op.key, {}, true);
        break;
      }
      case OpKind::kAppend: {
        bool tomb = false;
        std::string base;
        if (auto v = resident_value(op.key, &tomb, true)) {
          base = std::move(*v);
        } else if (fetched) {
          base = fetched->value_or(std::string());
        } else {
          t.parked.push_back(i);
          t.parked_keys.insert(op.key);
          ++parked_ops_;
          return;
        }
        admit();
        base += op.value;
        put_dirty(op.key, base, false);
        break;
      }
    }
  } catch (const Error& e) {
    r = failure(e.code(), e.what());
  }
}

void TieredStore::resolve_parked(Tick& t) {
  if (t.parked.empty()) return;
  std::vector<std::string> keys;
  std::unordered_map<std::string, std::size_t> slot;
  for (auto i : t.parked) {
    const auto& k = t.ops[i].key;
    if (slot.try_emplace(k, keys.size()).second) keys.push_back(k);
  }
  std::vector<std::size_t> parked = std::move(t.parked);
  t.parked.clear();
  t.parked_keys.clear();

  std::vector<std::optional<std::string>> values;
  try {
    ++deferred_fetches_;
    values = backend_->multi_read(keys);
  } catch (const Error& e) {
    for (auto i : parked) t.results[i] = failure(ErrorCode::kStorageReadFailed, e.what());
    return;
  }
  for (auto i : parked) apply_wb(t, i, &values[slot[t.ops[i].key]]);
}

void TieredStore::run_write_back(Tick& t) {
  for (std::size_t i = 0; i < t.ops.size(); ++i) {
    if (t.parked_keys.count(t.ops[i].key)) {
      // Later operations on a parked key wait behind it.
      t.parked.push_back(i);
      ++parked_ops_;
    } else {
      apply_wb(t, i, nullptr);
    }
    if (t.parked_keys.size() >= options_.sync.deferred_fetch_batch) resolve_parked(t);
  }
  resolve_parked(t);
  maybe_wake_flusher();
}

OpResult TieredStore::get(std::string_view key, std::uint64_t conn) {
  Op op = Op::get(std::string(key), conn);
  return std::move(execute_tick({&op, 1})[0]);
}

OpResult TieredStore::set(std::string_view key, std::string_view value, std::uint64_t conn) {
  Op op = Op::set(std::string(key), std::string(value), conn);
  return std::move(execute_tick({&op, 1})[0]);
}

OpResult TieredStore::del(std::string_view key, std::uint64_t conn) {
  Op op = Op::del(std::string(key), conn);
  return std::move(execute_tick({&op, 1})[0]);
}

OpResult TieredStore::append(std::string_view key, std::string_view value, std::uint64_t conn) {
  Op op = Op::append(std::string(key), std::string(value), conn);
  return std::move(execute_tick({&op, 1})[0]);
}

// ---------------------------------------------------------------------------
// Write-back flushing

std::size_t TieredStore::flush() {
  if (options_.sync.policy != SyncPolicy::kWriteBack || !backend_) return 0;
  std::lock_guard lock(flush_mu_);
  auto records = cache_.dirty_records();
  if (records.empty()) return 0;
  std::vector<storage::WriteOp> batch;
  batch.reserve(records.size());
  for (const auto& rec : records) {
    if (rec.tombstone) {
      batch.push_back(storage::WriteOp::del(rec.key));
    } else {
      batch.push_back(storage::WriteOp::put(rec.key, decode({rec.value, rec.dict_version, false, true})));
    }
  }
  try {
    backend_->write_batch(batch);
  } catch (const Error&) {
    ++flush_failures_;
    return 0;
  }
  cache_.mark_clean(records);
  ++flushes_;
  flushed_keys_ += records.size();
  return records.size();
}

void TieredStore::maybe_wake_flusher() {
  if (!flusher_.joinable()) return;
  const double threshold = options_.sync.dirty_high_watermark * static_cast<double>(options_.sync.dirty_max_bytes);
  if (static_cast<double>(cache_.dirty_bytes()) < threshold) return;
  {
    std::lock_guard lock(flusher_mu_);
    wake_ = true;
  }
  flusher_cv_.notify_one();
}

void TieredStore::flusher_loop() {
  std::unique_lock lock(flusher_mu_);
  while (!stop_) {
    flusher_cv_.wait_for(lock, options_.sync.flush_interval, [this] { return stop_ || wake_; });
    if (stop_) break;
    wake_ = false;
    lock.unlock();
    try {
      flush();
      maybe_retrain();
    } catch (...) {
      // The next round retries.
    }
    lock.lock();
  }
}

bool TieredStore::maybe_retrain() { return compression_ && compression_->maybe_retrain(); }

// ---------------------------------------------------------------------------
// Introspection

std::optional<TieredStore::Resident> TieredStore::peek(std::string_view key) const {
  auto v = cache_.peek(key);
  if (!v) return std::nullopt;
  Resident r;
  r.dirty = v->dirty;
  r.tombstone = v->tombstone;
  if (!v->tombstone) r.value = decode(*v);
  return r;
}

std::vector<std::string> TieredStore::resident_keys() const {
  std::vector<std::string> out;
  for (std::size_t s = 0; s < cache_.shard_count(); ++s) {
    auto part = cache_.lru_order(s);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

StoreStats TieredStore::stats() const {
  StoreStats st;
  st.cache = cache_.stats();
  if (backend_) st.storage = backend_->counters();
  st.gets = gets_;
  st.sets = sets_;
  st.dels = dels_;
  st.appends = appends_;
  st.errors = errors_;
  st.backpressure = backpressure_;
  st.wt_batches = wt_batches_;
  st.wt_failures = wt_failures_;
  st.flushes = flushes_;
  st.flush_failures = flush_failures_;
  st.flushed_keys = flushed_keys_;
  st.deferred_fetches = deferred_fetches_;
  st.parked_ops = parked_ops_;
  st.miss_penalty_ns = miss_penalty_ns_;
  st.ticks = ticks_;
  if (compression_) {
    st.compression = compression_->stats();
    st.retrains = compression_->retrain_count();
  }
  return st;
}

void TieredStore::reset_counters() {
  cache_.reset_counters();
  for (auto* c : {&gets_, &sets_, &dels_, &appends_, &errors_, &backpressure_, &wt_batches_, &wt_failures_,
                  &flushes_, &flush_failures_, &flushed_keys_, &deferred_fetches_, &parked_ops_,
                  &miss_penalty_ns_, &ticks_}) {
    c->store(0);
  }
}

}  // namespace tierkv::sync
