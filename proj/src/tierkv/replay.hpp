#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "tierkv/elastic_exec.hpp"
#include "tierkv/tier_sync.hpp"
#include "tierkv/workload.hpp"

// Trace replay against a store. Each trace record is sent by one of
// `concurrency` client sessions chosen by hashing the key, so per-key order
// is preserved; every session issues its records one at a time.
namespace tierkv::replay {

enum class Pacing { kMaxThroughput, kTimed, kFixedQps };

struct ReplayOptions {
  Pacing pacing = Pacing::kMaxThroughput;
  double fixed_qps = 1000.0;
  std::size_t concurrency = 1;
  // When duration > 0 each session cycles over its records until
  // warmup + duration has elapsed and only the window after warmup is
  // measured. Otherwise the trace is replayed exactly once.
  std::chrono::duration<double> warmup{0.0};
  std::chrono::duration<double> duration{0.0};
};

// Counters sampled from the target before and after a replay.
struct TargetCounters {
  std::uint64_t storage_reads = 0;
  std::uint64_t storage_writes = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
};

struct ReplayReport {
  std::uint64_t ops = 0;
  std::uint64_t gets = 0;
  std::uint64_t sets = 0;
  std::uint64_t dels = 0;
  std::uint64_t errors = 0;
  double elapsed_s = 0;
  double achieved_qps = 0;
  double p50_us = 0;
  double p99_us = 0;
  double p999_us = 0;
  std::uint64_t storage_reads = 0;
  std::uint64_t storage_writes = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;

  double hit_ratio() const {
    const auto total = cache_hits + cache_misses;
    return total == 0 ? 0.0 : static_cast<double>(cache_hits) / static_cast<double>(total);
  }
  std::string csv_header() const;
  std::string csv_row() const;
  std::string text() const;
};

class Session {
 public:
  virtual ~Session() = default;
  // Returns false if the store reported an error for the operation.
  virtual bool execute(const workload::TraceRecord& rec) = 0;
};

class Target {
 public:
  virtual ~Target() = default;
  // Throws kStoreUnreachable.
  virtual std::unique_ptr<Session> open_session() = 0;
  virtual TargetCounters counters() = 0;
};

// Direct calls into a store, one op per tick.
std::unique_ptr<Target> store_target(sync::TieredStore& store);
// Through the executor queues.
std::unique_ptr<Target> executor_target(exec::ElasticExecutor& executor);
// Over the wire protocol; one connection per session.
std::unique_ptr<Target> tcp_target(std::string host, std::uint16_t port);

// Nearest-rank percentile of unsorted samples (0 for none).
double percentile(std::vector<double> samples, double p);

ReplayReport replay(const workload::Trace& trace, Target& target, const ReplayOptions& options = {});

}  // namespace tierkv::replay
