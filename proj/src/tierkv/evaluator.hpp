#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tierkv/cost_model.hpp"
#include "tierkv/elastic_exec.hpp"
#include "tierkv/replay.hpp"
#include "tierkv/storage_backend.hpp"
#include "tierkv/tier_sync.hpp"
#include "tierkv/workload.hpp"

// Configuration evaluation: build a store for each candidate configuration,
// load the sample data, measure MaxPerf and MaxSpace, turn them into
// performance/space costs and pick the cheapest configuration.
namespace tierkv::eval {

struct BackendSpec {
  std::string kind = "sim";  // sim | log
  std::string path;          // directory for log files
  std::uint32_t read_latency_us = 0;
  std::uint32_t write_latency_us = 0;
  std::uint32_t fail_every = 0;
};

// Capacity of the storage-tier instance type. It is not measured here:
// the storage tier is a separate machine class whose prices and limits
// come from configuration.
struct StorageTierSpec {
  cost::InstanceSpec instance{1.0, 1, 0};
  double max_perf = 1.0;   // queries/second
  double max_space = 1.0;  // bytes
};

struct EvalConfig {
  std::string config_id;
  sync::StoreOptions store;
  BackendSpec backend;
  exec::ExecPolicy exec_policy = exec::ExecPolicy::kSingle;
  cost::InstanceSpec instance{1.0, 1, 1ull << 30};
  double slo_p99_us = 1000.0;
  cost::Headroom headroom{1.0, 1.0};
  // Tiered configurations only. The cache holds cache_ratio of the data.
  double cache_ratio = 1.0;
  StorageTierSpec storage_tier;

  bool tiered() const { return store.sync.policy != sync::SyncPolicy::kCacheOnly; }
};

struct PerfOptions {
  std::chrono::duration<double> warmup{3.0};
  std::chrono::duration<double> window{10.0};
  double plateau = 0.05;
  std::size_t max_concurrency = 64;
  double slo_p99_us = 1000.0;
  double perf_headroom = 1.0;
};

struct PerfStep {
  std::size_t concurrency = 0;
  double qps = 0;
  double p99_us = 0;
};

struct PerfMeasurement {
  double max_perf = 0;  // with headroom applied
  double raw_max_perf = 0;
  std::size_t concurrency = 0;
  double p99_us = 0;
  std::vector<PerfStep> steps;
};

// Geometric ramp of client concurrency 1, 2, 4, ... replaying `run`.
// MaxPerf is the best sustained throughput whose p99 meets the SLO; the
// ramp stops when the SLO breaks or the gain drops below `plateau`.
// Throws kNeverMeetsSlo if concurrency 1 already breaks the SLO.
PerfMeasurement measure_max_perf(replay::Target& target, const workload::Trace& run, const PerfOptions& options);

struct SpaceOptions {
  double memory = 0;  // bytes
  double space_headroom = 1.0;
  std::size_t entry_overhead = kv::kDefaultEntryOverhead;
  bool cycle = true;  // reuse the stream until the budget is reached
};

// Admits records (key + value) while the charged bytes fit in
// memory * space_headroom and returns the raw bytes admitted. With a
// dictionary the charge uses the compressed value size.
double measure_max_space(std::span<const workload::TraceRecord> records, const SpaceOptions& options,
                         const compress::Dictionary* dictionary = nullptr);

// Everything the calculate step needs, kept so a report can be recomputed.
struct RowMeasurement {
  std::string config_id;
  bool failed = false;
  std::string error;
  cost::InstanceSpec instance;
  double max_perf = 0;
  double max_space = 0;
  bool tiered = false;
  double cache_ratio = 1.0;
  double miss_ratio = 0;
  double miss_time_fraction = 0;  // share of serving time spent on misses
  double replica_factor = 1.0;
  StorageTierSpec storage_tier;
};

struct CostRow {
  std::string config_id;
  bool failed = false;
  std::string error;
  double max_perf = 0;
  double max_space = 0;
  double cpqps = 0;
  double cpgb = 0;
  double pc = 0;
  double sc = 0;
  double total = 0;
  cost::WorkloadClass cls = cost::WorkloadClass::kBalanced;
  // Tiered decomposition: total = max(g, h) + t.
  bool tiered = false;
  double cr = 0;
  double mr = 0;
  cost::TieredCostParams params;
  double g = 0;  // pc_cache + pc_miss * mr
  double h = 0;  // sc_cache * cr (replicas included)
  double t = 0;  // max(pc_storage * mr, sc_storage)
};

struct CostReport {
  std::vector<CostRow> rows;
  std::string winner;  // empty when every row failed
  std::optional<std::size_t> winner_index;

  void write_csv(std::ostream& out) const;
  void write_text(std::ostream& out) const;
};

struct EvalOptions {
  PerfOptions perf;
  bool ceiling = false;  // whole instances for flat rows
  std::size_t dict_samples = 512;
};

// Step 4: pure function of the stored measurements.
CostReport calculate(std::span<const RowMeasurement> rows, const cost::WorkloadProfile& profile,
                     const EvalOptions& options = {});

// Builds the store for a configuration. Tiered stores get their storage
// preloaded with `load` and a cache sized to cache_ratio of the charged
// data; cache-only stores are loaded through the cache.
struct StoreBundle {
  std::shared_ptr<storage::StorageBackend> backend;
  std::unique_ptr<sync::TieredStore> store;
  std::unique_ptr<exec::ElasticExecutor> executor;
};

StoreBundle build_store(const EvalConfig& config, const workload::Trace& load, const EvalOptions& options = {});

// Steps 2-3 for one configuration.
RowMeasurement measure(const EvalConfig& config, const workload::Workload& workload, const EvalOptions& options = {});

// Steps 2-5 over a grid. Rows that fail are marked and skipped by the
// winner selection.
CostReport evaluate(std::span<const EvalConfig> configs, const cost::WorkloadProfile& profile,
                    const workload::Workload& workload, const EvalOptions& options = {});

struct SweepPoint {
  double cr = 0;
  double mr = 0;
  double pc = 0;
  double sc = 0;
  double total = 0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  double recommended_cr = 0;
  // Fixed point of the cache-tier trade-off computed from the measured
  // miss-ratio curve of the run trace.
  cost::CacheRatioOptimum analytic;

  void write_csv(std::ostream& out) const;  // cr,mr,pc,sc,total
};

// Cost terms per unit of CR/MR. pc_storage/sc_storage may be 0 to study
// the cache tier alone.
struct SweepParams {
  double pc_cache = 0;
  double pc_miss = 0;
  double pc_storage = 0;
  double sc_cache = 0;
  double sc_storage = 0;
};

// Derives sweep parameters from a measured tiered row.
SweepParams sweep_params_from(const CostRow& row);

SweepResult sweep_cache_ratio(std::span<const double> ratios, const EvalConfig& base,
                              const workload::Workload& workload, const SweepParams& params,
                              const EvalOptions& options = {});

// Miss ratio of a cold cache sized to `cr` replaying `run` once.
double measure_miss_ratio(const EvalConfig& config, const workload::Workload& workload, double cr,
                          const EvalOptions& options = {});

}  // namespace tierkv::eval
