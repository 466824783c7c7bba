#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>

// Analytical space/performance cost model: per-configuration performance and
// space cost, configuration selection, the tiered (cache + storage) cost,
// the optimal cache ratio and the break-even access interval.
//
// All functions are pure. Cost units are abstract (one instance for one
// accounting period costs `InstanceSpec::cost`). Sizes are bytes; a GB is
// 2^30 bytes throughout.
namespace tierkv::cost {

inline constexpr double kBytesPerGB = 1024.0 * 1024.0 * 1024.0;

struct WorkloadProfile {
  double qps = 0;              // queries/second
  double data_size = 0;        // bytes
  double avg_record_size = 1;  // bytes
  double read_fraction = 0.5;

  void validate() const;
};

struct InstanceSpec {
  double cost = 1;  // cost-units per instance per accounting period
  int cpu_cores = 1;
  double memory = 0;  // bytes

  void validate() const;
};

struct ConfigMeasurement {
  std::string config_id;
  double max_perf = 0;   // queries/second
  double max_space = 0;  // bytes

  void validate() const;
};

struct CostMetrics {
  double cpqps = 0;  // cost-units per (query/second)
  double cpgb = 0;   // cost-units per GB
};

struct TieredCostParams {
  double pc_cache = 0;
  double pc_miss = 0;
  double pc_storage = 0;
  double sc_cache = 0;
  double sc_storage = 0;
  double cr = 0;  // cache ratio
  double mr = 0;  // miss ratio

  void validate() const;
};

// Headroom multipliers in (0, 1] applied to measured capacities so that a
// deployment never runs an instance at its measured limit.
struct Headroom {
  double perf = 0.85;
  double space = 0.85;

  void validate() const;
};

struct CostOptions {
  // Round instance counts up (whole instances). When false, costs are the
  // continuous `cost * demand / capacity` form used by CPQPS/CPGB.
  bool ceiling = true;
};

enum class WorkloadClass { kPerformanceCritical, kSpaceCritical, kBalanced };

std::string_view to_string(WorkloadClass c) noexcept;

CostMetrics cost_metrics(const InstanceSpec& instance, const ConfigMeasurement& m);

ConfigMeasurement apply_headroom(ConfigMeasurement m, const Headroom& headroom);

double performance_cost(const WorkloadProfile& profile, const InstanceSpec& instance,
                        const ConfigMeasurement& m, CostOptions options = {});

double space_cost(const WorkloadProfile& profile, const InstanceSpec& instance,
                  const ConfigMeasurement& m, CostOptions options = {});

double total_cost(double pc, double sc);

WorkloadClass classify_workload(double pc, double sc);

struct ConfigCost {
  std::string config_id;
  double pc = 0;
  double sc = 0;
};

// Index of the configuration minimizing max(pc, sc). Ties go to the smaller
// |pc - sc|, then to the earlier entry. Throws kEmptyConfigSet.
std::size_t select_optimal_index(std::span<const ConfigCost> configs);

const std::string& select_optimal_config(std::span<const ConfigCost> configs);

// max(pc_cache + pc_miss*mr, sc_cache*cr) + max(pc_storage*mr, sc_storage)
double tiered_cost(const TieredCostParams& p);

struct CacheRatioOptimum {
  double cr = 0;
  double cost = 0;
  // True when cr sits on a continuous crossing of the performance and space
  // curves; false when the grid minimizer was returned.
  bool at_crossing = false;
};

using MissRatioFn = std::function<double(double)>;

// Minimizes max(pc_cache + pc_miss*f(cr), sc_cache*cr) over cr in [0, 1].
// Grid search at 1e-4 refined by bisection on the crossing. Throws
// kInvalidCurve if f increases anywhere by more than 1e-9.
CacheRatioOptimum optimal_cache_ratio(const MissRatioFn& f, double pc_cache, double pc_miss,
                                      double sc_cache);

inline constexpr std::size_t kCacheRatioGridSteps = 10000;

double break_even_interval(double cpqps_slow, double cpgb_fast, double avg_record_size);

// The break-even interval together with the terms of the classic rule they
// stand in for.
struct BreakEvenReport {
  double seconds = 0;
  double price_per_disk_per_access_rate = 0;  // CPQPS of the slow configuration
  double price_per_gb_of_fast = 0;            // CPGB of the fast configuration
  double records_per_gb = 0;                  // plays the role of pages per MB of RAM
};

BreakEvenReport break_even_report(double cpqps_slow, double cpgb_fast, double avg_record_size);

// True iff mr < sc_storage / pc_storage, i.e. the storage tier's cost is
// its space cost.
bool storage_tier_sc_dominates(double mr, double sc_storage, double pc_storage);

// Continuous trade-off family: a configuration is a point cpgb in
// [cpgb_lo, cpgb_hi] with cpqps = f(cpgb), f non-increasing. Returns the
// point minimizing max(qps * cpqps, data_gb * cpgb).
struct TradeoffOptimum {
  double cpgb = 0;
  double cpqps = 0;
  double pc = 0;
  double sc = 0;
};

TradeoffOptimum solve_tradeoff(const std::function<double(double)>& cpqps_of_cpgb,
                               double cpgb_lo, double cpgb_hi, double qps, double data_gb);

}  // namespace tierkv::cost
