#include "tierkv/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "tierkv/error.hpp"

namespace tierkv::cost {

namespace {

void require(bool ok, const char* what) {
  if (!ok) raise(ErrorCode::kInvalidArgument, what);
}

// Instance count for a demand/capacity ratio. A relative slack of 1e-12
// keeps exact multiples (data == max_space) from rounding up on
// representation error.
double instances(double ratio, bool ceiling) {
  if (ratio <= 0) return 0;
  if (!ceiling) return ratio;
  return std::ceil(ratio * (1.0 - 1e-12));
}

}  // namespace

void WorkloadProfile::validate() const {
  require(qps >= 0, "qps must be >= 0");
  require(data_size >= 0, "data_size must be >= 0");
  require(avg_record_size > 0, "avg_record_size must be > 0");
  require(read_fraction >= 0 && read_fraction <= 1, "read_fraction must be in [0,1]");
}

void InstanceSpec::validate() const { require(cost > 0, "instance cost must be > 0"); }

void ConfigMeasurement::validate() const {
  require(max_perf > 0, "max_perf must be > 0");
  require(max_space > 0, "max_space must be > 0");
}

void TieredCostParams::validate() const {
  require(pc_cache >= 0 && pc_miss >= 0 && pc_storage >= 0 && sc_cache >= 0 && sc_storage >= 0,
          "tier costs must be >= 0");
  require(cr >= 0 && cr <= 1, "cache ratio must be in [0,1]");
  require(mr >= 0 && mr <= 1, "miss ratio must be in [0,1]");
}

void Headroom::validate() const {
  require(perf > 0 && perf <= 1, "perf headroom must be in (0,1]");
  require(space > 0 && space <= 1, "space headroom must be in (0,1]");
}

std::string_view to_string(WorkloadClass c) noexcept {
  switch (c) {
    case WorkloadClass::kPerformanceCritical: return "performance-critical";
    case WorkloadClass::kSpaceCritical: return "space-critical";
    case WorkloadClass::kBalanced: return "balanced";
  }
  return "unknown";
}

CostMetrics cost_metrics(const InstanceSpec& instance, const ConfigMeasurement& m) {
  instance.validate();
  m.validate();
  return {instance.cost / m.max_perf, instance.cost / (m.max_space / kBytesPerGB)};
}

ConfigMeasurement apply_headroom(ConfigMeasurement m, const Headroom& headroom) {
  headroom.validate();
  m.max_perf *= headroom.perf;
  m.max_space *= headroom.space;
  return m;
}

double performance_cost(const WorkloadProfile& profile, const InstanceSpec& instance,
                        const ConfigMeasurement& m, CostOptions options) {
  profile.validate();
  instance.validate();
  require(m.max_perf > 0, "max_perf must be > 0");
  return instance.cost * instances(profile.qps / m.max_perf, options.ceiling);
}

double space_cost(const WorkloadProfile& profile, const InstanceSpec& instance,
                  const ConfigMeasurement& m, CostOptions options) {
  profile.validate();
  instance.validate();
  require(m.max_space > 0, "max_space must be > 0");
  return instance.cost * instances(profile.data_size / m.max_space, options.ceiling);
}

double total_cost(double pc, double sc) {
  require(pc >= 0 && sc >= 0, "costs must be >= 0");
  return std::max(pc, sc);
}

WorkloadClass classify_workload(double pc, double sc) {
  require(pc >= 0 && sc >= 0, "costs must be >= 0");
  if (std::abs(pc - sc) <= 1e-9 * std::max(pc, sc)) return WorkloadClass::kBalanced;
  return pc > sc ? WorkloadClass::kPerformanceCritical : WorkloadClass::kSpaceCritical;
}

std::size_t select_optimal_index(std::span<const ConfigCost> configs) {
  if (configs.empty()) raise(ErrorCode::kEmptyConfigSet, "no configurations to select from");
  std::size_t best = 0;
  double best_total = std::max(configs[0].pc, configs[0].sc);
  double best_gap = std::abs(configs[0].pc - configs[0].sc);
  for (std::size_t i = 1; i < configs.size(); ++i) {
    const double total = std::max(configs[i].pc, configs[i].sc);
    const double gap = std::abs(configs[i].pc - configs[i].sc);
    if (total < best_total || (total == best_total && gap < best_gap)) {
      best = i;
      best_total = total;
      best_gap = gap;
    }
  }
  return best;
}

const std::string& select_optimal_config(std::span<const ConfigCost> configs) {
  return configs[select_optimal_index(configs)].config_id;
}

double tiered_cost(const TieredCostParams& p) {
  p.validate();
  return std::max(p.pc_cache + p.pc_miss * p.mr, p.sc_cache * p.cr) +
         std::max(p.pc_storage * p.mr, p.sc_storage);
}

CacheRatioOptimum optimal_cache_ratio(const MissRatioFn& f, double pc_cache, double pc_miss,
                                      double sc_cache) {
  require(pc_cache >= 0 && pc_miss >= 0, "performance costs must be >= 0");
  require(sc_cache > 0, "sc_cache must be > 0");

  constexpr std::size_t n = kCacheRatioGridSteps;
  std::vector<double> fx(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    fx[i] = f(static_cast<double>(i) / n);
    if (!std::isfinite(fx[i])) raise(ErrorCode::kInvalidCurve, "miss ratio curve is not finite");
    if (i > 0 && fx[i] > fx[i - 1] + 1e-9) {
      std::ostringstream msg;
      msg << "miss ratio curve increases at cr=" << static_cast<double>(i) / n;
      raise(ErrorCode::kInvalidCurve, msg.str());
    }
  }

  auto g = [&](double fv) { return pc_cache + pc_miss * fv; };
  auto h = [&](double cr) { return sc_cache * cr; };

  // Grid minimizer; ties prefer the point closest to balance, then lower cr.
  std::size_t best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  double best_gap = std::numeric_limits<double>::infinity();
  std::size_t first_nonpositive = n + 1;
  for (std::size_t i = 0; i <= n; ++i) {
    const double cr = static_cast<double>(i) / n;
    const double gv = g(fx[i]);
    const double hv = h(cr);
    const double c = std::max(gv, hv);
    const double gap = std::abs(gv - hv);
    const double tol = 1e-12 * std::max(1.0, std::abs(best_cost));
    if (c < best_cost - tol || (std::abs(c - best_cost) <= tol && gap < best_gap)) {
      best = i;
      best_cost = c;
      best_gap = gap;
    }
    if (first_nonpositive > n && gv - hv <= 0) first_nonpositive = i;
  }

  CacheRatioOptimum grid{static_cast<double>(best) / n, best_cost, false};

  // g - h is strictly decreasing, so there is at most one sign change.
  if (first_nonpositive == 0) {
    return {0.0, std::max(g(fx[0]), 0.0), true};
  }
  if (first_nonpositive > n) return grid;

  double lo = static_cast<double>(first_nonpositive - 1) / n;
  double hi = static_cast<double>(first_nonpositive) / n;
  for (int iter = 0; iter < 200 && hi - lo > 0; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (g(f(mid)) - h(mid) > 0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  for (double cr : {lo, hi}) {
    const double gv = g(f(cr));
    const double hv = h(cr);
    if (std::abs(gv - hv) <= 1e-6 * sc_cache) {
      const double c = std::max(gv, hv);
      if (c <= grid.cost + 1e-12 * std::max(1.0, grid.cost)) return {cr, c, true};
    }
  }
  return grid;
}

double break_even_interval(double cpqps_slow, double cpgb_fast, double avg_record_size) {
  if (!(cpqps_slow > 0) || !(cpgb_fast > 0) || !(avg_record_size > 0)) {
    raise(ErrorCode::kNonPositiveInput, "break-even inputs must all be > 0");
  }
  return cpqps_slow / (cpgb_fast * (avg_record_size / kBytesPerGB));
}

BreakEvenReport break_even_report(double cpqps_slow, double cpgb_fast, double avg_record_size) {
  BreakEvenReport r;
  r.seconds = break_even_interval(cpqps_slow, cpgb_fast, avg_record_size);
  r.price_per_disk_per_access_rate = cpqps_slow;
  r.price_per_gb_of_fast = cpgb_fast;
  r.records_per_gb = kBytesPerGB / avg_record_size;
  return r;
}

bool storage_tier_sc_dominates(double mr, double sc_storage, double pc_storage) {
  require(pc_storage > 0, "pc_storage must be > 0");
  return mr < sc_storage / pc_storage;
}

TradeoffOptimum solve_tradeoff(const std::function<double(double)>& cpqps_of_cpgb,
                               double cpgb_lo, double cpgb_hi, double qps, double data_gb) {
  require(cpgb_lo > 0 && cpgb_lo <= cpgb_hi, "cpgb range must be positive and ordered");
  require(qps >= 0 && data_gb >= 0, "demand must be >= 0");
  auto point = [&](double x) {
    TradeoffOptimum t;
    t.cpgb = x;
    t.cpqps = cpqps_of_cpgb(x);
    t.pc = qps * t.cpqps;
    t.sc = data_gb * x;
    return t;
  };
  TradeoffOptimum lo = point(cpgb_lo);
  if (lo.pc <= lo.sc) return lo;
  TradeoffOptimum hi = point(cpgb_hi);
  if (hi.pc >= hi.sc) return hi;
  double a = cpgb_lo;
  double b = cpgb_hi;
  for (int iter = 0; iter < 300; ++iter) {
    const double mid = 0.5 * (a + b);
    if (mid <= a || mid >= b) break;
    const TradeoffOptimum t = point(mid);
    if (t.pc > t.sc) {
      a = mid;
    } else {
      b = mid;
    }
  }
  const TradeoffOptimum ta = point(a);
  const TradeoffOptimum tb = point(b);
  return std::max(ta.pc, ta.sc) <= std::max(tb.pc, tb.sc) ? ta : tb;
}

}  // namespace tierkv::cost
