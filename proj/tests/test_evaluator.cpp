#include <gtest/gtest.h>

#include <cmath>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "oracles.hpp"
#include "tierkv/evaluator.hpp"

using namespace tierkv;
using namespace tierkv::eval;
using namespace std::chrono_literals;

namespace {

cost::WorkloadProfile profile(double qps, double data) { return {qps, data, 1024, 0.5}; }

RowMeasurement flat(std::string id, double cost, double max_perf, double max_space) {
  RowMeasurement m;
  m.config_id = std::move(id);
  m.instance = {cost, 1, max_space};
  m.max_perf = max_perf;
  m.max_space = max_space;
  return m;
}

// A server with `servers` slots, each op holding one slot for `service`.
// Throughput saturates at servers / service (Little's law).
class StubTarget : public replay::Target {
 public:
  StubTarget(int servers, std::chrono::microseconds service) : free_(servers), service_(service) {}

  class StubSession : public replay::Session {
   public:
    explicit StubSession(StubTarget& t) : t_(t) {}
    bool execute(const workload::TraceRecord&) override {
      {
        std::unique_lock lock(t_.mu_);
        t_.cv_.wait(lock, [&] { return t_.free_ > 0; });
        --t_.free_;
      }
      std::this_thread::sleep_for(t_.service_);
      {
        std::lock_guard lock(t_.mu_);
        ++t_.free_;
      }
      t_.cv_.notify_one();
      return true;
    }

   private:
    StubTarget& t_;
  };

  std::unique_ptr<replay::Session> open_session() override { return std::make_unique<StubSession>(*this); }
  replay::TargetCounters counters() override { return {}; }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int free_;
  std::chrono::microseconds service_;
};

workload::Trace stub_trace() {
  workload::Trace t;
  for (int i = 0; i < 64; ++i) t.push_back({0, workload::TraceOp::kGet, "k" + std::to_string(i), ""});
  return t;
}

workload::Workload small_workload(double read_fraction = 0.5) {
  workload::WorkloadSpec s;
  s.key_count = 500;
  s.op_count = 4000;
  s.read_fraction = read_fraction;
  s.record_size_min = s.record_size_max = 100;
  return generate(s);
}

EvalOptions fast_options() {
  EvalOptions o;
  o.perf.warmup = 20ms;
  o.perf.window = 150ms;
  o.perf.max_concurrency = 2;
  o.perf.slo_p99_us = 1e6;
  return o;
}

EvalConfig config(std::string id, sync::SyncPolicy policy, double cr = 1.0) {
  EvalConfig c;
  c.config_id = std::move(id);
  c.store.sync.policy = policy;
  c.store.sync.background_flusher = false;
  c.store.cache.shard_count = 4;
  c.cache_ratio = cr;
  c.instance = {1.0, 1, 4.0 * (1 << 20)};
  c.storage_tier.instance.cost = 0.1;
  c.storage_tier.max_perf = 1e5;
  c.storage_tier.max_space = 1e12;
  return c;
}

}  // namespace

TEST(Calculate, FlatRowsMatchArithmetic) {
  std::vector<RowMeasurement> rows{flat("a", 2.0, 1000, 1e9), flat("b", 3.0, 5000, 2e8)};
  const auto p = profile(12000, 3e9);
  const auto rep = calculate(rows, p);
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_DOUBLE_EQ(rep.rows[0].pc, 2.0 * 12000 / 1000);
  EXPECT_DOUBLE_EQ(rep.rows[0].sc, 2.0 * 3e9 / 1e9);
  EXPECT_DOUBLE_EQ(rep.rows[1].pc, 3.0 * 12000 / 5000);
  EXPECT_DOUBLE_EQ(rep.rows[1].sc, 3.0 * 3e9 / 2e8);
  EXPECT_DOUBLE_EQ(rep.rows[0].cpqps, 2.0 / 1000);
  EXPECT_DOUBLE_EQ(rep.rows[0].cpgb, 2.0 / (1e9 / 1073741824.0));
  EXPECT_EQ(rep.winner, "a");  // max(24, 6) < max(7.2, 45)
  EXPECT_EQ(rep.rows[0].cls, cost::WorkloadClass::kPerformanceCritical);
  EXPECT_EQ(rep.rows[1].cls, cost::WorkloadClass::kSpaceCritical);
}

TEST(Calculate, CeilingRoundsInstances) {
  std::vector<RowMeasurement> rows{flat("a", 2.0, 1000, 1e9)};
  EvalOptions o;
  o.ceiling = true;
  const auto rep = calculate(rows, profile(1500, 2.5e9), o);
  EXPECT_DOUBLE_EQ(rep.rows[0].pc, 4.0);
  EXPECT_DOUBLE_EQ(rep.rows[0].sc, 6.0);
}

TEST(Calculate, TieredRowFollowsFormula) {
  RowMeasurement m = flat("t", 1.5, 20000, 5e8);
  m.tiered = true;
  m.cache_ratio = 0.25;
  m.miss_ratio = 0.2;
  m.miss_time_fraction = 0.4;
  m.replica_factor = 2.0;
  m.storage_tier = {{0.3, 1, 0}, 8000, 4e11};
  const auto p = profile(10000, 2e10);
  const auto rep = calculate(std::vector<RowMeasurement>{m}, p);
  const auto& r = rep.rows[0];
  const double g = 1.5 / 20000 * 10000;
  const double pc_cache = g * 0.6;
  const double pc_miss = g * 0.4 / 0.2;
  const double sc_cache = 1.5 / (5e8 / 1073741824.0) * (2e10 / 1073741824.0) * 2.0;
  const double pc_storage = 0.3 * 10000 / 8000;
  const double sc_storage = 0.3 * 2e10 / 4e11;
  EXPECT_NEAR(r.params.pc_cache, pc_cache, 1e-12);
  EXPECT_NEAR(r.params.pc_miss, pc_miss, 1e-12);
  EXPECT_NEAR(r.params.sc_cache, sc_cache, 1e-9);
  EXPECT_NEAR(r.total, oracle::tiered_total(pc_cache, pc_miss, pc_storage, sc_cache, sc_storage, 0.25, 0.2),
              1e-12 * r.total);
}

TEST(Calculate, WinnerMatchesBruteForce) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(1, 100);
  const auto p = profile(5000, 1e10);
  for (int it = 0; it < 200; ++it) {
    std::vector<RowMeasurement> rows;
    std::vector<std::pair<double, double>> pcsc;
    for (int i = 0; i < 1 + static_cast<int>(rng() % 6); ++i) {
      const double c = std::round(u(rng));
      const double perf = std::round(u(rng)) * 100;
      const double space = std::round(u(rng)) * 1e8;
      rows.push_back(flat("c" + std::to_string(i), c, perf, space));
      pcsc.emplace_back(c * 5000 / perf, c * 1e10 / space);
    }
    const auto rep = calculate(rows, p);
    ASSERT_EQ(*rep.winner_index, oracle::brute_select(pcsc));
  }
}

TEST(Calculate, FailedRowsSkipped) {
  std::vector<RowMeasurement> rows{flat("a", 1, 10, 1e6), flat("b", 1, 1e6, 1e12)};
  rows[1].failed = true;
  rows[1].error = "NeverMeetsSlo";
  auto rep = calculate(rows, profile(100, 1e9));
  EXPECT_EQ(rep.winner, "a");
  rows[0].failed = true;
  rep = calculate(rows, profile(100, 1e9));
  EXPECT_TRUE(rep.winner.empty());
  EXPECT_FALSE(rep.winner_index);
}

TEST(Calculate, CsvShape) {
  std::vector<RowMeasurement> rows{flat("a", 1, 10, 1e6), flat("b", 1, 1e3, 1e9)};
  std::ostringstream out;
  calculate(rows, profile(100, 1e9)).write_csv(out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "config_id,max_perf_qps,max_space_bytes,cpqps,cpgb,pc,sc,total_cost,class,winner_flag");
  int rows_seen = 0;
  int winners = 0;
  while (std::getline(in, line)) {
    ++rows_seen;
    if (line.back() == '1') ++winners;
  }
  EXPECT_EQ(rows_seen, 2);
  EXPECT_EQ(winners, 1);
}

TEST(Evaluate, EmptyConfigSet) {
  try {
    evaluate({}, profile(1, 1), small_workload());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyConfigSet);
  }
}

TEST(MaxSpace, MatchesAdmissionCount) {
  workload::Trace recs;
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) recs.push_back({0, workload::TraceOp::kSet, "k" + std::to_string(i), std::string(rng() % 100, 'x')});
  for (double memory : {0.0, 500.0, 4000.0, 123456.0}) {
    SpaceOptions o;
    o.memory = memory;
    o.space_headroom = 0.85;
    o.entry_overhead = 64;
    // Independent admission loop.
    double used = 0;
    double admitted = 0;
    for (std::size_t i = 0;; i = (i + 1) % recs.size()) {
      const double c = recs[i].key.size() + recs[i].value.size() + 64.0;
      if (used + c > memory * 0.85) break;
      used += c;
      admitted += recs[i].key.size() + recs[i].value.size();
    }
    EXPECT_NEAR(measure_max_space(recs, o), admitted, 1e-6) << memory;
  }
}

TEST(MaxPerf, LittlesLawStub) {
  StubTarget t(4, 2ms);
  PerfOptions o;
  o.warmup = 50ms;
  o.window = 400ms;
  o.max_concurrency = 16;
  o.slo_p99_us = 50000;
  o.plateau = 0.05;
  const auto m = measure_max_perf(t, stub_trace(), o);
  EXPECT_NEAR(m.raw_max_perf, 2000, 400);
  EXPECT_GE(m.concurrency, 4u);
  for (std::size_t i = 1; i < m.steps.size(); ++i) EXPECT_EQ(m.steps[i].concurrency, 2 * m.steps[i - 1].concurrency);
  // Stops once the gain flattens.
  EXPECT_LE(m.steps.back().concurrency, 16u);
}

TEST(MaxPerf, HeadroomApplied) {
  StubTarget t(1, 1ms);
  PerfOptions o;
  o.warmup = 20ms;
  o.window = 200ms;
  o.max_concurrency = 1;
  o.slo_p99_us = 50000;
  o.perf_headroom = 0.5;
  const auto m = measure_max_perf(t, stub_trace(), o);
  EXPECT_DOUBLE_EQ(m.max_perf, 0.5 * m.raw_max_perf);
}

TEST(MaxPerf, SloBreaksAtOne) {
  StubTarget t(1, 3ms);
  PerfOptions o;
  o.warmup = 10ms;
  o.window = 100ms;
  o.slo_p99_us = 500;
  try {
    measure_max_perf(t, stub_trace(), o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNeverMeetsSlo);
  }
}

TEST(MissRatio, MonotoneInCacheRatio) {
  const auto w = small_workload(1.0);
  const auto c = config("wb", sync::SyncPolicy::kWriteBack);
  double prev = 1.0;
  for (double cr : {0.02, 0.1, 0.3, 0.6, 1.0}) {
    const double mr = measure_miss_ratio(c, w, cr);
    EXPECT_LE(mr, prev + 1e-12) << cr;
    EXPECT_GE(mr, 0.0);
    prev = mr;
  }
}

TEST(Measure, CacheOnlyAndTiered) {
  const auto w = small_workload();
  const std::vector<EvalConfig> cs{config("cache", sync::SyncPolicy::kCacheOnly),
                                   config("wb", sync::SyncPolicy::kWriteBack, 0.3)};
  const auto rep = evaluate(cs, profile(10000, 1e9), w, fast_options());
  ASSERT_EQ(rep.rows.size(), 2u);
  for (const auto& r : rep.rows) {
    EXPECT_FALSE(r.failed) << r.error;
    EXPECT_GT(r.max_perf, 0);
    EXPECT_GT(r.max_space, 0);
  }
  EXPECT_FALSE(rep.rows[0].tiered);
  EXPECT_TRUE(rep.rows[1].tiered);
  EXPECT_GT(rep.rows[1].mr, 0);
  EXPECT_FALSE(rep.winner.empty());
}

TEST(Measure, BadConfigRowFails) {
  const auto w = small_workload();
  auto bad = config("bad", sync::SyncPolicy::kWriteBack);
  bad.backend.fail_every = 1;
  bad.store.sync.policy = sync::SyncPolicy::kWriteThrough;
  auto o = fast_options();
  bad.slo_p99_us = 1;  // unreachable
  const auto m = measure(bad, w, o);
  EXPECT_TRUE(m.failed);
  EXPECT_FALSE(m.error.empty());
}

TEST(Sweep, RecommendedIsArgmin) {
  const auto w = small_workload(1.0);
  const auto c = config("wb", sync::SyncPolicy::kWriteBack);
  const std::vector<double> ratios{0.05, 0.1, 0.2, 0.4, 0.8};
  SweepParams p{1.0, 10.0, 0.0, 20.0, 0.0};
  const auto res = sweep_cache_ratio(ratios, c, w, p);
  ASSERT_EQ(res.points.size(), ratios.size());
  double best = 1e300;
  double best_cr = 0;
  for (const auto& pt : res.points) {
    EXPECT_DOUBLE_EQ(pt.total, std::max(1.0 + 10.0 * pt.mr, 20.0 * pt.cr));
    if (pt.total < best) {
      best = pt.total;
      best_cr = pt.cr;
    }
  }
  EXPECT_EQ(res.recommended_cr, best_cr);
  EXPECT_GT(res.analytic.cr, 0);
  EXPECT_LE(res.analytic.cr, 1);
  std::ostringstream out;
  res.write_csv(out);
  EXPECT_EQ(out.str().substr(0, 17), "cr,mr,pc,sc,total");
}

TEST(Sweep, Errors) {
  const auto c = config("wb", sync::SyncPolicy::kWriteBack);
  EXPECT_THROW(sweep_cache_ratio({}, c, small_workload(), {}), Error);
  workload::Workload empty;
  const std::vector<double> r{0.5};
  EXPECT_THROW(sweep_cache_ratio(r, c, empty, {}), Error);
}
