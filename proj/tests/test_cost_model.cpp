#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tierkv/cost_model.hpp"
#include "tierkv/error.hpp"

using namespace tierkv;
using namespace tierkv::cost;

namespace {

constexpr double kGiB = 1024.0 * 1024.0 * 1024.0;

WorkloadProfile profile(double qps, double data) {
  WorkloadProfile p;
  p.qps = qps;
  p.data_size = data;
  p.avg_record_size = 1024;
  return p;
}

ConfigMeasurement meas(double perf, double space) { return {"c", perf, space}; }

}  // namespace

TEST(PerformanceCost, SingleInstance) {
  EXPECT_EQ(performance_cost(profile(80000, 0), {1, 1, 0}, meas(120000, 1)), 1.0);
}

TEST(PerformanceCost, CeilingTimesCost) {
  // ceil(500000 / 120000) = 5 instances at cost 2.
  EXPECT_EQ(performance_cost(profile(500000, 0), {2, 1, 0}, meas(120000, 1)), 10.0);
}

TEST(PerformanceCost, ZeroQps) { EXPECT_EQ(performance_cost(profile(0, 0), {3, 1, 0}, meas(120000, 1)), 0.0); }

TEST(PerformanceCost, ContinuousVariant) {
  CostOptions o;
  o.ceiling = false;
  EXPECT_DOUBLE_EQ(performance_cost(profile(500000, 0), {2, 1, 0}, meas(120000, 1), o), 2.0 * 500000 / 120000);
}

TEST(SpaceCost, CeilOfRatio) {
  EXPECT_EQ(space_cost(profile(0, 10 * kGiB), {1, 1, 0}, meas(1, 4 * kGiB)), 3.0);
}

TEST(SpaceCost, EmptyData) { EXPECT_EQ(space_cost(profile(0, 0), {1, 1, 0}, meas(1, 4 * kGiB)), 0.0); }

TEST(SpaceCost, ExactlyFull) { EXPECT_EQ(space_cost(profile(0, 4 * kGiB), {7, 1, 0}, meas(1, 4 * kGiB)), 7.0); }

TEST(TotalCost, IsMax) {
  EXPECT_EQ(total_cost(1, 3), 3);
  EXPECT_EQ(total_cost(2, 2), 2);
  // Unequal costs, space side larger.
  EXPECT_EQ(total_cost(0.1223, 0.4036), 0.4036);
}

TEST(Classify, Basic) {
  EXPECT_EQ(classify_workload(5, 1), WorkloadClass::kPerformanceCritical);
  EXPECT_EQ(classify_workload(1, 5), WorkloadClass::kSpaceCritical);
  EXPECT_EQ(classify_workload(2, 2), WorkloadClass::kBalanced);
  EXPECT_EQ(classify_workload(1.0, 1.0 + 1e-12), WorkloadClass::kBalanced);
}

TEST(CostMetrics, UnitCosts) {
  const auto m = cost_metrics({2, 1, 0}, meas(1000, 4 * kGiB));
  EXPECT_DOUBLE_EQ(m.cpqps, 2.0 / 1000);
  EXPECT_DOUBLE_EQ(m.cpgb, 2.0 / 4);
}

TEST(Headroom, ScalesCapacities) {
  const auto m = apply_headroom(meas(1000, 2000), {0.85, 0.5});
  EXPECT_DOUBLE_EQ(m.max_perf, 850);
  EXPECT_DOUBLE_EQ(m.max_space, 1000);
  EXPECT_THROW(apply_headroom(meas(1, 1), {0, 1}), Error);
}

TEST(SelectOptimal, MinMaxOfSet) {
  std::vector<ConfigCost> s = {{"s1", 5, 1}, {"s2", 3, 2}, {"s3", 2.5, 2.6}, {"s4", 1, 6}};
  EXPECT_EQ(select_optimal_config(s), "s3");
}

TEST(SelectOptimal, Singleton) {
  std::vector<ConfigCost> s = {{"s1", 4, 4}};
  EXPECT_EQ(select_optimal_config(s), "s1");
}

TEST(SelectOptimal, TieGoesToFirst) {
  std::vector<ConfigCost> s = {{"s1", 3, 3}, {"s2", 3, 3}};
  EXPECT_EQ(select_optimal_config(s), "s1");
}

TEST(SelectOptimal, TieBrokenBySmallerGap) {
  std::vector<ConfigCost> s = {{"a", 3, 1}, {"b", 3, 2.5}};
  EXPECT_EQ(select_optimal_config(s), "b");
}

TEST(SelectOptimal, Empty) {
  std::vector<ConfigCost> s;
  try {
    select_optimal_config(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyConfigSet);
  }
}

TEST(SelectOptimal, MatchesBruteForceOnRandomSets) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> small(0, 20);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng() % 50;
    std::vector<ConfigCost> s;
    std::vector<std::pair<double, double>> raw;
    for (std::size_t i = 0; i < n; ++i) {
      // Small integers force plenty of ties.
      const double pc = small(rng) / 4.0;
      const double sc = small(rng) / 4.0;
      s.push_back({std::to_string(i), pc, sc});
      raw.emplace_back(pc, sc);
    }
    ASSERT_EQ(select_optimal_index(s), oracle::brute_select(raw));
  }
}

TEST(TieredCost, WorkedExample) {
  TieredCostParams p{2, 1, 5, 10, 1, 0.1, 0.2};
  EXPECT_DOUBLE_EQ(tiered_cost(p), 3.2);
  EXPECT_DOUBLE_EQ(tiered_cost(p), oracle::tiered_total(2, 1, 5, 10, 1, 0.1, 0.2));
}

TEST(TieredCost, NoMisses) {
  TieredCostParams p{3, 9, 9, 4, 1.5, 1.0, 0.0};
  EXPECT_DOUBLE_EQ(tiered_cost(p), std::max(3.0, 4.0) + 1.5);
}

TEST(TieredCost, Zeros) { EXPECT_EQ(tiered_cost(TieredCostParams{}), 0.0); }

TEST(TieredCost, MonotoneInMrAndCr) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 10);
  for (int i = 0; i < 500; ++i) {
    TieredCostParams p{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng) / 10, u(rng) / 10};
    auto q = p;
    q.mr = std::min(1.0, p.mr + 0.05);
    EXPECT_GE(tiered_cost(q), tiered_cost(p));
    q = p;
    q.cr = std::min(1.0, p.cr + 0.05);
    EXPECT_GE(tiered_cost(q), tiered_cost(p));
  }
}

TEST(OptimalCacheRatio, LinearCurve) {
  const auto r = optimal_cache_ratio([](double cr) { return 1 - cr; }, 1, 4, 10);
  EXPECT_NEAR(r.cr, 5.0 / 14.0, 1e-6);
  EXPECT_TRUE(r.at_crossing);
  EXPECT_NEAR(r.cost, 10 * 5.0 / 14.0, 1e-5);
}

TEST(OptimalCacheRatio, NoMissPenalty) {
  const auto r = optimal_cache_ratio([](double cr) { return 1 - cr; }, 2, 0, 8);
  EXPECT_NEAR(r.cr, 0.25, 1e-6);
  const auto clamped = optimal_cache_ratio([](double cr) { return 1 - cr; }, 20, 0, 8);
  EXPECT_NEAR(clamped.cr, 1.0, 1e-6);
  EXPECT_NEAR(clamped.cost, 20, 1e-9);
}

TEST(OptimalCacheRatio, StepCurve) {
  auto f = [](double cr) { return cr < 0.5 ? 1.0 : 0.0; };
  const auto r = optimal_cache_ratio(f, 1, 2, 4);
  const auto g = oracle::grid_min_max(f, 1, 2, 4);
  EXPECT_NEAR(r.cr, 0.5, 1e-4);
  EXPECT_NEAR(r.cost, 2.0, 1e-9);
  EXPECT_NEAR(r.cost, g.cost, 1e-9);
}

TEST(OptimalCacheRatio, RejectsIncreasingCurve) {
  try {
    optimal_cache_ratio([](double cr) { return cr; }, 1, 1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidCurve);
  }
}

TEST(OptimalCacheRatio, RandomStepCurvesMatchGrid) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> cuts(1 + rng() % 8);
    for (auto& c : cuts) c = u(rng);
    std::sort(cuts.begin(), cuts.end());
    std::vector<double> levels(cuts.size() + 1);
    for (auto& l : levels) l = u(rng);
    std::sort(levels.rbegin(), levels.rend());
    auto f = [&](double cr) {
      std::size_t i = std::upper_bound(cuts.begin(), cuts.end(), cr) - cuts.begin();
      return levels[i];
    };
    const double pc = u(rng) * 5, pm = u(rng) * 5, sc = 0.1 + u(rng) * 10;
    const auto r = optimal_cache_ratio(f, pc, pm, sc);
    const auto g = oracle::grid_min_max(f, pc, pm, sc);
    // Within one grid step of the brute-force minimizer's cost.
    EXPECT_LE(r.cost, g.cost + 1e-12);
    EXPECT_NEAR(std::max(pc + pm * f(r.cr), sc * r.cr), r.cost, 1e-9);
  }
}

TEST(BreakEven, WorkedExample) {
  const double expect = 1e-5 / (0.05 * (1024.0 / kGiB));
  EXPECT_NEAR(break_even_interval(1e-5, 0.05, 1024), expect, 1e-12 * expect);
  EXPECT_NEAR(expect, 209.7152, 1e-4);
}

TEST(BreakEven, InverseInRecordSize) {
  EXPECT_DOUBLE_EQ(break_even_interval(1e-5, 0.05, 2048), break_even_interval(1e-5, 0.05, 1024) / 2);
}

TEST(BreakEven, UnitsCancel) { EXPECT_NEAR(break_even_interval(0.3, 0.3, kGiB), 1.0, 1e-12); }

TEST(BreakEven, Homogeneous) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.1, 10);
  for (int i = 0; i < 100; ++i) {
    const double a = u(rng) * 1e-5, b = u(rng) * 0.01, r = u(rng) * 1000, k = u(rng);
    EXPECT_NEAR(break_even_interval(a * k, b * k, r), break_even_interval(a, b, r), 1e-9 * break_even_interval(a, b, r));
  }
}

TEST(BreakEven, RejectsNonPositive) {
  for (auto args : {std::array<double, 3>{0, 1, 1}, {1, -1, 1}, {1, 1, 0}}) {
    try {
      break_even_interval(args[0], args[1], args[2]);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kNonPositiveInput);
    }
  }
}

TEST(BreakEven, ReportTerms) {
  const auto r = break_even_report(1e-5, 0.05, 1024);
  EXPECT_DOUBLE_EQ(r.records_per_gb, kGiB / 1024);
  EXPECT_DOUBLE_EQ(r.seconds, break_even_interval(1e-5, 0.05, 1024));
}

TEST(StorageTierDominance, Examples) {
  EXPECT_TRUE(storage_tier_sc_dominates(0.1, 1, 5));
  EXPECT_FALSE(storage_tier_sc_dominates(0.5, 1, 5));
  EXPECT_TRUE(storage_tier_sc_dominates(0.0, 0.01, 100));
}

TEST(CostProperties, TotalIsMaxAndMonotone) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(1, 1e6);
  for (int i = 0; i < 500; ++i) {
    const InstanceSpec inst{u(rng) / 1e5, 1, 0};
    const auto m = meas(u(rng), u(rng));
    const auto p = profile(u(rng), u(rng));
    const double pc = performance_cost(p, inst, m), sc = space_cost(p, inst, m);
    EXPECT_EQ(total_cost(pc, sc), std::max(pc, sc));
    auto p2 = p;
    p2.qps *= 1.5;
    p2.data_size *= 1.5;
    EXPECT_GE(performance_cost(p2, inst, m), pc);
    EXPECT_GE(space_cost(p2, inst, m), sc);
  }
}

TEST(Tradeoff, ContinuousFamilyBalancesCosts) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.5, 2);
  int crossings = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const double a = u(rng), c = u(rng) / 10, p = u(rng);
    auto f = [=](double x) { return a / std::pow(x + c, p); };
    const double qps = 100 * u(rng), data = 100 * u(rng);
    const auto r = solve_tradeoff(f, 0.01, 10, qps, data);
    const bool crosses = qps * f(0.01) > data * 0.01 && qps * f(10) < data * 10;
    if (crosses) {
      ++crossings;
      EXPECT_LE(std::abs(r.pc - r.sc), 1e-6 * (r.pc + r.sc));
    }
    // Never worse than a fine grid.
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 20000; ++k) {
      const double x = 0.01 + (10 - 0.01) * k / 20000.0;
      best = std::min(best, std::max(qps * f(x), data * x));
    }
    EXPECT_LE(std::max(r.pc, r.sc), best * (1 + 1e-9));
  }
  EXPECT_GT(crossings, 50);
}
