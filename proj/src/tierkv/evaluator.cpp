#include "tierkv/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <ostream>

#include "tierkv/mrc.hpp"

namespace tierkv::eval {

// ---------------------------------------------------------------------------
// Measurements

PerfMeasurement measure_max_perf(replay::Target& target, const workload::Trace& run, const PerfOptions& options) {
  if (run.empty()) raise(ErrorCode::kEmptyTrace, "run phase is empty");
  if (!(options.slo_p99_us > 0)) raise(ErrorCode::kInvalidArgument, "slo_p99 must be > 0");
  PerfMeasurement m;
  double best = 0;
  for (std::size_t c = 1; c <= std::max<std::size_t>(1, options.max_concurrency); c *= 2) {
    replay::ReplayOptions ro;
    ro.concurrency = c;
    ro.warmup = options.warmup;
    ro.duration = options.window;
    const auto rep = replay::replay(run, target, ro);
    m.steps.push_back({c, rep.achieved_qps, rep.p99_us});
    if (rep.p99_us > options.slo_p99_us) {
      if (c == 1) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "p99 %.1f us exceeds SLO %.1f us at concurrency 1", rep.p99_us,
                      options.slo_p99_us);
        raise(ErrorCode::kNeverMeetsSlo, buf);
      }
      break;
    }
    const double previous = best;
    if (rep.achieved_qps > best) {
      best = rep.achieved_qps;
      m.concurrency = c;
      m.p99_us = rep.p99_us;
    }
    if (previous > 0 && rep.achieved_qps < previous * (1.0 + options.plateau)) break;
  }
  if (best <= 0) raise(ErrorCode::kInvalidArgument, "no operation completed inside the measurement window");
  m.raw_max_perf = best;
  m.max_perf = best * options.perf_headroom;
  return m;
}

double measure_max_space(std::span<const workload::TraceRecord> records, const SpaceOptions& options,
                         const compress::Dictionary* dictionary) {
  if (records.empty()) return 0.0;
  const double budget = options.memory * options.space_headroom;
  std::vector<double> charge(records.size());
  std::vector<double> raw(records.size());
  double cycle_charge = 0;
  double cycle_raw = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::size_t stored = dictionary ? compress::compress(r.value, *dictionary).size() : r.value.size();
    charge[i] = static_cast<double>(r.key.size() + stored + options.entry_overhead);
    raw[i] = static_cast<double>(r.key.size() + r.value.size());
    cycle_charge += charge[i];
    cycle_raw += raw[i];
  }
  if (cycle_charge <= 0) return 0.0;
  double used = 0;
  double admitted = 0;
  if (options.cycle) {
    // Whole passes over the stream first, then record by record.
    const double passes = std::floor(budget / cycle_charge);
    used = passes * cycle_charge;
    admitted = passes * cycle_raw;
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (used + charge[i] > budget) break;
    used += charge[i];
    admitted += raw[i];
  }
  return admitted;
}

// ---------------------------------------------------------------------------
// Store construction

namespace {

double charged_total(const workload::Trace& load, std::size_t overhead, double* max_charge) {
  double total = 0;
  *max_charge = 0;
  for (const auto& r : load) {
    const double c = static_cast<double>(r.key.size() + r.value.size() + overhead);
    total += c;
    *max_charge = std::max(*max_charge, c);
  }
  return total;
}

std::shared_ptr<storage::StorageBackend> make_backend(const EvalConfig& config) {
  const auto& b = config.backend;
  if (b.kind == "sim") {
    auto sim = std::make_shared<storage::SimulatedBackend>();
    sim->set_latency(b.read_latency_us, b.write_latency_us);
    sim->set_fail_every(b.fail_every);
    return sim;
  }
  if (b.kind == "log") {
    std::filesystem::path dir = b.path.empty() ? std::filesystem::temp_directory_path() : std::filesystem::path(b.path);
    std::filesystem::create_directories(dir);
    auto file = dir / (config.config_id + ".log");
    std::filesystem::remove(file);
    return std::make_shared<storage::LogBackend>(file);
  }
  raise(ErrorCode::kConfigError, "unknown storage backend '" + b.kind + "'");
}

}  // namespace

StoreBundle build_store(const EvalConfig& config, const workload::Trace& load, const EvalOptions& options) {
  StoreBundle b;
  sync::StoreOptions so = config.store;
  double max_charge = 0;
  const double total = charged_total(load, so.cache.entry_overhead, &max_charge);
  if (config.tiered()) {
    if (!(config.cache_ratio > 0 && config.cache_ratio <= 1)) {
      raise(ErrorCode::kInvalidArgument, "cache_ratio must be in (0, 1]");
    }
    so.cache.capacity_bytes = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(config.cache_ratio * total)));
    b.backend = make_backend(config);
  } else {
    // A pure cache holds the whole dataset; slack covers shard imbalance.
    const double need = total * 1.25 + static_cast<double>(so.cache.shard_count) * max_charge;
    so.cache.capacity_bytes = std::max<std::size_t>(so.cache.capacity_bytes, static_cast<std::size_t>(need));
  }
  if (so.compression && !so.dictionary) {
    std::vector<std::string> samples;
    for (const auto& r : load) {
      if (samples.size() >= options.dict_samples) break;
      if (r.op == workload::TraceOp::kSet) samples.push_back(r.value);
    }
    so.dictionary = compress::train_dictionary(samples, so.compression_options.train);
  }
  b.store = std::make_unique<sync::TieredStore>(so, b.backend);

  constexpr std::size_t kChunk = 1024;
  for (std::size_t i = 0; i < load.size(); i += kChunk) {
    const std::size_t end = std::min(load.size(), i + kChunk);
    if (config.tiered()) {
      std::vector<storage::WriteOp> batch;
      for (std::size_t j = i; j < end; ++j) {
        if (load[j].op == workload::TraceOp::kSet) batch.push_back(storage::WriteOp::put(load[j].key, load[j].value));
      }
      // Loading bypasses fault injection.
      if (auto* sim = dynamic_cast<storage::SimulatedBackend*>(b.backend.get())) {
        sim->set_fail_every(0);
        sim->write_batch(batch);
        sim->set_fail_every(config.backend.fail_every);
      } else {
        b.backend->write_batch(batch);
      }
    } else {
      std::vector<sync::Op> ops;
      for (std::size_t j = i; j < end; ++j) {
        if (load[j].op == workload::TraceOp::kSet) ops.push_back(sync::Op::set(load[j].key, load[j].value));
      }
      for (const auto& r : b.store->execute_tick(ops)) {
        if (!r.ok()) raise(r.status, "load failed: " + r.message);
      }
    }
  }
  b.store->reset_counters();

  exec::ExecOptions eo;
  eo.policy = config.exec_policy;
  eo.controller.threads_max = static_cast<std::size_t>(std::max(2, config.instance.cpu_cores));
  b.executor = std::make_unique<exec::ElasticExecutor>(*b.store, eo);
  return b;
}

RowMeasurement measure(const EvalConfig& config, const workload::Workload& workload, const EvalOptions& options) {
  RowMeasurement row;
  row.config_id = config.config_id;
  row.instance = config.instance;
  row.tiered = config.tiered();
  row.cache_ratio = config.tiered() ? config.cache_ratio : 1.0;
  row.replica_factor =
      config.store.sync.policy == sync::SyncPolicy::kWriteBack ? config.store.sync.replica_factor : 1.0;
  row.storage_tier = config.storage_tier;
  try {
    config.instance.validate();
    auto bundle = build_store(config, workload.load, options);
    auto target = replay::executor_target(*bundle.executor);
    PerfOptions po = options.perf;
    po.slo_p99_us = config.slo_p99_us;
    po.perf_headroom = config.headroom.perf;
    const auto perf = measure_max_perf(*target, workload.run, po);
    bundle.executor->drain();
    const auto st = bundle.store->stats();
    row.max_perf = perf.max_perf;
    const auto lookups = st.cache.hits + st.cache.misses;
    row.miss_ratio = lookups == 0 ? 0.0 : static_cast<double>(st.cache.misses) / static_cast<double>(lookups);
    double client_seconds = 0;
    for (const auto& s : perf.steps) {
      client_seconds += static_cast<double>(s.concurrency) * (po.warmup.count() + po.window.count());
    }
    row.miss_time_fraction =
        client_seconds > 0 ? std::clamp(static_cast<double>(st.miss_penalty_ns) * 1e-9 / client_seconds, 0.0, 1.0)
                           : 0.0;

    SpaceOptions so;
    so.memory = config.instance.memory;
    so.space_headroom = config.headroom.space;
    so.entry_overhead = config.store.cache.entry_overhead;
    std::shared_ptr<const compress::Dictionary> dict;
    if (auto* cm = bundle.store->compression()) dict = cm->current();
    row.max_space = measure_max_space(workload.load, so, dict.get());
  } catch (const Error& e) {
    row.failed = true;
    row.error = std::string(to_string(e.code())) + ": " + e.what();
  }
  return row;
}

// ---------------------------------------------------------------------------
// Calculation

CostReport calculate(std::span<const RowMeasurement> rows, const cost::WorkloadProfile& profile,
                     const EvalOptions& options) {
  profile.validate();
  CostReport report;
  const double data_gb = profile.data_size / cost::kBytesPerGB;
  for (const auto& m : rows) {
    CostRow r;
    r.config_id = m.config_id;
    r.max_perf = m.max_perf;
    r.max_space = m.max_space;
    r.failed = m.failed;
    r.error = m.error;
    if (!r.failed) {
      try {
        const cost::ConfigMeasurement cm{m.config_id, m.max_perf, m.max_space};
        const auto metrics = cost::cost_metrics(m.instance, cm);
        r.cpqps = metrics.cpqps;
        r.cpgb = metrics.cpgb;
        if (!m.tiered) {
          r.pc = cost::performance_cost(profile, m.instance, cm, {options.ceiling});
          r.sc = cost::space_cost(profile, m.instance, cm, {options.ceiling});
        } else {
          r.tiered = true;
          r.cr = m.cache_ratio;
          r.mr = m.miss_ratio;
          const double g = r.cpqps * profile.qps;
          const double miss_part = g * m.miss_time_fraction;
          auto& p = r.params;
          p.cr = m.cache_ratio;
          p.mr = m.miss_ratio;
          p.pc_cache = g - miss_part;
          p.pc_miss = m.miss_ratio > 0 ? miss_part / m.miss_ratio : 0.0;
          p.sc_cache = r.cpgb * data_gb * m.replica_factor;
          const auto& st = m.storage_tier;
          p.pc_storage = st.instance.cost * profile.qps / st.max_perf;
          p.sc_storage = st.instance.cost * profile.data_size / st.max_space;
          r.g = p.pc_cache + p.pc_miss * p.mr;
          r.h = p.sc_cache * p.cr;
          r.t = std::max(p.pc_storage * p.mr, p.sc_storage);
          r.pc = r.g + r.t;
          r.sc = r.h + r.t;
        }
        r.total = cost::total_cost(r.pc, r.sc);
        r.cls = cost::classify_workload(r.pc, r.sc);
      } catch (const Error& e) {
        r.failed = true;
        r.error = std::string(to_string(e.code())) + ": " + e.what();
      }
    }
    report.rows.push_back(std::move(r));
  }

  std::vector<cost::ConfigCost> candidates;
  std::vector<std::size_t> index;
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    if (r.failed) continue;
    candidates.push_back({r.config_id, r.pc, r.sc});
    index.push_back(i);
  }
  if (!candidates.empty()) {
    const std::size_t w = index[cost::select_optimal_index(candidates)];
    report.winner_index = w;
    report.winner = report.rows[w].config_id;
  }
  return report;
}

CostReport evaluate(std::span<const EvalConfig> configs, const cost::WorkloadProfile& profile,
                    const workload::Workload& workload, const EvalOptions& options) {
  if (configs.empty()) raise(ErrorCode::kEmptyConfigSet, "no configurations to evaluate");
  std::vector<RowMeasurement> rows;
  for (const auto& c : configs) rows.push_back(measure(c, workload, options));
  return calculate(rows, profile, options);
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void CostReport::write_csv(std::ostream& out) const {
  out << "config_id,max_perf_qps,max_space_bytes,cpqps,cpgb,pc,sc,total_cost,class,winner_flag\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out << r.config_id << ',' << fmt(r.max_perf) << ',' << fmt(r.max_space) << ',';
    if (r.failed) {
      out << ",,,,,failed,0\n";
      continue;
    }
    out << fmt(r.cpqps) << ',' << fmt(r.cpgb) << ',' << fmt(r.pc) << ',' << fmt(r.sc) << ',' << fmt(r.total) << ','
        << cost::to_string(r.cls) << ',' << (winner_index == i ? 1 : 0) << '\n';
  }
}

void CostReport::write_text(std::ostream& out) const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out << (winner_index == i ? "* " : "  ") << r.config_id << ": ";
    if (r.failed) {
      out << "FAILED (" << r.error << ")\n";
      continue;
    }
    out << "max_perf " << fmt(r.max_perf) << " qps, max_space " << fmt(r.max_space) << " B, pc " << fmt(r.pc)
        << ", sc " << fmt(r.sc) << ", total " << fmt(r.total) << " [" << cost::to_string(r.cls) << "]";
    if (r.tiered) {
      out << "  cr " << fmt(r.cr) << " mr " << fmt(r.mr) << " = max(" << fmt(r.g) << ", " << fmt(r.h) << ") + "
          << fmt(r.t);
    }
    out << '\n';
  }
  out << "winner: " << (winner.empty() ? "(none)" : winner) << '\n';
}

// ---------------------------------------------------------------------------
// Cache ratio sweep

SweepParams sweep_params_from(const CostRow& row) {
  return {row.params.pc_cache, row.params.pc_miss, row.params.pc_storage, row.params.sc_cache, row.params.sc_storage};
}

double measure_miss_ratio(const EvalConfig& config, const workload::Workload& workload, double cr,
                          const EvalOptions& options) {
  if (!config.tiered()) raise(ErrorCode::kInvalidArgument, "cache ratio sweep needs a tiered policy");
  EvalConfig c = config;
  c.cache_ratio = cr;
  c.exec_policy = exec::ExecPolicy::kSingle;
  auto bundle = build_store(c, workload.load, options);
  auto target = replay::store_target(*bundle.store);
  const auto rep = replay::replay(workload.run, *target, {});
  const auto lookups = rep.cache_hits + rep.cache_misses;
  return lookups == 0 ? 0.0 : static_cast<double>(rep.cache_misses) / static_cast<double>(lookups);
}

SweepResult sweep_cache_ratio(std::span<const double> ratios, const EvalConfig& base,
                              const workload::Workload& workload, const SweepParams& params,
                              const EvalOptions& options) {
  if (ratios.empty()) raise(ErrorCode::kInvalidArgument, "no cache ratios to sweep");
  if (workload.run.empty()) raise(ErrorCode::kEmptyTrace, "run phase is empty");
  SweepResult res;
  double best = std::numeric_limits<double>::infinity();
  for (double cr : ratios) {
    SweepPoint p;
    p.cr = cr;
    p.mr = measure_miss_ratio(base, workload, cr, options);
    const double t = std::max(params.pc_storage * p.mr, params.sc_storage);
    p.pc = params.pc_cache + params.pc_miss * p.mr + t;
    p.sc = params.sc_cache * cr + t;
    p.total = std::max(p.pc, p.sc);
    if (p.total < best) {
      best = p.total;
      res.recommended_cr = cr;
    }
    res.points.push_back(p);
  }

  std::vector<std::string_view> keys;
  keys.reserve(workload.run.size());
  for (const auto& r : workload.run) keys.push_back(r.key);
  double avg = 0;
  for (const auto& r : workload.load) avg += static_cast<double>(r.key.size() + r.value.size());
  const double n = static_cast<double>(std::max<std::size_t>(1, workload.load.size()));
  avg = workload.load.empty() ? 1.0 : avg / n;
  auto curve = mrc::full_miss_ratio_curve(mrc::stack_distance_histogram(keys));
  // The cache is sized against the loaded dataset, so the ratio is taken
  // over every loaded key, not only those the run touches.
  mrc::RatioCurve f(std::move(curve), avg * n, avg);
  res.analytic = cost::optimal_cache_ratio([&](double cr) { return f(cr); }, params.pc_cache, params.pc_miss,
                                           params.sc_cache);
  return res;
}

void SweepResult::write_csv(std::ostream& out) const {
  out << "cr,mr,pc,sc,total\n";
  for (const auto& p : points) {
    out << fmt(p.cr) << ',' << fmt(p.mr) << ',' << fmt(p.pc) << ',' << fmt(p.sc) << ',' << fmt(p.total) << '\n';
  }
}

}  // namespace tierkv::eval
