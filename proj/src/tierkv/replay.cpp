#include "tierkv/replay.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <thread>

#include "tierkv/codec.hpp"
#include "tierkv/server.hpp"

namespace tierkv::replay {

using Clock = std::chrono::steady_clock;

namespace {

sync::Op to_op(const workload::TraceRecord& rec, std::uint64_t conn) {
  switch (rec.op) {
    case workload::TraceOp::kGet:
      return sync::Op::get(rec.key, conn);
    case workload::TraceOp::kSet:
      return sync::Op::set(rec.key, rec.value, conn);
    case workload::TraceOp::kDel:
      return sync::Op::del(rec.key, conn);
  }
  return {};
}

TargetCounters from_store(const sync::TieredStore& store) {
  const auto st = store.stats();
  return {st.storage.reads, st.storage.writes, st.cache.hits, st.cache.misses};
}

std::atomic<std::uint64_t> next_session_id{1ull << 40};

class StoreSession final : public Session {
 public:
  explicit StoreSession(sync::TieredStore& store) : store_(store), id_(next_session_id++) {}
  bool execute(const workload::TraceRecord& rec) override {
    sync::Op op = to_op(rec, id_);
    return store_.execute_tick({&op, 1})[0].ok();
  }

 private:
  sync::TieredStore& store_;
  std::uint64_t id_;
};

class StoreTarget final : public Target {
 public:
  explicit StoreTarget(sync::TieredStore& store) : store_(store) {}
  std::unique_ptr<Session> open_session() override { return std::make_unique<StoreSession>(store_); }
  TargetCounters counters() override { return from_store(store_); }

 private:
  sync::TieredStore& store_;
};

class ExecutorSession final : public Session {
 public:
  explicit ExecutorSession(exec::ElasticExecutor& ex) : ex_(ex), id_(next_session_id++) {}
  bool execute(const workload::TraceRecord& rec) override { return ex_.submit(to_op(rec, id_)).get().ok(); }

 private:
  exec::ElasticExecutor& ex_;
  std::uint64_t id_;
};

class ExecutorTarget final : public Target {
 public:
  explicit ExecutorTarget(exec::ElasticExecutor& ex) : ex_(ex) {}
  std::unique_ptr<Session> open_session() override { return std::make_unique<ExecutorSession>(ex_); }
  TargetCounters counters() override {
    ex_.drain();
    return from_store(ex_.store());
  }

 private:
  exec::ElasticExecutor& ex_;
};

class TcpSession final : public Session {
 public:
  TcpSession(const std::string& host, std::uint16_t port) : client_(host, port) {}
  ~TcpSession() override { client_.quit(); }
  bool execute(const workload::TraceRecord& rec) override {
    try {
      switch (rec.op) {
        case workload::TraceOp::kGet:
          client_.get(rec.key);
          break;
        case workload::TraceOp::kSet:
          client_.set(rec.key, rec.value);
          break;
        case workload::TraceOp::kDel:
          client_.del(rec.key);
          break;
      }
      return true;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kStoreUnreachable) throw;
      return false;
    }
  }

 private:
  server::Client client_;
};

class TcpTarget final : public Target {
 public:
  TcpTarget(std::string host, std::uint16_t port) : host_(std::move(host)), port_(port) {}
  std::unique_ptr<Session> open_session() override { return std::make_unique<TcpSession>(host_, port_); }
  TargetCounters counters() override {
    server::Client c(host_, port_);
    auto st = c.stats();
    c.quit();
    auto num = [&](const char* k) -> std::uint64_t {
      auto it = st.find(k);
      return it == st.end() ? 0 : std::stoull(it->second);
    };
    return {num("storage_reads"), num("storage_writes"), num("cache_hits"), num("cache_misses")};
  }

 private:
  std::string host_;
  std::uint16_t port_;
};

double rank_of_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0.0;
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted.size())));
  if (rank == 0) rank = 1;
  return sorted[std::min(rank, sorted.size()) - 1];
}

struct SessionResult {
  std::vector<double> latencies_us;
  std::uint64_t gets = 0, sets = 0, dels = 0, errors = 0;
};

}  // namespace

std::unique_ptr<Target> store_target(sync::TieredStore& store) { return std::make_unique<StoreTarget>(store); }

std::unique_ptr<Target> executor_target(exec::ElasticExecutor& executor) {
  return std::make_unique<ExecutorTarget>(executor);
}

std::unique_ptr<Target> tcp_target(std::string host, std::uint16_t port) {
  return std::make_unique<TcpTarget>(std::move(host), port);
}

double percentile(std::vector<double> samples, double p) {
  std::sort(samples.begin(), samples.end());
  return rank_of_sorted(samples, p);
}

ReplayReport replay(const workload::Trace& trace, Target& target, const ReplayOptions& options) {
  ReplayReport report;
  if (trace.empty()) return report;
  const std::size_t conc = std::max<std::size_t>(1, options.concurrency);
  std::vector<std::vector<std::size_t>> parts(conc);
  for (std::size_t i = 0; i < trace.size(); ++i) parts[codec::fnv1a64(trace[i].key) % conc].push_back(i);

  std::vector<std::unique_ptr<Session>> sessions;
  for (std::size_t s = 0; s < conc; ++s) sessions.push_back(target.open_session());

  const TargetCounters before = target.counters();
  const bool windowed = options.duration.count() > 0;
  const auto start = Clock::now();
  const auto window_start = start + std::chrono::duration_cast<Clock::duration>(options.warmup);
  const auto window_end = window_start + std::chrono::duration_cast<Clock::duration>(options.duration);
  const std::uint64_t ts0 = trace.front().ts;

  std::vector<SessionResult> results(conc);
  std::mutex error_mu;
  std::exception_ptr failure;
  auto run = [&](std::size_t s) {
    SessionResult& out = results[s];
    const auto& mine = parts[s];
    if (mine.empty()) return;
    try {
      const double per_session_qps = options.fixed_qps / static_cast<double>(conc);
      std::uint64_t issued = 0;
      for (std::size_t k = 0;; ++k) {
        if (!windowed && k == mine.size()) break;
        const std::size_t idx = mine[k % mine.size()];
        const auto& rec = trace[idx];
        if (options.pacing == Pacing::kTimed && !windowed) {
          std::this_thread::sleep_until(start + std::chrono::microseconds(rec.ts - ts0));
        } else if (options.pacing == Pacing::kFixedQps && options.fixed_qps > 0) {
          const double at = windowed ? static_cast<double>(issued) / per_session_qps
                                     : static_cast<double>(idx) / options.fixed_qps;
          std::this_thread::sleep_until(start + std::chrono::duration_cast<Clock::duration>(
                                                    std::chrono::duration<double>(at)));
        }
        const auto t0 = Clock::now();
        if (windowed && t0 >= window_end) break;
        const bool ok = sessions[s]->execute(rec);
        const auto t1 = Clock::now();
        ++issued;
        if (windowed && (t1 < window_start || t1 >= window_end)) continue;
        out.latencies_us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
        if (!ok) ++out.errors;
        switch (rec.op) {
          case workload::TraceOp::kGet:
            ++out.gets;
            break;
          case workload::TraceOp::kSet:
            ++out.sets;
            break;
          case workload::TraceOp::kDel:
            ++out.dels;
            break;
        }
      }
    } catch (...) {
      std::lock_guard lock(error_mu);
      if (!failure) failure = std::current_exception();
    }
  };

  if (conc == 1) {
    run(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t s = 0; s < conc; ++s) threads.emplace_back(run, s);
    for (auto& t : threads) t.join();
  }
  const auto finish = Clock::now();
  if (failure) std::rethrow_exception(failure);
  sessions.clear();
  const TargetCounters after = target.counters();

  std::vector<double> lat;
  for (auto& r : results) {
    lat.insert(lat.end(), r.latencies_us.begin(), r.latencies_us.end());
    report.gets += r.gets;
    report.sets += r.sets;
    report.dels += r.dels;
    report.errors += r.errors;
  }
  std::sort(lat.begin(), lat.end());
  report.ops = lat.size();
  report.elapsed_s = windowed ? options.duration.count() : std::chrono::duration<double>(finish - start).count();
  report.achieved_qps = report.elapsed_s > 0 ? static_cast<double>(report.ops) / report.elapsed_s : 0.0;
  report.p50_us = rank_of_sorted(lat, 0.50);
  report.p99_us = rank_of_sorted(lat, 0.99);
  report.p999_us = rank_of_sorted(lat, 0.999);
  report.storage_reads = after.storage_reads - before.storage_reads;
  report.storage_writes = after.storage_writes - before.storage_writes;
  report.cache_hits = after.cache_hits - before.cache_hits;
  report.cache_misses = after.cache_misses - before.cache_misses;
  return report;
}

std::string ReplayReport::csv_header() const {
  return "ops,gets,sets,dels,errors,elapsed_s,achieved_qps,p50_us,p99_us,p999_us,storage_reads,storage_writes,"
         "cache_hits,cache_misses,hit_ratio";
}

std::string ReplayReport::csv_row() const {
  std::ostringstream o;
  o.precision(10);
  o << ops << ',' << gets << ',' << sets << ',' << dels << ',' << errors << ',' << elapsed_s << ','
    << achieved_qps << ',' << p50_us << ',' << p99_us << ',' << p999_us << ',' << storage_reads << ','
    << storage_writes << ',' << cache_hits << ',' << cache_misses << ',' << hit_ratio();
  return o.str();
}

std::string ReplayReport::text() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "ops %llu (get %llu, set %llu, del %llu, errors %llu) in %.3f s = %.1f ops/s\n"
                "latency us: p50 %.1f  p99 %.1f  p99.9 %.1f\n"
                "storage reads %llu, writes %llu; cache hits %llu, misses %llu (hit ratio %.4f)\n",
                static_cast<unsigned long long>(ops), static_cast<unsigned long long>(gets),
                static_cast<unsigned long long>(sets), static_cast<unsigned long long>(dels),
                static_cast<unsigned long long>(errors), elapsed_s, achieved_qps, p50_us, p99_us, p999_us,
                static_cast<unsigned long long>(storage_reads), static_cast<unsigned long long>(storage_writes),
                static_cast<unsigned long long>(cache_hits), static_cast<unsigned long long>(cache_misses),
                hit_ratio());
  return buf;
}

}  // namespace tierkv::replay
