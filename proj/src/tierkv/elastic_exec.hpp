#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "tierkv/tier_sync.hpp"

// Execution engine. Operations are queued per cache shard; each shard is
// owned by exactly one worker, which drains its queues one tick at a time.
// Single mode runs one worker (the event loop) owning every shard; Multi(n)
// spreads the shards over n workers. A controller samples throughput and
// switches modes with hysteresis.
namespace tierkv::exec {

enum class Mode { kSingle, kMulti };

struct ExecMode {
  Mode mode = Mode::kSingle;
  std::size_t workers = 1;

  static ExecMode single() { return {Mode::kSingle, 1}; }
  static ExecMode multi(std::size_t n) { return {Mode::kMulti, n}; }
  bool operator==(const ExecMode&) const = default;
};

std::string to_string(const ExecMode& m);

class LoadWindow {
 public:
  explicit LoadWindow(std::size_t window_len = 2) : len_(window_len == 0 ? 1 : window_len) {}

  void push(double qps);
  bool empty() const { return samples_.empty(); }
  double mean() const;
  std::size_t size() const { return samples_.size(); }

 private:
  std::size_t len_;
  std::deque<double> samples_;
};

struct ControllerOptions {
  double high_watermark = 120000.0;
  double low_watermark = 100000.0;
  std::chrono::duration<double> cooldown{5.0};
  std::chrono::duration<double> sample_period{1.0};
  std::size_t window_len = 2;
  std::size_t threads_max = 4;
};

// Pure decision function. `time_in_mode` is how long `current` has been
// active.
ExecMode decide_mode(const ExecMode& current, std::chrono::duration<double> time_in_mode, const LoadWindow& window,
                     const ControllerOptions& options);

struct Transition {
  ExecMode from;
  ExecMode to;
  double at_seconds = 0;  // since executor start
  double qps = 0;         // windowed mean that triggered it (0 if forced)
};

// Throughput of one thread driving a scratch in-memory store with a
// 50/50 GET/SET mix for `budget`. Feeds the default watermarks
// (high = 0.8x, low = 0.5x).
double calibrate_single_thread_qps(std::chrono::duration<double> budget);

enum class ExecPolicy { kSingle, kMulti, kElastic };
ExecPolicy parse_exec_policy(const std::string& s);

struct ExecOptions {
  ExecPolicy policy = ExecPolicy::kElastic;
  ControllerOptions controller;
  std::size_t max_tick_ops = 1024;
};

class ElasticExecutor {
 public:
  using Completion = std::function<void(sync::OpResult)>;

  ElasticExecutor(sync::TieredStore& store, ExecOptions options);
  ~ElasticExecutor();

  ElasticExecutor(const ElasticExecutor&) = delete;
  ElasticExecutor& operator=(const ElasticExecutor&) = delete;

  // `done` runs on the worker that owns the key's shard.
  void submit(sync::Op op, Completion done);
  std::future<sync::OpResult> submit(sync::Op op);

  // Blocks until every submitted operation has completed.
  void drain();

  // Stop-the-shard handoff: current workers finish the tick they are in,
  // are joined, and the shards are repartitioned over new workers. Queued
  // operations stay in their shard queues across the switch.
  void apply_mode(ExecMode target);

  ExecMode mode() const;
  std::vector<Transition> transitions() const;
  std::vector<std::size_t> ownership() const;  // shard -> worker index
  // Times two workers were seen executing the same shard at once.
  std::uint64_t ownership_violations() const { return violations_.load(); }

  std::uint64_t submitted() const { return submitted_.load(); }
  std::uint64_t completed() const { return completed_.load(); }

  sync::TieredStore& store() { return store_; }
  const ExecOptions& options() const { return options_; }

 private:
  struct Item {
    sync::Op op;
    Completion done;
  };
  struct ShardQueue {
    std::mutex mu;
    std::deque<Item> items;
    std::atomic<std::size_t> size{0};
    std::atomic<int> active{-1};
  };
  struct Worker {
    std::size_t id = 0;
    std::vector<std::size_t> shards;
    std::mutex mu;
    std::condition_variable cv;
    bool stop = false;
    std::thread thread;
  };

  void start_workers(ExecMode m);
  void stop_workers();
  void worker_loop(Worker& w);
  bool has_work(const Worker& w) const;
  void run_shard(Worker& w, std::size_t shard);
  void controller_loop();
  void record_transition(ExecMode from, ExecMode to, double qps);

  sync::TieredStore& store_;
  ExecOptions options_;
  std::vector<std::unique_ptr<ShardQueue>> queues_;
  std::vector<std::atomic<std::size_t>> owner_;
  // Read by submit() without locks; retired workers stay allocated so a
  // stale pointer is only ever a spurious wakeup.
  std::vector<std::atomic<Worker*>> owner_worker_;
  std::vector<std::unique_ptr<Worker>> retired_;

  mutable std::shared_mutex workers_mu_;
  std::vector<std::unique_ptr<Worker>> workers_;
  ExecMode mode_;
  std::chrono::steady_clock::time_point mode_since_;
  std::mutex apply_mu_;

  mutable std::mutex transitions_mu_;
  std::vector<Transition> transitions_;
  std::chrono::steady_clock::time_point started_;

  std::atomic<std::uint64_t> submitted_{0};
  std::atomic<std::uint64_t> completed_{0};
  std::atomic<std::uint64_t> violations_{0};
  std::mutex drain_mu_;
  std::condition_variable drain_cv_;

  std::mutex ctl_mu_;
  std::condition_variable ctl_cv_;
  bool ctl_stop_ = false;
  std::thread controller_;
};

}  // namespace tierkv::exec
