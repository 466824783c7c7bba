#include "tierkv/elastic_exec.hpp"

#include <algorithm>
#include <numeric>

#include "tierkv/error.hpp"

namespace tierkv::exec {

std::string to_string(const ExecMode& m) {
  if (m.mode == Mode::kSingle) return "single";
  return "multi(" + std::to_string(m.workers) + ")";
}

void LoadWindow::push(double qps) {
  samples_.push_back(qps);
  while (samples_.size() > len_) samples_.pop_front();
}

double LoadWindow::mean() const {
  if (samples_.empty()) return 0.0;
  return std::accumulate(samples_.begin(), samples_.end(), 0.0) / static_cast<double>(samples_.size());
}

ExecMode decide_mode(const ExecMode& current, std::chrono::duration<double> time_in_mode, const LoadWindow& window,
                     const ControllerOptions& options) {
  if (window.empty()) return current;
  const double qps = window.mean();
  if (current.mode == Mode::kSingle) {
    if (qps > options.high_watermark) return ExecMode::multi(std::max<std::size_t>(2, options.threads_max));
    return current;
  }
  if (qps < options.low_watermark && time_in_mode >= options.cooldown) return ExecMode::single();
  return current;
}

double calibrate_single_thread_qps(std::chrono::duration<double> budget) {
  sync::StoreOptions so;
  so.sync.policy = sync::SyncPolicy::kCacheOnly;
  so.sync.background_flusher = false;
  so.cache.shard_count = 1;
  sync::TieredStore store(so, nullptr);
  std::vector<sync::Op> ops;
  for (int i = 0; i < 64; ++i) {
    const std::string key = "calib" + std::to_string(i * 37 % 1024);
    if (i % 2 == 0) {
      ops.push_back(sync::Op::set(key, std::string(64, 'x')));
    } else {
      ops.push_back(sync::Op::get(key));
    }
  }
  const auto start = std::chrono::steady_clock::now();
  const auto end = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(budget);
  std::uint64_t done = 0;
  auto now = start;
  do {
    // One op per tick, as a lightly loaded event loop would see them.
    for (const auto& op : ops) store.execute_tick({&op, 1});
    done += ops.size();
    now = std::chrono::steady_clock::now();
  } while (now < end);
  const double secs = std::chrono::duration<double>(now - start).count();
  return secs > 0 ? static_cast<double>(done) / secs : 0.0;
}

ExecPolicy parse_exec_policy(const std::string& s) {
  if (s == "single") return ExecPolicy::kSingle;
  if (s == "multi") return ExecPolicy::kMulti;
  if (s == "elastic") return ExecPolicy::kElastic;
  raise(ErrorCode::kConfigError, "unknown exec mode '" + s + "'");
}

ElasticExecutor::ElasticExecutor(sync::TieredStore& store, ExecOptions options)
    : store_(store), options_(options), owner_(store.shard_count()), owner_worker_(store.shard_count()) {
  auto& c = options_.controller;
  if (c.low_watermark >= c.high_watermark) {
    raise(ErrorCode::kInvalidArgument, "low watermark must be below high watermark");
  }
  if (c.threads_max < 2) c.threads_max = 2;
  if (options_.max_tick_ops == 0) options_.max_tick_ops = 1;
  for (std::size_t i = 0; i < store.shard_count(); ++i) queues_.push_back(std::make_unique<ShardQueue>());
  started_ = std::chrono::steady_clock::now();
  const ExecMode initial =
      options_.policy == ExecPolicy::kMulti ? ExecMode::multi(c.threads_max) : ExecMode::single();
  {
    std::unique_lock lock(workers_mu_);
    start_workers(initial);
  }
  if (options_.policy == ExecPolicy::kElastic) controller_ = std::thread([this] { controller_loop(); });
}

ElasticExecutor::~ElasticExecutor() {
  {
    std::lock_guard lock(ctl_mu_);
    ctl_stop_ = true;
  }
  ctl_cv_.notify_all();
  if (controller_.joinable()) controller_.join();
  drain();
  std::unique_lock lock(workers_mu_);
  stop_workers();
}

void ElasticExecutor::start_workers(ExecMode m) {
  const std::size_t n = m.mode == Mode::kSingle ? 1 : std::max<std::size_t>(2, m.workers);
  workers_.clear();
  for (std::size_t i = 0; i < n; ++i) {
    auto w = std::make_unique<Worker>();
    w->id = i;
    workers_.push_back(std::move(w));
  }
  for (std::size_t s = 0; s < queues_.size(); ++s) {
    owner_[s] = s % n;
    owner_worker_[s] = workers_[s % n].get();
    workers_[s % n]->shards.push_back(s);
  }
  mode_ = m.mode == Mode::kSingle ? ExecMode::single() : ExecMode::multi(n);
  mode_since_ = std::chrono::steady_clock::now();
  for (auto& w : workers_) {
    Worker* raw = w.get();
    w->thread = std::thread([this, raw] { worker_loop(*raw); });
  }
}

void ElasticExecutor::stop_workers() {
  for (auto& w : workers_) {
    {
      std::lock_guard lock(w->mu);
      w->stop = true;
    }
    w->cv.notify_all();
  }
  for (auto& w : workers_) {
    if (w->thread.joinable()) w->thread.join();
    retired_.push_back(std::move(w));
  }
  workers_.clear();
}

bool ElasticExecutor::has_work(const Worker& w) const {
  return std::any_of(w.shards.begin(), w.shards.end(), [&](std::size_t s) { return queues_[s]->size.load() > 0; });
}

void ElasticExecutor::submit(sync::Op op, Completion done) {
  const std::size_t shard = store_.shard_of(op.key);
  ++submitted_;
  ShardQueue& q = *queues_[shard];
  {
    std::lock_guard lock(q.mu);
    q.items.push_back({std::move(op), std::move(done)});
    ++q.size;
  }
  Worker* owner = owner_worker_[shard].load();
  if (!owner) return;
  Worker& w = *owner;
  {
    std::lock_guard lock(w.mu);
  }
  w.cv.notify_one();
}

std::future<sync::OpResult> ElasticExecutor::submit(sync::Op op) {
  auto promise = std::make_shared<std::promise<sync::OpResult>>();
  auto fut = promise->get_future();
  submit(std::move(op), [promise](sync::OpResult r) { promise->set_value(std::move(r)); });
  return fut;
}

void ElasticExecutor::drain() {
  std::unique_lock lock(drain_mu_);
  drain_cv_.wait(lock, [this] { return completed_.load() >= submitted_.load(); });
}

void ElasticExecutor::run_shard(Worker& w, std::size_t shard) {
  ShardQueue& q = *queues_[shard];
  std::vector<Item> items;
  {
    std::lock_guard lock(q.mu);
    const std::size_t n = std::min(q.items.size(), options_.max_tick_ops);
    if (n == 0) return;
    items.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      items.push_back(std::move(q.items.front()));
      q.items.pop_front();
    }
    q.size -= n;
  }
  int expected = -1;
  if (!q.active.compare_exchange_strong(expected, static_cast<int>(w.id))) ++violations_;

  std::vector<sync::Op> ops;
  ops.reserve(items.size());
  for (auto& it : items) ops.push_back(std::move(it.op));
  std::vector<sync::OpResult> results;
  try {
    results = store_.execute_tick(ops);
  } catch (const std::exception& e) {
    results.assign(ops.size(), sync::OpResult{ErrorCode::kInternal, std::nullopt, false, false, e.what()});
  }
  q.active.store(-1);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].done) items[i].done(std::move(results[i]));
  }
  completed_ += items.size();
  {
    std::lock_guard lock(drain_mu_);
  }
  drain_cv_.notify_all();
}

void ElasticExecutor::worker_loop(Worker& w) {
  for (;;) {
    {
      std::unique_lock lock(w.mu);
      w.cv.wait(lock, [&] { return w.stop || has_work(w); });
      if (w.stop) return;
    }
    for (auto s : w.shards) run_shard(w, s);
  }
}

void ElasticExecutor::apply_mode(ExecMode target) {
  std::lock_guard apply(apply_mu_);
  if (target.mode == Mode::kSingle) target = ExecMode::single();
  if (target.mode == Mode::kMulti) target.workers = std::max<std::size_t>(2, target.workers);
  ExecMode from;
  {
    std::unique_lock lock(workers_mu_);
    if (mode_ == target) return;
    from = mode_;
    stop_workers();
    start_workers(target);
  }
  record_transition(from, target, 0.0);
}

void ElasticExecutor::record_transition(ExecMode from, ExecMode to, double qps) {
  std::lock_guard lock(transitions_mu_);
  const double at = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  transitions_.push_back({from, to, at, qps});
}

ExecMode ElasticExecutor::mode() const {
  std::shared_lock lock(workers_mu_);
  return mode_;
}

std::vector<Transition> ElasticExecutor::transitions() const {
  std::lock_guard lock(transitions_mu_);
  return transitions_;
}

std::vector<std::size_t> ElasticExecutor::ownership() const {
  std::shared_lock lock(workers_mu_);
  std::vector<std::size_t> out;
  out.reserve(owner_.size());
  for (const auto& o : owner_) out.push_back(o.load());
  return out;
}

void ElasticExecutor::controller_loop() {
  const auto& c = options_.controller;
  LoadWindow window(c.window_len);
  auto last = std::chrono::steady_clock::now();
  std::uint64_t last_completed = completed_.load();
  std::unique_lock lock(ctl_mu_);
  while (!ctl_stop_) {
    ctl_cv_.wait_for(lock, std::chrono::duration_cast<std::chrono::nanoseconds>(c.sample_period),
                     [this] { return ctl_stop_; });
    if (ctl_stop_) break;
    const auto now = std::chrono::steady_clock::now();
    const std::uint64_t done = completed_.load();
    const double secs = std::chrono::duration<double>(now - last).count();
    window.push(secs > 0 ? static_cast<double>(done - last_completed) / secs : 0.0);
    last = now;
    last_completed = done;

    ExecMode current;
    std::chrono::steady_clock::time_point since;
    {
      std::shared_lock wl(workers_mu_);
      current = mode_;
      since = mode_since_;
    }
    const ExecMode next = decide_mode(current, now - since, window, c);
    if (next == current) continue;
    lock.unlock();
    {
      std::lock_guard apply(apply_mu_);
      std::unique_lock wl(workers_mu_);
      stop_workers();
      start_workers(next);
    }
    record_transition(current, next, window.mean());
    lock.lock();
  }
}

}  // namespace tierkv::exec
