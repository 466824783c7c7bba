#include "tierkv.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <memory>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "tierkv/compression.hpp"
#include "tierkv/config.hpp"
#include "tierkv/cost_model.hpp"
#include "tierkv/elastic_exec.hpp"
#include "tierkv/error.hpp"
#include "tierkv/evaluator.hpp"
#include "tierkv/mrc.hpp"
#include "tierkv/replay.hpp"
#include "tierkv/server.hpp"
#include "tierkv/storage_backend.hpp"
#include "tierkv/tier_sync.hpp"
#include "tierkv/workload.hpp"

using namespace tierkv;

struct tkv_config {
  config::Config cfg;
};

struct tkv_store {
  config::Settings settings;
  std::shared_ptr<storage::StorageBackend> backend;
  std::unique_ptr<sync::TieredStore> store;
  std::unique_ptr<exec::ElasticExecutor> executor;
};

struct tkv_server {
  std::unique_ptr<server::Server> srv;
};

struct tkv_workload {
  workload::Workload wl;
};

namespace {

thread_local std::string g_last_error;

tkv_status fail(ErrorCode code, const std::string& what) {
  g_last_error = what;
  return static_cast<tkv_status>(code);
}

template <typename F>
tkv_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return TKV_OK;
  } catch (const Error& e) {
    return fail(e.code(), e.what());
  } catch (const std::bad_alloc&) {
    return fail(ErrorCode::kInternal, "out of memory");
  } catch (const std::exception& e) {
    return fail(ErrorCode::kInternal, e.what());
  }
}

void require(bool ok, const char* what) {
  if (!ok) raise(ErrorCode::kInvalidArgument, what);
}

void fill(tkv_buffer* buf, std::string_view s) {
  buf->data = nullptr;
  buf->len = 0;
  auto* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p == nullptr) throw std::bad_alloc();
  std::memcpy(p, s.data(), s.size());
  p[s.size()] = '\0';
  buf->data = p;
  buf->len = s.size();
}

void check_result(const sync::OpResult& r) {
  if (!r.ok()) raise(r.status, r.message.empty() ? std::string(to_string(r.status)) : r.message);
}

std::shared_ptr<storage::StorageBackend> open_backend(const eval::BackendSpec& spec) {
  if (spec.kind == "log") {
    std::filesystem::path dir = spec.path.empty() ? std::filesystem::path("tierkv-data") : std::filesystem::path(spec.path);
    std::filesystem::create_directories(dir);
    return std::make_shared<storage::LogBackend>(dir / "store.log");
  }
  auto sim = std::make_shared<storage::SimulatedBackend>();
  sim->set_latency(spec.read_latency_us, spec.write_latency_us);
  sim->set_fail_every(spec.fail_every);
  return sim;
}

void apply_dictionary(config::Settings& s) {
  if (s.dict_path.empty()) return;
  s.store.dictionary =
      compress::load_dictionary_file(s.dict_path, s.store.compression_options.train.min_pattern_len);
  s.eval_config.store.dictionary = s.store.dictionary;
}

constexpr double kCalibrationBudgetS = 0.5;

void apply_calibration(config::Settings& s) {
  if (!s.calibrate_watermarks) return;
  const double qps = exec::calibrate_single_thread_qps(std::chrono::duration<double>(kCalibrationBudgetS));
  s.exec.controller.high_watermark = 0.8 * qps;
  s.exec.controller.low_watermark = 0.5 * qps;
}

replay::ReplayOptions to_cpp(const tkv_replay_options* o) {
  replay::ReplayOptions r;
  if (o == nullptr) return r;
  require(o->concurrency > 0, "concurrency must be > 0");
  switch (o->pacing) {
    case TKV_PACE_MAX: r.pacing = replay::Pacing::kMaxThroughput; break;
    case TKV_PACE_TIMED: r.pacing = replay::Pacing::kTimed; break;
    case TKV_PACE_FIXED_QPS: r.pacing = replay::Pacing::kFixedQps; break;
    default: raise(ErrorCode::kInvalidArgument, "unknown pacing");
  }
  r.fixed_qps = o->fixed_qps;
  r.concurrency = o->concurrency;
  r.warmup = std::chrono::duration<double>(o->warmup_s);
  r.duration = std::chrono::duration<double>(o->duration_s);
  return r;
}

void to_c(const replay::ReplayReport& r, tkv_replay_report* out) {
  out->ops = r.ops;
  out->gets = r.gets;
  out->sets = r.sets;
  out->dels = r.dels;
  out->errors = r.errors;
  out->elapsed_s = r.elapsed_s;
  out->achieved_qps = r.achieved_qps;
  out->p50_us = r.p50_us;
  out->p99_us = r.p99_us;
  out->p999_us = r.p999_us;
  out->storage_reads = r.storage_reads;
  out->storage_writes = r.storage_writes;
  out->cache_hits = r.cache_hits;
  out->cache_misses = r.cache_misses;
  out->hit_ratio = r.hit_ratio();
}

replay::ReplayReport to_cpp(const tkv_replay_report* r) {
  replay::ReplayReport o;
  o.ops = r->ops;
  o.gets = r->gets;
  o.sets = r->sets;
  o.dels = r->dels;
  o.errors = r->errors;
  o.elapsed_s = r->elapsed_s;
  o.achieved_qps = r->achieved_qps;
  o.p50_us = r->p50_us;
  o.p99_us = r->p99_us;
  o.p999_us = r->p999_us;
  o.storage_reads = r->storage_reads;
  o.storage_writes = r->storage_writes;
  o.cache_hits = r->cache_hits;
  o.cache_misses = r->cache_misses;
  return o;
}

replay::ReplayReport run_replay(const tkv_workload* w, const tkv_replay_options* o, replay::Target& target) {
  const auto opts = to_cpp(o);
  if (o != nullptr && o->include_load && !w->wl.load.empty()) {
    replay::ReplayOptions load_opts;
    load_opts.concurrency = opts.concurrency;
    (void)replay::replay(w->wl.load, target, load_opts);
  }
  return replay::replay(w->wl.run, target, opts);
}

config::Settings settings_of(const tkv_config* c, std::size_t index) {
  config::Settings s = config::resolve(c->cfg);
  if (s.eval_config.config_id.empty()) s.eval_config.config_id = "config" + std::to_string(index);
  apply_dictionary(s);
  return s;
}

}  // namespace

extern "C" {

const char* tkv_status_name(tkv_status status) {
  // to_string returns views of string literals.
  return to_string(static_cast<ErrorCode>(status)).data();
}

const char* tkv_last_error(void) { return g_last_error.c_str(); }

void tkv_buffer_free(tkv_buffer* buf) {
  if (buf == nullptr) return;
  std::free(buf->data);
  buf->data = nullptr;
  buf->len = 0;
}

tkv_status tkv_config_load(const char* path, tkv_config** out) {
  return guarded([&] {
    require(out != nullptr, "out is null");
    auto c = std::make_unique<tkv_config>();
    if (path != nullptr) c->cfg = config::Config::load_file(path);
    *out = c.release();
  });
}

tkv_status tkv_config_set(tkv_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config != nullptr && key != nullptr && value != nullptr, "null argument");
    config->cfg.set(key, value);
  });
}

tkv_status tkv_config_validate(const tkv_config* config) {
  return guarded([&] {
    require(config != nullptr, "config is null");
    (void)config::resolve(config->cfg);
  });
}

void tkv_config_free(tkv_config* config) { delete config; }

tkv_status tkv_store_open(const tkv_config* config, tkv_store** out) {
  return guarded([&] {
    require(config != nullptr && out != nullptr, "null argument");
    auto s = std::make_unique<tkv_store>();
    s->settings = config::resolve(config->cfg);
    apply_dictionary(s->settings);
    apply_calibration(s->settings);
    s->backend = s->settings.store.sync.policy == sync::SyncPolicy::kCacheOnly ? nullptr
                                                                                : open_backend(s->settings.backend);
    s->store = std::make_unique<sync::TieredStore>(s->settings.store, s->backend);
    s->executor = std::make_unique<exec::ElasticExecutor>(*s->store, s->settings.exec);
    *out = s.release();
  });
}

void tkv_store_close(tkv_store* store) {
  if (store == nullptr) return;
  try {
    store->executor.reset();
    store->store.reset();
  } catch (...) {
  }
  delete store;
}

tkv_status tkv_store_set(tkv_store* store, const char* key, size_t key_len, const void* value, size_t value_len) {
  return guarded([&] {
    require(store != nullptr && key != nullptr && (value != nullptr || value_len == 0), "null argument");
    std::string v(static_cast<const char*>(value), value_len);
    check_result(store->executor->submit(sync::Op::set(std::string(key, key_len), std::move(v))).get());
  });
}

tkv_status tkv_store_get(tkv_store* store, const char* key, size_t key_len, tkv_buffer* value, int* found) {
  return guarded([&] {
    require(store != nullptr && key != nullptr && value != nullptr && found != nullptr, "null argument");
    value->data = nullptr;
    value->len = 0;
    auto r = store->executor->submit(sync::Op::get(std::string(key, key_len))).get();
    check_result(r);
    *found = r.value.has_value() ? 1 : 0;
    if (r.value) fill(value, *r.value);
  });
}

tkv_status tkv_store_del(tkv_store* store, const char* key, size_t key_len, int* existed) {
  return guarded([&] {
    require(store != nullptr && key != nullptr, "null argument");
    auto r = store->executor->submit(sync::Op::del(std::string(key, key_len))).get();
    check_result(r);
    if (existed != nullptr) *existed = r.existed ? 1 : 0;
  });
}

tkv_status tkv_store_flush(tkv_store* store, size_t* flushed) {
  return guarded([&] {
    require(store != nullptr, "store is null");
    store->executor->drain();
    const auto before = store->store->stats().flush_failures;
    const std::size_t n = store->store->flush();
    if (store->store->stats().flush_failures != before) raise(ErrorCode::kStorageWriteFailed, "flush failed");
    if (flushed != nullptr) *flushed = n;
  });
}

tkv_status tkv_store_stats(tkv_store* store, tkv_buffer* text) {
  return guarded([&] {
    require(store != nullptr && text != nullptr, "null argument");
    fill(text, server::stats_lines(*store->executor));
  });
}

tkv_status tkv_store_mode(tkv_store* store, tkv_buffer* text) {
  return guarded([&] {
    require(store != nullptr && text != nullptr, "null argument");
    fill(text, exec::to_string(store->executor->mode()));
  });
}

tkv_status tkv_server_start(tkv_store* store, tkv_server** out) {
  return guarded([&] {
    require(store != nullptr && out != nullptr, "null argument");
    auto s = std::make_unique<tkv_server>();
    s->srv = std::make_unique<server::Server>(*store->executor, store->settings.server);
    s->srv->start();
    *out = s.release();
  });
}

uint16_t tkv_server_port(const tkv_server* server) { return server == nullptr ? 0 : server->srv->port(); }

void tkv_server_stop(tkv_server* server) {
  if (server != nullptr) server->srv->stop();
}

void tkv_server_free(tkv_server* server) {
  if (server == nullptr) return;
  server->srv->stop();
  delete server;
}

void tkv_gen_options_init(tkv_gen_options* o) {
  if (o == nullptr) return;
  const auto d = workload::WorkloadSpec::ycsb_a();
  o->key_count = d.key_count;
  o->record_size_min = d.record_size_min;
  o->record_size_max = d.record_size_max;
  o->distribution = TKV_ZIPFIAN;
  o->theta = d.theta;
  o->read_fraction = d.read_fraction;
  o->op_count = d.op_count;
  o->seed = d.seed;
  o->value_source = TKV_VALUES_RANDOM;
  o->corpus_path = nullptr;
  o->interval_us = d.interval_us;
  o->load_phase = d.load_phase ? 1 : 0;
}

tkv_status tkv_workload_generate(const tkv_gen_options* o, tkv_workload** out) {
  return guarded([&] {
    require(o != nullptr && out != nullptr, "null argument");
    workload::WorkloadSpec spec;
    spec.key_count = o->key_count;
    spec.record_size_min = o->record_size_min;
    spec.record_size_max = o->record_size_max;
    switch (o->distribution) {
      case TKV_ZIPFIAN: spec.distribution = workload::Distribution::kZipfian; break;
      case TKV_UNIFORM: spec.distribution = workload::Distribution::kUniform; break;
      default: raise(ErrorCode::kInvalidArgument, "unknown distribution");
    }
    spec.theta = o->theta;
    spec.read_fraction = o->read_fraction;
    spec.op_count = o->op_count;
    spec.seed = o->seed;
    switch (o->value_source) {
      case TKV_VALUES_RANDOM: spec.value_source = workload::ValueSource::kRandom; break;
      case TKV_VALUES_CORPUS: spec.value_source = workload::ValueSource::kCorpusFile; break;
      case TKV_VALUES_TEMPLATE: spec.value_source = workload::ValueSource::kTemplate; break;
      default: raise(ErrorCode::kInvalidArgument, "unknown value source");
    }
    if (o->corpus_path != nullptr) spec.corpus_path = o->corpus_path;
    spec.interval_us = o->interval_us;
    spec.load_phase = o->load_phase != 0;
    auto w = std::make_unique<tkv_workload>();
    w->wl = workload::generate(spec);
    *out = w.release();
  });
}

tkv_status tkv_workload_read(const char* load_path, const char* run_path, tkv_workload** out) {
  return guarded([&] {
    require(run_path != nullptr && out != nullptr, "null argument");
    auto w = std::make_unique<tkv_workload>();
    if (load_path != nullptr) w->wl.load = workload::read_trace_file(load_path);
    w->wl.run = workload::read_trace_file(run_path);
    *out = w.release();
  });
}

tkv_status tkv_workload_write(const tkv_workload* w, const char* load_path, const char* run_path) {
  return guarded([&] {
    require(w != nullptr && run_path != nullptr, "null argument");
    if (load_path != nullptr) {
      workload::write_trace_file(w->wl.load, load_path);
      workload::write_trace_file(w->wl.run, run_path);
    } else {
      workload::write_trace_file(w->wl.combined(), run_path);
    }
  });
}

size_t tkv_workload_load_size(const tkv_workload* w) { return w == nullptr ? 0 : w->wl.load.size(); }
size_t tkv_workload_run_size(const tkv_workload* w) { return w == nullptr ? 0 : w->wl.run.size(); }
void tkv_workload_free(tkv_workload* w) { delete w; }

void tkv_replay_options_init(tkv_replay_options* o) {
  if (o == nullptr) return;
  o->pacing = TKV_PACE_MAX;
  o->fixed_qps = 1000.0;
  o->concurrency = 1;
  o->warmup_s = 0;
  o->duration_s = 0;
  o->include_load = 0;
}

tkv_status tkv_replay_store(tkv_store* store, const tkv_workload* w, const tkv_replay_options* o,
                            tkv_replay_report* report) {
  return guarded([&] {
    require(store != nullptr && w != nullptr && report != nullptr, "null argument");
    auto target = replay::executor_target(*store->executor);
    to_c(run_replay(w, o, *target), report);
  });
}

tkv_status tkv_replay_tcp(const char* host, uint16_t port, const tkv_workload* w, const tkv_replay_options* o,
                          tkv_replay_report* report) {
  return guarded([&] {
    require(host != nullptr && w != nullptr && report != nullptr, "null argument");
    auto target = replay::tcp_target(host, port);
    to_c(run_replay(w, o, *target), report);
  });
}

tkv_status tkv_replay_report_csv(const tkv_replay_report* report, tkv_buffer* csv) {
  return guarded([&] {
    require(report != nullptr && csv != nullptr, "null argument");
    const auto r = to_cpp(report);
    fill(csv, r.csv_header() + "\n" + r.csv_row() + "\n");
  });
}

tkv_status tkv_replay_report_text(const tkv_replay_report* report, tkv_buffer* text) {
  return guarded([&] {
    require(report != nullptr && text != nullptr, "null argument");
    fill(text, to_cpp(report).text());
  });
}

void tkv_train_options_init(tkv_train_options* o) {
  if (o == nullptr) return;
  const compress::TrainOptions d;
  o->min_pattern_len = d.min_pattern_len;
  o->max_pattern_len = d.max_pattern_len;
  o->max_patterns = d.max_patterns;
  o->min_support = d.min_support;
  o->max_samples = 4096;
}

tkv_status tkv_train_dict(const char* corpus_path, const tkv_workload* w, const tkv_train_options* o,
                          const char* out_path, size_t* patterns, double* ratio) {
  return guarded([&] {
    require(out_path != nullptr && (corpus_path != nullptr || w != nullptr), "need a corpus or a workload");
    tkv_train_options opts;
    tkv_train_options_init(&opts);
    if (o != nullptr) opts = *o;
    std::vector<std::string> samples;
    if (corpus_path != nullptr) {
      samples = workload::read_corpus(corpus_path);
    } else {
      for (const auto* t : {&w->wl.load, &w->wl.run}) {
        for (const auto& r : *t) {
          if (r.op == workload::TraceOp::kSet) samples.push_back(r.value);
        }
      }
    }
    if (samples.empty()) raise(ErrorCode::kEmptyTrace, "no samples to train on");
    if (opts.max_samples > 0 && samples.size() > opts.max_samples) samples.resize(opts.max_samples);
    compress::TrainOptions to;
    to.min_pattern_len = opts.min_pattern_len;
    to.max_pattern_len = opts.max_pattern_len;
    to.max_patterns = opts.max_patterns;
    to.min_support = opts.min_support;
    const auto dict = compress::train_dictionary(samples, to);
    compress::save_dictionary_file(dict, out_path);
    if (patterns != nullptr) *patterns = dict.size();
    if (ratio != nullptr) *ratio = compress::corpus_ratio(samples, dict);
  });
}

tkv_status tkv_write_template_corpus(size_t count, uint64_t seed, const char* path) {
  return guarded([&] {
    require(path != nullptr, "path is null");
    workload::write_corpus(workload::template_corpus(count, seed), path);
  });
}

tkv_status tkv_mrc(const tkv_workload* w, const uint64_t* sizes, size_t n_sizes, tkv_buffer* csv) {
  return guarded([&] {
    require(w != nullptr && csv != nullptr && (sizes != nullptr || n_sizes == 0), "null argument");
    std::vector<std::string_view> keys;
    keys.reserve(w->wl.run.size());
    for (const auto& r : w->wl.run) keys.push_back(r.key);
    const auto hist = mrc::stack_distance_histogram(std::span<const std::string_view>(keys));
    const auto curve = n_sizes == 0 ? mrc::full_miss_ratio_curve(hist)
                                    : mrc::miss_ratio_curve(hist, std::vector<std::uint64_t>(sizes, sizes + n_sizes));
    std::ostringstream out;
    mrc::write_csv(curve, out);
    fill(csv, out.str());
  });
}

tkv_status tkv_break_even_interval(double cpqps_slow, double cpgb_fast, double avg_record_size, tkv_break_even* out) {
  return guarded([&] {
    require(out != nullptr, "out is null");
    const auto r = cost::break_even_report(cpqps_slow, cpgb_fast, avg_record_size);
    out->seconds = r.seconds;
    out->cpqps_slow = r.price_per_disk_per_access_rate;
    out->cpgb_fast = r.price_per_gb_of_fast;
    out->records_per_gb = r.records_per_gb;
  });
}

tkv_status tkv_eval(const tkv_config* const* configs, size_t n_configs, const tkv_config* profile,
                    const tkv_workload* w, tkv_buffer* csv, tkv_buffer* text, tkv_buffer* winner) {
  return guarded([&] {
    require(w != nullptr && csv != nullptr && (configs != nullptr || n_configs == 0), "null argument");
    if (n_configs == 0) raise(ErrorCode::kEmptyConfigSet, "no configurations to evaluate");
    std::vector<eval::EvalConfig> grid;
    eval::EvalOptions options;
    for (std::size_t i = 0; i < n_configs; ++i) {
      require(configs[i] != nullptr, "null config");
      auto s = settings_of(configs[i], i);
      if (i == 0) options = s.eval_options;
      grid.push_back(s.eval_config);
    }
    const auto prof = config::resolve(profile != nullptr ? profile->cfg : configs[0]->cfg).profile;
    const auto report = eval::evaluate(grid, prof, w->wl, options);
    std::ostringstream c;
    report.write_csv(c);
    fill(csv, c.str());
    if (text != nullptr) {
      std::ostringstream t;
      report.write_text(t);
      fill(text, t.str());
    }
    if (winner != nullptr) fill(winner, report.winner);
  });
}

tkv_status tkv_sweep_cr(const tkv_config* base, const tkv_workload* w, const double* ratios, size_t n_ratios,
                        const tkv_sweep_params* params, tkv_buffer* csv, double* recommended_cr,
                        double* analytic_cr) {
  return guarded([&] {
    require(base != nullptr && w != nullptr && params != nullptr && csv != nullptr && ratios != nullptr,
            "null argument");
    if (n_ratios == 0) raise(ErrorCode::kInvalidArgument, "no cache ratios given");
    auto s = settings_of(base, 0);
    if (!s.eval_config.tiered()) raise(ErrorCode::kConfigError, "sweep-cr needs a tiered sync.policy");
    eval::SweepParams sp;
    if (params->derive) {
      const auto row = eval::measure(s.eval_config, w->wl, s.eval_options);
      if (row.failed) raise(ErrorCode::kInternal, "base configuration failed: " + row.error);
      const auto report = eval::calculate(std::span<const eval::RowMeasurement>(&row, 1), s.profile, s.eval_options);
      sp = eval::sweep_params_from(report.rows.at(0));
    } else {
      sp = {params->pc_cache, params->pc_miss, params->pc_storage, params->sc_cache, params->sc_storage};
    }
    const auto res = eval::sweep_cache_ratio(std::vector<double>(ratios, ratios + n_ratios), s.eval_config, w->wl, sp,
                                             s.eval_options);
    std::ostringstream out;
    res.write_csv(out);
    fill(csv, out.str());
    if (recommended_cr != nullptr) *recommended_cr = res.recommended_cr;
    if (analytic_cr != nullptr) *analytic_cr = res.analytic.cr;
  });
}

tkv_status tkv_calibrate(double budget_s, double* single_qps, double* high_watermark, double* low_watermark) {
  return guarded([&] {
    require(budget_s > 0, "budget must be > 0");
    const double qps = exec::calibrate_single_thread_qps(std::chrono::duration<double>(budget_s));
    if (single_qps != nullptr) *single_qps = qps;
    if (high_watermark != nullptr) *high_watermark = 0.8 * qps;
    if (low_watermark != nullptr) *low_watermark = 0.5 * qps;
  });
}

}  // extern "C"
