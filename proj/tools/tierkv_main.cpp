#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <pthread.h>

#include "CLI11.hpp"
#include "tierkv.h"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(tkv_status st, const char* what) {
  if (st != TKV_OK) {
    throw RuntimeFailure(std::string(what) + ": " + tkv_status_name(st) + ": " + tkv_last_error());
  }
}

// Owns a library buffer.
struct Buffer {
  tkv_buffer b{nullptr, 0};
  ~Buffer() { tkv_buffer_free(&b); }
  std::string str() const { return b.data == nullptr ? std::string() : std::string(b.data, b.len); }
};

template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
};

using ConfigHandle = Handle<tkv_config, tkv_config_free>;
using StoreHandle = Handle<tkv_store, tkv_store_close>;
using WorkloadHandle = Handle<tkv_workload, tkv_workload_free>;

void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot open " + path + " for writing");
  out << data;
  if (!out) throw RuntimeFailure("write to " + path + " failed");
}

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
};

void apply_overrides(tkv_config* c, const std::vector<std::string>& overrides) {
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value, got '" + kv + "'");
    check(tkv_config_set(c, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), "config");
  }
}

// Explicit path, then TIERKV_CONFIG, then defaults.
void load_config(ConfigHandle& h, const std::string& explicit_path, const Globals& g) {
  std::string path = explicit_path;
  if (path.empty()) {
    if (const char* env = std::getenv("TIERKV_CONFIG"); env != nullptr && *env != '\0') path = env;
  }
  check(tkv_config_load(path.empty() ? nullptr : path.c_str(), &h.p), "config");
  apply_overrides(h.p, g.overrides);
  check(tkv_config_validate(h.p), "config");
}

struct GenFlags {
  tkv_gen_options o{};
  std::string dist = "zipfian";
  std::string values = "random";
  std::string corpus;
  std::size_t record_size = 0;
  bool no_load = false;
  std::string preset;

  GenFlags() { tkv_gen_options_init(&o); }

  void add(CLI::App* app) {
    app->add_option("--keys", o.key_count, "Number of distinct keys");
    app->add_option("--ops", o.op_count, "Run-phase operations");
    app->add_option("--record-size", record_size, "Fixed value size in bytes");
    app->add_option("--record-min", o.record_size_min, "Smallest value size");
    app->add_option("--record-max", o.record_size_max, "Largest value size");
    app->add_option("--dist", dist, "zipfian or uniform")->check(CLI::IsMember({"zipfian", "uniform"}));
    app->add_option("--theta", o.theta, "Zipfian skew");
    app->add_option("--read-fraction", o.read_fraction, "Share of GETs in the run phase");
    app->add_option("--seed", o.seed, "RNG seed");
    app->add_option("--values", values, "random, corpus or template")
        ->check(CLI::IsMember({"random", "corpus", "template"}));
    app->add_option("--corpus", corpus, "Corpus file for --values corpus");
    app->add_option("--interval-us", o.interval_us, "Timestamp step between run records");
    app->add_flag("--no-load", no_load, "Skip the load phase");
    app->add_option("--preset", preset, "ycsb-a or ycsb-b")->check(CLI::IsMember({"ycsb-a", "ycsb-b"}));
  }

  const tkv_gen_options& resolve() {
    if (preset == "ycsb-b" && o.read_fraction == 0.5) o.read_fraction = 0.95;
    if (record_size > 0) o.record_size_min = o.record_size_max = record_size;
    o.distribution = dist == "uniform" ? TKV_UNIFORM : TKV_ZIPFIAN;
    o.value_source = values == "corpus" ? TKV_VALUES_CORPUS : values == "template" ? TKV_VALUES_TEMPLATE : TKV_VALUES_RANDOM;
    o.corpus_path = corpus.empty() ? nullptr : corpus.c_str();
    o.load_phase = no_load ? 0 : 1;
    return o;
  }
};

// A workload either read from trace files or generated from flags.
struct WorkloadFlags {
  std::string trace;
  std::string load;
  GenFlags gen;

  void add(CLI::App* app, bool allow_generate) {
    app->add_option("--trace", trace, "Run trace file")->check(CLI::ExistingFile);
    app->add_option("--load", load, "Load-phase trace file")->check(CLI::ExistingFile);
    if (allow_generate) gen.add(app);
  }

  void open(WorkloadHandle& h) {
    if (!trace.empty()) {
      check(tkv_workload_read(load.empty() ? nullptr : load.c_str(), trace.c_str(), &h.p), "trace");
    } else {
      check(tkv_workload_generate(&gen.resolve(), &h.p), "gen");
    }
  }
};

std::optional<std::pair<std::string, std::uint16_t>> parse_host_port(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) return std::nullopt;
  try {
    const unsigned long port = std::stoul(s.substr(colon + 1));
    if (port == 0 || port > 65535) return std::nullopt;
    return std::make_pair(colon == 0 ? std::string("127.0.0.1") : s.substr(0, colon), static_cast<std::uint16_t>(port));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

int cmd_serve(const Globals& g) {
  // Block the signals before any library thread exists so they all inherit
  // the mask and only sigwait below sees them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  ConfigHandle cfg;
  load_config(cfg, g.config_path, g);
  StoreHandle store;
  check(tkv_store_open(cfg.p, &store.p), "store");
  tkv_server* srv = nullptr;
  check(tkv_server_start(store.p, &srv), "serve");
  std::cerr << "tierkv: listening on port " << tkv_server_port(srv) << "\n";

  int sig = 0;
  sigwait(&set, &sig);
  std::cerr << "tierkv: signal " << sig << ", shutting down\n";
  tkv_server_free(srv);
  size_t flushed = 0;
  const tkv_status st = tkv_store_flush(store.p, &flushed);
  if (st != TKV_OK) std::cerr << "tierkv: final flush failed: " << tkv_last_error() << "\n";
  return st == TKV_OK ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tierkv: tiered key-value store and cost evaluator"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Config file (falls back to $TIERKV_CONFIG)");
  app.add_option("--set", g.overrides, "Override a config key: section.key=value");

  auto* serve = app.add_subcommand("serve", "Run the store behind the TCP protocol");

  auto* gen = app.add_subcommand("gen", "Generate a workload trace");
  GenFlags gen_flags;
  std::string gen_out, gen_load_out, gen_corpus_out;
  std::size_t gen_corpus_count = 1000;
  gen_flags.add(gen);
  gen->add_option("--out", gen_out, "Run trace (load phase prepended unless --load-out)")->required();
  gen->add_option("--load-out", gen_load_out, "Separate load-phase trace");
  gen->add_option("--template-corpus-out", gen_corpus_out, "Also write a template corpus here");
  gen->add_option("--template-count", gen_corpus_count, "Records in the template corpus");

  auto* rep = app.add_subcommand("replay", "Replay a trace and report latency and throughput");
  WorkloadFlags rep_wl;
  rep_wl.add(rep, false);
  rep->get_option("--trace")->required();
  std::string rep_target = "store", rep_pacing = "max", rep_csv, rep_text;
  tkv_replay_options rep_opts;
  tkv_replay_options_init(&rep_opts);
  bool rep_skip_load = false;
  rep->add_option("--target", rep_target, "store (in-process) or host:port");
  rep->add_option("--pacing", rep_pacing, "max, timed or qps")->check(CLI::IsMember({"max", "timed", "qps"}));
  rep->add_option("--qps", rep_opts.fixed_qps, "Rate for --pacing qps");
  rep->add_option("--concurrency", rep_opts.concurrency, "Client sessions")->check(CLI::PositiveNumber);
  rep->add_option("--warmup", rep_opts.warmup_s, "Warmup seconds (with --duration)");
  rep->add_option("--duration", rep_opts.duration_s, "Measure for this many seconds, cycling the trace");
  rep->add_flag("--skip-load", rep_skip_load, "Do not replay the --load trace first");
  rep->add_option("--csv", rep_csv, "CSV report file");
  rep->add_option("--text", rep_text, "Text report file (default: stderr)");

  auto* train = app.add_subcommand("train-dict", "Train a compression dictionary");
  std::string train_corpus, train_trace, train_out;
  tkv_train_options train_opts;
  tkv_train_options_init(&train_opts);
  train->add_option("--corpus", train_corpus, "One sample per line")->check(CLI::ExistingFile);
  train->add_option("--trace", train_trace, "Use the SET values of a trace")->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Dictionary file")->required();
  train->add_option("--min-len", train_opts.min_pattern_len, "Shortest pattern");
  train->add_option("--max-len", train_opts.max_pattern_len, "Longest pattern");
  train->add_option("--max-patterns", train_opts.max_patterns, "Dictionary size limit");
  train->add_option("--min-support", train_opts.min_support, "Fraction of samples a pattern must appear in");
  train->add_option("--max-samples", train_opts.max_samples, "Samples used (0 = all)");

  auto* ev = app.add_subcommand("eval", "Evaluate candidate configurations and pick the cheapest");
  std::vector<std::string> ev_configs;
  std::string ev_profile, ev_out, ev_text;
  WorkloadFlags ev_wl;
  ev->add_option("configs", ev_configs, "Candidate config files")->required()->check(CLI::ExistingFile);
  ev->add_option("--profile", ev_profile, "Config file holding profile.* (default: first candidate)")
      ->check(CLI::ExistingFile);
  ev->add_option("--out", ev_out, "Cost report CSV")->required();
  ev->add_option("--text", ev_text, "Text report file (default: stderr)");
  ev_wl.add(ev, true);

  auto* mrc = app.add_subcommand("mrc", "Miss-ratio curve of a trace");
  std::string mrc_trace, mrc_out;
  std::vector<std::uint64_t> mrc_sizes;
  mrc->add_option("--trace", mrc_trace, "Trace file")->required()->check(CLI::ExistingFile);
  mrc->add_option("--sizes", mrc_sizes, "Cache sizes in entries (default: every size)")->delimiter(',');
  mrc->add_option("--out", mrc_out, "CSV file")->required();

  auto* be = app.add_subcommand("break-even", "Break-even access interval");
  double be_cpqps = 0, be_cpgb = 0, be_record = 0;
  be->add_option("cpqps_slow", be_cpqps, "Cost per qps of the slow configuration")->required();
  be->add_option("cpgb_fast", be_cpgb, "Cost per GB of the fast configuration")->required();
  be->add_option("record_bytes", be_record, "Average record size in bytes")->required();

  auto* sw = app.add_subcommand("sweep-cr", "Sweep the cache ratio of a tiered config");
  WorkloadFlags sw_wl;
  sw_wl.add(sw, true);
  std::vector<double> sw_ratios;
  std::string sw_out;
  tkv_sweep_params sw_params{0, 0, 0, 0, 0, 0};
  std::optional<double> sw_pc_cache, sw_pc_miss, sw_pc_storage, sw_sc_cache, sw_sc_storage;
  sw->add_option("--ratios", sw_ratios, "Cache ratios (default 0.05..1 by 0.05)")->delimiter(',');
  sw->add_option("--out", sw_out, "CSV file (cr,mr,pc,sc,total)")->required();
  sw->add_option("--pc-cache", sw_pc_cache);
  sw->add_option("--pc-miss", sw_pc_miss);
  sw->add_option("--pc-storage", sw_pc_storage);
  sw->add_option("--sc-cache", sw_sc_cache);
  sw->add_option("--sc-storage", sw_sc_storage);

  auto* cal = app.add_subcommand("calibrate", "Measure single-thread throughput and suggest watermarks");
  double cal_budget = 1.0;
  cal->add_option("--budget", cal_budget, "Seconds to run")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    // A bad config given explicitly is an error for every subcommand.
    if (!g.config_path.empty() || !g.overrides.empty()) {
      ConfigHandle probe;
      load_config(probe, g.config_path, g);
    }
    if (serve->parsed()) return cmd_serve(g);

    if (gen->parsed()) {
      WorkloadHandle w;
      check(tkv_workload_generate(&gen_flags.resolve(), &w.p), "gen");
      check(tkv_workload_write(w.p, gen_load_out.empty() ? nullptr : gen_load_out.c_str(), gen_out.c_str()), "gen");
      if (!gen_corpus_out.empty()) {
        check(tkv_write_template_corpus(gen_corpus_count, gen_flags.o.seed, gen_corpus_out.c_str()), "gen");
      }
      std::cerr << "tierkv: wrote " << tkv_workload_load_size(w.p) << " load and " << tkv_workload_run_size(w.p)
                << " run records\n";
      return 0;
    }

    if (rep->parsed()) {
      WorkloadHandle w;
      rep_wl.open(w);
      rep_opts.pacing = rep_pacing == "timed" ? TKV_PACE_TIMED : rep_pacing == "qps" ? TKV_PACE_FIXED_QPS : TKV_PACE_MAX;
      rep_opts.include_load = rep_skip_load ? 0 : 1;
      tkv_replay_report report{};
      if (rep_target == "store") {
        ConfigHandle cfg;
        load_config(cfg, g.config_path, g);
        StoreHandle store;
        check(tkv_store_open(cfg.p, &store.p), "store");
        check(tkv_replay_store(store.p, w.p, &rep_opts, &report), "replay");
      } else {
        const auto hp = parse_host_port(rep_target);
        if (!hp) throw CLI::ValidationError("--target", "expected 'store' or host:port");
        check(tkv_replay_tcp(hp->first.c_str(), hp->second, w.p, &rep_opts, &report), "replay");
      }
      Buffer text;
      check(tkv_replay_report_text(&report, &text.b), "replay");
      if (rep_text.empty()) {
        std::cerr << text.str();
      } else {
        write_file(rep_text, text.str());
      }
      if (!rep_csv.empty()) {
        Buffer csv;
        check(tkv_replay_report_csv(&report, &csv.b), "replay");
        write_file(rep_csv, csv.str());
      }
      return 0;
    }

    if (train->parsed()) {
      if (train_corpus.empty() == train_trace.empty()) {
        throw CLI::ValidationError("train-dict", "give exactly one of --corpus or --trace");
      }
      WorkloadHandle w;
      if (!train_trace.empty()) check(tkv_workload_read(nullptr, train_trace.c_str(), &w.p), "trace");
      size_t patterns = 0;
      double ratio = 0;
      check(tkv_train_dict(train_corpus.empty() ? nullptr : train_corpus.c_str(), w.p, &train_opts, train_out.c_str(),
                           &patterns, &ratio),
            "train-dict");
      std::cerr << "tierkv: " << patterns << " patterns, sample ratio " << ratio << "\n";
      return 0;
    }

    if (ev->parsed()) {
      std::vector<std::unique_ptr<ConfigHandle>> handles;
      std::vector<const tkv_config*> ptrs;
      for (const auto& path : ev_configs) {
        handles.push_back(std::make_unique<ConfigHandle>());
        load_config(*handles.back(), path, g);
        ptrs.push_back(handles.back()->p);
      }
      ConfigHandle profile;
      if (!ev_profile.empty()) load_config(profile, ev_profile, g);
      WorkloadHandle w;
      ev_wl.open(w);
      Buffer csv, text, winner;
      check(tkv_eval(ptrs.data(), ptrs.size(), profile.p, w.p, &csv.b, &text.b, &winner.b), "eval");
      write_file(ev_out, csv.str());
      if (ev_text.empty()) {
        std::cerr << text.str();
      } else {
        write_file(ev_text, text.str());
      }
      std::cerr << "tierkv: winner " << (winner.str().empty() ? "(none)" : winner.str()) << "\n";
      return 0;
    }

    if (mrc->parsed()) {
      WorkloadHandle w;
      check(tkv_workload_read(nullptr, mrc_trace.c_str(), &w.p), "trace");
      Buffer csv;
      check(tkv_mrc(w.p, mrc_sizes.empty() ? nullptr : mrc_sizes.data(), mrc_sizes.size(), &csv.b), "mrc");
      write_file(mrc_out, csv.str());
      return 0;
    }

    if (be->parsed()) {
      tkv_break_even r{};
      check(tkv_break_even_interval(be_cpqps, be_cpgb, be_record, &r), "break-even");
      std::cerr << "records per GB " << r.records_per_gb << "\n";
      std::printf("%.1f s\n", r.seconds);
      return 0;
    }

    if (sw->parsed()) {
      const bool any = sw_pc_cache || sw_pc_miss || sw_pc_storage || sw_sc_cache || sw_sc_storage;
      const bool all = sw_pc_cache && sw_pc_miss && sw_pc_storage && sw_sc_cache && sw_sc_storage;
      if (any && !all) throw CLI::ValidationError("sweep-cr", "give all five cost terms or none");
      if (all) {
        sw_params = {*sw_pc_cache, *sw_pc_miss, *sw_pc_storage, *sw_sc_cache, *sw_sc_storage, 0};
      } else {
        sw_params.derive = 1;
      }
      if (sw_ratios.empty()) {
        for (int i = 1; i <= 20; ++i) sw_ratios.push_back(0.05 * i);
      }
      ConfigHandle cfg;
      load_config(cfg, g.config_path, g);
      WorkloadHandle w;
      sw_wl.open(w);
      Buffer csv;
      double best = 0, analytic = 0;
      check(tkv_sweep_cr(cfg.p, w.p, sw_ratios.data(), sw_ratios.size(), &sw_params, &csv.b, &best, &analytic),
            "sweep-cr");
      write_file(sw_out, csv.str());
      std::cerr << "tierkv: recommended cr " << best << ", analytic cr " << analytic << "\n";
      return 0;
    }

    if (cal->parsed()) {
      double qps = 0, hi = 0, lo = 0;
      check(tkv_calibrate(cal_budget, &qps, &hi, &lo), "calibrate");
      std::printf("single_thread_qps %.0f\nexec.qps_high_watermark %.0f\nexec.qps_low_watermark %.0f\n", qps, hi, lo);
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "tierkv: " << e.what() << "\n";
    return kExitUsage;
  } catch (const RuntimeFailure& e) {
    std::cerr << "tierkv: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "tierkv: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
