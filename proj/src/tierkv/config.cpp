#include "tierkv/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

#include "tierkv/error.hpp"

namespace tierkv::config {

const std::vector<std::pair<std::string, std::string>>& known_keys() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"storage.backend", "sim"},
      {"storage.path", "tierkv-data"},
      {"storage.read_latency_us", "0"},
      {"storage.write_latency_us", "0"},
      {"storage.fail_every", "0"},
      {"cache.capacity_bytes", "67108864"},
      {"cache.shards", "16"},
      {"cache.entry_overhead", "64"},
      {"sync.policy", "write_back"},
      {"sync.flush_interval_ms", "200"},
      {"sync.dirty_max_bytes", "16777216"},
      {"sync.dirty_high_watermark", "0.9"},
      {"sync.deferred_fetch_batch", "64"},
      {"sync.replica_factor", "2"},
      {"compression.enabled", "false"},
      {"compression.dict_path", ""},
      {"compression.min_pattern_len", "4"},
      {"exec.mode", "elastic"},
      {"exec.threads_max", "4"},
      {"exec.qps_high_watermark", "auto"},
      {"exec.qps_low_watermark", "auto"},
      {"exec.cooldown_s", "5"},
      {"exec.sample_period_ms", "1000"},
      {"exec.window_len", "2"},
      {"server.listen", "127.0.0.1:7379"},
      {"server.max_connections", "1024"},
      {"eval.config_id", ""},
      {"eval.slo_p99_us", "1000"},
      {"eval.warmup_s", "3"},
      {"eval.window_s", "10"},
      {"eval.plateau", "0.05"},
      {"eval.max_concurrency", "64"},
      {"eval.perf_headroom", "0.85"},
      {"eval.space_headroom", "0.85"},
      {"eval.cache_ratio", "1"},
      {"eval.ceiling", "false"},
      {"instance.cost", "1"},
      {"instance.cpu_cores", "1"},
      {"instance.memory_bytes", "1073741824"},
      {"storage_tier.cost", "1"},
      {"storage_tier.max_perf_qps", "10000"},
      {"storage_tier.max_space_bytes", "1099511627776"},
      {"profile.qps", "10000"},
      {"profile.data_bytes", "1073741824"},
      {"profile.avg_record_bytes", "1024"},
      {"profile.read_fraction", "0.5"},
  };
  return keys;
}

bool is_known_key(std::string_view key) {
  const auto& keys = known_keys();
  return std::any_of(keys.begin(), keys.end(), [&](const auto& kv) { return kv.first == key; });
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string default_of(const std::string& key) {
  for (const auto& [k, v] : known_keys()) {
    if (k == key) return v;
  }
  raise(ErrorCode::kConfigError, "unknown config key '" + key + "'");
}

}  // namespace

Config Config::parse(std::istream& in, const std::string& source) {
  Config c;
  c.source_ = source;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    auto fail = [&](const std::string& what) {
      raise(ErrorCode::kConfigError, source + ":" + std::to_string(line_no) + ": " + what);
    };
    if (eq == std::string::npos) fail("expected 'key = value'");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) fail("missing key");
    if (!is_known_key(key)) fail("unknown config key '" + key + "'");
    c.values_[key] = value;
    c.lines_[key] = line_no;
  }
  return c;
}

Config Config::parse_string(std::string_view text, const std::string& source) {
  std::istringstream in{std::string(text)};
  return parse(in, source);
}

Config Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::kConfigError, "cannot open config file " + path);
  return parse(in, path);
}

void Config::set(const std::string& key, const std::string& value) {
  if (!is_known_key(key)) raise(ErrorCode::kConfigError, "unknown config key '" + key + "'");
  values_[key] = value;
  lines_.erase(key);
}

std::string Config::get_string(const std::string& key) const {
  auto it = values_.find(key);
  return it == values_.end() ? default_of(key) : it->second;
}

namespace {

[[noreturn]] void bad_value(const std::string& source, const std::map<std::string, std::size_t>& lines,
                            const std::string& key, const std::string& value, const char* want) {
  std::string where;
  auto it = lines.find(key);
  if (it != lines.end()) where = source + ":" + std::to_string(it->second) + ": ";
  raise(ErrorCode::kConfigError, where + "bad value '" + value + "' for " + key + " (expected " + want + ")");
}

}  // namespace

double Config::get_double(const std::string& key) const {
  const std::string v = get_string(key);
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    bad_value(source_, lines_, key, v, "a number");
  }
  return out;
}

std::uint64_t Config::get_uint(const std::string& key) const {
  const std::string v = get_string(key);
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) {
    bad_value(source_, lines_, key, v, "a non-negative integer");
  }
  return out;
}

bool Config::get_bool(const std::string& key) const {
  const std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  bad_value(source_, lines_, key, v, "true or false");
}

Settings resolve(const Config& c) {
  Settings s;
  auto check = [](bool ok, const std::string& what) {
    if (!ok) raise(ErrorCode::kConfigError, what);
  };

  s.backend.kind = c.get_string("storage.backend");
  check(s.backend.kind == "sim" || s.backend.kind == "log", "storage.backend must be sim or log");
  s.backend.path = c.get_string("storage.path");
  s.backend.read_latency_us = static_cast<std::uint32_t>(c.get_uint("storage.read_latency_us"));
  s.backend.write_latency_us = static_cast<std::uint32_t>(c.get_uint("storage.write_latency_us"));
  s.backend.fail_every = static_cast<std::uint32_t>(c.get_uint("storage.fail_every"));

  auto& cache = s.store.cache;
  cache.capacity_bytes = c.get_uint("cache.capacity_bytes");
  cache.shard_count = c.get_uint("cache.shards");
  cache.entry_overhead = c.get_uint("cache.entry_overhead");
  check(cache.shard_count > 0 && (cache.shard_count & (cache.shard_count - 1)) == 0,
        "cache.shards must be a power of two");

  auto& sy = s.store.sync;
  try {
    sy.policy = sync::parse_policy(c.get_string("sync.policy"));
  } catch (const Error& e) {
    raise(ErrorCode::kConfigError, e.what());
  }
  sy.flush_interval = std::chrono::milliseconds(c.get_uint("sync.flush_interval_ms"));
  sy.dirty_max_bytes = c.get_uint("sync.dirty_max_bytes");
  sy.dirty_high_watermark = c.get_double("sync.dirty_high_watermark");
  sy.deferred_fetch_batch = c.get_uint("sync.deferred_fetch_batch");
  sy.replica_factor = c.get_double("sync.replica_factor");
  check(sy.policy != sync::SyncPolicy::kWriteBack || sy.dirty_max_bytes > 0,
        "sync.dirty_max_bytes must be > 0 for write-back");
  check(sy.dirty_high_watermark > 0 && sy.dirty_high_watermark <= 1, "sync.dirty_high_watermark must be in (0, 1]");
  check(sy.deferred_fetch_batch > 0, "sync.deferred_fetch_batch must be > 0");
  check(sy.replica_factor >= 1, "sync.replica_factor must be >= 1");
  check(sy.flush_interval.count() > 0, "sync.flush_interval_ms must be > 0");

  s.store.compression = c.get_bool("compression.enabled");
  s.dict_path = c.get_string("compression.dict_path");
  s.store.compression_options.train.min_pattern_len = c.get_uint("compression.min_pattern_len");
  check(s.store.compression_options.train.min_pattern_len >= 4, "compression.min_pattern_len must be >= 4");

  try {
    s.exec.policy = exec::parse_exec_policy(c.get_string("exec.mode"));
  } catch (const Error& e) {
    raise(ErrorCode::kConfigError, e.what());
  }
  auto& ctl = s.exec.controller;
  ctl.threads_max = c.get_uint("exec.threads_max");
  check(ctl.threads_max >= 2, "exec.threads_max must be >= 2");
  const bool auto_high = c.get_string("exec.qps_high_watermark") == "auto";
  const bool auto_low = c.get_string("exec.qps_low_watermark") == "auto";
  check(auto_high == auto_low, "exec.qps_high_watermark and exec.qps_low_watermark must both be set or both auto");
  s.calibrate_watermarks = auto_high;
  if (!auto_high) {
    ctl.high_watermark = c.get_double("exec.qps_high_watermark");
    ctl.low_watermark = c.get_double("exec.qps_low_watermark");
    check(ctl.low_watermark < ctl.high_watermark, "exec.qps_low_watermark must be below exec.qps_high_watermark");
  }
  ctl.cooldown = std::chrono::duration<double>(c.get_double("exec.cooldown_s"));
  ctl.sample_period = std::chrono::duration<double>(static_cast<double>(c.get_uint("exec.sample_period_ms")) / 1000.0);
  ctl.window_len = c.get_uint("exec.window_len");
  check(ctl.sample_period.count() > 0, "exec.sample_period_ms must be > 0");
  check(ctl.window_len > 0, "exec.window_len must be > 0");

  try {
    s.server = server::parse_listen(c.get_string("server.listen"));
  } catch (const Error& e) {
    raise(ErrorCode::kConfigError, e.what());
  }
  s.server.max_connections = c.get_uint("server.max_connections");
  check(s.server.max_connections > 0, "server.max_connections must be > 0");

  auto& ev = s.eval_config;
  ev.config_id = c.get_string("eval.config_id");
  ev.store = s.store;
  ev.backend = s.backend;
  ev.exec_policy = s.exec.policy == exec::ExecPolicy::kElastic ? exec::ExecPolicy::kSingle : s.exec.policy;
  ev.instance.cost = c.get_double("instance.cost");
  ev.instance.cpu_cores = static_cast<int>(c.get_uint("instance.cpu_cores"));
  ev.instance.memory = c.get_double("instance.memory_bytes");
  ev.slo_p99_us = c.get_double("eval.slo_p99_us");
  ev.headroom.perf = c.get_double("eval.perf_headroom");
  ev.headroom.space = c.get_double("eval.space_headroom");
  ev.cache_ratio = c.get_double("eval.cache_ratio");
  ev.storage_tier.instance.cost = c.get_double("storage_tier.cost");
  ev.storage_tier.max_perf = c.get_double("storage_tier.max_perf_qps");
  ev.storage_tier.max_space = c.get_double("storage_tier.max_space_bytes");
  check(ev.slo_p99_us > 0, "eval.slo_p99_us must be > 0");
  check(ev.headroom.perf > 0 && ev.headroom.perf <= 1, "eval.perf_headroom must be in (0, 1]");
  check(ev.headroom.space > 0 && ev.headroom.space <= 1, "eval.space_headroom must be in (0, 1]");
  check(ev.cache_ratio > 0 && ev.cache_ratio <= 1, "eval.cache_ratio must be in (0, 1]");
  check(ev.instance.cost > 0 && ev.instance.cpu_cores > 0 && ev.instance.memory > 0,
        "instance.cost, instance.cpu_cores and instance.memory_bytes must be > 0");
  check(ev.storage_tier.instance.cost > 0 && ev.storage_tier.max_perf > 0 && ev.storage_tier.max_space > 0,
        "storage_tier.* must be > 0");

  auto& eo = s.eval_options;
  eo.perf.warmup = std::chrono::duration<double>(c.get_double("eval.warmup_s"));
  eo.perf.window = std::chrono::duration<double>(c.get_double("eval.window_s"));
  eo.perf.plateau = c.get_double("eval.plateau");
  eo.perf.max_concurrency = c.get_uint("eval.max_concurrency");
  eo.ceiling = c.get_bool("eval.ceiling");
  check(eo.perf.window.count() > 0 && eo.perf.warmup.count() >= 0, "eval.window_s must be > 0, eval.warmup_s >= 0");
  check(eo.perf.max_concurrency > 0, "eval.max_concurrency must be > 0");

  s.profile.qps = c.get_double("profile.qps");
  s.profile.data_size = c.get_double("profile.data_bytes");
  s.profile.avg_record_size = c.get_double("profile.avg_record_bytes");
  s.profile.read_fraction = c.get_double("profile.read_fraction");
  try {
    s.profile.validate();
  } catch (const Error& e) {
    raise(ErrorCode::kConfigError, std::string("profile: ") + e.what());
  }
  return s;
}

}  // namespace tierkv::config
