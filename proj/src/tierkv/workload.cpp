#include "tierkv/workload.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

#include "tierkv/codec.hpp"

namespace tierkv::workload {

// ---------------------------------------------------------------------------
// Zipfian

ZipfianSampler::ZipfianSampler(std::uint64_t n, double theta) : n_(n), theta_(theta) {
  if (n == 0) raise(ErrorCode::kInvalidArgument, "zipfian needs at least one item");
  if (!(theta > 0.0)) raise(ErrorCode::kInvalidArgument, "zipfian theta must be > 0");
  h_integral_x1_ = h_integral(1.5) - 1.0;
  h_integral_n_ = h_integral(static_cast<double>(n) + 0.5);
  s_ = 2.0 - h_integral_inverse(h_integral(2.5) - h(2.0));
}

double ZipfianSampler::helper1(double x) const {
  if (std::abs(x) > 1e-8) return std::log1p(x) / x;
  return 1.0 - x * (0.5 - x * (1.0 / 3.0 - 0.25 * x));
}

double ZipfianSampler::helper2(double x) const {
  if (std::abs(x) > 1e-8) return std::expm1(x) / x;
  return 1.0 + x * 0.5 * (1.0 + x * (1.0 / 3.0) * (1.0 + 0.25 * x));
}

double ZipfianSampler::h(double x) const { return std::exp(-theta_ * std::log(x)); }

double ZipfianSampler::h_integral(double x) const {
  const double log_x = std::log(x);
  return helper2((1.0 - theta_) * log_x) * log_x;
}

double ZipfianSampler::h_integral_inverse(double x) const {
  double t = x * (1.0 - theta_);
  if (t < -1.0) t = -1.0;  // rounding guard
  return std::exp(helper1(t) * x);
}

std::uint64_t ZipfianSampler::sample(std::mt19937_64& rng) const {
  for (;;) {
    const double u = h_integral_n_ + unit_double(rng) * (h_integral_x1_ - h_integral_n_);
    const double x = h_integral_inverse(u);
    double kd = std::floor(x + 0.5);
    if (kd < 1.0) kd = 1.0;
    if (kd > static_cast<double>(n_)) kd = static_cast<double>(n_);
    const auto k = static_cast<std::uint64_t>(kd);
    if (kd - x <= s_ || u >= h_integral(kd + 0.5) - h(kd)) return k;
  }
}

double ZipfianSampler::probability(std::uint64_t rank, std::uint64_t n, double theta) {
  double norm = 0.0;
  for (std::uint64_t r = n; r >= 1; --r) norm += std::pow(static_cast<double>(r), -theta);
  return std::pow(static_cast<double>(rank), -theta) / norm;
}

Scrambler::Scrambler(std::uint64_t n) : perm_(n) {
  for (std::uint64_t i = 0; i < n; ++i) perm_[i] = i;
  std::sort(perm_.begin(), perm_.end(), [](std::uint64_t a, std::uint64_t b) {
    const auto ha = codec::fnv1a64(a);
    const auto hb = codec::fnv1a64(b);
    return ha != hb ? ha < hb : a < b;
  });
}

std::string key_name(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "user%012llu", static_cast<unsigned long long>(index));
  return buf;
}

// ---------------------------------------------------------------------------
// Specs and generation

void WorkloadSpec::validate() const {
  if (key_count == 0) raise(ErrorCode::kInvalidArgument, "key_count must be > 0");
  if (record_size_min > record_size_max) raise(ErrorCode::kInvalidArgument, "record_size_min > record_size_max");
  if (distribution == Distribution::kZipfian && !(theta > 0.0 && theta < 1.0)) {
    raise(ErrorCode::kInvalidArgument, "zipfian theta must be in (0, 1)");
  }
  if (!(read_fraction >= 0.0 && read_fraction <= 1.0)) {
    raise(ErrorCode::kInvalidArgument, "read_fraction must be in [0, 1]");
  }
  if (value_source == ValueSource::kCorpusFile && corpus_path.empty()) {
    raise(ErrorCode::kInvalidArgument, "corpus value source needs a path");
  }
}

WorkloadSpec WorkloadSpec::ycsb_a() {
  WorkloadSpec s;
  s.read_fraction = 0.5;
  return s;
}

WorkloadSpec WorkloadSpec::ycsb_b() {
  WorkloadSpec s;
  s.read_fraction = 0.95;
  return s;
}

Trace Workload::combined() const {
  Trace out = load;
  out.insert(out.end(), run.begin(), run.end());
  return out;
}

namespace {

constexpr const char* kCities[] = {"Hangzhou", "Shanghai", "Beijing", "Shenzhen", "Singapore", "Frankfurt",
                                   "Virginia", "Tokyo",    "London",  "Sydney",   "Mumbai",    "Jakarta"};
constexpr const char* kCountries[] = {"CN", "SG", "DE", "US", "JP", "GB", "AU", "IN", "ID"};

class ValueMaker {
 public:
  ValueMaker(const WorkloadSpec& spec, std::mt19937_64& rng) : spec_(spec), rng_(rng) {
    if (spec.value_source == ValueSource::kCorpusFile) corpus_ = read_corpus(spec.corpus_path);
  }

  std::string next() {
    switch (spec_.value_source) {
      case ValueSource::kCorpusFile:
        return corpus_[rng_() % corpus_.size()];
      case ValueSource::kTemplate:
        return template_record(rng_);
      case ValueSource::kRandom:
        break;
    }
    std::size_t len = spec_.record_size_min;
    if (spec_.record_size_max > spec_.record_size_min) {
      len += rng_() % (spec_.record_size_max - spec_.record_size_min + 1);
    }
    std::string v(len, '\0');
    for (std::size_t i = 0; i < len; i += 8) {
      const std::uint64_t r = rng_();
      for (std::size_t j = 0; j < 8 && i + j < len; ++j) v[i + j] = static_cast<char>((r >> (8 * j)) & 0xFF);
    }
    return v;
  }

 private:
  const WorkloadSpec& spec_;
  std::mt19937_64& rng_;
  std::vector<std::string> corpus_;
};

}  // namespace

Workload generate(const WorkloadSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  ValueMaker values(spec, rng);
  Workload w;
  if (spec.load_phase) {
    w.load.reserve(spec.key_count);
    for (std::uint64_t i = 0; i < spec.key_count; ++i) {
      w.load.push_back({0, TraceOp::kSet, key_name(i), values.next()});
    }
  }
  std::optional<ZipfianSampler> zipf;
  std::optional<Scrambler> scramble;
  if (spec.distribution == Distribution::kZipfian) {
    zipf.emplace(spec.key_count, spec.theta);
    scramble.emplace(spec.key_count);
  }
  w.run.reserve(spec.op_count);
  for (std::uint64_t i = 0; i < spec.op_count; ++i) {
    std::uint64_t index = 0;
    if (zipf) {
      index = scramble->index_of_rank(zipf->sample(rng));
    } else {
      index = rng() % spec.key_count;
    }
    TraceRecord rec;
    rec.ts = i * spec.interval_us;
    rec.key = key_name(index);
    if (unit_double(rng) < spec.read_fraction) {
      rec.op = TraceOp::kGet;
    } else {
      rec.op = TraceOp::kSet;
      rec.value = values.next();
    }
    w.run.push_back(std::move(rec));
  }
  return w;
}

std::vector<std::string> read_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::kCorpusFileUnreadable, "cannot open corpus " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(line);
  }
  if (in.bad()) raise(ErrorCode::kCorpusFileUnreadable, "error reading corpus " + path);
  if (out.empty()) raise(ErrorCode::kCorpusFileUnreadable, "corpus " + path + " has no records");
  return out;
}

void write_corpus(const std::vector<std::string>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::kIoFailure, "cannot open " + path);
  for (const auto& r : records) {
    if (r.find('\n') != std::string::npos) raise(ErrorCode::kInvalidArgument, "corpus record contains a newline");
    out << r << '\n';
  }
  if (!out) raise(ErrorCode::kIoFailure, "cannot write " + path);
}

std::string template_record(std::mt19937_64& rng) {
  char buf[512];
  const auto id = rng() % 100000000;
  const char* city = kCities[rng() % std::size(kCities)];
  const char* country = kCountries[rng() % std::size(kCountries)];
  const bool active = (rng() & 1) != 0;
  const auto score = rng() % 10000;
  std::snprintf(buf, sizeof buf,
                "{\"schema\":\"profile.v3\",\"user\":{\"id\":\"%08llu\",\"location\":{\"city\":\"%s\","
                "\"country\":\"%s\"}},\"preferences\":{\"theme\":\"dark\",\"language\":\"en-US\","
                "\"notifications\":{\"email\":true,\"sms\":false}},\"status\":\"%s\",\"score\":%llu}",
                static_cast<unsigned long long>(id), city, country, active ? "active" : "idle",
                static_cast<unsigned long long>(score));
  return buf;
}

std::vector<std::string> template_corpus(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(template_record(rng));
  return out;
}

// ---------------------------------------------------------------------------
// Trace format

std::string_view to_string(TraceOp op) {
  switch (op) {
    case TraceOp::kGet:
      return "GET";
    case TraceOp::kSet:
      return "SET";
    case TraceOp::kDel:
      return "DEL";
  }
  return "?";
}

void write_trace(const Trace& trace, std::ostream& out) {
  out << kTraceHeader << '\n';
  for (const auto& r : trace) {
    out << r.ts << ' ' << to_string(r.op) << ' ' << r.key;
    if (r.op == TraceOp::kSet) out << ' ' << codec::base64_encode(r.value);
    out << '\n';
  }
}

void write_trace_file(const Trace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::kIoFailure, "cannot open " + path);
  write_trace(trace, out);
  out.flush();
  if (!out) raise(ErrorCode::kIoFailure, "cannot write " + path);
}

namespace {

bool valid_key(std::string_view key) {
  if (key.empty()) return false;
  return std::all_of(key.begin(), key.end(), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return u > 0x20 && u < 0x7F;
  });
}

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const auto sp = line.find(' ', start);
    parts.push_back(line.substr(start, sp == std::string_view::npos ? std::string_view::npos : sp - start));
    if (sp == std::string_view::npos) break;
    start = sp + 1;
  }
  return parts;
}

}  // namespace

Trace read_trace(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) {
    raise(ErrorCode::kBadHeader, "trace must start with '" + std::string(kTraceHeader) + "'");
  }
  Trace trace;
  std::size_t line_no = 1;
  std::uint64_t last_ts = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto parts = split_spaces(line);
    if (parts.size() < 3) throw MalformedLine(line_no, "expected '<ts> <op> <key>'");
    TraceRecord rec;
    const auto ts_text = parts[0];
    auto [ptr, ec] = std::from_chars(ts_text.data(), ts_text.data() + ts_text.size(), rec.ts);
    if (ts_text.empty() || ec != std::errc() || ptr != ts_text.data() + ts_text.size()) {
      throw MalformedLine(line_no, "bad timestamp");
    }
    if (rec.ts < last_ts) throw MalformedLine(line_no, "timestamp goes backwards");
    last_ts = rec.ts;
    if (parts[1] == "GET") {
      rec.op = TraceOp::kGet;
    } else if (parts[1] == "SET") {
      rec.op = TraceOp::kSet;
    } else if (parts[1] == "DEL") {
      rec.op = TraceOp::kDel;
    } else {
      throw MalformedLine(line_no, "unknown op '" + std::string(parts[1]) + "'");
    }
    if (!valid_key(parts[2])) throw MalformedLine(line_no, "bad key");
    rec.key = std::string(parts[2]);
    const std::size_t want = rec.op == TraceOp::kSet ? 4 : 3;
    if (parts.size() != want) {
      throw MalformedLine(line_no, std::string(to_string(rec.op)) + " takes " + std::to_string(want - 1) +
                                       " fields");
    }
    if (rec.op == TraceOp::kSet) {
      auto v = codec::base64_decode(parts[3]);
      if (!v) throw MalformedLine(line_no, "value is not valid base64");
      rec.value = std::move(*v);
    }
    trace.push_back(std::move(rec));
  }
  if (in.bad()) raise(ErrorCode::kIoFailure, "error reading trace");
  return trace;
}

Trace read_trace_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::kIoFailure, "cannot open " + path);
  return read_trace(in);
}

}  // namespace tierkv::workload
