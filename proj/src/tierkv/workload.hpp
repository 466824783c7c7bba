#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "tierkv/error.hpp"

// YCSB-style workload generation and the text trace format.
//
// Trace file:
//   #tierkv-trace v1
//   <ts_us> GET <key>
//   <ts_us> SET <key> <base64(value)>
//   <ts_us> DEL <key>
namespace tierkv::workload {

inline constexpr std::string_view kTraceHeader = "#tierkv-trace v1";

// Uniform double in [0, 1) from the top 53 bits of one 64-bit draw.
inline double unit_double(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Zipfian ranks 1..n with P(r) proportional to r^-theta, sampled by
// rejection-inversion (Hormann & Derflinger). Exact for any theta > 0.
class ZipfianSampler {
 public:
  ZipfianSampler(std::uint64_t n, double theta);

  std::uint64_t sample(std::mt19937_64& rng) const;  // 1-based rank
  std::uint64_t n() const { return n_; }
  double theta() const { return theta_; }

  // Exact probability of a rank, O(n). For oracles.
  static double probability(std::uint64_t rank, std::uint64_t n, double theta);

 private:
  double h(double x) const;
  double h_integral(double x) const;
  double h_integral_inverse(double x) const;
  double helper1(double x) const;
  double helper2(double x) const;

  std::uint64_t n_;
  double theta_;
  double h_integral_x1_;
  double h_integral_n_;
  double s_;
};

// Bijective scramble of ranks onto key indices: ranks are assigned to
// indices in order of FNV-1a(index), so popular keys land on unrelated
// indices and therefore on unrelated cache shards.
class Scrambler {
 public:
  explicit Scrambler(std::uint64_t n);
  std::uint64_t index_of_rank(std::uint64_t rank) const { return perm_[rank - 1]; }

 private:
  std::vector<std::uint64_t> perm_;
};

// Fixed width so every key has the same length.
std::string key_name(std::uint64_t index);

enum class Distribution { kZipfian, kUniform };
enum class ValueSource { kRandom, kCorpusFile, kTemplate };

struct WorkloadSpec {
  std::uint64_t key_count = 1000;
  std::size_t record_size_min = 1024;
  std::size_t record_size_max = 1024;
  Distribution distribution = Distribution::kZipfian;
  double theta = 0.99;
  double read_fraction = 0.5;
  std::uint64_t op_count = 10000;
  std::uint64_t seed = 1;
  ValueSource value_source = ValueSource::kRandom;
  std::string corpus_path;
  std::uint64_t interval_us = 0;  // ts step between run-phase records
  bool load_phase = true;

  void validate() const;

  static WorkloadSpec ycsb_a();  // 50% read / 50% update
  static WorkloadSpec ycsb_b();  // 95% read / 5% update
};

enum class TraceOp { kGet, kSet, kDel };

struct TraceRecord {
  std::uint64_t ts = 0;
  TraceOp op = TraceOp::kGet;
  std::string key;
  std::string value;

  bool operator==(const TraceRecord&) const = default;
};

using Trace = std::vector<TraceRecord>;

struct Workload {
  Trace load;
  Trace run;

  Trace combined() const;
};

// Throws kCorpusFileUnreadable.
Workload generate(const WorkloadSpec& spec);

// One non-empty line per record.
std::vector<std::string> read_corpus(const std::string& path);
void write_corpus(const std::vector<std::string>& records, const std::string& path);

// Records built from a fixed JSON-like template with a few variable
// fields; the shared part is well over half of each record.
std::string template_record(std::mt19937_64& rng);
std::vector<std::string> template_corpus(std::size_t count, std::uint64_t seed);

class MalformedLine : public Error {
 public:
  MalformedLine(std::size_t line, const std::string& what)
      : Error(ErrorCode::kMalformedLine, "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

void write_trace(const Trace& trace, std::ostream& out);
void write_trace_file(const Trace& trace, const std::string& path);
// Throws kBadHeader, MalformedLine, kIoFailure.
Trace read_trace(std::istream& in);
Trace read_trace_file(const std::string& path);

std::string_view to_string(TraceOp op);

}  // namespace tierkv::workload
