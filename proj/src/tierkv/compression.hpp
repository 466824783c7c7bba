#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Pre-trained dictionary compression for cache values.
//
// A dictionary is trained offline from sample records, then used to encode
// each record as a stream of pattern references and literal runs. A monitor
// tracks the live compression ratio and the share of records that matched no
// pattern, and asks for retraining when either drifts.
//
// Blob format:
//   0x00 <raw bytes>                  passthrough
//   0x01 <tokens>                     dictionary-encoded
// Tokens:
//   0x00..0xFD  pattern id
//   0xFF u16le(len) <len bytes>       literal run
//   0xFE                              reserved
namespace tierkv::compress {

inline constexpr std::size_t kMaxPatterns = 254;
inline constexpr std::uint8_t kHeaderPassthrough = 0x00;
inline constexpr std::uint8_t kHeaderEncoded = 0x01;
inline constexpr std::uint8_t kLiteralToken = 0xFF;
inline constexpr std::uint8_t kReservedToken = 0xFE;
inline constexpr std::size_t kMaxLiteralRun = 0xFFFF;

class Dictionary {
 public:
  Dictionary() = default;
  Dictionary(std::uint32_t version, std::vector<std::string> patterns, std::size_t min_pattern_len,
             std::size_t trained_on);

  std::uint32_t version() const { return version_; }
  const std::vector<std::string>& patterns() const { return patterns_; }
  std::size_t size() const { return patterns_.size(); }
  bool empty() const { return patterns_.empty(); }
  std::size_t min_pattern_len() const { return min_pattern_len_; }
  std::size_t trained_on() const { return trained_on_; }

  struct Match {
    int id = -1;
    std::size_t length = 0;
  };
  // Longest pattern that is a prefix of `text`.
  Match longest_match(std::string_view text) const;

 private:
  struct Node {
    std::vector<std::pair<std::uint8_t, std::int32_t>> children;  // sorted by byte
    std::int32_t pattern = -1;
  };

  void build_trie();

  std::uint32_t version_ = 0;
  std::vector<std::string> patterns_;
  std::size_t min_pattern_len_ = 4;
  std::size_t trained_on_ = 0;
  std::vector<Node> trie_;
};

struct TrainOptions {
  std::size_t max_patterns = kMaxPatterns;
  std::size_t min_pattern_len = 4;
  double min_support = 0.05;  // fraction of samples that must contain a pattern
  std::size_t max_pattern_len = 256;
};

// Frequent-substring trainer. Candidates are the repeated substrings of the
// sample set (suffix-array LCP intervals); each is scored by
// support x length, where support is the number of samples containing it.
// Patterns are picked greedily by score (longer first on ties), skipping any
// candidate contained in an already selected pattern.
Dictionary train_dictionary(std::span<const std::string> samples, const TrainOptions& options = {},
                            std::uint32_t version = 1);

// Second-stage coder applied to the token stream of encoded blobs. The
// default is the identity.
class ResidualCodec {
 public:
  virtual ~ResidualCodec() = default;
  virtual std::string encode(std::string_view tokens) const = 0;
  virtual std::string decode(std::string_view bytes) const = 0;
};

struct EncodeInfo {
  std::size_t pattern_refs = 0;  // 0 for passthrough output
  bool passthrough = true;
};

// Greedy longest-match encoding; falls back to passthrough when the encoded
// form is not smaller than the input.
std::string compress(std::string_view record, const Dictionary& dict, EncodeInfo* info = nullptr,
                     const ResidualCodec* residual = nullptr);

// Throws kCorruptBlob.
std::string decompress(std::string_view blob, const Dictionary& dict,
                       const ResidualCodec* residual = nullptr);

// Throws kDictVersionMismatch when the blob was written under another
// dictionary version.
std::string decompress(std::string_view blob, const Dictionary& dict, std::uint32_t blob_version,
                       const ResidualCodec* residual = nullptr);

struct CompressionStats {
  std::uint64_t bytes_in = 0;
  std::uint64_t bytes_out = 0;
  std::uint64_t unmatched_records = 0;
  std::uint64_t records = 0;
  double baseline_ratio = 1.0;

  double ratio() const {
    return bytes_in == 0 ? 1.0 : static_cast<double>(bytes_out) / static_cast<double>(bytes_in);
  }
};

inline constexpr double kDefaultRatioDegradation = 0.15;
inline constexpr double kDefaultUnmatchedThreshold = 0.3;

bool should_retrain(const CompressionStats& stats, double ratio_degradation = kDefaultRatioDegradation,
                    double unmatched_threshold = kDefaultUnmatchedThreshold);

// "TKVD" u8(version) u16le(count) { u16le(len) bytes }*
void save_dictionary(const Dictionary& dict, std::ostream& out);
Dictionary load_dictionary(std::istream& in, std::size_t min_pattern_len = 4);
void save_dictionary_file(const Dictionary& dict, const std::string& path);
Dictionary load_dictionary_file(const std::string& path, std::size_t min_pattern_len = 4);

// Ratio of a dictionary over a corpus: total encoded bytes / total raw bytes.
double corpus_ratio(std::span<const std::string> records, const Dictionary& dict);

// Live compression for a store: owns the current dictionary, keeps every
// version that may still be referenced by cached blobs, samples incoming
// values and retrains on demand.
class CompressionManager {
 public:
  struct Options {
    TrainOptions train;
    double ratio_degradation = kDefaultRatioDegradation;
    double unmatched_threshold = kDefaultUnmatchedThreshold;
    std::size_t reservoir_size = 512;
    std::uint64_t min_records_before_retrain = 256;
    std::uint64_t seed = 0x7469657273ULL;
  };

  explicit CompressionManager(Options options);
  CompressionManager(Options options, Dictionary initial);

  struct Encoded {
    std::string blob;
    std::uint32_t version = 0;
  };

  Encoded encode(std::string_view value);
  std::string decode(std::string_view blob, std::uint32_t version) const;

  // Retrains from the reservoir when the monitor says so. Returns true if a
  // new dictionary was installed.
  bool maybe_retrain();
  void retrain_now();

  CompressionStats stats() const;
  std::shared_ptr<const Dictionary> current() const;
  std::uint64_t retrain_count() const { return retrains_.load(); }

 private:
  void install(Dictionary dict, std::span<const std::string> baseline_samples);
  void sample(std::string_view value);

  Options options_;
  mutable std::mutex mu_;
  std::shared_ptr<const Dictionary> current_;
  std::map<std::uint32_t, std::shared_ptr<const Dictionary>> versions_;

  std::atomic<std::uint64_t> bytes_in_{0};
  std::atomic<std::uint64_t> bytes_out_{0};
  std::atomic<std::uint64_t> unmatched_{0};
  std::atomic<std::uint64_t> records_{0};
  std::atomic<double> baseline_{1.0};
  std::atomic<std::uint64_t> retrains_{0};

  std::mutex sample_mu_;
  std::vector<std::string> reservoir_;
  std::uint64_t seen_ = 0;
  std::mt19937_64 rng_;
};

}  // namespace tierkv::compress
