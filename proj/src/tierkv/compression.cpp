#include "tierkv/compression.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <unordered_set>

#include "tierkv/codec.hpp"
#include "tierkv/error.hpp"

namespace tierkv::compress {

// ---------------------------------------------------------------------------
// Dictionary

Dictionary::Dictionary(std::uint32_t version, std::vector<std::string> patterns,
                       std::size_t min_pattern_len, std::size_t trained_on)
    : version_(version),
      patterns_(std::move(patterns)),
      min_pattern_len_(min_pattern_len),
      trained_on_(trained_on) {
  if (patterns_.size() > kMaxPatterns) {
    raise(ErrorCode::kInvalidArgument, "dictionary holds at most 254 patterns");
  }
  std::unordered_set<std::string_view> seen;
  for (const auto& p : patterns_) {
    if (p.size() < min_pattern_len_) raise(ErrorCode::kInvalidArgument, "pattern shorter than min_pattern_len");
    if (p.size() > 0xFFFF) raise(ErrorCode::kInvalidArgument, "pattern longer than 65535 bytes");
    if (!seen.insert(p).second) raise(ErrorCode::kInvalidArgument, "duplicate pattern");
  }
  build_trie();
}

void Dictionary::build_trie() {
  trie_.assign(1, Node{});
  for (std::size_t id = 0; id < patterns_.size(); ++id) {
    std::int32_t node = 0;
    for (unsigned char c : patterns_[id]) {
      auto& kids = trie_[node].children;
      auto it = std::lower_bound(kids.begin(), kids.end(), c,
                                 [](const auto& edge, std::uint8_t b) { return edge.first < b; });
      if (it != kids.end() && it->first == c) {
        node = it->second;
        continue;
      }
      const auto next = static_cast<std::int32_t>(trie_.size());
      kids.insert(it, {c, next});
      trie_.push_back(Node{});
      node = next;
    }
    trie_[node].pattern = static_cast<std::int32_t>(id);
  }
}

Dictionary::Match Dictionary::longest_match(std::string_view text) const {
  Match best;
  if (trie_.empty()) return best;
  std::int32_t node = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<std::uint8_t>(text[i]);
    const auto& kids = trie_[node].children;
    auto it = std::lower_bound(kids.begin(), kids.end(), c,
                               [](const auto& edge, std::uint8_t b) { return edge.first < b; });
    if (it == kids.end() || it->first != c) break;
    node = it->second;
    if (trie_[node].pattern >= 0) best = {trie_[node].pattern, i + 1};
  }
  return best;
}

// ---------------------------------------------------------------------------
// Training

namespace {

// Suffix array by prefix doubling.
std::vector<std::int32_t> suffix_array(const std::vector<std::int32_t>& text) {
  const auto n = static_cast<std::int32_t>(text.size());
  std::vector<std::int32_t> sa(n), rank(text.begin(), text.end()), tmp(n);
  std::iota(sa.begin(), sa.end(), 0);
  for (std::int32_t k = 1;; k <<= 1) {
    auto key = [&](std::int32_t i) {
      return std::pair<std::int32_t, std::int32_t>(rank[i], i + k < n ? rank[i + k] : -1);
    };
    std::sort(sa.begin(), sa.end(), [&](std::int32_t a, std::int32_t b) { return key(a) < key(b); });
    tmp[sa[0]] = 0;
    for (std::int32_t i = 1; i < n; ++i) tmp[sa[i]] = tmp[sa[i - 1]] + (key(sa[i - 1]) < key(sa[i]) ? 1 : 0);
    rank.swap(tmp);
    if (n == 0 || rank[sa[n - 1]] == n - 1) break;
  }
  return sa;
}

// lcp[i] = LCP(suffix sa[i-1], suffix sa[i]); lcp[0] = 0.
std::vector<std::int32_t> lcp_array(const std::vector<std::int32_t>& text, const std::vector<std::int32_t>& sa) {
  const auto n = static_cast<std::int32_t>(text.size());
  std::vector<std::int32_t> rank(n), lcp(n, 0);
  for (std::int32_t i = 0; i < n; ++i) rank[sa[i]] = i;
  std::int32_t h = 0;
  for (std::int32_t i = 0; i < n; ++i) {
    if (rank[i] > 0) {
      const std::int32_t j = sa[rank[i] - 1];
      while (i + h < n && j + h < n && text[i + h] == text[j + h]) ++h;
      lcp[rank[i]] = h;
      if (h > 0) --h;
    } else {
      h = 0;
    }
  }
  return lcp;
}

struct Interval {
  std::int32_t lb = 0;
  std::int32_t rb = 0;
  std::int32_t length = 0;
};

struct Candidate {
  std::string text;
  std::uint64_t support = 0;
};

class Bit {
 public:
  explicit Bit(std::size_t n) : t_(n + 1, 0) {}
  void add(std::size_t i) {
    for (++i; i < t_.size(); i += i & (~i + 1)) ++t_[i];
  }
  std::int64_t prefix(std::size_t i) const {  // [0, i)
    std::int64_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += t_[i];
    return s;
  }

 private:
  std::vector<std::int64_t> t_;
};

}  // namespace

Dictionary train_dictionary(std::span<const std::string> samples, const TrainOptions& options,
                            std::uint32_t version) {
  if (options.max_patterns > kMaxPatterns) raise(ErrorCode::kInvalidArgument, "max_patterns must be <= 254");
  if (options.min_pattern_len < 4) raise(ErrorCode::kInvalidArgument, "min_pattern_len must be >= 4");
  if (options.max_pattern_len < options.min_pattern_len) {
    raise(ErrorCode::kInvalidArgument, "max_pattern_len must be >= min_pattern_len");
  }
  if (samples.empty() || options.max_patterns == 0) {
    return Dictionary(version, {}, options.min_pattern_len, samples.size());
  }

  // Bytes map to 0..255, sample j is terminated by the unique symbol 256+j so
  // no common prefix crosses a sample boundary.
  std::vector<std::int32_t> text;
  std::vector<std::int32_t> doc;
  for (std::size_t j = 0; j < samples.size(); ++j) {
    for (unsigned char c : samples[j]) {
      text.push_back(c);
      doc.push_back(static_cast<std::int32_t>(j));
    }
    text.push_back(256 + static_cast<std::int32_t>(j));
    doc.push_back(static_cast<std::int32_t>(j));
  }
  const auto sa = suffix_array(text);
  const auto lcp = lcp_array(text, sa);
  const auto n = static_cast<std::int32_t>(text.size());
  const auto min_len = static_cast<std::int32_t>(options.min_pattern_len);
  const auto max_len = static_cast<std::int32_t>(options.max_pattern_len);

  // Bottom-up traversal of LCP intervals. An interval with lcp L stands for
  // substrings of length (parent lcp, L]; the longest is the best scorer. If
  // L exceeds max_len, only the topmost interval crossing max_len is kept.
  std::vector<Interval> intervals;
  struct Open {
    std::int32_t lcp;
    std::int32_t lb;
  };
  std::vector<Open> stack{{0, 0}};
  for (std::int32_t i = 1; i <= n; ++i) {
    const std::int32_t cur = i < n ? lcp[i] : 0;
    std::int32_t lb = i - 1;
    while (cur < stack.back().lcp) {
      const Open top = stack.back();
      stack.pop_back();
      const std::int32_t parent = std::max(cur, stack.back().lcp);
      if (top.lcp >= min_len && parent < max_len) {
        intervals.push_back({top.lb, i - 1, std::min(top.lcp, max_len)});
      }
      lb = top.lb;
    }
    if (cur > stack.back().lcp) stack.push_back({cur, lb});
  }

  // Support = distinct samples among sa[lb..rb], answered offline:
  // count of k in [lb, rb] whose previous same-sample suffix lies before lb.
  std::vector<std::int32_t> prev(n, -1);
  {
    std::vector<std::int32_t> last(samples.size(), -1);
    for (std::int32_t k = 0; k < n; ++k) {
      const std::int32_t d = doc[sa[k]];
      prev[k] = last[d];
      last[d] = k;
    }
  }
  std::vector<std::int32_t> by_prev(n);
  std::iota(by_prev.begin(), by_prev.end(), 0);
  std::sort(by_prev.begin(), by_prev.end(), [&](std::int32_t a, std::int32_t b) { return prev[a] < prev[b]; });
  std::vector<std::size_t> order(intervals.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return intervals[a].lb < intervals[b].lb; });

  const double needed = options.min_support * static_cast<double>(samples.size());
  std::vector<Candidate> candidates;
  Bit bit(n);
  std::size_t added = 0;
  for (std::size_t q : order) {
    const Interval& iv = intervals[q];
    while (added < by_prev.size() && prev[by_prev[added]] < iv.lb) bit.add(by_prev[added++]);
    const auto support = static_cast<std::uint64_t>(bit.prefix(iv.rb + 1) - bit.prefix(iv.lb));
    if (static_cast<double>(support) + 1e-9 < needed) continue;
    std::string s;
    s.reserve(iv.length);
    const std::int32_t start = sa[iv.lb];
    for (std::int32_t k = 0; k < iv.length; ++k) s.push_back(static_cast<char>(text[start + k]));
    candidates.push_back({std::move(s), support});
  }

  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    const auto sa_ = a.support * a.text.size();
    const auto sb_ = b.support * b.text.size();
    if (sa_ != sb_) return sa_ > sb_;
    if (a.text.size() != b.text.size()) return a.text.size() > b.text.size();
    return a.text < b.text;
  });

  std::vector<std::string> selected;
  for (auto& c : candidates) {
    if (selected.size() >= options.max_patterns) break;
    const bool covered = std::any_of(selected.begin(), selected.end(), [&](const std::string& p) {
      return p.find(c.text) != std::string::npos;
    });
    if (!covered) selected.push_back(std::move(c.text));
  }
  return Dictionary(version, std::move(selected), options.min_pattern_len, samples.size());
}

// ---------------------------------------------------------------------------
// Codec

namespace {

void emit_literals(std::string& out, std::string_view bytes) {
  while (!bytes.empty()) {
    const std::size_t n = std::min(bytes.size(), kMaxLiteralRun);
    out.push_back(static_cast<char>(kLiteralToken));
    codec::put_u16le(out, static_cast<std::uint16_t>(n));
    out.append(bytes.substr(0, n));
    bytes.remove_prefix(n);
  }
}

std::string passthrough(std::string_view record) {
  std::string out;
  out.reserve(record.size() + 1);
  out.push_back(static_cast<char>(kHeaderPassthrough));
  out.append(record);
  return out;
}

[[noreturn]] void corrupt(const std::string& what) { raise(ErrorCode::kCorruptBlob, what); }

}  // namespace

std::string compress(std::string_view record, const Dictionary& dict, EncodeInfo* info,
                     const ResidualCodec* residual) {
  EncodeInfo local;
  EncodeInfo& inf = info ? *info : local;
  inf = EncodeInfo{};
  if (dict.empty() || record.empty()) return passthrough(record);

  std::string tokens;
  tokens.reserve(record.size());
  std::size_t literal_start = 0;
  std::size_t refs = 0;
  std::size_t i = 0;
  while (i < record.size()) {
    const auto m = dict.longest_match(record.substr(i));
    if (m.id < 0) {
      ++i;
      continue;
    }
    emit_literals(tokens, record.substr(literal_start, i - literal_start));
    tokens.push_back(static_cast<char>(m.id));
    ++refs;
    i += m.length;
    literal_start = i;
  }
  if (refs == 0) return passthrough(record);
  emit_literals(tokens, record.substr(literal_start));

  std::string out;
  out.push_back(static_cast<char>(kHeaderEncoded));
  out += residual ? residual->encode(tokens) : tokens;
  if (out.size() >= record.size()) return passthrough(record);
  inf.pattern_refs = refs;
  inf.passthrough = false;
  return out;
}

std::string decompress(std::string_view blob, const Dictionary& dict, const ResidualCodec* residual) {
  if (blob.empty()) corrupt("empty blob");
  const auto header = static_cast<std::uint8_t>(blob[0]);
  if (header == kHeaderPassthrough) return std::string(blob.substr(1));
  if (header != kHeaderEncoded) corrupt("unknown blob header");

  std::string decoded;
  std::string_view tokens = blob.substr(1);
  if (residual) {
    decoded = residual->decode(tokens);
    tokens = decoded;
  }
  std::string out;
  std::size_t i = 0;
  while (i < tokens.size()) {
    const auto t = static_cast<std::uint8_t>(tokens[i]);
    if (t == kLiteralToken) {
      if (i + 3 > tokens.size()) corrupt("truncated literal header");
      const std::size_t len = codec::get_u16le(tokens.data() + i + 1);
      if (i + 3 + len > tokens.size()) corrupt("literal run overruns blob");
      out.append(tokens.substr(i + 3, len));
      i += 3 + len;
    } else if (t == kReservedToken || t >= dict.size()) {
      corrupt("pattern id " + std::to_string(t) + " outside dictionary of " + std::to_string(dict.size()));
    } else {
      out += dict.patterns()[t];
      ++i;
    }
  }
  return out;
}

std::string decompress(std::string_view blob, const Dictionary& dict, std::uint32_t blob_version,
                       const ResidualCodec* residual) {
  if (blob_version != dict.version()) {
    raise(ErrorCode::kDictVersionMismatch, "blob written with dictionary v" + std::to_string(blob_version) +
                                               ", have v" + std::to_string(dict.version()));
  }
  return decompress(blob, dict, residual);
}

bool should_retrain(const CompressionStats& stats, double ratio_degradation, double unmatched_threshold) {
  if (stats.records == 0) return false;
  if (stats.ratio() > stats.baseline_ratio * (1.0 + ratio_degradation)) return true;
  return static_cast<double>(stats.unmatched_records) / static_cast<double>(stats.records) > unmatched_threshold;
}

double corpus_ratio(std::span<const std::string> records, const Dictionary& dict) {
  std::uint64_t in = 0;
  std::uint64_t out = 0;
  for (const auto& r : records) {
    in += r.size();
    out += compress(r, dict).size();
  }
  return in == 0 ? 1.0 : static_cast<double>(out) / static_cast<double>(in);
}

// ---------------------------------------------------------------------------
// Dictionary file

void save_dictionary(const Dictionary& dict, std::ostream& out) {
  if (dict.version() > 0xFF) raise(ErrorCode::kInvalidArgument, "dictionary version does not fit in 8 bits");
  std::string buf = "TKVD";
  buf.push_back(static_cast<char>(dict.version()));
  codec::put_u16le(buf, static_cast<std::uint16_t>(dict.size()));
  for (const auto& p : dict.patterns()) {
    codec::put_u16le(buf, static_cast<std::uint16_t>(p.size()));
    buf += p;
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) raise(ErrorCode::kIoFailure, "cannot write dictionary");
}

Dictionary load_dictionary(std::istream& in, std::size_t min_pattern_len) {
  auto read_exact = [&](std::size_t n) {
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) raise(ErrorCode::kCorruptBlob, "truncated dictionary file");
    return s;
  };
  if (read_exact(4) != "TKVD") raise(ErrorCode::kCorruptBlob, "not a dictionary file");
  const auto version = static_cast<std::uint8_t>(read_exact(1)[0]);
  const auto count = codec::get_u16le(read_exact(2).data());
  std::vector<std::string> patterns;
  patterns.reserve(count);
  std::size_t shortest = min_pattern_len;
  for (std::uint16_t i = 0; i < count; ++i) {
    const auto len = codec::get_u16le(read_exact(2).data());
    patterns.push_back(read_exact(len));
    shortest = std::min<std::size_t>(shortest, len);
  }
  return Dictionary(version, std::move(patterns), shortest, 0);
}

void save_dictionary_file(const Dictionary& dict, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::kIoFailure, "cannot open " + path);
  save_dictionary(dict, out);
}

Dictionary load_dictionary_file(const std::string& path, std::size_t min_pattern_len) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::kIoFailure, "cannot open " + path);
  return load_dictionary(in, min_pattern_len);
}

// ---------------------------------------------------------------------------
// CompressionManager

CompressionManager::CompressionManager(Options options) : options_(options), rng_(options.seed) {
  install(Dictionary(1, {}, options_.train.min_pattern_len, 0), {});
}

CompressionManager::CompressionManager(Options options, Dictionary initial)
    : options_(options), rng_(options.seed) {
  install(std::move(initial), {});
}

void CompressionManager::install(Dictionary dict, std::span<const std::string> baseline_samples) {
  double baseline = 1.0;
  if (!baseline_samples.empty()) baseline = corpus_ratio(baseline_samples, dict);
  auto ptr = std::make_shared<const Dictionary>(std::move(dict));
  {
    std::lock_guard lock(mu_);
    versions_[ptr->version()] = ptr;
    current_ = ptr;
  }
  bytes_in_ = 0;
  bytes_out_ = 0;
  unmatched_ = 0;
  records_ = 0;
  baseline_ = baseline;
}

void CompressionManager::sample(std::string_view value) {
  std::unique_lock lock(sample_mu_, std::try_to_lock);
  if (!lock.owns_lock()) return;
  ++seen_;
  if (reservoir_.size() < options_.reservoir_size) {
    reservoir_.emplace_back(value);
    return;
  }
  const std::uint64_t slot = rng_() % seen_;
  if (slot < reservoir_.size()) reservoir_[slot].assign(value);
}

CompressionManager::Encoded CompressionManager::encode(std::string_view value) {
  auto dict = current();
  EncodeInfo info;
  Encoded e{compress(value, *dict, &info), dict->version()};
  bytes_in_ += value.size();
  bytes_out_ += e.blob.size();
  ++records_;
  if (info.pattern_refs == 0) ++unmatched_;
  sample(value);
  return e;
}

std::string CompressionManager::decode(std::string_view blob, std::uint32_t version) const {
  std::shared_ptr<const Dictionary> dict;
  {
    std::lock_guard lock(mu_);
    auto it = versions_.find(version);
    dict = it == versions_.end() ? current_ : it->second;
  }
  return decompress(blob, *dict, version);
}

bool CompressionManager::maybe_retrain() {
  const auto st = stats();
  if (st.records < options_.min_records_before_retrain) return false;
  if (!should_retrain(st, options_.ratio_degradation, options_.unmatched_threshold)) return false;
  retrain_now();
  return true;
}

void CompressionManager::retrain_now() {
  std::vector<std::string> samples;
  {
    std::lock_guard lock(sample_mu_);
    samples = reservoir_;
    reservoir_.clear();
    seen_ = 0;
  }
  std::uint32_t next = current()->version() % 0xFF + 1;
  install(train_dictionary(samples, options_.train, next), samples);
  ++retrains_;
}

CompressionStats CompressionManager::stats() const {
  CompressionStats st;
  st.bytes_in = bytes_in_.load();
  st.bytes_out = bytes_out_.load();
  st.unmatched_records = unmatched_.load();
  st.records = records_.load();
  st.baseline_ratio = baseline_.load();
  return st;
}

std::shared_ptr<const Dictionary> CompressionManager::current() const {
  std::lock_guard lock(mu_);
  return current_;
}

}  // namespace tierkv::compress
