#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "tierkv/workload.hpp"

using namespace tierkv;
using namespace tierkv::workload;

namespace {

std::string trace_bytes(const Trace& t) {
  std::ostringstream out;
  write_trace(t, out);
  return out.str();
}

Trace parse(const std::string& text) {
  std::istringstream in(text);
  return read_trace(in);
}

WorkloadSpec small() {
  WorkloadSpec s;
  s.key_count = 200;
  s.op_count = 2000;
  s.record_size_min = 8;
  s.record_size_max = 40;
  return s;
}

}  // namespace

TEST(Generate, ReadOnly) {
  auto s = small();
  s.read_fraction = 1.0;
  const auto w = generate(s);
  EXPECT_EQ(w.run.size(), 2000u);
  for (const auto& r : w.run) EXPECT_EQ(r.op, TraceOp::kGet);
  EXPECT_EQ(w.load.size(), 200u);
  for (const auto& r : w.load) EXPECT_EQ(r.op, TraceOp::kSet);
}

TEST(Generate, Deterministic) {
  const auto s = small();
  EXPECT_EQ(trace_bytes(generate(s).combined()), trace_bytes(generate(s).combined()));
  auto s2 = s;
  s2.seed = 2;
  EXPECT_NE(trace_bytes(generate(s).run), trace_bytes(generate(s2).run));
}

TEST(Generate, RecordSizesAndMix) {
  auto s = small();
  s.op_count = 20000;
  s.read_fraction = 0.95;
  const auto w = generate(s);
  std::size_t gets = 0;
  for (const auto& r : w.run) {
    if (r.op == TraceOp::kGet) {
      ++gets;
    } else {
      EXPECT_GE(r.value.size(), 8u);
      EXPECT_LE(r.value.size(), 40u);
    }
  }
  EXPECT_NEAR(static_cast<double>(gets) / 20000, 0.95, 0.01);
}

TEST(Generate, TimestampsNonDecreasing) {
  auto s = small();
  s.interval_us = 250;
  const auto t = generate(s).combined();
  for (std::size_t i = 1; i < t.size(); ++i) ASSERT_LE(t[i - 1].ts, t[i].ts);
  EXPECT_EQ(generate(s).run.back().ts - generate(s).run.front().ts, 250u * 1999);
}

TEST(Generate, ZipfMonotoneTopTen) {
  WorkloadSpec s;
  s.key_count = 10000;
  s.op_count = 100000;
  s.theta = 0.99;
  s.record_size_min = s.record_size_max = 4;
  s.load_phase = false;
  std::map<std::string, std::size_t> freq;
  for (const auto& r : generate(s).run) ++freq[r.key];
  std::vector<std::size_t> counts;
  for (const auto& [k, c] : freq) counts.push_back(c);
  std::sort(counts.rbegin(), counts.rend());
  // Same ranking read off the scrambler.
  Scrambler sc(10000);
  for (std::uint64_t r = 1; r < 10; ++r) {
    EXPECT_GT(freq[key_name(sc.index_of_rank(r))], freq[key_name(sc.index_of_rank(r + 1))]) << r;
  }
  EXPECT_EQ(freq[key_name(sc.index_of_rank(1))], counts[0]);
}

TEST(Generate, UniformCoversKeys) {
  auto s = small();
  s.distribution = Distribution::kUniform;
  s.op_count = 20000;
  std::set<std::string> keys;
  for (const auto& r : generate(s).run) keys.insert(r.key);
  EXPECT_EQ(keys.size(), 200u);
}

TEST(Generate, CorpusValues) {
  const auto path = std::filesystem::temp_directory_path() / "tierkv_corpus_test.txt";
  write_corpus({"alpha", "beta gamma"}, path.string());
  auto s = small();
  s.value_source = ValueSource::kCorpusFile;
  s.corpus_path = path.string();
  for (const auto& r : generate(s).load) EXPECT_TRUE(r.value == "alpha" || r.value == "beta gamma");
  s.corpus_path = "/nonexistent/corpus";
  try {
    generate(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCorpusFileUnreadable);
  }
  std::filesystem::remove(path);
}

TEST(Generate, InvalidSpec) {
  auto s = small();
  s.theta = 1.0;
  EXPECT_THROW(s.validate(), Error);
  s = small();
  s.read_fraction = 1.5;
  EXPECT_THROW(s.validate(), Error);
  s = small();
  s.record_size_min = 50;
  EXPECT_THROW(s.validate(), Error);
}

TEST(Generate, Presets) {
  EXPECT_DOUBLE_EQ(WorkloadSpec::ycsb_a().read_fraction, 0.5);
  EXPECT_DOUBLE_EQ(WorkloadSpec::ycsb_b().read_fraction, 0.95);
}

TEST(Zipf, MatchesDirectProbability) {
  const std::uint64_t n = 1000;
  const double theta = 0.99;
  double h = 0;
  for (std::uint64_t r = 1; r <= n; ++r) h += std::pow(static_cast<double>(r), -theta);
  ZipfianSampler z(n, theta);
  std::mt19937_64 rng(42);
  std::vector<std::uint64_t> count(n + 1);
  const int draws = 1000000;
  for (int i = 0; i < draws; ++i) {
    const auto r = z.sample(rng);
    ASSERT_GE(r, 1u);
    ASSERT_LE(r, n);
    ++count[r];
  }
  for (std::uint64_t r = 1; r <= 10; ++r) {
    const double expect = std::pow(static_cast<double>(r), -theta) / h;
    EXPECT_NEAR(static_cast<double>(count[r]) / draws, expect, 0.05 * expect) << r;
    EXPECT_NEAR(ZipfianSampler::probability(r, n, theta), expect, 1e-12);
  }
}

TEST(Zipf, OtherThetas) {
  for (double theta : {0.3, 0.7}) {
    const std::uint64_t n = 50;
    double h = 0;
    for (std::uint64_t r = 1; r <= n; ++r) h += std::pow(static_cast<double>(r), -theta);
    ZipfianSampler z(n, theta);
    std::mt19937_64 rng(7);
    std::vector<std::uint64_t> count(n + 1);
    for (int i = 0; i < 500000; ++i) ++count[z.sample(rng)];
    for (std::uint64_t r : {1u, 2u, 10u, 50u}) {
      const double expect = std::pow(static_cast<double>(r), -theta) / h;
      EXPECT_NEAR(count[r] / 500000.0, expect, 0.05 * expect) << theta << " " << r;
    }
  }
}

TEST(Scrambler, Bijection) {
  Scrambler s(5000);
  std::set<std::uint64_t> seen;
  for (std::uint64_t r = 1; r <= 5000; ++r) seen.insert(s.index_of_rank(r));
  EXPECT_EQ(seen.size(), 5000u);
  EXPECT_EQ(*seen.rbegin(), 4999u);
}

TEST(KeyName, FixedWidth) {
  EXPECT_EQ(key_name(0).size(), key_name(999999999).size());
  EXPECT_NE(key_name(1), key_name(10));
}

TEST(TraceFormat, ExactBytes) {
  Trace t{{0, TraceOp::kSet, "k1", "hi"}, {5, TraceOp::kGet, "k1", ""}, {9, TraceOp::kDel, "k1", ""},
          {9, TraceOp::kSet, "e", ""}};
  EXPECT_EQ(trace_bytes(t), "#tierkv-trace v1\n0 SET k1 aGk=\n5 GET k1\n9 DEL k1\n9 SET e \n");
}

TEST(TraceFormat, RoundTrip) {
  auto s = small();
  s.value_source = ValueSource::kRandom;
  const auto t = generate(s).combined();
  const auto bytes = trace_bytes(t);
  const auto back = parse(bytes);
  EXPECT_EQ(back, t);
  EXPECT_EQ(trace_bytes(back), bytes);
}

TEST(TraceFormat, BinaryValues) {
  std::string v;
  for (int i = 0; i < 256; ++i) v.push_back(static_cast<char>(i));
  Trace t{{1, TraceOp::kSet, "bin", v}};
  EXPECT_EQ(parse(trace_bytes(t)), t);
}

TEST(TraceFormat, File) {
  const auto path = (std::filesystem::temp_directory_path() / "tierkv_trace_test.trace").string();
  const auto t = generate(small()).run;
  write_trace_file(t, path);
  EXPECT_EQ(read_trace_file(path), t);
  std::filesystem::remove(path);
  try {
    read_trace_file(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIoFailure);
  }
}

TEST(TraceFormat, Errors) {
  try {
    parse("0 GET k\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBadHeader);
  }
  const std::vector<std::pair<std::string, std::size_t>> bad = {
      {"#tierkv-trace v1\n0 GET k extra\n", 2},
      {"#tierkv-trace v1\n0 GET a\nx GET k\n", 3},
      {"#tierkv-trace v1\n0 PUT k\n", 2},
      {"#tierkv-trace v1\n0 SET k\n", 2},
      {"#tierkv-trace v1\n0 SET k !!!\n", 2},
      {"#tierkv-trace v1\n5 GET a\n4 GET a\n", 3},
      {"#tierkv-trace v1\r\n0 GET a\n", 1},
  };
  for (const auto& [text, line] : bad) {
    try {
      parse(text);
      ADD_FAILURE() << text;
    } catch (const MalformedLine& e) {
      EXPECT_EQ(e.line(), line) << text;
    } catch (const Error& e) {
      if (line != 1) ADD_FAILURE() << text << ": " << e.what();
    }
  }
}

TEST(TemplateCorpus, Shape) {
  const auto c = template_corpus(100, 1);
  ASSERT_EQ(c.size(), 100u);
  EXPECT_EQ(c, template_corpus(100, 1));
  std::set<std::string> distinct(c.begin(), c.end());
  EXPECT_GT(distinct.size(), 90u);
}
