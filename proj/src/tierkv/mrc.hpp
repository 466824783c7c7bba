#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// LRU miss-ratio curves from access traces (Mattson stack distances).
namespace tierkv::mrc {

struct StackDistanceHistogram {
  // distance -> number of accesses at that distance. A distance of d means
  // d distinct keys (including the accessed one) were touched since the
  // previous access to the same key, so an LRU cache of d entries hits.
  std::map<std::uint64_t, std::uint64_t> finite;
  std::uint64_t infinite_count = 0;  // first-time (cold) accesses

  std::uint64_t total() const;
};

// Single pass, O(n log n) via a Fenwick tree over access positions.
StackDistanceHistogram stack_distance_histogram(std::span<const std::string> keys);
StackDistanceHistogram stack_distance_histogram(std::span<const std::string_view> keys);

struct CurvePoint {
  std::uint64_t size = 0;  // cache entries
  double miss_ratio = 1;
};

struct MissRatioCurve {
  std::vector<CurvePoint> points;  // ascending by size, starts at size 0
  std::uint64_t total_unique_keys = 0;
  std::uint64_t total_accesses = 0;
  std::uint64_t cold_misses = 0;

  // Miss ratio at the largest measured size <= entries.
  double miss_ratio_at(std::uint64_t entries) const;
};

// MR(size) = (cold + accesses with distance > size) / total. Sizes must be
// ascending. Throws kEmptyTrace when the histogram is empty.
MissRatioCurve miss_ratio_curve(const StackDistanceHistogram& hist,
                                std::span<const std::uint64_t> sizes);

// Every size from 0 to the number of unique keys.
MissRatioCurve full_miss_ratio_curve(const StackDistanceHistogram& hist);

// f(CR) view of an entry-count curve for a dataset of total_data bytes and
// uniform record size. Step interpolation toward the next-lower measured
// size.
class RatioCurve {
 public:
  RatioCurve(MissRatioCurve curve, double total_data, double avg_record_size);

  double operator()(double cache_ratio) const;
  std::uint64_t entries_for(double cache_ratio) const;

  const MissRatioCurve& curve() const { return curve_; }

 private:
  MissRatioCurve curve_;
  double records_;
};

RatioCurve as_ratio_curve(MissRatioCurve curve, double total_data, double avg_record_size);

// `size,miss_ratio` rows with a header line.
void write_csv(const MissRatioCurve& curve, std::ostream& out);

}  // namespace tierkv::mrc
