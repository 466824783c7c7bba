#include "tierkv/mrc.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <unordered_map>

#include "tierkv/error.hpp"

namespace tierkv::mrc {

namespace {

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}

  void add(std::size_t pos, std::int64_t delta) {
    for (std::size_t i = pos + 1; i < tree_.size(); i += i & (~i + 1)) tree_[i] += delta;
  }

  // Sum over [0, pos).
  std::int64_t prefix(std::size_t pos) const {
    std::int64_t s = 0;
    for (std::size_t i = pos; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::int64_t> tree_;
};

template <typename Key>
StackDistanceHistogram histogram_impl(std::span<const Key> keys) {
  StackDistanceHistogram hist;
  Fenwick marks(keys.size());
  std::unordered_map<std::string_view, std::size_t> last;
  last.reserve(keys.size() / 2 + 1);
  for (std::size_t t = 0; t < keys.size(); ++t) {
    const std::string_view key = keys[t];
    auto [it, inserted] = last.try_emplace(key, t);
    if (inserted) {
      ++hist.infinite_count;
    } else {
      const std::size_t prev = it->second;
      // Keys whose most recent access lies strictly between prev and t.
      const auto between = marks.prefix(t) - marks.prefix(prev + 1);
      ++hist.finite[static_cast<std::uint64_t>(between) + 1];
      marks.add(prev, -1);
      it->second = t;
    }
    marks.add(t, 1);
  }
  return hist;
}

}  // namespace

std::uint64_t StackDistanceHistogram::total() const {
  std::uint64_t n = infinite_count;
  for (const auto& [d, c] : finite) n += c;
  return n;
}

StackDistanceHistogram stack_distance_histogram(std::span<const std::string> keys) {
  return histogram_impl(keys);
}

StackDistanceHistogram stack_distance_histogram(std::span<const std::string_view> keys) {
  return histogram_impl(keys);
}

double MissRatioCurve::miss_ratio_at(std::uint64_t entries) const {
  auto it = std::upper_bound(points.begin(), points.end(), entries,
                             [](std::uint64_t e, const CurvePoint& p) { return e < p.size; });
  if (it == points.begin()) return 1.0;
  return std::prev(it)->miss_ratio;
}

MissRatioCurve miss_ratio_curve(const StackDistanceHistogram& hist,
                                std::span<const std::uint64_t> sizes) {
  const std::uint64_t total = hist.total();
  if (total == 0) raise(ErrorCode::kEmptyTrace, "miss ratio curve of an empty trace");
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    if (sizes[i] <= sizes[i - 1]) raise(ErrorCode::kInvalidArgument, "cache sizes must be ascending");
  }

  MissRatioCurve curve;
  curve.total_accesses = total;
  curve.cold_misses = hist.infinite_count;
  // Every key contributes exactly one cold access.
  curve.total_unique_keys = hist.infinite_count;

  // hits(size) = accesses with distance <= size
  auto dist = hist.finite.begin();
  std::uint64_t hits = 0;
  auto point = [&](std::uint64_t size) {
    while (dist != hist.finite.end() && dist->first <= size) {
      hits += dist->second;
      ++dist;
    }
    return CurvePoint{size, static_cast<double>(total - hits) / static_cast<double>(total)};
  };
  if (sizes.empty() || sizes.front() != 0) curve.points.push_back({0, 1.0});
  for (std::uint64_t s : sizes) curve.points.push_back(point(s));
  return curve;
}

MissRatioCurve full_miss_ratio_curve(const StackDistanceHistogram& hist) {
  std::vector<std::uint64_t> sizes(hist.infinite_count + 1);
  for (std::size_t i = 0; i < sizes.size(); ++i) sizes[i] = i;
  return miss_ratio_curve(hist, sizes);
}

RatioCurve::RatioCurve(MissRatioCurve curve, double total_data, double avg_record_size)
    : curve_(std::move(curve)) {
  if (!(total_data > 0) || !(avg_record_size > 0)) {
    raise(ErrorCode::kInvalidArgument, "total_data and avg_record_size must be > 0");
  }
  records_ = total_data / avg_record_size;
}

std::uint64_t RatioCurve::entries_for(double cache_ratio) const {
  const double cr = std::clamp(cache_ratio, 0.0, 1.0);
  return static_cast<std::uint64_t>(std::floor(cr * records_ + 1e-9));
}

double RatioCurve::operator()(double cache_ratio) const {
  return curve_.miss_ratio_at(entries_for(cache_ratio));
}

RatioCurve as_ratio_curve(MissRatioCurve curve, double total_data, double avg_record_size) {
  return RatioCurve(std::move(curve), total_data, avg_record_size);
}

void write_csv(const MissRatioCurve& curve, std::ostream& out) {
  out << "size,miss_ratio\n";
  for (const auto& p : curve.points) out << p.size << ',' << p.miss_ratio << '\n';
}

}  // namespace tierkv::mrc
