#pragma once

// Independent reference implementations used as test oracles. Nothing here
// calls into the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <list>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace oracle {

// Exhaustive scan: smallest max(pc, sc), ties to smaller |pc - sc|, then
// first in list.
inline std::size_t brute_select(const std::vector<std::pair<double, double>>& pcsc) {
  double best_max = std::numeric_limits<double>::infinity();
  for (const auto& [pc, sc] : pcsc) best_max = std::min(best_max, std::max(pc, sc));
  double best_gap = std::numeric_limits<double>::infinity();
  std::size_t best = 0;
  for (std::size_t i = 0; i < pcsc.size(); ++i) {
    const auto [pc, sc] = pcsc[i];
    if (std::max(pc, sc) != best_max) continue;
    if (std::abs(pc - sc) < best_gap) {
      best_gap = std::abs(pc - sc);
      best = i;
    }
  }
  return best;
}

inline double tiered_total(double pc_cache, double pc_miss, double pc_storage, double sc_cache, double sc_storage, double cr,
                  double mr) {
  const double a = pc_cache + pc_miss * mr;
  const double b = sc_cache * cr;
  const double c = pc_storage * mr;
  return (a > b ? a : b) + (c > sc_storage ? c : sc_storage);
}

struct GridMin {
  double cr = 0;
  double cost = 0;
};

// min over cr = k/steps of max(pc_cache + pc_miss f(cr), sc_cache cr).
inline GridMin grid_min_max(const std::function<double(double)>& f, double pc_cache, double pc_miss, double sc_cache,
                            int steps = 10000) {
  GridMin g{0, std::numeric_limits<double>::infinity()};
  for (int k = 0; k <= steps; ++k) {
    const double cr = static_cast<double>(k) / steps;
    const double v = std::max(pc_cache + pc_miss * f(cr), sc_cache * cr);
    if (v < g.cost) g = {cr, v};
  }
  return g;
}

// Misses of an LRU cache holding `size` entries over the key sequence.
template <typename Key>
std::uint64_t lru_misses(const std::vector<Key>& keys, std::size_t size) {
  if (size == 0) return keys.size();
  std::list<Key> order;  // front = most recent
  std::unordered_map<Key, typename std::list<Key>::iterator> where;
  std::uint64_t misses = 0;
  for (const auto& k : keys) {
    auto it = where.find(k);
    if (it != where.end()) {
      order.splice(order.begin(), order, it->second);
      continue;
    }
    ++misses;
    order.push_front(k);
    where[k] = order.begin();
    if (order.size() > size) {
      where.erase(order.back());
      order.pop_back();
    }
  }
  return misses;
}

// Cache-tier reference: LRU over charged bytes with dirty entries pinned.
class LruModel {
 public:
  explicit LruModel(std::size_t capacity) : capacity_(capacity) {}

  struct Entry {
    std::string value;
    std::size_t charge = 0;
    bool dirty = false;
  };

  std::optional<std::string> get(const std::string& k) {
    auto it = map_.find(k);
    if (it == map_.end()) return std::nullopt;
    touch(k);
    return it->second.value;
  }

  // Returns evicted keys; nullopt when the put must fail.
  std::optional<std::vector<std::string>> put(const std::string& k, const std::string& v, std::size_t charge,
                                              bool dirty) {
    if (charge > capacity_) return std::nullopt;
    std::size_t used_after = used_ + charge - (map_.count(k) ? map_[k].charge : 0);
    std::size_t clean = 0;
    for (const auto& [key, e] : map_) {
      if (!e.dirty && key != k) clean += e.charge;
    }
    if (used_after > capacity_ && used_after - capacity_ > clean) return std::nullopt;
    erase(k);
    std::vector<std::string> evicted;
    // Oldest clean first.
    while (used_ + charge > capacity_) {
      auto it = std::find_if(order_.rbegin(), order_.rend(), [&](const std::string& key) { return !map_[key].dirty; });
      const std::string victim = *it;
      evicted.push_back(victim);
      erase(victim);
    }
    map_[k] = {v, charge, dirty};
    order_.push_front(k);
    used_ += charge;
    return evicted;
  }

  bool erase(const std::string& k) {
    auto it = map_.find(k);
    if (it == map_.end()) return false;
    used_ -= it->second.charge;
    map_.erase(it);
    order_.remove(k);
    return true;
  }

  void clean(const std::string& k) {
    auto it = map_.find(k);
    if (it != map_.end()) it->second.dirty = false;
  }

  std::size_t used() const { return used_; }
  const std::map<std::string, Entry>& entries() const { return map_; }
  const std::list<std::string>& order() const { return order_; }

 private:
  void touch(const std::string& k) {
    order_.remove(k);
    order_.push_front(k);
  }

  std::size_t capacity_;
  std::size_t used_ = 0;
  std::map<std::string, Entry> map_;
  std::list<std::string> order_;
};

}  // namespace oracle
