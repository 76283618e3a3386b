#pragma once

// Count-based empirical distributions and the Jensen-Shannon distance used to
// score how far a candidate moves a corpus distribution.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "selftrain/error.hpp"

namespace selftrain {

template <typename Key>
class Distribution {
 public:
  using key_type = Key;
  using map_type = std::map<Key, std::uint64_t>;

  void add(const Key& key, std::uint64_t n = 1) {
    if (n == 0) return;
    counts_[key] += n;
    total_ += n;
  }

  void merge(const Distribution& other) {
    for (const auto& [k, n] : other.counts_) add(k, n);
  }

  std::uint64_t count(const Key& key) const {
    auto it = counts_.find(key);
    return it == counts_.end() ? 0 : it->second;
  }

  double probability(const Key& key) const {
    return total_ == 0 ? 0.0 : static_cast<double>(count(key)) / static_cast<double>(total_);
  }

  const map_type& counts() const { return counts_; }
  std::uint64_t total() const { return total_; }
  std::size_t support_size() const { return counts_.size(); }
  bool empty() const { return total_ == 0; }

  friend bool operator==(const Distribution&, const Distribution&) = default;

 private:
  map_type counts_;
  std::uint64_t total_ = 0;
};

namespace detail {

// One summand of base-2 JS: 0.5 p log2(2p/(p+q)) + 0.5 q log2(2q/(p+q)).
inline double js_term(double p, double q) {
  double s = p + q;
  double out = 0.0;
  if (p > 0) out += 0.5 * p * std::log2(2.0 * p / s);
  if (q > 0) out += 0.5 * q * std::log2(2.0 * q / s);
  return out;
}

inline double clamp_unit(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace detail

// Base-2 Jensen-Shannon divergence over the union support; in [0, 1].
template <typename Key>
double js_divergence(const Distribution<Key>& p, const Distribution<Key>& q) {
  if (p.empty() || q.empty()) throw EmptyDistributionError("js_divergence: distribution with zero total");
  const double tp = static_cast<double>(p.total());
  const double tq = static_cast<double>(q.total());
  double sum = 0.0;
  auto a = p.counts().begin(), ae = p.counts().end();
  auto b = q.counts().begin(), be = q.counts().end();
  while (a != ae || b != be) {
    if (b == be || (a != ae && a->first < b->first)) {
      sum += detail::js_term(static_cast<double>(a->second) / tp, 0.0);
      ++a;
    } else if (a == ae || b->first < a->first) {
      sum += detail::js_term(0.0, static_cast<double>(b->second) / tq);
      ++b;
    } else {
      sum += detail::js_term(static_cast<double>(a->second) / tp, static_cast<double>(b->second) / tq);
      ++a;
      ++b;
    }
  }
  return detail::clamp_unit(sum);
}

// JS(dist(S), dist(S + c)) where c's raw counts are added to S before normalizing.
//
// Keys absent from c keep their relative proportions: with a = T/(T+C) their
// Q-mass is a times their P-mass, so their summed contribution is
// (P-mass outside c) * js_term(1, a). Cost is O(|c| log |S|).
template <typename Key>
double distance_to_source(const Distribution<Key>& candidate, const Distribution<Key>& source) {
  if (source.empty()) throw EmptyDistributionError("distance_to_source: empty source distribution");
  if (candidate.empty()) throw EmptyDistributionError("distance_to_source: empty candidate");
  const double ts = static_cast<double>(source.total());
  const double tm = ts + static_cast<double>(candidate.total());
  const double alpha = ts / tm;
  double sum = 0.0;
  double touched_mass = 0.0;
  for (const auto& [key, c] : candidate.counts()) {
    const double s = static_cast<double>(source.count(key));
    const double p = s / ts;
    touched_mass += p;
    sum += detail::js_term(p, (s + static_cast<double>(c)) / tm);
  }
  const double rest = std::max(0.0, 1.0 - touched_mass);
  sum += rest * detail::js_term(1.0, alpha);
  return detail::clamp_unit(sum);
}

}  // namespace selftrain
