#pragma once

// Rank-based prioritized sampling.
//
// Entries live in a capacity-bounded binary max-heap keyed by priority. The heap's
// array position stands in for the exact priority rank: position 0 is rank 1. A full
// sort (rebalance) makes that exact; between rebalances it is an approximation.
//
// Rank r is drawn with probability (1/r)^alpha / sum_j (1/j)^alpha. The cumulative mass
// is cut into k equal slices and one uniform point per slice is mapped back to a rank
// by inverse-transform sampling, which gives a stratified batch of size k whose
// marginal is exactly the rank distribution. A rank heavier than 1/k of the mass spans
// several slices and can be drawn more than once per batch. The table also records the
// integer segment partition of ranks 1..n, where segment i ends at the first rank whose
// cumulative mass reaches i/k.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hindsight/env.hpp"
#include "hindsight/rng.hpp"

namespace hindsight {

double rank_probability(std::size_t rank, std::size_t n, double alpha = 1.0);

// Unnormalized mass of one rank: rank^-alpha.
inline double rank_mass(std::size_t rank, double alpha) {
  return std::pow(static_cast<double>(rank), -alpha);
}

struct BucketTable {
  std::size_t n = 0;
  std::size_t k = 0;
  double alpha = 1.0;
  // k + 1 one-based rank starts: bucket i holds ranks [boundaries[i], boundaries[i+1]).
  // Empty while n < k.
  std::vector<std::size_t> boundaries;
  // cumulative[r] = sum_{j <= r} rank_mass(j); cumulative[0] = 0.
  std::vector<double> cumulative;
  // First rank whose cumulative mass reaches i/k of the total, for i = 1..k-1,
  // before the nonempty-segment adjustment. Kept so extension can resume the walk.
  std::vector<std::size_t> cut_ranks;

  bool ready() const { return !boundaries.empty(); }
  double total_mass() const { return cumulative[n]; }
  std::size_t bucket_begin(std::size_t i) const { return boundaries[i]; }
  std::size_t bucket_end(std::size_t i) const { return boundaries[i + 1]; }
};

bool same_boundaries(const BucketTable& a, const BucketTable& b);

// Builds a table for n ranks and k buckets from scratch. Throws when k == 0 or k > n.
BucketTable build_buckets(std::size_t n, std::size_t k, double alpha = 1.0);

// A table covering zero ranks, the starting point for incremental growth.
BucketTable empty_buckets(std::size_t k, double alpha = 1.0);

// Grows `table` to new_n ranks, reusing its cumulative masses and cut positions.
// The result equals build_buckets(new_n, k, alpha) exactly (or is not ready() if new_n < k).
BucketTable extend_buckets_incremental(BucketTable table, std::size_t new_n);

// Inverse-transform draw of one rank from the i-th equal-mass slice of the distribution.
// The result lies in [cut_{i}, cut_{i+1}], where cut_0 = 1 and cut_k = n.
std::size_t draw_rank_in_bucket(const BucketTable& table, std::size_t bucket, Rng& rng);

using Handle = std::uint64_t;

template <typename Item>
class PriorityHeap {
public:
  struct Entry {
    Item item;
    double priority;
    Handle handle;
    std::uint64_t seq;  // insertion order; older entries rank first among equal priorities
  };

  explicit PriorityHeap(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ContractViolation("heap capacity must be positive");
    entries_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  std::uint64_t push_count() const { return push_count_; }
  std::span<const Entry> entries() const { return entries_; }

  // Inserts in O(log N). At capacity the lowest-ranked entry is evicted first.
  Handle push(Item item, double priority) {
    check_priority(priority);
    evicted_.reset();
    if (entries_.size() == capacity_) evict_min();
    const Handle h = next_handle_++;
    entries_.push_back(Entry{std::move(item), priority, h, push_count_++});
    position_[h] = entries_.size() - 1;
    sift_up(entries_.size() - 1);
    return h;
  }

  // Handle removed by the most recent push, if any.
  std::optional<Handle> last_evicted() const { return evicted_; }

  bool contains(Handle h) const { return position_.count(h) != 0; }

  void update_priority(Handle h, double priority) {
    check_priority(priority);
    const std::size_t pos = locate(h);
    const double old = entries_[pos].priority;
    entries_[pos].priority = priority;
    if (priority > old) {
      sift_up(pos);
    } else if (priority < old) {
      sift_down(pos);
    }
  }

  const Entry& at_rank(std::size_t rank) const {
    if (rank < 1 || rank > entries_.size()) throw ContractViolation("rank out of range");
    return entries_[rank - 1];
  }

  const Entry& entry(Handle h) const { return entries_[locate(h)]; }
  std::size_t rank_of(Handle h) const { return locate(h) + 1; }

  const Entry& top() const {
    if (entries_.empty()) throw ContractViolation("top of empty heap");
    return entries_.front();
  }

  Entry pop_max() {
    if (entries_.empty()) throw ContractViolation("pop from empty heap");
    Entry out = entries_.front();
    remove_at(0);
    return out;
  }

  // Sorts entries by descending priority so that array position is the exact rank.
  void rebalance() {
    std::stable_sort(entries_.begin(), entries_.end(),
                     [](const Entry& a, const Entry& b) { return higher(a, b); });
    for (std::size_t i = 0; i < entries_.size(); ++i) position_[entries_[i].handle] = i;
  }

  bool is_heap() const {
    for (std::size_t i = 1; i < entries_.size(); ++i) {
      if (higher(entries_[i], entries_[(i - 1) / 2])) return false;
    }
    return true;
  }

  static bool higher(const Entry& a, const Entry& b) {
    return a.priority > b.priority || (a.priority == b.priority && a.seq < b.seq);
  }

private:
  static void check_priority(double p) {
    if (!std::isfinite(p) || p < 0.0) {
      throw ContractViolation("priority must be finite and nonnegative, got " + std::to_string(p));
    }
  }

  std::size_t locate(Handle h) const {
    const auto it = position_.find(h);
    if (it == position_.end()) throw ContractViolation("stale heap handle " + std::to_string(h));
    return it->second;
  }

  void place(std::size_t pos, Entry&& e) {
    position_[e.handle] = pos;
    entries_[pos] = std::move(e);
  }

  void sift_up(std::size_t pos) {
    Entry moving = std::move(entries_[pos]);
    while (pos > 0) {
      const std::size_t parent = (pos - 1) / 2;
      if (!higher(moving, entries_[parent])) break;
      place(pos, std::move(entries_[parent]));
      pos = parent;
    }
    place(pos, std::move(moving));
  }

  void sift_down(std::size_t pos) {
    const std::size_t n = entries_.size();
    Entry moving = std::move(entries_[pos]);
    while (true) {
      std::size_t child = 2 * pos + 1;
      if (child >= n) break;
      if (child + 1 < n && higher(entries_[child + 1], entries_[child])) ++child;
      if (!higher(entries_[child], moving)) break;
      place(pos, std::move(entries_[child]));
      pos = child;
    }
    place(pos, std::move(moving));
  }

  void remove_at(std::size_t pos) {
    position_.erase(entries_[pos].handle);
    const std::size_t last = entries_.size() - 1;
    if (pos != last) {
      place(pos, std::move(entries_[last]));
      entries_.pop_back();
      if (pos > 0 && higher(entries_[pos], entries_[(pos - 1) / 2])) {
        sift_up(pos);
      } else {
        sift_down(pos);
      }
    } else {
      entries_.pop_back();
    }
  }

  // The minimum of a max-heap is one of the leaves.
  void evict_min() {
    const std::size_t n = entries_.size();
    std::size_t lowest = n / 2;
    for (std::size_t i = n / 2 + 1; i < n; ++i) {
      if (higher(entries_[lowest], entries_[i])) lowest = i;
    }
    evicted_ = entries_[lowest].handle;
    remove_at(lowest);
  }

  std::size_t capacity_;
  std::vector<Entry> entries_;
  std::unordered_map<Handle, std::size_t> position_;
  Handle next_handle_ = 0;
  std::uint64_t push_count_ = 0;
  std::optional<Handle> evicted_;
};

template <typename Item>
struct RankSample {
  Item item;
  Handle handle;
  std::size_t rank;
  double probability;
};

// One draw per bucket; rank r maps to heap array position r - 1.
template <typename Item>
std::vector<RankSample<Item>> sample_stratified(const PriorityHeap<Item>& heap, const BucketTable& table,
                                                Rng& rng) {
  if (table.n != heap.size()) {
    throw ContractViolation("bucket table built for " + std::to_string(table.n) + " ranks, heap holds " +
                            std::to_string(heap.size()));
  }
  if (!table.ready()) throw ContractViolation("bucket table has more buckets than ranks");
  std::vector<RankSample<Item>> out;
  out.reserve(table.k);
  for (std::size_t b = 0; b < table.k; ++b) {
    const std::size_t rank = draw_rank_in_bucket(table, b, rng);
    const auto& e = heap.at_rank(rank);
    out.push_back({e.item, e.handle, rank, rank_mass(rank, table.alpha) / table.total_mass()});
  }
  return out;
}

}  // namespace hindsight
