#include "hindsight/sampler.hpp"

namespace hindsight {

double rank_probability(std::size_t rank, std::size_t n, double alpha) {
  if (n == 0 || rank < 1 || rank > n) {
    throw ContractViolation("rank " + std::to_string(rank) + " outside [1, " + std::to_string(n) + "]");
  }
  if (alpha < 0.0) throw ContractViolation("alpha must be nonnegative");
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) total += rank_mass(j, alpha);
  return rank_mass(rank, alpha) / total;
}

bool same_boundaries(const BucketTable& a, const BucketTable& b) {
  return a.n == b.n && a.k == b.k && a.alpha == b.alpha && a.boundaries == b.boundaries;
}

namespace {

// Cut i is the first rank whose cumulative mass reaches i/k of the total. Both the
// scratch and incremental paths use this exact expression so their results agree bitwise.
double cut_target(double total, std::size_t i, std::size_t k) {
  return total * static_cast<double>(i) / static_cast<double>(k);
}

// Resumes each cut walk from its previous position; targets only grow with n.
void advance_cuts(BucketTable& t) {
  const double total = t.total_mass();
  std::size_t floor_rank = 1;
  for (std::size_t i = 1; i < t.k; ++i) {
    std::size_t& r = t.cut_ranks[i - 1];
    r = std::max(r, floor_rank);
    const double target = cut_target(total, i, t.k);
    while (r < t.n && t.cumulative[r] < target) ++r;
    floor_rank = r;
  }
}

// Turns cut ranks into k nonempty segments covering 1..n.
void finalize_boundaries(BucketTable& t) {
  t.boundaries.clear();
  if (t.n < t.k) return;
  t.boundaries.resize(t.k + 1);
  t.boundaries[0] = 1;
  std::size_t prev_end = 0;
  for (std::size_t i = 1; i < t.k; ++i) {
    const std::size_t end = std::min(std::max(t.cut_ranks[i - 1], prev_end + 1), t.n - t.k + i);
    t.boundaries[i] = end + 1;
    prev_end = end;
  }
  t.boundaries[t.k] = t.n + 1;
}

void check_shape(std::size_t k, double alpha) {
  if (k == 0) throw ContractViolation("bucket count must be positive");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ContractViolation("alpha must be finite and nonnegative");
}

}  // namespace

BucketTable empty_buckets(std::size_t k, double alpha) {
  check_shape(k, alpha);
  BucketTable t;
  t.k = k;
  t.alpha = alpha;
  t.cumulative.assign(1, 0.0);
  t.cut_ranks.assign(k - 1, 1);
  return t;
}

BucketTable build_buckets(std::size_t n, std::size_t k, double alpha) {
  check_shape(k, alpha);
  if (k > n) {
    throw ContractViolation("cannot stratify " + std::to_string(n) + " ranks into " + std::to_string(k) +
                            " buckets");
  }
  BucketTable t;
  t.n = n;
  t.k = k;
  t.alpha = alpha;
  t.cumulative.resize(n + 1);
  t.cumulative[0] = 0.0;
  for (std::size_t r = 1; r <= n; ++r) t.cumulative[r] = t.cumulative[r - 1] + rank_mass(r, alpha);
  t.cut_ranks.assign(k - 1, 1);
  advance_cuts(t);
  finalize_boundaries(t);
  return t;
}

BucketTable extend_buckets_incremental(BucketTable table, std::size_t new_n) {
  if (new_n < table.n) {
    throw ContractViolation("cannot shrink a bucket table from " + std::to_string(table.n) + " to " +
                            std::to_string(new_n));
  }
  if (new_n == table.n) return table;
  // No exact reserve here: push_back's geometric growth keeps repeated extensions amortized O(1).
  for (std::size_t r = table.n + 1; r <= new_n; ++r) {
    table.cumulative.push_back(table.cumulative[r - 1] + rank_mass(r, table.alpha));
  }
  table.n = new_n;
  advance_cuts(table);
  finalize_boundaries(table);
  return table;
}

std::size_t draw_rank_in_bucket(const BucketTable& table, std::size_t bucket, Rng& rng) {
  if (!table.ready() || bucket >= table.k) throw ContractViolation("bucket index out of range");
  const double k = static_cast<double>(table.k);
  const double u = table.total_mass() * (static_cast<double>(bucket) + rng.uniform01()) / k;
  // Inverse transform: the rank r with cumulative[r-1] <= u < cumulative[r].
  const auto first = table.cumulative.begin() + 1;
  const auto it = std::upper_bound(first, table.cumulative.end(), u);
  return std::min(table.n, static_cast<std::size_t>(it - table.cumulative.begin()));
}

}  // namespace hindsight
