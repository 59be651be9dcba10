#include <chrono>
#include <stdexcept>

#include "hindsight/harness.hpp"
#include "hindsight/sampler.hpp"

namespace hindsight {

double BenchReport::speedup() const {
  if (incremental_ns <= 0) return 0.0;
  return static_cast<double>(scratch_ns) / static_cast<double>(incremental_ns);
}

BenchReport bench_sampler(std::size_t max_size, std::size_t batch_size, std::size_t growth_step, double alpha) {
  if (max_size == 0 || batch_size == 0 || growth_step == 0) throw std::invalid_argument("bench sizes must be positive");
  using clock = std::chrono::steady_clock;
  const auto elapsed = [](clock::time_point from) {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - from).count();
  };

  BenchReport report;
  // The heap only grows here; it keeps the measured table sizes honest to real usage.
  PriorityHeap<std::size_t> heap(max_size);
  Rng rng(0x5eed, 0);
  BucketTable incremental = empty_buckets(batch_size, alpha);

  std::size_t size = 0;
  while (size < max_size) {
    const std::size_t next = std::min(max_size, size + growth_step);
    for (; size < next; ++size) heap.push(size, rng.uniform01());

    auto t0 = clock::now();
    incremental = extend_buckets_incremental(std::move(incremental), heap.size());
    const auto inc_ns = elapsed(t0);
    report.incremental_ns += inc_ns;
    report.rows.push_back({heap.size(), "incremental", inc_ns});

    // Tables with fewer ranks than buckets are not built from scratch (k > n is a contract error).
    if (heap.size() >= batch_size) {
      t0 = clock::now();
      const BucketTable scratch = build_buckets(heap.size(), batch_size, alpha);
      const auto scratch_ns = elapsed(t0);
      report.scratch_ns += scratch_ns;
      report.rows.push_back({heap.size(), "scratch", scratch_ns});
      ++report.tables_compared;
      if (!same_boundaries(scratch, incremental)) report.identical = false;
    }
  }
  return report;
}

std::string bench_csv(const BenchReport& report) {
  std::string out = "structure_size,build_mode,wall_time_ns\n";
  for (const auto& r : report.rows) {
    out += std::to_string(r.structure_size) + ',' + r.build_mode + ',' + std::to_string(r.wall_time_ns) + '\n';
  }
  return out;
}

}  // namespace hindsight
