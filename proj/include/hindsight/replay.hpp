#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "hindsight/env.hpp"
#include "hindsight/rng.hpp"
#include "hindsight/sampler.hpp"

namespace hindsight {

// A stored transition paired with the goal it is learned against.
struct RelabeledTransition {
  Transition base;
  Goal goal;
  double reward = 0.0;
  bool is_alternate = false;
};

RelabeledTransition relabel(const Transition& base, Goal goal, RewardMode mode);

enum class Strategy { uniform_her, two_queues, single_queue };

// How many alternate goals a transition at step t receives at storage time.
//   uniform_fixed:          round(replay_k), drawn with replacement from the future
//   non_uniform:            round(replay_k * (1 - t/T)), capped, without replacement
//   non_uniform_ascending:  round(replay_k * t/T), capped, without replacement
enum class GoalCountMode { uniform_fixed, non_uniform, non_uniform_ascending };

enum class TdMode { max_action, trajectory_action };

struct HindsightConfig {
  double replay_k = 4.0;
  Strategy strategy = Strategy::single_queue;
  GoalCountMode goal_count_mode = GoalCountMode::non_uniform;
  RewardMode reward_mode = RewardMode::plus_one_zero;
  TdMode td_mode = TdMode::max_action;
};

struct AnnealSchedule {
  enum class Kind { constant, linear, inverse_time };
  Kind kind = Kind::constant;
  double start = 0.0;
  double end = 0.0;
  long total_steps = 1;

  static AnnealSchedule constant(double value) { return {Kind::constant, value, value, 1}; }
  static AnnealSchedule linear(double start, double end, long steps) { return {Kind::linear, start, end, steps}; }
  static AnnealSchedule inverse_time(double start, double end, long steps) {
    return {Kind::inverse_time, start, end, steps};
  }
};

// Steps past total_steps (or negative) clamp to the end value.
double anneal(const AnnealSchedule& schedule, long step);

double round_half_up(double x);

// Alternate-goal count for step t of an episode with T states, capped at T - t.
std::size_t num_alternate_goals(int t, int T, double replay_k,
                                GoalCountMode mode = GoalCountMode::non_uniform);

// (1 / (N * p))^beta. Throws for p outside (0, 1].
double importance_weight(double probability, std::size_t buffer_size, double beta);

// Divides every weight by the batch maximum.
void normalize_weights(std::span<double> weights);

double actual_alternate_ratio(std::size_t actual, std::size_t alternate);
double actual_alternate_ratio(std::span<const RelabeledTransition> batch);

// FIFO transition store with learn-time `future` relabeling.
class UniformBuffer {
public:
  explicit UniformBuffer(std::size_t capacity);

  // Stores the episode verbatim; relabeling happens when sampling.
  void store_episode(const Trajectory& trajectory);

  // Uniform draws with replacement; floor(batch * k / (1 + k)) of them, chosen
  // uniformly, get the achieved goal of a uniformly drawn future state.
  std::vector<RelabeledTransition> sample_her(std::size_t batch, double replay_k, Rng& rng,
                                              RewardMode mode = RewardMode::plus_one_zero) const;

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return slots_.size(); }
  const Transition& at(std::size_t i) const;

private:
  struct Stored {
    Transition transition;
    std::shared_ptr<const std::vector<Goal>> episode_goals;  // achieved goal of each step
  };

  std::vector<Stored> slots_;
  std::size_t next_ = 0;
  std::size_t size_ = 0;
};

// Sampled entry from a prioritized queue.
struct QueueSample {
  RelabeledTransition item;
  Handle handle = 0;
  std::size_t rank = 0;
  double probability = 0.0;  // relative to its own queue
  std::size_t queue_size = 0;
  int queue = 0;  // 0 = primary/actual, 1 = alternates
};

// Rank-based priority queue over relabeled transitions with cached bucket tables.
class PrioritizedQueue {
public:
  static constexpr std::uint64_t kRebalanceInterval = 10000;

  explicit PrioritizedQueue(std::size_t capacity, double alpha = 1.0,
                            std::uint64_t rebalance_interval = kRebalanceInterval);

  Handle push(RelabeledTransition item, double priority);
  void update_priority(Handle handle, double priority);
  bool contains(Handle handle) const { return heap_.contains(handle); }
  void rebalance() { heap_.rebalance(); }

  // Stratified rank-based draw of `count` entries, one per equal-mass slice.
  std::vector<QueueSample> sample(std::size_t count, Rng& rng, int tag = 0);

  std::size_t size() const { return heap_.size(); }
  double alpha() const { return alpha_; }
  const PriorityHeap<RelabeledTransition>& heap() const { return heap_; }

private:
  const BucketTable& table_for(std::size_t k);

  PriorityHeap<RelabeledTransition> heap_;
  double alpha_;
  std::uint64_t rebalance_interval_;
  std::map<std::size_t, BucketTable> tables_;
};

// Queue pair for storage-time hindsight relabeling. single_queue uses `primary` only.
struct HindsightQueues {
  HindsightQueues(Strategy strategy, std::size_t capacity, double alpha = 1.0)
      : strategy(strategy), primary(capacity, alpha), alternates(capacity, alpha) {}

  Strategy strategy;
  PrioritizedQueue primary;
  PrioritizedQueue alternates;

  std::size_t total_size() const { return primary.size() + alternates.size(); }
  void rebalance() {
    primary.rebalance();
    alternates.rebalance();
  }
};

using TdErrorFn = std::function<double(const RelabeledTransition&)>;

// Relabels every transition with its actual goal plus alternates drawn from its own
// future, and pushes each copy with priority |td(copy)|.
void store_episode_prioritized(HindsightQueues& queues, const Trajectory& trajectory, const TdErrorFn& td,
                               const HindsightConfig& config, Rng& rng);

// Number of draws taken from the actual-goal queue: max(1, floor(batch / (1 + k))).
std::size_t two_queue_actual_share(std::size_t batch, double replay_k);

std::vector<QueueSample> sample_two_queues(PrioritizedQueue& actual, PrioritizedQueue& alternates,
                                           std::size_t batch, double replay_k, Rng& rng);

std::vector<QueueSample> sample_single_queue(PrioritizedQueue& queue, std::size_t batch, Rng& rng);

}  // namespace hindsight
