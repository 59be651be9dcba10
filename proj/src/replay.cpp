#include "hindsight/replay.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hindsight {

RelabeledTransition relabel(const Transition& base, Goal goal, RewardMode mode) {
  return RelabeledTransition{base, goal, reward(base.achieved_goal, goal, mode), goal != base.desired_goal};
}

double anneal(const AnnealSchedule& s, long step) {
  if (s.kind == AnnealSchedule::Kind::constant) return s.start;
  if (step < 0 || step >= s.total_steps) return s.end;
  const double frac = static_cast<double>(step) / static_cast<double>(s.total_steps);
  if (s.kind == AnnealSchedule::Kind::linear) return s.start + (s.end - s.start) * frac;
  // start / (1 + c * step) with value(total_steps) == end.
  if (s.end == 0.0) throw ContractViolation("inverse_time schedule needs a nonzero end value");
  const double c = (s.start / s.end - 1.0) / static_cast<double>(s.total_steps);
  return s.start / (1.0 + c * static_cast<double>(step));
}

double round_half_up(double x) { return std::floor(x + 0.5); }

std::size_t num_alternate_goals(int t, int T, double replay_k, GoalCountMode mode) {
  if (t < 1 || t > T - 1) {
    throw ContractViolation("step " + std::to_string(t) + " outside [1, " + std::to_string(T - 1) + "]");
  }
  if (replay_k < 0.0) throw ContractViolation("replay_k must be nonnegative");
  const auto future = static_cast<double>(T - t);
  double raw = 0.0;
  switch (mode) {
    case GoalCountMode::uniform_fixed:
      return static_cast<std::size_t>(round_half_up(replay_k));
    case GoalCountMode::non_uniform:
      raw = replay_k * future / static_cast<double>(T);
      break;
    case GoalCountMode::non_uniform_ascending:
      raw = replay_k * static_cast<double>(t) / static_cast<double>(T);
      break;
  }
  return static_cast<std::size_t>(std::min(round_half_up(raw), future));
}

double importance_weight(double probability, std::size_t buffer_size, double beta) {
  if (!(probability > 0.0) || probability > 1.0) {
    throw ContractViolation("sampling probability must lie in (0, 1]");
  }
  if (buffer_size == 0) throw ContractViolation("buffer size must be positive");
  return std::pow(1.0 / (static_cast<double>(buffer_size) * probability), beta);
}

void normalize_weights(std::span<double> weights) {
  if (weights.empty()) return;
  const double top = *std::max_element(weights.begin(), weights.end());
  if (top <= 0.0) return;
  for (double& w : weights) w /= top;
}

double actual_alternate_ratio(std::size_t actual, std::size_t alternate) {
  return static_cast<double>(actual) / static_cast<double>(std::max<std::size_t>(1, alternate));
}

double actual_alternate_ratio(std::span<const RelabeledTransition> batch) {
  const auto alt = static_cast<std::size_t>(
      std::count_if(batch.begin(), batch.end(), [](const auto& rt) { return rt.is_alternate; }));
  return actual_alternate_ratio(batch.size() - alt, alt);
}

// ---------------------------------------------------------------------------

UniformBuffer::UniformBuffer(std::size_t capacity) {
  if (capacity == 0) throw ContractViolation("buffer capacity must be positive");
  slots_.resize(capacity);
}

void UniformBuffer::store_episode(const Trajectory& trajectory) {
  auto goals = std::make_shared<std::vector<Goal>>();
  goals->reserve(trajectory.transitions.size());
  for (const auto& tr : trajectory.transitions) goals->push_back(tr.achieved_goal);
  std::shared_ptr<const std::vector<Goal>> shared = std::move(goals);
  for (const auto& tr : trajectory.transitions) {
    slots_[next_] = Stored{tr, shared};
    next_ = (next_ + 1) % slots_.size();
    size_ = std::min(size_ + 1, slots_.size());
  }
}

const Transition& UniformBuffer::at(std::size_t i) const {
  if (i >= size_) throw ContractViolation("buffer index out of range");
  // Oldest first.
  const std::size_t start = size_ < slots_.size() ? 0 : next_;
  return slots_[(start + i) % slots_.size()].transition;
}

std::vector<RelabeledTransition> UniformBuffer::sample_her(std::size_t batch, double replay_k, Rng& rng,
                                                           RewardMode mode) const {
  if (size_ == 0) throw ContractViolation("cannot sample from an empty buffer");
  if (replay_k < 0.0) throw ContractViolation("replay_k must be nonnegative");

  std::vector<std::size_t> picks(batch);
  for (auto& p : picks) p = rng.uniform_int(size_);

  const double alternate = replay_k / (1.0 + replay_k);
  const auto n_relabel = static_cast<std::size_t>(std::floor(alternate * static_cast<double>(batch)));

  // Partial Fisher-Yates: the first n_relabel positions form a uniform subset.
  std::vector<std::size_t> order(batch);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < n_relabel; ++i) {
    const std::size_t j = i + rng.uniform_int(batch - i);
    std::swap(order[i], order[j]);
  }
  std::vector<bool> relabel_here(batch, false);
  for (std::size_t i = 0; i < n_relabel; ++i) relabel_here[order[i]] = true;

  std::vector<RelabeledTransition> out;
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const Stored& s = slots_[picks[i]];
    const Transition& tr = s.transition;
    Goal goal = tr.desired_goal;
    // Future states s_{t+1}..s_T are the achieved goals of steps t..T-1.
    const std::size_t first = static_cast<std::size_t>(tr.t - 1);
    const std::size_t n_future = s.episode_goals->size() - first;
    if (relabel_here[i] && n_future > 0) goal = (*s.episode_goals)[first + rng.uniform_int(n_future)];
    out.push_back(relabel(tr, goal, mode));
  }
  return out;
}

// ---------------------------------------------------------------------------

PrioritizedQueue::PrioritizedQueue(std::size_t capacity, double alpha, std::uint64_t rebalance_interval)
    : heap_(capacity), alpha_(alpha), rebalance_interval_(rebalance_interval) {}

Handle PrioritizedQueue::push(RelabeledTransition item, double priority) {
  const Handle h = heap_.push(std::move(item), priority);
  if (rebalance_interval_ > 0 && heap_.push_count() % rebalance_interval_ == 0) heap_.rebalance();
  return h;
}

void PrioritizedQueue::update_priority(Handle handle, double priority) { heap_.update_priority(handle, priority); }

const BucketTable& PrioritizedQueue::table_for(std::size_t k) {
  auto it = tables_.find(k);
  if (it == tables_.end()) it = tables_.emplace(k, empty_buckets(k, alpha_)).first;
  BucketTable& table = it->second;
  if (table.n > heap_.size()) {
    table = build_buckets(heap_.size(), k, alpha_);
  } else if (table.n < heap_.size()) {
    table = extend_buckets_incremental(std::move(table), heap_.size());
  }
  return table;
}

std::vector<QueueSample> PrioritizedQueue::sample(std::size_t count, Rng& rng, int tag) {
  std::vector<QueueSample> out;
  if (count == 0) return out;
  if (count > heap_.size()) {
    throw ContractViolation("queue holds " + std::to_string(heap_.size()) + " entries, " + std::to_string(count) +
                            " requested");
  }
  const auto draws = sample_stratified(heap_, table_for(count), rng);
  out.reserve(draws.size());
  for (const auto& d : draws) out.push_back({d.item, d.handle, d.rank, d.probability, heap_.size(), tag});
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Distinct achieved goals of s_{t+1}..s_T, excluding the episode's own goal (that
// copy is already stored as the actual-goal transition).
std::vector<Goal> future_candidates(const Trajectory& traj, std::size_t step_index) {
  std::vector<Goal> out;
  for (std::size_t j = step_index; j < traj.transitions.size(); ++j) {
    const Goal g = traj.transitions[j].achieved_goal;
    if (g == traj.desired_goal) continue;
    if (std::find(out.begin(), out.end(), g) == out.end()) out.push_back(g);
  }
  return out;
}

}  // namespace

void store_episode_prioritized(HindsightQueues& queues, const Trajectory& trajectory, const TdErrorFn& td,
                               const HindsightConfig& config, Rng& rng) {
  const bool split = config.strategy == Strategy::two_queues;
  PrioritizedQueue& alt_queue = split ? queues.alternates : queues.primary;
  const auto push = [&](PrioritizedQueue& q, RelabeledTransition rt) {
    const double priority = std::abs(td(rt));
    q.push(std::move(rt), priority);
  };

  for (std::size_t i = 0; i < trajectory.transitions.size(); ++i) {
    const Transition& tr = trajectory.transitions[i];
    push(queues.primary, relabel(tr, tr.desired_goal, config.reward_mode));

    std::vector<Goal> candidates = future_candidates(trajectory, i);
    if (candidates.empty()) continue;
    const std::size_t wanted = num_alternate_goals(tr.t, tr.T, config.replay_k, config.goal_count_mode);

    if (config.goal_count_mode == GoalCountMode::uniform_fixed) {
      for (std::size_t c = 0; c < wanted; ++c) {
        const Goal g = candidates[rng.uniform_int(candidates.size())];
        push(alt_queue, relabel(tr, g, config.reward_mode));
      }
      continue;
    }
    const std::size_t count = std::min(wanted, candidates.size());
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t j = c + rng.uniform_int(candidates.size() - c);
      std::swap(candidates[c], candidates[j]);
      push(alt_queue, relabel(tr, candidates[c], config.reward_mode));
    }
  }
}

std::size_t two_queue_actual_share(std::size_t batch, double replay_k) {
  const auto share = static_cast<std::size_t>(std::floor(static_cast<double>(batch) / (1.0 + replay_k)));
  return std::min(batch, std::max<std::size_t>(1, share));
}

std::vector<QueueSample> sample_two_queues(PrioritizedQueue& actual, PrioritizedQueue& alternates,
                                           std::size_t batch, double replay_k, Rng& rng) {
  if (batch == 0) throw ContractViolation("batch must be positive");
  if (actual.size() + alternates.size() < batch) {
    throw ContractViolation("queues hold " + std::to_string(actual.size() + alternates.size()) +
                            " entries, batch needs " + std::to_string(batch));
  }
  std::size_t n_actual = two_queue_actual_share(batch, replay_k);
  std::size_t n_alt = batch - n_actual;
  // Truncate a share the queue cannot cover and move the remainder to the other queue.
  if (n_actual > actual.size()) {
    n_alt += n_actual - actual.size();
    n_actual = actual.size();
  }
  if (n_alt > alternates.size()) {
    n_actual += n_alt - alternates.size();
    n_alt = alternates.size();
  }
  auto out = actual.sample(n_actual, rng, 0);
  auto rest = alternates.sample(n_alt, rng, 1);
  out.insert(out.end(), std::make_move_iterator(rest.begin()), std::make_move_iterator(rest.end()));
  return out;
}

std::vector<QueueSample> sample_single_queue(PrioritizedQueue& queue, std::size_t batch, Rng& rng) {
  if (queue.size() < batch) {
    throw ContractViolation("queue holds " + std::to_string(queue.size()) + " entries, batch needs " +
                            std::to_string(batch));
  }
  return queue.sample(batch, rng, 0);
}

}  // namespace hindsight
