#pragma once

// Hindsight policy gradients for a tabular goal-conditioned softmax policy.
//
// A trajectory collected while pursuing g' is reused for every goal g in a support
// distribution p(g), weighted by the full-trajectory likelihood ratio
//   prod_t pi(a_t | s_t, g) / pi(a_t | s_t, g').
// Exact counterparts (performance, visitation, advantages, the ratio-weighted
// surrogate and its visitation gap) are computed by enumeration or dynamic
// programming over small environments and serve as oracles.

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "hindsight/env.hpp"
#include "hindsight/rng.hpp"

namespace hindsight {

// pi(a | s, g) = softmax over actions of logits theta[s, g, :].
class SoftmaxPolicy {
public:
  SoftmaxPolicy(std::size_t num_states, std::size_t num_goals, std::size_t num_actions);
  explicit SoftmaxPolicy(const Environment& env);

  std::size_t num_states() const { return states_; }
  std::size_t num_goals() const { return goals_; }
  std::size_t num_actions() const { return actions_; }
  std::size_t num_params() const { return theta_.size(); }

  std::span<double> theta() { return theta_; }
  std::span<const double> theta() const { return theta_; }

  std::size_t index(State s, Goal g, Action a) const;

  void probabilities(State s, Goal g, std::span<double> out) const;
  double probability(State s, Goal g, Action a) const;
  Action sample(State s, Goal g, Rng& rng) const;
  // Highest logit, lowest index on ties.
  Action greedy(State s, Goal g) const;

private:
  std::size_t states_;
  std::size_t goals_;
  std::size_t actions_;
  std::vector<double> theta_;
};

struct GoalDistribution {
  std::vector<Goal> goals;
  std::vector<double> probabilities;

  static GoalDistribution uniform(std::vector<Goal> goals);
  static GoalDistribution single(Goal g) { return {{g}, {1.0}}; }
  // Throws unless nonempty, nonnegative and summing to 1 within 1e-12.
  void validate() const;
};

// Goals against which a trajectory is evaluated: either its own pursued goal
// (p(g') = 1) or a fixed distribution shared by every trajectory.
class GoalSupport {
public:
  static GoalSupport own_goal() { return GoalSupport(std::nullopt); }
  static GoalSupport fixed(GoalDistribution dist);

  std::vector<std::pair<Goal, double>> for_goal(Goal pursued) const;
  bool is_own_goal() const { return !dist_; }

private:
  explicit GoalSupport(std::optional<GoalDistribution> dist) : dist_(std::move(dist)) {}
  std::optional<GoalDistribution> dist_;
};

struct WeightedTrajectory {
  Trajectory trajectory;
  double weight = 1.0;
};

// V(s || g) estimates, fitted as an exponential moving average of hindsight returns.
class ValueBaseline {
public:
  ValueBaseline(std::size_t num_states, std::size_t num_goals, double decay = 0.99);

  double value(State s, Goal g) const { return table_[index(s, g)]; }
  void set(State s, Goal g, double v) { table_[index(s, g)] = v; }
  // Folds the returns from every visited state under every support goal into the averages.
  void fit(std::span<const WeightedTrajectory> batch, const GoalSupport& support,
           RewardMode mode = RewardMode::plus_one_zero);

private:
  std::size_t index(State s, Goal g) const;
  std::size_t goals_;
  double decay_;
  std::vector<double> table_;
};

enum class HpgMode { plain, baseline };

double importance_ratio(const Trajectory& traj, Goal g, Goal g_prime, const SoftmaxPolicy& policy);

// sum_i w_i * sum_g p(g) * ratio_i(g) * sum_t grad log pi(a_t | s_t, g) * sum_{t' > t} (r(s_t', g) - b),
// with b = V(s_t' || g) in baseline mode. Monte-Carlo batches use w_i = 1/B.
std::vector<double> hpg_estimate(std::span<const WeightedTrajectory> batch, const GoalSupport& support,
                                 const SoftmaxPolicy& policy, HpgMode mode = HpgMode::plain,
                                 const ValueBaseline* baseline = nullptr,
                                 RewardMode reward_mode = RewardMode::plus_one_zero);

// Per-trajectory terms of hpg_estimate (unweighted), for variance measurements.
std::vector<std::vector<double>> hpg_contributions(std::span<const WeightedTrajectory> batch,
                                                   const GoalSupport& support, const SoftmaxPolicy& policy,
                                                   HpgMode mode = HpgMode::plain,
                                                   const ValueBaseline* baseline = nullptr,
                                                   RewardMode reward_mode = RewardMode::plus_one_zero);

inline constexpr double kEnumerationLimit = 1e7;

// Every trajectory from the reset distribution (pursued goal ~ goals, start uniform
// over the other states), weighted by its probability under the policy.
std::vector<WeightedTrajectory> enumerate_trajectories(const Environment& env, const SoftmaxPolicy& policy,
                                                       const GoalDistribution& goals);

// E_{g ~ goals, tau | pi, g} sum_t gamma^(t-1) r_t by full enumeration.
double exact_performance(const Environment& env, const SoftmaxPolicy& policy, const GoalDistribution& goals,
                         int horizon, double gamma = 1.0);

// Central differences (f(theta + h e_i) - f(theta - h e_i)) / 2h for each coordinate.
template <typename F>
std::vector<double> finite_diff_grad(F&& f, std::span<const double> theta, double h) {
  if (!(h > 0.0)) throw ContractViolation("finite-difference step must be positive");
  std::vector<double> point(theta.begin(), theta.end());
  std::vector<double> grad(theta.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double keep = point[i];
    point[i] = keep + h;
    const double up = f(std::span<const double>(point));
    point[i] = keep - h;
    const double down = f(std::span<const double>(point));
    point[i] = keep;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// Finite-horizon values of the policy conditioned on goal g in the process that stops
// when g is reached (or at the horizon). Steps are 1-based, t = 1..horizon.
class ExactModel {
public:
  static ExactModel build(const Environment& env, const SoftmaxPolicy& policy, std::span<const Goal> goals,
                          double gamma = 1.0, RewardMode mode = RewardMode::plus_one_zero);

  double value(Goal g, int t, State s) const;
  double q_value(Goal g, int t, State s, Action a) const;
  double advantage(Goal g, int t, State s, Action a) const { return q_value(g, t, s, a) - value(g, t, s); }
  int horizon() const { return horizon_; }
  bool has_goal(Goal g) const;

private:
  std::size_t goal_slot(Goal g) const;
  std::size_t index(std::size_t slot, int t, State s, Action a) const;

  int horizon_ = 0;
  std::size_t states_ = 0;
  std::size_t actions_ = 0;
  std::vector<Goal> goals_;
  std::vector<double> q_;  // [goal slot][t][s][a]
  std::vector<double> v_;  // [goal slot][t][s] packed with stride actions_ (a = 0)
};

// rho_t(s): probability of acting from s at step t when following the policy
// conditioned on `conditioned` and stopping when `stop_goal` is reached, from `start`.
std::vector<std::vector<double>> visitation(const Environment& env, const SoftmaxPolicy& policy, Goal conditioned,
                                            Goal stop_goal, std::span<const double> start);

// Ratio-weighted advantage objective evaluated on trajectories collected by `behavior`:
//   sum_i w_i sum_t sum_g p(g) pi_theta(a_t | s_t, g) / pi_behavior(a_t | s_t, g') A_g(t, s_t, a_t).
// Fed the full enumeration under `behavior`, this is exact.
double surrogate_L(const SoftmaxPolicy& theta, const SoftmaxPolicy& behavior,
                   std::span<const WeightedTrajectory> batch, const GoalSupport& support,
                   const ExactModel& advantages);

// E_g[ E_{s ~ rho(pi', g'), a ~ pi_g} A^{pi'}_g - E_{s ~ rho(pi, g), a ~ pi_g} A^{pi'}_g ] over the
// reset distribution, computed exactly.
double surrogate_gap(const Environment& env, const SoftmaxPolicy& theta, const SoftmaxPolicy& theta_prime,
                     const GoalSupport& support, int horizon, double gamma = 1.0);

struct HpgTrainConfig {
  std::size_t batch_episodes = 16;
  double learning_rate = 1.0;
  std::size_t iterations = 500;
  HpgMode mode = HpgMode::plain;
  std::size_t eval_episodes = 100;
  double baseline_decay = 0.99;
  RewardMode reward_mode = RewardMode::plus_one_zero;
  // Caps each importance ratio when set; unset in all acceptance runs.
  std::optional<double> ratio_cap;
};

struct HpgIteration {
  std::size_t iteration = 0;
  double success_rate = 0.0;
  double grad_norm = 0.0;
  double est_variance = 0.0;
};

// Uniform over the distinct achieved goals of the batch plus every pursued goal.
GoalDistribution hindsight_goal_support(std::span<const WeightedTrajectory> batch);

double evaluate_policy(const Environment& env, const SoftmaxPolicy& policy, std::size_t episodes, Rng& rng);

std::vector<HpgIteration> train_hpg(const Environment& env, const HpgTrainConfig& config, Rng rng,
                                    SoftmaxPolicy* final_policy = nullptr);

}  // namespace hindsight
