#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>

#include "hindsight/agent.hpp"
#include "hindsight/replay.hpp"

using namespace hindsight;

namespace {

// Bit-flip n=5 from 0, flipping bits 0..steps-1 toward an unreachable all-ones goal.
// Every achieved goal is distinct and differs from the desired goal.
Trajectory straight_episode(int steps) {
  const auto env = Environment::bit_flip(5, steps);
  return rollout(env, State{0}, Goal{0b11111}, [](State, Goal, int t) { return static_cast<Action>(t - 1); });
}

Trajectory successful_episode() {
  const auto env = Environment::bit_flip(3, 3);
  return rollout(env, State{0}, Goal{0b011}, [](State, Goal, int t) { return static_cast<Action>(t - 1); });
}

double chi_square(const std::vector<std::size_t>& counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  const double expected = total / static_cast<double>(counts.size());
  double x = 0.0;
  for (const auto c : counts) x += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  return x;
}

TdErrorFn zero_q_td(const TabularQ& q) {
  return [&q](const RelabeledTransition& rt) { return td_error(q, rt, 0.98, TdMode::max_action); };
}

}  // namespace

TEST(Relabel, RewardAndFlagFollowGoal) {
  const auto ep = straight_episode(4);
  for (const auto& tr : ep.transitions) {
    for (auto mode : {RewardMode::plus_one_zero, RewardMode::minus_one_zero}) {
      const auto own = relabel(tr, tr.achieved_goal, mode);
      EXPECT_TRUE(own.is_alternate);
      EXPECT_EQ(own.reward, reward(tr.achieved_goal, tr.achieved_goal, mode));
      const auto actual = relabel(tr, tr.desired_goal, mode);
      EXPECT_FALSE(actual.is_alternate);
      EXPECT_EQ(actual.reward, reward(tr.achieved_goal, tr.desired_goal, mode));
    }
    EXPECT_EQ(relabel(tr, tr.achieved_goal, RewardMode::plus_one_zero).reward, 1.0);
  }
}

TEST(Anneal, Examples) {
  EXPECT_DOUBLE_EQ(anneal(AnnealSchedule::linear(0.4, 1.0, 100), 100), 1.0);
  EXPECT_DOUBLE_EQ(anneal(AnnealSchedule::linear(8.0, 2.0, 100), 50), 5.0);
  for (const auto& s : {AnnealSchedule::constant(3.0), AnnealSchedule::linear(0.4, 1.0, 10),
                        AnnealSchedule::inverse_time(8.0, 2.0, 10)}) {
    EXPECT_DOUBLE_EQ(anneal(s, 0), s.start);
    EXPECT_DOUBLE_EQ(anneal(s, 10'000), s.end);
    EXPECT_DOUBLE_EQ(anneal(s, -3), s.end);
  }
  // 8 / (1 + c t) with c = 0.3 reaches 2 at t = 10.
  EXPECT_NEAR(anneal(AnnealSchedule::inverse_time(8.0, 2.0, 10), 5), 8.0 / 2.5, 1e-12);
}

TEST(NumAlternateGoals, Examples) {
  EXPECT_EQ(num_alternate_goals(1, 5, 4.0), 3u);
  EXPECT_EQ(num_alternate_goals(4, 5, 4.0), 1u);
  for (int t = 1; t < 5; ++t) EXPECT_EQ(num_alternate_goals(t, 5, 0.0), 0u);
  EXPECT_EQ(num_alternate_goals(1, 5, 4.0, GoalCountMode::uniform_fixed), 4u);
  EXPECT_EQ(num_alternate_goals(1, 5, 4.0, GoalCountMode::non_uniform_ascending), 1u);
  EXPECT_EQ(num_alternate_goals(4, 5, 20.0), 1u);  // capped by the single future state
  EXPECT_THROW(num_alternate_goals(0, 5, 4.0), ContractViolation);
  EXPECT_THROW(num_alternate_goals(5, 5, 4.0), ContractViolation);
}

TEST(NumAlternateGoals, ExactCountsEqualizePairMultiplicity) {
  for (int T : {2, 5, 17, 50}) {
    for (double k : {1.0, 4.0, 7.5}) {
      for (int t = 1; t < T; ++t) {
        const double exact = k * (1.0 - static_cast<double>(t) / T);
        EXPECT_NEAR(exact / (T - t), k / T, 1e-12);
      }
    }
  }
}

TEST(NumAlternateGoals, RoundedMultiplicityWithinFactorTwo) {
  // Restricted to T <= 2k, where every rounded count is at least one.
  for (int k = 4; k <= 25; ++k) {
    for (int T = 2; T <= std::min(50, 2 * k); ++T) {
      double lo = INFINITY, hi = 0.0;
      for (int t = 1; t < T; ++t) {
        const double m = static_cast<double>(num_alternate_goals(t, T, k)) / (T - t);
        lo = std::min(lo, m);
        hi = std::max(hi, m);
      }
      ASSERT_GT(lo, 0.0) << k << ' ' << T;
      EXPECT_LE(hi / lo, 2.0) << k << ' ' << T;
    }
  }
}

TEST(ImportanceWeight, Examples) {
  EXPECT_DOUBLE_EQ(importance_weight(0.25, 4, 0.7), 1.0);
  EXPECT_DOUBLE_EQ(importance_weight(0.48, 4, 0.0), 1.0);
  EXPECT_NEAR(importance_weight(0.48, 4, 1.0), 1.0 / 1.92, 1e-12);
  std::vector<double> w{importance_weight(0.48, 4, 1.0), importance_weight(0.12, 4, 1.0)};
  EXPECT_NEAR(w[1], 2.0833333333333, 1e-12);
  normalize_weights(w);
  EXPECT_NEAR(w[0], 0.25, 1e-12);
  EXPECT_DOUBLE_EQ(w[1], 1.0);
  EXPECT_THROW(importance_weight(0.0, 4, 1.0), ContractViolation);
  EXPECT_THROW(importance_weight(1.5, 4, 1.0), ContractViolation);
}

TEST(ImportanceWeight, UnbiasednessIdentity) {
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 1 + rng.uniform_int(512);
    const double alpha = rng.uniform(0.0, 2.0);
    double lhs = 0.0, mean = 0.0;
    for (std::size_t r = 1; r <= n; ++r) {
      const double x = rng.uniform(-5.0, 5.0);
      const double p = rank_probability(r, n, alpha);
      lhs += p * importance_weight(p, n, 1.0) * x;
      mean += x;
    }
    EXPECT_NEAR(lhs, mean / static_cast<double>(n), 1e-12);
  }
}

TEST(ActualAlternateRatio, Examples) {
  EXPECT_DOUBLE_EQ(actual_alternate_ratio(1, 4), 0.25);
  EXPECT_DOUBLE_EQ(actual_alternate_ratio(3, 0), 3.0);
  EXPECT_DOUBLE_EQ(actual_alternate_ratio(51, 205), 51.0 / 205.0);
  const auto ep = straight_episode(4);
  std::vector<RelabeledTransition> batch;
  batch.push_back(relabel(ep.transitions[0], ep.desired_goal, RewardMode::plus_one_zero));
  for (int i = 0; i < 4; ++i) batch.push_back(relabel(ep.transitions[0], ep.transitions[3].achieved_goal, RewardMode::plus_one_zero));
  EXPECT_DOUBLE_EQ(actual_alternate_ratio(batch), 0.25);
}

TEST(UniformBuffer, StoresTransitionsVerbatim) {
  UniformBuffer buf(100);
  buf.store_episode(straight_episode(4));
  EXPECT_EQ(buf.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(buf.at(i).t, static_cast<int>(i) + 1);
    EXPECT_EQ(buf.at(i).desired_goal, Goal{0b11111});
  }
}

TEST(UniformBuffer, FifoEviction) {
  UniformBuffer buf(10);
  for (int e = 0; e < 3; ++e) buf.store_episode(straight_episode(4));
  EXPECT_EQ(buf.size(), 10u);
  EXPECT_EQ(buf.at(0).t, 3);  // the first episode lost t = 1, 2
  EXPECT_EQ(buf.at(9).t, 4);
  EXPECT_THROW(buf.at(10), ContractViolation);
}

TEST(SampleHer, RelabelCountFollowsFloorRule) {
  UniformBuffer buf(100);
  buf.store_episode(straight_episode(4));
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto batch = buf.sample_her(256, 4.0, rng);
    ASSERT_EQ(batch.size(), 256u);
    const auto alt = std::count_if(batch.begin(), batch.end(), [](const auto& rt) { return rt.is_alternate; });
    EXPECT_EQ(alt, 204);
    for (const auto& rt : batch) EXPECT_EQ(rt.reward, reward(rt.base.achieved_goal, rt.goal));
  }
  const auto plain = buf.sample_her(64, 0.0, rng);
  EXPECT_TRUE(std::none_of(plain.begin(), plain.end(), [](const auto& rt) { return rt.is_alternate; }));
  EXPECT_THROW(UniformBuffer(4).sample_her(1, 4.0, rng), ContractViolation);
}

TEST(SampleHer, NextStateGoalGivesReward) {
  UniformBuffer buf(100);
  buf.store_episode(straight_episode(1));  // one transition, one future state
  Rng rng(6);
  for (const auto& rt : buf.sample_her(50, 4.0, rng)) {
    if (!rt.is_alternate) continue;
    EXPECT_EQ(rt.goal, rt.base.next_state);
    EXPECT_EQ(rt.reward, 1.0);
  }
}

TEST(SampleHer, FutureGoalsAreUniform) {
  UniformBuffer buf(100);
  buf.store_episode(straight_episode(4));
  Rng rng(7);
  // Index j of counts[t] is the future step whose achieved goal was chosen.
  std::map<int, std::vector<std::size_t>> counts{{1, std::vector<std::size_t>(4)}, {2, std::vector<std::size_t>(3)}};
  for (int rep = 0; rep < 100; ++rep) {
    for (const auto& rt : buf.sample_her(1000, 4.0, rng)) {
      if (!rt.is_alternate || rt.base.t > 2) continue;
      const int bits = std::popcount(rt.goal.code);  // achieved goal after step j has j bits
      ASSERT_GE(bits, rt.base.t);
      ++counts[rt.base.t][static_cast<std::size_t>(bits - rt.base.t)];
    }
  }
  // Chi-square critical values at p = 0.01 for 3 and 2 degrees of freedom.
  EXPECT_LT(chi_square(counts[1]), 11.345);
  EXPECT_LT(chi_square(counts[2]), 9.210);
  EXPECT_GT(std::accumulate(counts[1].begin(), counts[1].end(), std::size_t{0}), 10'000u);
}

TEST(StoreEpisodePrioritized, NonUniformCountsPerStep) {
  const TabularQ q(32, 32, 5);
  Rng rng(8);
  HindsightQueues queues(Strategy::two_queues, 1000);
  HindsightConfig cfg;
  cfg.strategy = Strategy::two_queues;
  store_episode_prioritized(queues, straight_episode(4), zero_q_td(q), cfg, rng);
  EXPECT_EQ(queues.primary.size(), 4u);
  EXPECT_EQ(queues.alternates.size(), 8u);
  std::map<int, int> per_t;
  for (const auto& e : queues.alternates.heap().entries()) {
    EXPECT_TRUE(e.item.is_alternate);
    ++per_t[e.item.base.t];
  }
  EXPECT_EQ(per_t, (std::map<int, int>{{1, 3}, {2, 2}, {3, 2}, {4, 1}}));
  for (const auto& e : queues.primary.heap().entries()) EXPECT_FALSE(e.item.is_alternate);
}

TEST(StoreEpisodePrioritized, AlternatesAreDistinctFutureGoals) {
  const TabularQ q(32, 32, 5);
  Rng rng(9);
  HindsightQueues queues(Strategy::single_queue, 1000);
  HindsightConfig cfg;
  cfg.replay_k = 8.0;
  const auto ep = straight_episode(4);
  store_episode_prioritized(queues, ep, zero_q_td(q), cfg, rng);
  std::map<int, std::vector<Goal>> goals;
  for (const auto& e : queues.primary.heap().entries()) {
    if (e.item.is_alternate) goals[e.item.base.t].push_back(e.item.goal);
  }
  for (auto& [t, gs] : goals) {
    std::sort(gs.begin(), gs.end());
    EXPECT_EQ(std::adjacent_find(gs.begin(), gs.end()), gs.end()) << t;
    EXPECT_LE(gs.size(), static_cast<std::size_t>(5 - t));
    for (const Goal g : gs) EXPECT_GE(std::popcount(g.code), t);
  }
}

TEST(StoreEpisodePrioritized, UniformFixedDrawsWithReplacement) {
  const TabularQ q(32, 32, 5);
  Rng rng(10);
  HindsightQueues queues(Strategy::single_queue, 1000);
  HindsightConfig cfg;
  cfg.goal_count_mode = GoalCountMode::uniform_fixed;
  store_episode_prioritized(queues, straight_episode(4), zero_q_td(q), cfg, rng);
  EXPECT_EQ(queues.primary.size(), 4u + 16u);
}

TEST(StoreEpisodePrioritized, PrioritiesAreAbsoluteTdUnderZeroQ) {
  const TabularQ q(8, 8, 3);
  Rng rng(11);
  HindsightQueues queues(Strategy::single_queue, 1000);
  store_episode_prioritized(queues, successful_episode(), zero_q_td(q), HindsightConfig{}, rng);
  for (const auto& e : queues.primary.heap().entries()) {
    EXPECT_EQ(e.priority, e.item.reward);  // delta = r when Q is zero
    EXPECT_EQ(e.item.reward, reward(e.item.base.achieved_goal, e.item.goal));
  }
  // The terminal success transition under its actual goal has priority 1.
  const auto it = std::find_if(queues.primary.heap().entries().begin(), queues.primary.heap().entries().end(),
                               [](const auto& e) { return e.item.base.done && !e.item.is_alternate; });
  ASSERT_NE(it, queues.primary.heap().entries().end());
  EXPECT_EQ(it->priority, 1.0);
}

TEST(TwoQueues, ShareExamples) {
  EXPECT_EQ(two_queue_actual_share(5, 4.0), 1u);
  EXPECT_EQ(two_queue_actual_share(256, 4.0), 51u);
  EXPECT_EQ(two_queue_actual_share(64, 0.0), 64u);
  EXPECT_EQ(two_queue_actual_share(3, 10.0), 1u);
}

TEST(TwoQueues, QuotaIndependentOfPriorities) {
  PrioritizedQueue actual(10000), alts(10000);
  Rng rng(12);
  const auto ep = straight_episode(4);
  for (int i = 0; i < 400; ++i) {
    actual.push(relabel(ep.transitions[i % 4], ep.desired_goal, RewardMode::plus_one_zero), rng.uniform01());
    alts.push(relabel(ep.transitions[i % 4], ep.transitions[3].achieved_goal, RewardMode::plus_one_zero),
              rng.uniform01() * 100.0);
  }
  for (std::size_t batch : {5u, 64u, 256u}) {
    for (int rep = 0; rep < 10; ++rep) {
      const auto s = sample_two_queues(actual, alts, batch, 4.0, rng);
      ASSERT_EQ(s.size(), batch);
      const auto from_actual = static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](const auto& x) { return x.queue == 0; }));
      EXPECT_EQ(from_actual, two_queue_actual_share(batch, 4.0));
      std::vector<RelabeledTransition> items;
      for (const auto& x : s) items.push_back(x.item);
      EXPECT_DOUBLE_EQ(actual_alternate_ratio(items),
                       actual_alternate_ratio(from_actual, batch - from_actual));
    }
  }
  const auto whole = sample_two_queues(actual, alts, 64, 0.0, rng);
  EXPECT_TRUE(std::all_of(whole.begin(), whole.end(), [](const auto& x) { return x.queue == 0; }));
}

TEST(TwoQueues, ShortQueueShareMovesToTheOther) {
  PrioritizedQueue actual(100), alts(100);
  const auto ep = straight_episode(4);
  for (int i = 0; i < 2; ++i) actual.push(relabel(ep.transitions[0], ep.desired_goal, RewardMode::plus_one_zero), 1.0);
  for (int i = 0; i < 50; ++i) alts.push(relabel(ep.transitions[0], ep.transitions[2].achieved_goal, RewardMode::plus_one_zero), 1.0);
  Rng rng(13);
  const auto s = sample_two_queues(actual, alts, 40, 1.0, rng);
  EXPECT_EQ(std::count_if(s.begin(), s.end(), [](const auto& x) { return x.queue == 0; }), 2);
  EXPECT_EQ(s.size(), 40u);
  EXPECT_THROW(sample_two_queues(actual, alts, 53, 1.0, rng), ContractViolation);
}

TEST(SingleQueue, ProbabilitiesAndErrors) {
  PrioritizedQueue q(100);
  const auto ep = straight_episode(4);
  for (int i = 0; i < 10; ++i) q.push(relabel(ep.transitions[0], ep.desired_goal, RewardMode::plus_one_zero), i);
  q.rebalance();
  Rng rng(14);
  for (const auto& s : sample_single_queue(q, 4, rng)) {
    EXPECT_NEAR(s.probability, rank_probability(s.rank, 10), 1e-15);
    EXPECT_EQ(s.queue_size, 10u);
  }
  EXPECT_THROW(sample_single_queue(q, 11, rng), ContractViolation);
}

TEST(SingleQueue, EqualPrioritiesGiveStoredComposition) {
  // With alpha = 0 every entry is equally likely, so the mix mirrors what was stored.
  const TabularQ q(32, 32, 5);
  Rng rng(15);
  HindsightQueues queues(Strategy::single_queue, 100000, 0.0);
  HindsightConfig cfg;
  cfg.goal_count_mode = GoalCountMode::uniform_fixed;
  for (int e = 0; e < 200; ++e) store_episode_prioritized(queues, straight_episode(4), zero_q_td(q), cfg, rng);
  queues.rebalance();
  std::size_t actual = 0, alt = 0;
  for (int rep = 0; rep < 500; ++rep) {
    for (const auto& s : sample_single_queue(queues.primary, 64, rng)) (s.item.is_alternate ? alt : actual)++;
  }
  EXPECT_NEAR(static_cast<double>(actual) / static_cast<double>(alt), 1.0 / 4.0, 0.01);
}

TEST(PrioritizedQueue, PeriodicRebalance) {
  PrioritizedQueue q(100, 1.0, 8);
  const auto ep = straight_episode(4);
  for (int i = 0; i < 8; ++i) q.push(relabel(ep.transitions[0], ep.desired_goal, RewardMode::plus_one_zero), i);
  for (std::size_t r = 1; r <= 8; ++r) EXPECT_EQ(q.heap().at_rank(r).priority, static_cast<double>(8 - r));
}

TEST(PrioritizedQueue, TablesFollowShrinkingAndGrowth) {
  PrioritizedQueue q(5);
  const auto ep = straight_episode(4);
  Rng rng(16);
  for (int i = 0; i < 12; ++i) {
    q.push(relabel(ep.transitions[0], ep.desired_goal, RewardMode::plus_one_zero), i % 7);
    if (q.size() >= 2) {
      const auto s = q.sample(2, rng);
      for (const auto& x : s) EXPECT_NEAR(x.probability, rank_probability(x.rank, q.size()), 1e-15);
    }
  }
}
