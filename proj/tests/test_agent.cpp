#include <gtest/gtest.h>

#include <bit>
#include <filesystem>
#include <fstream>

#include "hindsight/agent.hpp"

using namespace hindsight;

namespace {

// Transition 0b00 -> 0b01 via action 0 on bit-flip n=2.
Transition flip_first(Goal desired) {
  return Transition{State{0}, 0, State{1}, Goal{1}, desired, 1, 2, false, std::nullopt};
}

WeightedTransition item(const Transition& tr, Goal g, double w = 1.0) {
  return {relabel(tr, g, RewardMode::plus_one_zero), w};
}

}  // namespace

TEST(TdError, ZeroTableGivesReward) {
  const TabularQ q(4, 4, 2);
  EXPECT_DOUBLE_EQ(td_error(q, relabel(flip_first(Goal{1}), Goal{1}, RewardMode::plus_one_zero), 0.9, TdMode::max_action), 1.0);
  EXPECT_DOUBLE_EQ(td_error(q, relabel(flip_first(Goal{3}), Goal{3}, RewardMode::plus_one_zero), 0.9, TdMode::max_action), 0.0);
}

TEST(TdError, DirectSubstitution) {
  TabularQ q(4, 4, 2);
  q.set(State{0}, Goal{3}, 0, 0.2);
  q.set(State{1}, Goal{3}, 0, 0.1);
  q.set(State{1}, Goal{3}, 1, 0.5);
  const auto rt = relabel(flip_first(Goal{3}), Goal{3}, RewardMode::plus_one_zero);
  EXPECT_NEAR(td_error(q, rt, 0.9, TdMode::max_action), 0.25, 1e-15);
}

TEST(TdError, TerminalIgnoresBootstrap) {
  TabularQ q(4, 4, 2);
  q.set(State{0}, Goal{1}, 0, 0.3);
  q.set(State{1}, Goal{1}, 0, 7.0);
  q.set(State{1}, Goal{1}, 1, 9.0);
  const auto rt = relabel(flip_first(Goal{1}), Goal{1}, RewardMode::plus_one_zero);
  EXPECT_NEAR(td_error(q, rt, 0.9, TdMode::max_action), 0.7, 1e-15);
  EXPECT_NEAR(td_error(q, rt, 0.9, TdMode::trajectory_action), 0.7, 1e-15);
}

TEST(TdError, TrajectoryActionBootstrap) {
  TabularQ q(4, 4, 2);
  q.set(State{1}, Goal{3}, 0, 0.1);
  q.set(State{1}, Goal{3}, 1, 0.5);
  auto tr = flip_first(Goal{3});
  tr.next_action = 0;
  const auto rt = relabel(tr, Goal{3}, RewardMode::plus_one_zero);
  EXPECT_NEAR(td_error(q, rt, 1.0, TdMode::trajectory_action), 0.1, 1e-15);
  tr.next_action.reset();  // last transition: nothing to bootstrap from
  EXPECT_DOUBLE_EQ(td_error(q, relabel(tr, Goal{3}, RewardMode::plus_one_zero), 1.0, TdMode::trajectory_action), 0.0);
}

TEST(EpsilonGreedy, TieBreaksAndExploration) {
  TabularQ q(2, 2, 4);
  Rng rng(1);
  EXPECT_EQ(epsilon_greedy(q, State{0}, Goal{1}, 0.0, rng), 0u);
  const double vals[] = {0.1, 0.9, 0.9, 0.2};
  for (Action a = 0; a < 4; ++a) q.set(State{0}, Goal{1}, a, vals[a]);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(epsilon_greedy(q, State{0}, Goal{1}, 0.0, rng), 1u);

  std::array<int, 4> hist{};
  for (int i = 0; i < 40000; ++i) ++hist[epsilon_greedy(q, State{0}, Goal{1}, 1.0, rng)];
  for (const int h : hist) EXPECT_NEAR(h / 40000.0, 0.25, 0.01);
}

TEST(Update, SingleItemSteps) {
  AgentConfig cfg;
  cfg.learning_rate = 0.5;
  {
    TabularQ q(4, 4, 2);
    const std::vector<WeightedTransition> batch{item(flip_first(Goal{1}), Goal{1})};
    const auto after = update(q, batch, cfg);
    EXPECT_DOUBLE_EQ(q.value(State{0}, Goal{1}, 0), 0.5);
    ASSERT_EQ(after.size(), 1u);
    EXPECT_DOUBLE_EQ(after[0], 0.5);
  }
  {
    TabularQ q(4, 4, 2);
    const std::vector<WeightedTransition> batch{item(flip_first(Goal{1}), Goal{1}, 0.25)};
    update(q, batch, cfg);
    EXPECT_DOUBLE_EQ(q.value(State{0}, Goal{1}, 0), 0.125);
  }
}

TEST(Update, TouchesOneEntryPerItem) {
  TabularQ q(4, 4, 2);
  AgentConfig cfg;
  const std::vector<WeightedTransition> batch{item(flip_first(Goal{1}), Goal{1})};
  update(q, batch, cfg);
  std::size_t nonzero = 0;
  for (const double v : q.raw()) nonzero += v != 0.0;
  EXPECT_EQ(nonzero, 1u);
}

TEST(Update, ItemsApplySequentially) {
  // The second copy sees the first increment: 0.5, then 0.5 + 0.5 * 0.5.
  TabularQ q(4, 4, 2);
  AgentConfig cfg;
  const auto it = item(flip_first(Goal{1}), Goal{1});
  const std::vector<WeightedTransition> batch{it, it};
  update(q, batch, cfg);
  EXPECT_DOUBLE_EQ(q.value(State{0}, Goal{1}, 0), 0.75);
}

TEST(Update, ConvergesToOneStepFixedPoint) {
  TabularQ q(4, 4, 2);
  AgentConfig cfg;
  cfg.learning_rate = 0.3;
  const std::vector<WeightedTransition> batch{item(flip_first(Goal{1}), Goal{1})};
  for (int i = 0; i < 200; ++i) update(q, batch, cfg);
  EXPECT_NEAR(q.value(State{0}, Goal{1}, 0), 1.0, 1e-12);
}

TEST(Evaluate, HammingOraclePolicySucceeds) {
  // A table whose greedy action flips the lowest mismatched bit.
  const auto env = Environment::bit_flip(4, 4);
  TabularQ q(env);
  for (std::uint32_t s = 0; s < 16; ++s) {
    for (std::uint32_t g = 0; g < 16; ++g) {
      if (s != g) q.set(State{s}, Goal{g}, static_cast<Action>(std::countr_zero(s ^ g)), 1.0);
    }
  }
  Rng rng(2);
  EXPECT_DOUBLE_EQ(evaluate(env, q, 300, rng), 1.0);
  EXPECT_THROW(evaluate(env, q, 0, rng), ContractViolation);
}

TEST(Evaluate, ZeroTableOnGridIsPoor) {
  const auto env = Environment::grid(8, 16);
  const TabularQ q(env);
  Rng rng(3);
  EXPECT_LT(evaluate(env, q, 500, rng), 0.2);
}

// Small HER loop on bit-flip n=4 with learn-time relabeling.
TEST(HerTraining, GreedyPolicyMatchesHammingOracle) {
  const auto env = Environment::bit_flip(4, 4);
  TabularQ q(env);
  UniformBuffer buffer(100000);
  AgentConfig cfg;
  cfg.learning_rate = 0.5;
  Rng rng(4);
  const double upper = 1.0 / (1.0 - cfg.gamma);
  for (int epoch = 0; epoch < 30; ++epoch) {
    for (int e = 0; e < 20; ++e) {
      const auto [start, goal] = env.reset(rng);
      buffer.store_episode(rollout(env, start, goal, [&](State s, Goal g, int) {
        return epsilon_greedy(q, s, g, 0.3, rng);
      }));
    }
    for (int b = 0; b < 20; ++b) {
      std::vector<WeightedTransition> batch;
      for (auto& rt : buffer.sample_her(64, 4.0, rng)) batch.push_back({rt, 1.0});
      update(q, batch, cfg);
    }
    for (const double v : q.raw()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, upper);
    }
  }
  std::size_t optimal = 0, pairs = 0;
  for (std::uint32_t s = 0; s < 16; ++s) {
    for (std::uint32_t g = 0; g < 16; ++g) {
      if (s == g) continue;
      ++pairs;
      // Every mismatched bit is an optimal flip.
      optimal += ((s ^ g) >> q.greedy_action(State{s}, Goal{g})) & 1u;
    }
  }
  EXPECT_GE(static_cast<double>(optimal) / static_cast<double>(pairs), 0.95);
}

TEST(TabularQ, RejectsBadIndices) {
  TabularQ q(4, 4, 2);
  EXPECT_THROW(q.value(State{4}, Goal{0}, 0), ContractViolation);
  EXPECT_THROW(q.value(State{0}, Goal{0}, 2), ContractViolation);
  EXPECT_THROW(TabularQ(4, 4, 0), ContractViolation);
}

TEST(DumpQTable, WritesEveryEntry) {
  TabularQ q(2, 2, 2);
  q.set(State{1}, Goal{0}, 1, 0.25);
  const auto path = std::filesystem::temp_directory_path() / "hindsight_qdump_test.csv";
  dump_q_table(q, path.string());
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 9u);
  EXPECT_EQ(lines[0], "state,goal,action,value");
  EXPECT_EQ(lines[6], "1,0,1,0.25");
  std::filesystem::remove(path);
}

TEST(Encoder, Layouts) {
  const auto bits = make_encoder(Environment::bit_flip(3, 3));
  ASSERT_EQ(bits.width, 6u);
  std::vector<double> x(6);
  bits.encode(State{0b101}, Goal{0b010}, x);
  EXPECT_EQ(x, (std::vector<double>{1, 0, 1, 0, 1, 0}));

  const auto env = Environment::grid(3, 6);
  const auto grid = make_encoder(env);
  ASSERT_EQ(grid.width, 12u);
  std::vector<double> y(12);
  grid.encode(env.cell(2, 1), env.cell(0, 2), y);
  EXPECT_EQ(y, (std::vector<double>{0, 0, 1, 0, 1, 0, 1, 0, 0, 0, 0, 1}));
}

TEST(MlpQ, FitsTerminalTargets) {
  const auto env = Environment::bit_flip(2, 2);
  MlpQ q(make_encoder(env), env.num_actions(), 32, Rng(5));
  AgentConfig cfg;
  cfg.learning_rate = 0.01;
  // Every one-step success: flipping bit a of s reaches g = s ^ (1 << a).
  std::vector<WeightedTransition> batch;
  for (std::uint32_t s = 0; s < 4; ++s) {
    for (Action a = 0; a < 2; ++a) {
      const State n{s ^ (1u << a)};
      batch.push_back({relabel(Transition{State{s}, a, n, n, n, 1, 2, true, std::nullopt}, n, RewardMode::plus_one_zero), 1.0});
    }
  }
  for (int i = 0; i < 500; ++i) update(q, batch, cfg);
  for (const auto& w : batch) {
    EXPECT_NEAR(q.value(w.transition.base.state, w.transition.goal, w.transition.base.action), 1.0, 0.05);
  }
}

TEST(MlpQ, DeterministicGivenSeedAndRejectsBadShapes) {
  const auto env = Environment::bit_flip(3, 3);
  const MlpQ a(make_encoder(env), 3, 16, Rng(9));
  const MlpQ b(make_encoder(env), 3, 16, Rng(9));
  for (Action act = 0; act < 3; ++act) EXPECT_EQ(a.value(State{5}, Goal{2}, act), b.value(State{5}, Goal{2}, act));
  EXPECT_THROW(MlpQ(make_encoder(env), 0, 16, Rng(1)), ContractViolation);
  EXPECT_THROW(MlpQ(make_encoder(env), 3, 0, Rng(1)), ContractViolation);
}
