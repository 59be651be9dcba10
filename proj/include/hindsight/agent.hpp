#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hindsight/env.hpp"
#include "hindsight/replay.hpp"
#include "hindsight/rng.hpp"

namespace hindsight {

struct AgentConfig {
  double gamma = 0.98;
  double epsilon = 0.2;
  double learning_rate = 0.5;
  TdMode td_mode = TdMode::max_action;
};

struct WeightedTransition {
  RelabeledTransition transition;
  double weight = 1.0;
};

inline constexpr std::size_t kMaxActions = 32;

// Goal-conditioned action-value function Q(s || g, a).
class QFunction {
public:
  virtual ~QFunction() = default;

  virtual std::size_t num_actions() const = 0;
  virtual double value(State s, Goal g, Action a) const = 0;

  // Writes Q(s || g, a) for every action into `out` (size num_actions()).
  virtual void action_values(State s, Goal g, std::span<double> out) const;

  // One learning step on a weighted batch.
  virtual void learn(std::span<const WeightedTransition> batch, const AgentConfig& config) = 0;

  double max_value(State s, Goal g) const;
  Action greedy_action(State s, Goal g) const;
};

// Dense table over (state, goal, action); never-updated entries read as 0.
class TabularQ final : public QFunction {
public:
  TabularQ(std::size_t num_states, std::size_t num_goals, std::size_t num_actions);
  explicit TabularQ(const Environment& env);

  std::size_t num_actions() const override { return actions_; }
  double value(State s, Goal g, Action a) const override { return table_[index(s, g, a)]; }
  void action_values(State s, Goal g, std::span<double> out) const override;

  // Items are applied in batch order: Q += lr * w * delta, delta taken just before each increment.
  void learn(std::span<const WeightedTransition> batch, const AgentConfig& config) override;

  void set(State s, Goal g, Action a, double v) { table_[index(s, g, a)] = v; }
  std::span<const double> raw() const { return table_; }
  std::size_t num_states() const { return states_; }
  std::size_t num_goals() const { return goals_; }

private:
  std::size_t index(State s, Goal g, Action a) const;

  std::size_t states_;
  std::size_t goals_;
  std::size_t actions_;
  std::vector<double> table_;
};

// Encodes (state, goal) as a dense input vector for a function approximator.
struct InputEncoder {
  std::size_t width = 0;
  std::function<void(State, Goal, std::span<double>)> encode;
};

// Bit-flip: 0/1 bits of state then goal. Grid: one-hot x, y of state then goal.
InputEncoder make_encoder(const Environment& env);

// One-hidden-layer ReLU network trained with Adam on the weighted squared TD error.
class MlpQ final : public QFunction {
public:
  MlpQ(InputEncoder encoder, std::size_t num_actions, std::size_t hidden, Rng rng);
  ~MlpQ() override;
  MlpQ(MlpQ&&) noexcept;
  MlpQ& operator=(MlpQ&&) noexcept;

  std::size_t num_actions() const override;
  double value(State s, Goal g, Action a) const override;
  void action_values(State s, Goal g, std::span<double> out) const override;
  void learn(std::span<const WeightedTransition> batch, const AgentConfig& config) override;

private:
  struct Net;
  std::unique_ptr<Net> net_;
};

// r + gamma * B - Q(s || g, a); B is zero when the transition attains g.
double td_error(const QFunction& q, const RelabeledTransition& rt, double gamma, TdMode mode);

// Uniform action with probability epsilon, otherwise greedy (lowest index on ties).
Action epsilon_greedy(const QFunction& q, State s, Goal g, double epsilon, Rng& rng);

// Learns on the batch, then returns |delta| of every item under the updated function.
std::vector<double> update(QFunction& q, std::span<const WeightedTransition> batch, const AgentConfig& config);

// Fraction of greedy episodes that reach their goal.
double evaluate(const Environment& env, const QFunction& q, std::size_t episodes, Rng& rng);

// Writes state,goal,action,value rows for every entry.
void dump_q_table(const TabularQ& q, const std::string& path);

}  // namespace hindsight
