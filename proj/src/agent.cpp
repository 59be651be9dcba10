#include "hindsight/agent.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace hindsight {

void QFunction::action_values(State s, Goal g, std::span<double> out) const {
  for (Action a = 0; a < num_actions(); ++a) out[a] = value(s, g, a);
}

double QFunction::max_value(State s, Goal g) const {
  std::array<double, kMaxActions> buf;
  const std::span<double> q(buf.data(), num_actions());
  action_values(s, g, q);
  return *std::max_element(q.begin(), q.end());
}

Action QFunction::greedy_action(State s, Goal g) const {
  std::array<double, kMaxActions> buf;
  const std::span<double> q(buf.data(), num_actions());
  action_values(s, g, q);
  // max_element returns the first maximum, i.e. the lowest index.
  return static_cast<Action>(std::max_element(q.begin(), q.end()) - q.begin());
}

TabularQ::TabularQ(std::size_t num_states, std::size_t num_goals, std::size_t num_actions)
    : states_(num_states), goals_(num_goals), actions_(num_actions), table_(num_states * num_goals * num_actions, 0.0) {
  if (num_actions == 0 || num_actions > kMaxActions) throw ContractViolation("unsupported action count");
}

TabularQ::TabularQ(const Environment& env) : TabularQ(env.num_states(), env.num_states(), env.num_actions()) {}

std::size_t TabularQ::index(State s, Goal g, Action a) const {
  if (s.code >= states_ || g.code >= goals_ || a >= actions_) throw ContractViolation("Q table index out of range");
  return (static_cast<std::size_t>(s.code) * goals_ + g.code) * actions_ + a;
}

void TabularQ::action_values(State s, Goal g, std::span<double> out) const {
  const std::size_t base = index(s, g, 0);
  std::copy_n(table_.begin() + static_cast<std::ptrdiff_t>(base), actions_, out.begin());
}

void TabularQ::learn(std::span<const WeightedTransition> batch, const AgentConfig& config) {
  for (const auto& item : batch) {
    const auto& rt = item.transition;
    const double delta = td_error(*this, rt, config.gamma, config.td_mode);
    table_[index(rt.base.state, rt.goal, rt.base.action)] += config.learning_rate * item.weight * delta;
  }
}

double td_error(const QFunction& q, const RelabeledTransition& rt, double gamma, TdMode mode) {
  const Transition& tr = rt.base;
  double bootstrap = 0.0;
  if (!goal_achieved(tr.achieved_goal, rt.goal)) {
    if (mode == TdMode::max_action) {
      bootstrap = q.max_value(tr.next_state, rt.goal);
    } else if (tr.next_action) {
      bootstrap = q.value(tr.next_state, rt.goal, *tr.next_action);
    }
  }
  return rt.reward + gamma * bootstrap - q.value(tr.state, rt.goal, tr.action);
}

Action epsilon_greedy(const QFunction& q, State s, Goal g, double epsilon, Rng& rng) {
  if (rng.uniform01() < epsilon) return static_cast<Action>(rng.uniform_int(q.num_actions()));
  return q.greedy_action(s, g);
}

std::vector<double> update(QFunction& q, std::span<const WeightedTransition> batch, const AgentConfig& config) {
  q.learn(batch, config);
  std::vector<double> out;
  out.reserve(batch.size());
  for (const auto& item : batch) out.push_back(std::abs(td_error(q, item.transition, config.gamma, config.td_mode)));
  return out;
}

double evaluate(const Environment& env, const QFunction& q, std::size_t episodes, Rng& rng) {
  if (episodes == 0) throw ContractViolation("evaluation needs at least one episode");
  std::size_t wins = 0;
  for (std::size_t e = 0; e < episodes; ++e) {
    const auto [start, goal] = env.reset(rng);
    const auto traj = rollout(env, start, goal, [&](State s, Goal g, int) { return q.greedy_action(s, g); });
    if (traj.success) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(episodes);
}

void dump_q_table(const TabularQ& q, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "state,goal,action,value\n";
  out.precision(17);
  const auto raw = q.raw();
  std::size_t i = 0;
  for (std::size_t s = 0; s < q.num_states(); ++s) {
    for (std::size_t g = 0; g < q.num_goals(); ++g) {
      for (std::size_t a = 0; a < q.num_actions(); ++a) out << s << ',' << g << ',' << a << ',' << raw[i++] << '\n';
    }
  }
}

}  // namespace hindsight
