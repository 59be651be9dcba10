#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hindsight/rng.hpp"

namespace hindsight {

// Raised when a caller breaks an operation's preconditions.
class ContractViolation : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Bit-flip states are bit vectors packed into `code` (bit i = element i).
// Grid states are cells encoded as y * k + x.
struct State {
  std::uint32_t code = 0;
  friend constexpr auto operator<=>(State, State) = default;
};

// The achieved-goal projection is the identity, so goals share the state encoding.
using Goal = State;
using Action = std::uint32_t;

enum class RewardMode { plus_one_zero, minus_one_zero };

enum class EnvKind { bit_flip, grid };

// Grid moves. North increases y, East increases x.
enum GridMove : Action { kNorth = 0, kSouth = 1, kEast = 2, kWest = 3 };

inline bool goal_achieved(Goal achieved, Goal desired) { return achieved == desired; }

inline double reward(Goal achieved, Goal desired, RewardMode mode = RewardMode::plus_one_zero) {
  const bool hit = goal_achieved(achieved, desired);
  if (mode == RewardMode::plus_one_zero) return hit ? 1.0 : 0.0;
  return hit ? 0.0 : -1.0;
}

struct Transition {
  State state;
  Action action = 0;
  State next_state;
  Goal achieved_goal;
  Goal desired_goal;
  int t = 1;  // 1-based step index
  int T = 2;  // episode length in states; transitions are t = 1..T-1
  bool done = false;
  std::optional<Action> next_action;  // a_{t+1}; empty for the last transition
};

struct Trajectory {
  std::vector<Transition> transitions;
  Goal desired_goal;
  bool success = false;

  int length() const { return static_cast<int>(transitions.size()) + 1; }
  State initial_state() const { return transitions.front().state; }
};

struct StepResult {
  State next_state;
  Goal achieved_goal;
  bool done = false;
};

class Environment {
public:
  static Environment bit_flip(int n, int horizon);
  static Environment grid(int k, int horizon);

  EnvKind kind() const { return kind_; }
  int size() const { return size_; }
  int horizon() const { return horizon_; }
  std::size_t num_states() const;
  std::size_t num_actions() const;
  std::string name() const;

  Environment with_horizon(int horizon) const;

  bool terminate_on_success() const { return terminate_on_success_; }
  void set_terminate_on_success(bool on) { terminate_on_success_ = on; }

  // Deterministic dynamics. Throws ContractViolation for an out-of-range action.
  State transition(State state, Action action) const;

  // One interaction step at 1-based step index `t`; done on goal attainment or at the horizon.
  StepResult step(State state, Action action, Goal desired, int t) const;

  Goal achieved_goal(State state) const { return state; }

  // Uniform independent start and goal, rejecting start == goal.
  std::pair<State, Goal> reset(Rng& rng) const;

  // Grid helpers.
  State cell(int x, int y) const;
  std::pair<int, int> coords(State s) const;

private:
  Environment(EnvKind kind, int size, int horizon) : kind_(kind), size_(size), horizon_(horizon) {}

  EnvKind kind_;
  int size_;
  int horizon_;
  bool terminate_on_success_ = true;
};

// Builds an environment from "bitflip:<n>[:<horizon>]" or "grid:<k>[:<horizon>]".
// Default horizons: n for bit-flip, 2k for the grid.
Environment parse_environment(std::string_view spec);

// Runs one episode from (start, goal). `choose(state, goal, t)` returns the action at step t.
template <typename Policy>
Trajectory rollout(const Environment& env, State start, Goal goal, Policy&& choose) {
  Trajectory traj;
  traj.desired_goal = goal;
  State s = start;
  for (int t = 1; t <= env.horizon(); ++t) {
    const Action a = choose(s, goal, t);
    const StepResult r = env.step(s, a, goal, t);
    if (!traj.transitions.empty()) traj.transitions.back().next_action = a;
    traj.transitions.push_back(Transition{s, a, r.next_state, r.achieved_goal, goal, t, 0, r.done, {}});
    traj.success = traj.success || goal_achieved(r.achieved_goal, goal);
    s = r.next_state;
    if (r.done) break;
  }
  const int T = traj.length();
  for (auto& tr : traj.transitions) tr.T = T;
  return traj;
}

}  // namespace hindsight
