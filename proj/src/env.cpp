#include "hindsight/env.hpp"

#include <algorithm>
#include <charconv>

namespace hindsight {

Environment Environment::bit_flip(int n, int horizon) {
  if (n < 1 || n > 30) throw ContractViolation("bit-flip size must be in [1, 30]");
  if (horizon < 1) throw ContractViolation("horizon must be positive");
  return Environment(EnvKind::bit_flip, n, horizon);
}

Environment Environment::grid(int k, int horizon) {
  if (k < 2 || k > 4096) throw ContractViolation("grid side must be in [2, 4096]");
  if (horizon < 1) throw ContractViolation("horizon must be positive");
  return Environment(EnvKind::grid, k, horizon);
}

Environment Environment::with_horizon(int horizon) const {
  if (horizon < 1) throw ContractViolation("horizon must be positive");
  Environment copy = *this;
  copy.horizon_ = horizon;
  return copy;
}

std::size_t Environment::num_states() const {
  if (kind_ == EnvKind::bit_flip) return std::size_t{1} << size_;
  return static_cast<std::size_t>(size_) * static_cast<std::size_t>(size_);
}

std::size_t Environment::num_actions() const {
  return kind_ == EnvKind::bit_flip ? static_cast<std::size_t>(size_) : 4;
}

std::string Environment::name() const {
  return (kind_ == EnvKind::bit_flip ? "bitflip:" : "grid:") + std::to_string(size_);
}

State Environment::cell(int x, int y) const {
  return State{static_cast<std::uint32_t>(y * size_ + x)};
}

std::pair<int, int> Environment::coords(State s) const {
  return {static_cast<int>(s.code) % size_, static_cast<int>(s.code) / size_};
}

State Environment::transition(State state, Action action) const {
  if (action >= num_actions()) {
    throw ContractViolation("action " + std::to_string(action) + " out of range for " + name());
  }
  if (kind_ == EnvKind::bit_flip) return State{state.code ^ (1u << action)};

  auto [x, y] = coords(state);
  switch (action) {
    case kNorth: y = std::min(y + 1, size_ - 1); break;
    case kSouth: y = std::max(y - 1, 0); break;
    case kEast: x = std::min(x + 1, size_ - 1); break;
    case kWest: x = std::max(x - 1, 0); break;
  }
  return cell(x, y);
}

StepResult Environment::step(State state, Action action, Goal desired, int t) const {
  StepResult r;
  r.next_state = transition(state, action);
  r.achieved_goal = achieved_goal(r.next_state);
  r.done = (terminate_on_success_ && goal_achieved(r.achieved_goal, desired)) || t >= horizon_;
  return r;
}

std::pair<State, Goal> Environment::reset(Rng& rng) const {
  const auto n = num_states();
  const State start{static_cast<std::uint32_t>(rng.uniform_int(n))};
  Goal goal{static_cast<std::uint32_t>(rng.uniform_int(n))};
  while (goal == start) goal = Goal{static_cast<std::uint32_t>(rng.uniform_int(n))};
  return {start, goal};
}

namespace {

int parse_int(std::string_view text, std::string_view whole) {
  int value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw std::invalid_argument("bad environment spec '" + std::string(whole) + "'");
  }
  return value;
}

}  // namespace

Environment parse_environment(std::string_view spec) {
  const auto colon = spec.find(':');
  if (colon == std::string_view::npos) {
    throw std::invalid_argument("environment spec '" + std::string(spec) +
                                "' must look like bitflip:<n> or grid:<k>");
  }
  const auto kind = spec.substr(0, colon);
  auto rest = spec.substr(colon + 1);
  std::optional<int> horizon;
  if (const auto c2 = rest.find(':'); c2 != std::string_view::npos) {
    horizon = parse_int(rest.substr(c2 + 1), spec);
    rest = rest.substr(0, c2);
  }
  const int size = parse_int(rest, spec);
  if (kind == "bitflip") return Environment::bit_flip(size, horizon.value_or(size));
  if (kind == "grid") return Environment::grid(size, horizon.value_or(2 * size));
  throw std::invalid_argument("unknown environment kind '" + std::string(kind) + "'");
}

}  // namespace hindsight
