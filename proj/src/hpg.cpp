#include "hindsight/hpg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

namespace hindsight {

// --- policy ----------------------------------------------------------------

SoftmaxPolicy::SoftmaxPolicy(std::size_t num_states, std::size_t num_goals, std::size_t num_actions)
    : states_(num_states), goals_(num_goals), actions_(num_actions), theta_(num_states * num_goals * num_actions, 0.0) {
  if (num_actions == 0 || num_actions > 32) throw ContractViolation("unsupported action count");
}

SoftmaxPolicy::SoftmaxPolicy(const Environment& env)
    : SoftmaxPolicy(env.num_states(), env.num_states(), env.num_actions()) {}

std::size_t SoftmaxPolicy::index(State s, Goal g, Action a) const {
  if (s.code >= states_ || g.code >= goals_ || a >= actions_) throw ContractViolation("policy index out of range");
  return (static_cast<std::size_t>(s.code) * goals_ + g.code) * actions_ + a;
}

void SoftmaxPolicy::probabilities(State s, Goal g, std::span<double> out) const {
  const std::size_t base = index(s, g, 0);
  double top = theta_[base];
  for (std::size_t a = 1; a < actions_; ++a) top = std::max(top, theta_[base + a]);
  double z = 0.0;
  for (std::size_t a = 0; a < actions_; ++a) {
    out[a] = std::exp(theta_[base + a] - top);
    z += out[a];
  }
  for (std::size_t a = 0; a < actions_; ++a) out[a] /= z;
}

double SoftmaxPolicy::probability(State s, Goal g, Action a) const {
  std::array<double, 32> p;
  probabilities(s, g, std::span<double>(p.data(), actions_));
  if (a >= actions_) throw ContractViolation("action out of range");
  return p[a];
}

Action SoftmaxPolicy::sample(State s, Goal g, Rng& rng) const {
  std::array<double, 32> p;
  probabilities(s, g, std::span<double>(p.data(), actions_));
  double u = rng.uniform01();
  for (std::size_t a = 0; a + 1 < actions_; ++a) {
    if (u < p[a]) return static_cast<Action>(a);
    u -= p[a];
  }
  return static_cast<Action>(actions_ - 1);
}

Action SoftmaxPolicy::greedy(State s, Goal g) const {
  const std::size_t base = index(s, g, 0);
  const auto first = theta_.begin() + static_cast<std::ptrdiff_t>(base);
  return static_cast<Action>(std::max_element(first, first + static_cast<std::ptrdiff_t>(actions_)) - first);
}

// --- goal distributions ------------------------------------------------------

GoalDistribution GoalDistribution::uniform(std::vector<Goal> goals) {
  if (goals.empty()) throw ContractViolation("goal distribution needs at least one goal");
  const double p = 1.0 / static_cast<double>(goals.size());
  GoalDistribution d{std::move(goals), {}};
  d.probabilities.assign(d.goals.size(), p);
  return d;
}

void GoalDistribution::validate() const {
  if (goals.empty() || goals.size() != probabilities.size()) {
    throw ContractViolation("goal distribution must be nonempty with one probability per goal");
  }
  double total = 0.0;
  for (double p : probabilities) {
    if (!(p >= 0.0)) throw ContractViolation("goal probabilities must be nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ContractViolation("goal probabilities must sum to 1");
}

GoalSupport GoalSupport::fixed(GoalDistribution dist) {
  dist.validate();
  return GoalSupport(std::move(dist));
}

std::vector<std::pair<Goal, double>> GoalSupport::for_goal(Goal pursued) const {
  if (!dist_) return {{pursued, 1.0}};
  std::vector<std::pair<Goal, double>> out;
  out.reserve(dist_->goals.size());
  for (std::size_t i = 0; i < dist_->goals.size(); ++i) out.emplace_back(dist_->goals[i], dist_->probabilities[i]);
  return out;
}

// --- baseline ----------------------------------------------------------------

ValueBaseline::ValueBaseline(std::size_t num_states, std::size_t num_goals, double decay)
    : goals_(num_goals), decay_(decay), table_(num_states * num_goals, 0.0) {
  if (!(decay >= 0.0 && decay <= 1.0)) throw ContractViolation("baseline decay must lie in [0, 1]");
}

std::size_t ValueBaseline::index(State s, Goal g) const {
  const std::size_t i = static_cast<std::size_t>(s.code) * goals_ + g.code;
  if (g.code >= goals_ || i >= table_.size()) throw ContractViolation("baseline index out of range");
  return i;
}

void ValueBaseline::fit(std::span<const WeightedTrajectory> batch, const GoalSupport& support, RewardMode mode) {
  for (const auto& wt : batch) {
    const auto& trs = wt.trajectory.transitions;
    for (const auto& [g, p] : support.for_goal(wt.trajectory.desired_goal)) {
      // Return-to-go from s_T is zero; walk backwards to s_1.
      double ret = 0.0;
      double& last = table_[index(trs.back().next_state, g)];
      last = decay_ * last;
      for (std::size_t j = trs.size(); j-- > 0;) {
        ret += reward(trs[j].achieved_goal, g, mode);
        double& v = table_[index(trs[j].state, g)];
        v = decay_ * v + (1.0 - decay_) * ret;
      }
    }
  }
}

// --- estimators ----------------------------------------------------------------

double importance_ratio(const Trajectory& traj, Goal g, Goal g_prime, const SoftmaxPolicy& policy) {
  if (g == g_prime) return 1.0;
  double ratio = 1.0;
  for (const auto& tr : traj.transitions) {
    ratio *= policy.probability(tr.state, g, tr.action) / policy.probability(tr.state, g_prime, tr.action);
  }
  return ratio;
}

namespace {

// Adds scale * (one trajectory's hindsight gradient) into `grad`.
void accumulate_trajectory(const Trajectory& traj, const GoalSupport& support, const SoftmaxPolicy& policy,
                           HpgMode mode, const ValueBaseline* baseline, RewardMode reward_mode,
                           std::optional<double> ratio_cap, double scale, std::span<double> grad) {
  const auto& trs = traj.transitions;
  const std::size_t A = policy.num_actions();
  std::vector<double> to_go(trs.size());
  std::array<double, 32> probs;
  for (const auto& [g, p] : support.for_goal(traj.desired_goal)) {
    if (p == 0.0) continue;
    double ratio = importance_ratio(traj, g, traj.desired_goal, policy);
    if (ratio_cap) ratio = std::min(ratio, *ratio_cap);
    // to_go[t] = sum over later states s_{t+1}..s_T of r(s, g) - b(s, g).
    double acc = 0.0;
    bool any = false;
    for (std::size_t j = trs.size(); j-- > 0;) {
      double term = reward(trs[j].achieved_goal, g, reward_mode);
      if (mode == HpgMode::baseline && baseline) term -= baseline->value(trs[j].next_state, g);
      acc += term;
      to_go[j] = acc;
      any = any || acc != 0.0;
    }
    if (!any) continue;
    const double w = scale * p * ratio;
    for (std::size_t j = 0; j < trs.size(); ++j) {
      const double coeff = w * to_go[j];
      if (coeff == 0.0) continue;
      policy.probabilities(trs[j].state, g, std::span<double>(probs.data(), A));
      const std::size_t base = policy.index(trs[j].state, g, 0);
      for (std::size_t b = 0; b < A; ++b) {
        grad[base + b] += coeff * ((b == trs[j].action ? 1.0 : 0.0) - probs[b]);
      }
    }
  }
}

}  // namespace

std::vector<double> hpg_estimate(std::span<const WeightedTrajectory> batch, const GoalSupport& support,
                                 const SoftmaxPolicy& policy, HpgMode mode, const ValueBaseline* baseline,
                                 RewardMode reward_mode) {
  if (batch.empty()) throw ContractViolation("hindsight policy gradient needs a nonempty batch");
  if (mode == HpgMode::baseline && !baseline) throw ContractViolation("baseline mode needs a value baseline");
  std::vector<double> grad(policy.num_params(), 0.0);
  for (const auto& wt : batch) {
    accumulate_trajectory(wt.trajectory, support, policy, mode, baseline, reward_mode, std::nullopt, wt.weight, grad);
  }
  return grad;
}

std::vector<std::vector<double>> hpg_contributions(std::span<const WeightedTrajectory> batch,
                                                   const GoalSupport& support, const SoftmaxPolicy& policy,
                                                   HpgMode mode, const ValueBaseline* baseline,
                                                   RewardMode reward_mode) {
  if (batch.empty()) throw ContractViolation("hindsight policy gradient needs a nonempty batch");
  if (mode == HpgMode::baseline && !baseline) throw ContractViolation("baseline mode needs a value baseline");
  std::vector<std::vector<double>> out;
  out.reserve(batch.size());
  for (const auto& wt : batch) {
    std::vector<double> grad(policy.num_params(), 0.0);
    accumulate_trajectory(wt.trajectory, support, policy, mode, baseline, reward_mode, std::nullopt, 1.0, grad);
    out.push_back(std::move(grad));
  }
  return out;
}

// --- enumeration ----------------------------------------------------------------

namespace {

void check_enumerable(const Environment& env, std::size_t n_goals) {
  const double size = std::pow(static_cast<double>(env.num_actions()), env.horizon()) *
                      static_cast<double>(env.num_states()) * static_cast<double>(n_goals);
  if (size > kEnumerationLimit) {
    throw ContractViolation("trajectory space of " + env.name() + " at horizon " + std::to_string(env.horizon()) +
                            " has ~" + std::to_string(size) + " elements, limit is " +
                            std::to_string(kEnumerationLimit));
  }
}

void expand(const Environment& env, const SoftmaxPolicy& policy, Trajectory& prefix, State s, int t, double prob,
            std::vector<WeightedTrajectory>& out) {
  const Goal goal = prefix.desired_goal;
  std::array<double, 32> probs;
  policy.probabilities(s, goal, std::span<double>(probs.data(), env.num_actions()));
  for (Action a = 0; a < env.num_actions(); ++a) {
    const StepResult r = env.step(s, a, goal, t);
    if (!prefix.transitions.empty()) prefix.transitions.back().next_action = a;
    prefix.transitions.push_back(Transition{s, a, r.next_state, r.achieved_goal, goal, t, 0, r.done, {}});
    const double p = prob * probs[a];
    if (r.done) {
      Trajectory done = prefix;
      const int T = done.length();
      for (auto& tr : done.transitions) tr.T = T;
      done.success = std::any_of(done.transitions.begin(), done.transitions.end(),
                                 [&](const Transition& tr) { return goal_achieved(tr.achieved_goal, goal); });
      out.push_back({std::move(done), p});
    } else {
      expand(env, policy, prefix, r.next_state, t + 1, p, out);
    }
    prefix.transitions.pop_back();
  }
  if (!prefix.transitions.empty()) prefix.transitions.back().next_action.reset();
}

}  // namespace

std::vector<WeightedTrajectory> enumerate_trajectories(const Environment& env, const SoftmaxPolicy& policy,
                                                       const GoalDistribution& goals) {
  goals.validate();
  check_enumerable(env, goals.goals.size());
  std::vector<WeightedTrajectory> out;
  const auto n_states = env.num_states();
  const double p_start = 1.0 / static_cast<double>(n_states - 1);
  for (std::size_t gi = 0; gi < goals.goals.size(); ++gi) {
    if (goals.probabilities[gi] == 0.0) continue;
    for (std::uint32_t s = 0; s < n_states; ++s) {
      if (State{s} == goals.goals[gi]) continue;
      Trajectory prefix;
      prefix.desired_goal = goals.goals[gi];
      expand(env, policy, prefix, State{s}, 1, goals.probabilities[gi] * p_start, out);
    }
  }
  return out;
}

double exact_performance(const Environment& env, const SoftmaxPolicy& policy, const GoalDistribution& goals,
                         int horizon, double gamma) {
  const Environment e = env.with_horizon(horizon);
  double eta = 0.0;
  for (const auto& wt : enumerate_trajectories(e, policy, goals)) {
    double ret = 0.0;
    double discount = 1.0;
    for (const auto& tr : wt.trajectory.transitions) {
      ret += discount * reward(tr.achieved_goal, wt.trajectory.desired_goal);
      discount *= gamma;
    }
    eta += wt.weight * ret;
  }
  return eta;
}

// --- exact model ----------------------------------------------------------------

ExactModel ExactModel::build(const Environment& env, const SoftmaxPolicy& policy, std::span<const Goal> goals,
                             double gamma, RewardMode mode) {
  ExactModel m;
  m.horizon_ = env.horizon();
  m.states_ = env.num_states();
  m.actions_ = env.num_actions();
  m.goals_.assign(goals.begin(), goals.end());
  const std::size_t H = static_cast<std::size_t>(m.horizon_);
  m.q_.assign(m.goals_.size() * H * m.states_ * m.actions_, 0.0);
  m.v_.assign(m.goals_.size() * H * m.states_, 0.0);
  std::array<double, 32> probs;
  for (std::size_t slot = 0; slot < m.goals_.size(); ++slot) {
    const Goal g = m.goals_[slot];
    for (int t = m.horizon_; t >= 1; --t) {
      for (std::uint32_t sc = 0; sc < m.states_; ++sc) {
        const State s{sc};
        policy.probabilities(s, g, std::span<double>(probs.data(), m.actions_));
        double v = 0.0;
        for (Action a = 0; a < m.actions_; ++a) {
          const StepResult r = env.step(s, a, g, t);
          double q = reward(r.achieved_goal, g, mode);
          if (!r.done) q += gamma * m.v_[(slot * H + static_cast<std::size_t>(t)) * m.states_ + r.next_state.code];
          m.q_[m.index(slot, t, s, a)] = q;
          v += probs[a] * q;
        }
        m.v_[(slot * H + static_cast<std::size_t>(t - 1)) * m.states_ + sc] = v;
      }
    }
  }
  return m;
}

bool ExactModel::has_goal(Goal g) const { return std::find(goals_.begin(), goals_.end(), g) != goals_.end(); }

std::size_t ExactModel::goal_slot(Goal g) const {
  const auto it = std::find(goals_.begin(), goals_.end(), g);
  if (it == goals_.end()) throw ContractViolation("no advantage entries for goal " + std::to_string(g.code));
  return static_cast<std::size_t>(it - goals_.begin());
}

std::size_t ExactModel::index(std::size_t slot, int t, State s, Action a) const {
  if (t < 1 || t > horizon_ || s.code >= states_ || a >= actions_) {
    throw ContractViolation("advantage entry (t=" + std::to_string(t) + ", s=" + std::to_string(s.code) +
                            ", a=" + std::to_string(a) + ") out of range");
  }
  return ((slot * static_cast<std::size_t>(horizon_) + static_cast<std::size_t>(t - 1)) * states_ + s.code) *
             actions_ + a;
}

double ExactModel::value(Goal g, int t, State s) const {
  const std::size_t slot = goal_slot(g);
  index(slot, t, s, 0);
  return v_[(slot * static_cast<std::size_t>(horizon_) + static_cast<std::size_t>(t - 1)) * states_ + s.code];
}

double ExactModel::q_value(Goal g, int t, State s, Action a) const { return q_[index(goal_slot(g), t, s, a)]; }

std::vector<std::vector<double>> visitation(const Environment& env, const SoftmaxPolicy& policy, Goal conditioned,
                                            Goal stop_goal, std::span<const double> start) {
  const std::size_t S = env.num_states();
  const std::size_t A = env.num_actions();
  if (start.size() != S) throw ContractViolation("start distribution has the wrong size");
  std::vector<std::vector<double>> rho(static_cast<std::size_t>(env.horizon()), std::vector<double>(S, 0.0));
  rho[0].assign(start.begin(), start.end());
  std::array<double, 32> probs;
  for (int t = 1; t < env.horizon(); ++t) {
    const auto& cur = rho[static_cast<std::size_t>(t - 1)];
    auto& next = rho[static_cast<std::size_t>(t)];
    for (std::uint32_t sc = 0; sc < S; ++sc) {
      if (cur[sc] == 0.0) continue;
      policy.probabilities(State{sc}, conditioned, std::span<double>(probs.data(), A));
      for (Action a = 0; a < A; ++a) {
        const StepResult r = env.step(State{sc}, a, stop_goal, t);
        if (!r.done) next[r.next_state.code] += cur[sc] * probs[a];
      }
    }
  }
  return rho;
}

double surrogate_L(const SoftmaxPolicy& theta, const SoftmaxPolicy& behavior,
                   std::span<const WeightedTrajectory> batch, const GoalSupport& support,
                   const ExactModel& advantages) {
  double total = 0.0;
  for (const auto& wt : batch) {
    const Goal pursued = wt.trajectory.desired_goal;
    const auto goals = support.for_goal(pursued);
    for (const auto& tr : wt.trajectory.transitions) {
      const double denom = behavior.probability(tr.state, pursued, tr.action);
      for (const auto& [g, p] : goals) {
        total += wt.weight * p * theta.probability(tr.state, g, tr.action) / denom *
                 advantages.advantage(g, tr.t, tr.state, tr.action);
      }
    }
  }
  return total;
}

double surrogate_gap(const Environment& env, const SoftmaxPolicy& theta, const SoftmaxPolicy& theta_prime,
                     const GoalSupport& support, int horizon, double gamma) {
  const Environment e = env.with_horizon(horizon);
  const std::size_t S = e.num_states();
  const std::size_t A = e.num_actions();
  check_enumerable(e, 1);

  std::vector<Goal> all_goals;
  for (std::uint32_t g = 0; g < S; ++g) all_goals.push_back(Goal{g});
  const ExactModel model = ExactModel::build(e, theta_prime, all_goals, gamma);

  const double p_pursued = 1.0 / static_cast<double>(S);
  std::array<double, 32> probs;
  double gap = 0.0;
  for (std::uint32_t gp = 0; gp < S; ++gp) {
    const Goal pursued{gp};
    std::vector<double> start(S, 1.0 / static_cast<double>(S - 1));
    start[gp] = 0.0;
    const auto rho_old = visitation(e, theta_prime, pursued, pursued, start);
    for (const auto& [g, p] : support.for_goal(pursued)) {
      const auto rho_new = visitation(e, theta, g, g, start);
      for (int t = 1; t <= horizon; ++t) {
        for (std::uint32_t sc = 0; sc < S; ++sc) {
          const double d = rho_old[static_cast<std::size_t>(t - 1)][sc] - rho_new[static_cast<std::size_t>(t - 1)][sc];
          if (d == 0.0) continue;
          theta.probabilities(State{sc}, g, std::span<double>(probs.data(), A));
          double expected_adv = 0.0;
          for (Action a = 0; a < A; ++a) expected_adv += probs[a] * model.advantage(g, t, State{sc}, a);
          gap += p_pursued * p * d * expected_adv;
        }
      }
    }
  }
  return gap;
}

// --- training ----------------------------------------------------------------

GoalDistribution hindsight_goal_support(std::span<const WeightedTrajectory> batch) {
  std::vector<Goal> goals;
  for (const auto& wt : batch) {
    goals.push_back(wt.trajectory.desired_goal);
    for (const auto& tr : wt.trajectory.transitions) goals.push_back(tr.achieved_goal);
  }
  std::sort(goals.begin(), goals.end());
  goals.erase(std::unique(goals.begin(), goals.end()), goals.end());
  return GoalDistribution::uniform(std::move(goals));
}

double evaluate_policy(const Environment& env, const SoftmaxPolicy& policy, std::size_t episodes, Rng& rng) {
  if (episodes == 0) throw ContractViolation("evaluation needs at least one episode");
  std::size_t wins = 0;
  for (std::size_t e = 0; e < episodes; ++e) {
    const auto [start, goal] = env.reset(rng);
    const auto traj = rollout(env, start, goal, [&](State s, Goal g, int) { return policy.greedy(s, g); });
    if (traj.success) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(episodes);
}

std::vector<HpgIteration> train_hpg(const Environment& env, const HpgTrainConfig& config, Rng rng,
                                    SoftmaxPolicy* final_policy) {
  if (config.batch_episodes == 0) throw ContractViolation("batch_episodes must be positive");
  SoftmaxPolicy policy(env);
  ValueBaseline baseline(env.num_states(), env.num_states(), config.baseline_decay);
  Rng collect = rng.substream("collect");
  Rng eval = rng.substream("eval");

  std::vector<HpgIteration> curve;
  curve.reserve(config.iterations);
  std::vector<WeightedTrajectory> batch;
  const double weight = 1.0 / static_cast<double>(config.batch_episodes);
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    batch.clear();
    for (std::size_t e = 0; e < config.batch_episodes; ++e) {
      const auto [start, goal] = env.reset(collect);
      batch.push_back({rollout(env, start, goal, [&](State s, Goal g, int) { return policy.sample(s, g, collect); }),
                       weight});
    }
    const GoalSupport support = GoalSupport::fixed(hindsight_goal_support(batch));

    std::vector<double> grad(policy.num_params(), 0.0);
    std::vector<double> sq(policy.num_params(), 0.0);
    std::vector<double> term(policy.num_params());
    for (const auto& wt : batch) {
      std::fill(term.begin(), term.end(), 0.0);
      accumulate_trajectory(wt.trajectory, support, policy, config.mode, &baseline, config.reward_mode,
                            config.ratio_cap, 1.0, term);
      for (std::size_t i = 0; i < term.size(); ++i) {
        grad[i] += term[i] * weight;
        sq[i] += term[i] * term[i];
      }
    }
    const double B = static_cast<double>(config.batch_episodes);
    double variance = 0.0;
    double norm2 = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      norm2 += grad[i] * grad[i];
      if (config.batch_episodes > 1) variance += (sq[i] - B * grad[i] * grad[i]) / (B - 1.0) / B;
    }

    auto theta = policy.theta();
    for (std::size_t i = 0; i < grad.size(); ++i) theta[i] += config.learning_rate * grad[i];
    if (config.mode == HpgMode::baseline) baseline.fit(batch, support, config.reward_mode);

    curve.push_back({it, evaluate_policy(env, policy, config.eval_episodes, eval), std::sqrt(norm2), variance});
  }
  if (final_policy) *final_policy = policy;
  return curve;
}

}  // namespace hindsight
