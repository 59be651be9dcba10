#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "hindsight/harness.hpp"

namespace hindsight {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& what) { throw std::invalid_argument("config: " + what); }

template <typename Enum>
Enum parse_enum(const json& value, const std::string& key, std::initializer_list<std::pair<const char*, Enum>> names) {
  if (!value.is_string()) fail("'" + key + "' must be a string");
  const auto text = value.get<std::string>();
  for (const auto& [name, e] : names) {
    if (text == name) return e;
  }
  std::string allowed;
  for (const auto& [name, e] : names) allowed += std::string(allowed.empty() ? "" : ", ") + name;
  fail("'" + key + "' = '" + text + "' is not one of {" + allowed + "}");
}

double number(const json& value, const std::string& key) {
  if (!value.is_number()) fail("'" + key + "' must be a number");
  return value.get<double>();
}

std::size_t count(const json& value, const std::string& key) {
  if (!value.is_number_integer() || value.get<long long>() < 0) fail("'" + key + "' must be a nonnegative integer");
  return value.get<std::size_t>();
}

// A bare number is a constant schedule; objects carry kind/start/end/total_steps.
AnnealSchedule schedule(const json& value, const std::string& key) {
  if (value.is_number()) return AnnealSchedule::constant(value.get<double>());
  if (!value.is_object()) fail("'" + key + "' must be a number or a schedule object");
  AnnealSchedule s;
  for (const auto& [k, v] : value.items()) {
    if (k == "kind") {
      s.kind = parse_enum<AnnealSchedule::Kind>(v, key + ".kind",
                                                {{"constant", AnnealSchedule::Kind::constant},
                                                 {"linear", AnnealSchedule::Kind::linear},
                                                 {"inverse_time", AnnealSchedule::Kind::inverse_time}});
    } else if (k == "start") {
      s.start = number(v, key + ".start");
    } else if (k == "end") {
      s.end = number(v, key + ".end");
    } else if (k == "total_steps") {
      s.total_steps = static_cast<long>(count(v, key + ".total_steps"));
    } else {
      fail("unknown key '" + key + "." + k + "'");
    }
  }
  if (!value.contains("start")) fail("'" + key + "' schedule needs 'start'");
  if (!value.contains("end")) s.end = s.start;
  return s;
}

}  // namespace

AnnealSchedule ExperimentConfig::beta() const {
  if (beta_schedule) return *beta_schedule;
  return AnnealSchedule::linear(0.4, 1.0, static_cast<long>(std::max<std::size_t>(1, epochs * n_batches)));
}

ExperimentConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail("top level must be a JSON object");

  ExperimentConfig c;
  for (const auto& [key, v] : doc.items()) {
    if (key == "env") {
      if (!v.is_string()) fail("'env' must be a string");
      c.env = v.get<std::string>();
    } else if (key == "algo") {
      c.algo = parse_enum<Algo>(v, key,
                                {{"q_vanilla", Algo::q_vanilla}, {"her", Algo::her}, {"hper", Algo::hper}, {"hpg", Algo::hpg}});
    } else if (key == "strategy") {
      c.strategy = parse_enum<Strategy>(v, key,
                                        {{"single_queue", Strategy::single_queue},
                                         {"two_queues", Strategy::two_queues},
                                         {"uniform_her", Strategy::uniform_her}});
    } else if (key == "replay_k") {
      c.replay_k = schedule(v, key);
    } else if (key == "batch_size") {
      c.batch_size = count(v, key);
    } else if (key == "n_batches") {
      c.n_batches = count(v, key);
    } else if (key == "epochs") {
      c.epochs = count(v, key);
    } else if (key == "episodes_per_epoch") {
      c.episodes_per_epoch = count(v, key);
    } else if (key == "goal_count_mode") {
      c.goal_count_mode = parse_enum<GoalCountMode>(v, key,
                                                    {{"uniform_fixed", GoalCountMode::uniform_fixed},
                                                     {"non_uniform", GoalCountMode::non_uniform},
                                                     {"non_uniform_ascending", GoalCountMode::non_uniform_ascending}});
    } else if (key == "reward_mode") {
      c.reward_mode = parse_enum<RewardMode>(v, key,
                                             {{"plus_one_zero", RewardMode::plus_one_zero},
                                              {"minus_one_zero", RewardMode::minus_one_zero}});
    } else if (key == "td_mode") {
      c.td_mode = parse_enum<TdMode>(v, key,
                                     {{"max_action", TdMode::max_action}, {"trajectory_action", TdMode::trajectory_action}});
    } else if (key == "beta_schedule") {
      c.beta_schedule = schedule(v, key);
    } else if (key == "gamma") {
      c.gamma = number(v, key);
    } else if (key == "epsilon") {
      c.epsilon = schedule(v, key);
    } else if (key == "learning_rate") {
      c.learning_rate = number(v, key);
    } else if (key == "buffer_capacity") {
      c.buffer_capacity = count(v, key);
    } else if (key == "seed") {
      c.seed = static_cast<std::uint64_t>(count(v, key));
    } else if (key == "q_function") {
      c.q_function = parse_enum<QFunctionKind>(v, key, {{"tabular", QFunctionKind::tabular}, {"mlp", QFunctionKind::mlp}});
    } else if (key == "hidden_units") {
      c.hidden_units = count(v, key);
    } else if (key == "eval_episodes") {
      c.eval_episodes = count(v, key);
    } else if (key == "alpha") {
      c.alpha = number(v, key);
    } else if (key == "hpg_mode") {
      c.hpg_mode = parse_enum<HpgMode>(v, key, {{"plain", HpgMode::plain}, {"baseline", HpgMode::baseline}});
    } else if (key == "log_wall_time") {
      if (!v.is_boolean()) fail("'log_wall_time' must be a boolean");
      c.log_wall_time = v.get<bool>();
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void validate(const ExperimentConfig& c) {
  try {
    parse_environment(c.env);
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (c.batch_size == 0) fail("'batch_size' must be positive");
  if (c.n_batches == 0) fail("'n_batches' must be positive");
  if (c.episodes_per_epoch == 0) fail("'episodes_per_epoch' must be positive");
  if (c.eval_episodes == 0) fail("'eval_episodes' must be positive");
  if (c.buffer_capacity == 0) fail("'buffer_capacity' must be positive");
  if (c.hidden_units == 0) fail("'hidden_units' must be positive");
  if (!(c.gamma >= 0.0 && c.gamma <= 1.0)) fail("'gamma' must lie in [0, 1]");
  if (!(c.learning_rate >= 0.0)) fail("'learning_rate' must be nonnegative");
  if (!(c.alpha >= 0.0)) fail("'alpha' must be nonnegative");
  if (c.replay_k.start < 0.0 || c.replay_k.end < 0.0) fail("'replay_k' must be nonnegative");
  for (const double e : {c.epsilon.start, c.epsilon.end}) {
    if (!(e >= 0.0 && e <= 1.0)) fail("'epsilon' must lie in [0, 1]");
  }
  const AnnealSchedule beta = c.beta();
  for (const double b : {beta.start, beta.end}) {
    if (!(b >= 0.0 && b <= 1.0)) fail("'beta_schedule' values must lie in [0, 1]");
  }
  if (c.algo == Algo::hper && c.strategy == Strategy::uniform_her) {
    fail("algo 'hper' needs strategy single_queue or two_queues");
  }
  if (c.algo != Algo::hper && c.strategy == Strategy::two_queues) {
    fail("strategy 'two_queues' applies to algo 'hper' only");
  }
  if (c.algo == Algo::hpg && parse_environment(c.env).num_actions() > 32) fail("hpg supports at most 32 actions");
  if (c.q_function == QFunctionKind::tabular && c.algo != Algo::hpg) {
    const double entries = static_cast<double>(parse_environment(c.env).num_states());
    if (entries * entries * static_cast<double>(parse_environment(c.env).num_actions()) > 5e7) {
      fail("environment too large for a tabular Q function; use q_function 'mlp'");
    }
  }
}

}  // namespace hindsight
