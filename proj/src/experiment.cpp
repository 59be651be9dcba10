#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <stdexcept>

#include "hindsight/harness.hpp"

namespace hindsight {

namespace {

std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::unique_ptr<QFunction> make_q_function(const ExperimentConfig& config, const Environment& env, Rng rng) {
  if (config.q_function == QFunctionKind::tabular) return std::make_unique<TabularQ>(env);
  return std::make_unique<MlpQ>(make_encoder(env), env.num_actions(), config.hidden_units, rng);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<EpochRecord> run_hpg(const ExperimentConfig& config, const Environment& env, Rng root,
                                 const RunOptions& options) {
  HpgTrainConfig hc;
  hc.batch_episodes = config.episodes_per_epoch;
  hc.learning_rate = config.learning_rate;
  hc.iterations = config.epochs;
  hc.mode = config.hpg_mode;
  hc.eval_episodes = config.eval_episodes;
  hc.reward_mode = config.reward_mode;
  const auto curve = train_hpg(env, hc, root.substream("hpg"));

  std::vector<EpochRecord> records;
  for (const auto& it : curve) {
    EpochRecord r;
    r.epoch = it.iteration;
    r.episodes_seen = it.iteration * config.episodes_per_epoch;
    r.success_rate = it.success_rate;
    r.grad_norm = it.grad_norm;
    r.est_variance = it.est_variance;
    records.push_back(r);
    if (options.stop_at_success && r.success_rate >= *options.stop_at_success) break;
  }
  return records;
}

}  // namespace

std::vector<EpochRecord> run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  validate(config);
  if (options.dump_q_table && (config.algo == Algo::hpg || config.q_function != QFunctionKind::tabular)) {
    throw std::invalid_argument("Q-table dump needs a tabular Q function");
  }
  const Environment env = parse_environment(config.env);
  const Rng root(config.seed);
  const auto started = std::chrono::steady_clock::now();

  std::vector<EpochRecord> records;
  std::unique_ptr<QFunction> q;
  if (config.algo == Algo::hpg) {
    records = run_hpg(config, env, root, options);
  } else {
    Rng env_rng = root.substream("env");
    Rng agent_rng = root.substream("agent");
    Rng sampler_rng = root.substream("sampler");
    Rng eval_rng = root.substream("eval");
    q = make_q_function(config, env, root.substream("init"));

    const bool prioritized = config.algo == Algo::hper;
    UniformBuffer buffer(prioritized ? 1 : config.buffer_capacity);
    HindsightQueues queues(prioritized ? config.strategy : Strategy::single_queue,
                           prioritized ? config.buffer_capacity : 1, config.alpha);
    const AnnealSchedule beta = config.beta();
    long global_step = 0;

    AgentConfig agent{config.gamma, 0.0, config.learning_rate, config.td_mode};
    const TdErrorFn td = [&](const RelabeledTransition& rt) { return td_error(*q, rt, config.gamma, config.td_mode); };

    std::vector<WeightedTransition> batch;
    std::vector<double> weights;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      const long step = static_cast<long>(epoch);
      const double k = config.algo == Algo::q_vanilla ? 0.0 : anneal(config.replay_k, step);
      agent.epsilon = anneal(config.epsilon, step);

      for (std::size_t e = 0; e < config.episodes_per_epoch; ++e) {
        const auto [start, goal] = env.reset(env_rng);
        const Trajectory traj = rollout(env, start, goal, [&](State s, Goal g, int) {
          return epsilon_greedy(*q, s, g, agent.epsilon, agent_rng);
        });
        if (prioritized) {
          const HindsightConfig hc{k, config.strategy, config.goal_count_mode, config.reward_mode, config.td_mode};
          store_episode_prioritized(queues, traj, td, hc, sampler_rng);
        } else {
          buffer.store_episode(traj);
        }
      }

      double td_sum = 0.0;
      std::size_t td_count = 0;
      std::size_t actual = 0;
      std::size_t alternate = 0;
      for (std::size_t b = 0; b < config.n_batches; ++b, ++global_step) {
        batch.clear();
        if (prioritized) {
          // Early on the store may not cover a full stratified batch yet; the step is skipped.
          std::vector<QueueSample> samples;
          if (config.strategy == Strategy::two_queues) {
            if (queues.total_size() < config.batch_size) continue;
            samples = sample_two_queues(queues.primary, queues.alternates, config.batch_size, k, sampler_rng);
          } else {
            if (queues.primary.size() < config.batch_size) continue;
            samples = sample_single_queue(queues.primary, config.batch_size, sampler_rng);
          }
          if (options.on_prioritized_batch) options.on_prioritized_batch(samples);
          const double b_now = anneal(beta, global_step);
          weights.resize(samples.size());
          for (std::size_t i = 0; i < samples.size(); ++i) {
            weights[i] = importance_weight(samples[i].probability, samples[i].queue_size, b_now);
          }
          normalize_weights(weights);
          for (std::size_t i = 0; i < samples.size(); ++i) batch.push_back({samples[i].item, weights[i]});
          const auto errors = update(*q, batch, agent);
          for (std::size_t i = 0; i < samples.size(); ++i) {
            PrioritizedQueue& owner = samples[i].queue == 0 ? queues.primary : queues.alternates;
            if (owner.contains(samples[i].handle)) owner.update_priority(samples[i].handle, errors[i]);
          }
          for (const double d : errors) td_sum += d;
          td_count += errors.size();
        } else {
          for (auto& rt : buffer.sample_her(config.batch_size, k, sampler_rng, config.reward_mode)) {
            batch.push_back({std::move(rt), 1.0});
          }
          const auto errors = update(*q, batch, agent);
          for (const double d : errors) td_sum += d;
          td_count += errors.size();
        }
        for (const auto& wt : batch) (wt.transition.is_alternate ? alternate : actual) += 1;
      }
      if (prioritized) queues.rebalance();

      EpochRecord r;
      r.epoch = epoch + 1;
      r.episodes_seen = (epoch + 1) * config.episodes_per_epoch;
      r.success_rate = evaluate(env, *q, config.eval_episodes, eval_rng);
      r.mean_abs_td = td_count ? td_sum / static_cast<double>(td_count) : 0.0;
      r.actual_alternate_ratio = actual_alternate_ratio(actual, alternate);
      r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      records.push_back(r);
      if (options.stop_at_success && r.success_rate >= *options.stop_at_success) break;
    }
  }

  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    write_text(*options.out_dir / csv_file_name(config), records_csv(config, records));
    if (options.dump_q_table) {
      dump_q_table(static_cast<const TabularQ&>(*q),
                   (*options.out_dir / (csv_file_name(config) + ".qtable.csv")).string());
    }
  }
  return records;
}

std::string records_csv(const ExperimentConfig& config, const std::vector<EpochRecord>& records) {
  std::string out;
  if (config.algo == Algo::hpg) {
    out = "iteration,success_rate,grad_norm,est_variance\n";
    for (const auto& r : records) {
      out += std::to_string(r.epoch) + ',' + format_number(r.success_rate) + ',' + format_number(r.grad_norm) + ',' +
             format_number(r.est_variance) + '\n';
    }
    return out;
  }
  out = "epoch,episodes_seen,success_rate,mean_abs_td,actual_alternate_ratio";
  out += config.log_wall_time ? ",wall_time_s\n" : "\n";
  for (const auto& r : records) {
    out += std::to_string(r.epoch) + ',' + std::to_string(r.episodes_seen) + ',' + format_number(r.success_rate) +
           ',' + format_number(r.mean_abs_td) + ',' + format_number(r.actual_alternate_ratio);
    if (config.log_wall_time) out += ',' + format_number(r.wall_time_s);
    out += '\n';
  }
  return out;
}

std::string csv_file_name(const ExperimentConfig& config) {
  static constexpr const char* kAlgo[] = {"q_vanilla", "her", "hper", "hpg"};
  static constexpr const char* kStrategy[] = {"uniform_her", "two_queues", "single_queue"};
  std::string name = kAlgo[static_cast<int>(config.algo)];
  if (config.algo == Algo::hper) name += std::string("_") + kStrategy[static_cast<int>(config.strategy)];
  std::string env = config.env;
  std::replace(env.begin(), env.end(), ':', '-');
  return name + "_" + env + "_seed" + std::to_string(config.seed) + ".csv";
}

long epochs_to_threshold(const std::vector<EpochRecord>& records, double threshold) {
  for (const auto& r : records) {
    if (r.success_rate >= threshold) return static_cast<long>(r.epoch);
  }
  return -1;
}

double median_epochs(std::vector<long> epochs) {
  if (epochs.empty()) throw std::invalid_argument("median of no runs");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> v;
  for (const long e : epochs) v.push_back(e < 0 ? inf : static_cast<double>(e));
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  if (v.size() % 2 == 1) return v[m];
  if (std::isinf(v[m - 1]) || std::isinf(v[m])) return inf;
  return 0.5 * (v[m - 1] + v[m]);
}

ComparisonReport compare_strategies(const ExperimentConfig& a, const ExperimentConfig& b,
                                    const std::vector<std::uint64_t>& seeds, double threshold,
                                    const std::optional<std::filesystem::path>& out_csv) {
  if (seeds.empty()) throw std::invalid_argument("compare needs at least one seed");
  validate(a);
  validate(b);
  ComparisonReport report;
  report.seeds = seeds;
  RunOptions opts;
  opts.stop_at_success = threshold;
  for (const auto seed : seeds) {
    ExperimentConfig ca = a;
    ExperimentConfig cb = b;
    ca.seed = seed;
    cb.seed = seed;
    const long ea = epochs_to_threshold(run_experiment(ca, opts), threshold);
    const long eb = epochs_to_threshold(run_experiment(cb, opts), threshold);
    report.epochs_a.push_back(ea);
    report.epochs_b.push_back(eb);
    const auto key = [](long e) { return e < 0 ? std::numeric_limits<long>::max() : e; };
    if (key(ea) < key(eb)) {
      ++report.wins_a;
    } else if (key(eb) < key(ea)) {
      ++report.wins_b;
    } else {
      ++report.ties;
    }
  }
  report.median_a = median_epochs(report.epochs_a);
  report.median_b = median_epochs(report.epochs_b);
  if (out_csv) {
    if (out_csv->has_parent_path()) std::filesystem::create_directories(out_csv->parent_path());
    write_text(*out_csv, comparison_csv(report));
  }
  return report;
}

std::string comparison_csv(const ComparisonReport& report) {
  std::string out = "seed,epochs_a,epochs_b\n";
  for (std::size_t i = 0; i < report.seeds.size(); ++i) {
    out += std::to_string(report.seeds[i]) + ',' + std::to_string(report.epochs_a[i]) + ',' +
           std::to_string(report.epochs_b[i]) + '\n';
  }
  return out;
}

}  // namespace hindsight
