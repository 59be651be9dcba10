#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hindsight/agent.hpp"
#include "hindsight/hpg.hpp"
#include "hindsight/replay.hpp"

namespace hindsight {

enum class Algo { q_vanilla, her, hper, hpg };
enum class QFunctionKind { tabular, mlp };

struct ExperimentConfig {
  std::string env = "bitflip:4";
  Algo algo = Algo::her;
  Strategy strategy = Strategy::single_queue;  // hper only
  AnnealSchedule replay_k = AnnealSchedule::constant(4.0);
  std::size_t batch_size = 64;
  std::size_t n_batches = 20;
  std::size_t epochs = 10;
  std::size_t episodes_per_epoch = 50;
  GoalCountMode goal_count_mode = GoalCountMode::non_uniform;
  RewardMode reward_mode = RewardMode::plus_one_zero;
  TdMode td_mode = TdMode::max_action;
  std::optional<AnnealSchedule> beta_schedule;  // defaults to linear 0.4 -> 1.0 over all learning steps
  double gamma = 0.98;
  AnnealSchedule epsilon = AnnealSchedule::constant(0.2);
  double learning_rate = 0.5;
  std::size_t buffer_capacity = 100000;
  std::uint64_t seed = 1;

  QFunctionKind q_function = QFunctionKind::tabular;
  std::size_t hidden_units = 256;
  std::size_t eval_episodes = 100;
  double alpha = 1.0;
  HpgMode hpg_mode = HpgMode::plain;
  bool log_wall_time = false;

  // Effective beta schedule (explicit or the default).
  AnnealSchedule beta() const;
};

// Parses and validates a JSON object with snake_case keys mirroring ExperimentConfig.
// Unknown keys and incompatible combinations throw std::invalid_argument.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
void validate(const ExperimentConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t episodes_seen = 0;
  double success_rate = 0.0;
  double mean_abs_td = 0.0;
  double actual_alternate_ratio = 0.0;
  double wall_time_s = 0.0;
  // Learning-curve extras for hpg runs.
  double grad_norm = 0.0;
  double est_variance = 0.0;
};

struct RunOptions {
  // Stop after the first epoch whose success rate reaches this level.
  std::optional<double> stop_at_success;
  // Directory for the CSV log (and Q-table dump). Nothing is written when unset.
  std::optional<std::filesystem::path> out_dir;
  bool dump_q_table = false;
  // Invoked on every sampled learning batch (tests use it to audit composition).
  std::function<void(std::span<const QueueSample>)> on_prioritized_batch;
};

std::vector<EpochRecord> run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// CSV text for a run's records (header included).
std::string records_csv(const ExperimentConfig& config, const std::vector<EpochRecord>& records);
std::string csv_file_name(const ExperimentConfig& config);

// First epoch whose success rate reaches `threshold`, or -1.
long epochs_to_threshold(const std::vector<EpochRecord>& records, double threshold);

struct ComparisonReport {
  std::vector<std::uint64_t> seeds;
  std::vector<long> epochs_a;  // -1 = never reached
  std::vector<long> epochs_b;
  double median_a = 0.0;  // +inf when the median run never reached the threshold
  double median_b = 0.0;
  std::size_t wins_a = 0;
  std::size_t wins_b = 0;
  std::size_t ties = 0;
};

double median_epochs(std::vector<long> epochs);

ComparisonReport compare_strategies(const ExperimentConfig& a, const ExperimentConfig& b,
                                    const std::vector<std::uint64_t>& seeds, double threshold,
                                    const std::optional<std::filesystem::path>& out_csv = std::nullopt);

std::string comparison_csv(const ComparisonReport& report);

struct BenchRow {
  std::size_t structure_size = 0;
  std::string build_mode;  // "scratch" or "incremental"
  std::int64_t wall_time_ns = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::int64_t scratch_ns = 0;
  std::int64_t incremental_ns = 0;
  bool identical = true;
  std::size_t tables_compared = 0;
  double speedup() const;
};

BenchReport bench_sampler(std::size_t max_size, std::size_t batch_size, std::size_t growth_step, double alpha = 1.0);
std::string bench_csv(const BenchReport& report);

// Renders success-rate learning curves from a CSV log as an SVG line chart.
std::string plot_svg(const std::string& csv_text);
void plot(const std::filesystem::path& csv_path, const std::filesystem::path& svg_path);

}  // namespace hindsight
