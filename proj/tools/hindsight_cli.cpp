#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "hindsight/harness.hpp"

using namespace hindsight;

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad seed '" + item + "'");
    seeds.push_back(v);
  }
  if (seeds.empty()) throw std::invalid_argument("--seeds needs at least one seed");
  return seeds;
}

std::string show_epochs(double median) { return std::isinf(median) ? "never" : std::to_string(median); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hindsight replay and policy-gradient experiments"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Run one configured experiment");
  std::string config_path;
  std::string out_dir;
  bool dump_q = false;
  train->add_option("--config", config_path, "JSON experiment config")->required();
  train->add_option("--out", out_dir, "Directory for the CSV log");
  train->add_flag("--dump-q", dump_q, "Also write the Q table (tabular only)");

  auto* compare = app.add_subcommand("compare", "Epochs-to-threshold over seeds for two configs");
  std::string config_a, config_b, seeds_text = "1,2,3,4,5", compare_out;
  double threshold = 0.95;
  compare->add_option("--config-a", config_a)->required();
  compare->add_option("--config-b", config_b)->required();
  compare->add_option("--seeds", seeds_text, "Comma-separated seeds");
  compare->add_option("--threshold", threshold, "Success level");
  compare->add_option("--out", compare_out, "Comparison CSV path");

  auto* bench = app.add_subcommand("bench", "Time scratch vs incremental bucket tables");
  std::size_t max_size = 100000, batch = 256, step = 100;
  std::string bench_out;
  bench->add_option("--max-size", max_size)->check(CLI::PositiveNumber);
  bench->add_option("--batch", batch)->check(CLI::PositiveNumber);
  bench->add_option("--step", step)->check(CLI::PositiveNumber);
  bench->add_option("--out", bench_out, "CSV path (default: stdout)");

  auto* plot_cmd = app.add_subcommand("plot", "Render success-rate curves as SVG");
  std::string plot_in, plot_out;
  plot_cmd->add_option("--in", plot_in)->required();
  plot_cmd->add_option("--out", plot_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const ExperimentConfig config = load_config(config_path);
      RunOptions opts;
      if (!out_dir.empty()) opts.out_dir = out_dir;
      opts.dump_q_table = dump_q;
      const auto records = run_experiment(config, opts);
      if (out_dir.empty()) std::cout << records_csv(config, records);
    } else if (*compare) {
      const auto a = load_config(config_a);
      const auto b = load_config(config_b);
      std::optional<std::filesystem::path> out;
      if (!compare_out.empty()) out = compare_out;
      const auto report = compare_strategies(a, b, parse_seeds(seeds_text), threshold, out);
      std::cout << comparison_csv(report);
      std::cout << "median_a=" << show_epochs(report.median_a) << " median_b=" << show_epochs(report.median_b)
                << " wins_a=" << report.wins_a << " wins_b=" << report.wins_b << " ties=" << report.ties << '\n';
    } else if (*bench) {
      const auto report = bench_sampler(max_size, batch, step);
      if (bench_out.empty()) {
        std::cout << bench_csv(report);
      } else {
        std::ofstream(bench_out) << bench_csv(report);
      }
      std::cerr << "scratch_ns=" << report.scratch_ns << " incremental_ns=" << report.incremental_ns
                << " speedup=" << report.speedup() << " identical=" << (report.identical ? "yes" : "no") << '\n';
    } else if (*plot_cmd) {
      plot(plot_in, plot_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
