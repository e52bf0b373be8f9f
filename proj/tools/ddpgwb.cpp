#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ddpgwb/errors.hpp"
#include "ddpgwb/harness.hpp"

using namespace ddpgwb;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

kinesim::TaskKind task_arg(const std::string& name) {
  const auto task = kinesim::parse_task(name);
  if (!task) throw ConfigError(fmt::format("unknown task '{}' (stacking, block-cup, cup-cup)", name));
  return *task;
}

harness::PolicySource source_arg(const std::string& name) {
  using harness::PolicySource;
  for (auto s : {PolicySource::LearnedActor, PolicySource::Sequential, PolicySource::NoisySequential,
                 PolicySource::MacroEnsemble})
    if (harness::to_string(s) == name) return s;
  throw ConfigError(fmt::format("unknown policy source '{}'", name));
}

void print_result(std::string_view label, const harness::EvalResult& r) {
  fmt::print("{:<18} success {:.4f}  ({} of {}; tipped {}, timeout {})\n", label, r.success_rate(), r.successes,
             r.episodes, r.tipped, r.timeouts);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DDPG with base controllers: training, evaluation and plotting"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Run one training experiment");
  std::string config_path, task_name, variant_name, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
  train->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  train->add_option("--task", task_name, "stacking | block-cup | cup-cup");
  train->add_option("--variant", variant_name, "full | no-bb | no-mq-arg | no-bc | no-target-actor | ensemble | demo-bc");
  train->add_option("--seed", seed, "master seed");
  train->add_option("--steps", steps, "override total_env_steps");
  train->add_option("--out", out_dir, "output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or a scripted policy");
  std::string checkpoint_path, source_name = "learned-actor";
  int episodes = 200;
  std::uint64_t eval_seed = 0;
  eval->add_option("--checkpoint", checkpoint_path, "DWB1 checkpoint")->check(CLI::ExistingFile);
  eval->add_option("--task", task_name)->required();
  eval->add_option("--episodes", episodes)->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_seed);
  eval->add_option("--source", source_name, "learned-actor | sequential | noisy-sequential | macro-ensemble");

  // collect-demos
  auto* demos = app.add_subcommand("collect-demos", "Record successful scripted-controller episodes");
  int demo_count = 500;
  std::string demo_out;
  std::uint64_t demo_seed = 0;
  demos->add_option("--task", task_name)->required();
  demos->add_option("--count", demo_count)->check(CLI::PositiveNumber);
  demos->add_option("--seed", demo_seed);
  demos->add_option("--out", demo_out)->required();

  // plot
  auto* plot = app.add_subcommand("plot", "Learning-curve SVG from metrics files");
  std::vector<std::string> metrics_files;
  std::string svg_out, title;
  std::optional<double> base_level;
  plot->add_option("--metrics", metrics_files)->required()->check(CLI::ExistingFile);
  plot->add_option("--out", svg_out)->required();
  plot->add_option("--title", title);
  plot->add_option("--base-level", base_level, "dashed reference line");

  // baseline
  auto* baseline = app.add_subcommand("baseline", "Success rates of the scripted controllers on paired layouts");
  baseline->add_option("--task", task_name)->required();
  baseline->add_option("--episodes", episodes)->check(CLI::PositiveNumber);
  baseline->add_option("--seed", eval_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) {
      harness::ExperimentConfig config =
          config_path.empty() ? harness::ExperimentConfig{} : harness::parse_config(config_path);
      if (!task_name.empty()) config.task = task_arg(task_name);
      if (!variant_name.empty()) {
        const auto v = agent::parse_variant(variant_name);
        if (!v) throw ConfigError(fmt::format("unknown variant '{}'", variant_name));
        config.set_variant(*v);
      }
      if (seed) config.seed = *seed;
      if (steps) config.total_env_steps = *steps;
      config.validate();
      const harness::TrainingSummary s = harness::run_training(config, out_dir);
      fmt::print("final eval success {:.4f}, base controller {:.4f}, {} episodes, {} updates, {:.0f} s\n",
                 s.final_eval_success, s.base_success, s.episodes, s.updates, s.wallclock_seconds);
    } else if (*eval) {
      const kinesim::TaskKind task = task_arg(task_name);
      const harness::PolicySource source = source_arg(source_name);
      std::optional<agent::DdpgwbAgent::Checkpoint> ckpt;
      if (source == harness::PolicySource::LearnedActor) {
        if (checkpoint_path.empty()) throw ConfigError("eval: --checkpoint is required for the learned actor");
        std::ifstream in(checkpoint_path, std::ios::binary);
        ckpt = agent::DdpgwbAgent::load(in);
      }
      const auto r = harness::run_evaluation(source, task, episodes, eval_seed, ckpt ? &ckpt->actor : nullptr);
      print_result(harness::to_string(source), r);
    } else if (*demos) {
      const kinesim::TaskKind task = task_arg(task_name);
      Rng rng(demo_seed);
      const controllers::SequentialController controller(task);
      const agent::DemoSet set = agent::collect_demonstrations(task, controller, demo_count, rng);
      harness::write_demos(demo_out, set);
      fmt::print("{} demos, {} transitions, {} attempts\n", set.episodes.size(), set.transition_count(),
                 set.attempts);
    } else if (*plot) {
      std::vector<std::filesystem::path> files(metrics_files.begin(), metrics_files.end());
      harness::emit_plots(files, svg_out, {title, base_level});
    } else if (*baseline) {
      const kinesim::TaskKind task = task_arg(task_name);
      using harness::PolicySource;
      for (auto s : {PolicySource::Sequential, PolicySource::NoisySequential, PolicySource::MacroEnsemble})
        print_result(harness::to_string(s), harness::run_evaluation(s, task, episodes, eval_seed));
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalFault& e) {
    std::cerr << "numerical fault: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
