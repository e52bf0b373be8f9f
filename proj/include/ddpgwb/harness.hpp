#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ddpgwb/agent.hpp"
#include "ddpgwb/controllers.hpp"
#include "ddpgwb/kinesim.hpp"

// Experiment plumbing: configuration, the training loop, evaluation,
// metrics files and learning-curve plots.
namespace ddpgwb::harness {

struct ExperimentConfig {
  kinesim::TaskKind task = kinesim::TaskKind::Stacking;
  agent::Variant variant = agent::Variant::Full;
  std::uint64_t seed = 0;
  std::int64_t total_env_steps = 150000;
  int eval_every = 2000;
  int eval_episodes = 20;
  int final_eval_episodes = 200;
  int horizon = kinesim::kHorizon;
  int demo_count = 500;
  bool record_wallclock = false;
  agent::AgentConfig agent;

  /// Sets the variant and the agent flags that go with it.
  void set_variant(agent::Variant v);
  void validate() const;
  /// Every setting as "key = value" lines in a fixed order; parse_config reads it back.
  std::string canonical() const;
  std::uint64_t hash() const;
};

/// Flat "key = value" lines, '#' starts a comment. Unknown keys and bad values
/// throw ConfigError naming the key; missing keys keep their defaults.
ExperimentConfig parse_config_text(std::string_view text);
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Fixed column order of the metrics file.
inline constexpr std::string_view kMetricsHeader =
    "env_step,episode_index,epsilon,train_success_rolling100,eval_success,mean_q_on_batch,critic_loss,"
    "actor_bc_loss,bc_active_fraction,wallclock_seconds";

struct MetricsRow {
  std::int64_t env_step = 0;
  std::int64_t episode_index = 0;
  double epsilon = 0.0;
  double train_success_rolling100 = 0.0;
  std::optional<double> eval_success;
  std::optional<double> mean_q_on_batch;
  std::optional<double> critic_loss;
  std::optional<double> actor_bc_loss;
  std::optional<double> bc_active_fraction;
  std::optional<double> wallclock_seconds;
};

std::string format_metrics_row(const MetricsRow& row);
/// Throws ConfigError naming the file and line on malformed input.
std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);

using Policy = std::function<kinesim::ActionVector(const kinesim::Observation&, Rng&)>;

struct EvalResult {
  int episodes = 0;
  int successes = 0;
  int tipped = 0;
  int timeouts = 0;
  double success_rate() const { return episodes > 0 ? static_cast<double>(successes) / episodes : 0.0; }
};

/// Rolls out `policy` for `episodes` episodes. Layouts come from `env_rng`,
/// any policy randomness from `policy_rng`, so two policies given equal
/// `env_rng` states are scored on the same layouts.
EvalResult evaluate(kinesim::TaskKind task, const Policy& policy, int episodes, Rng& env_rng, Rng& policy_rng);

enum class PolicySource { LearnedActor, Sequential, NoisySequential, MacroEnsemble };

std::string_view to_string(PolicySource source);

/// Policy for one of the sources; `actor` is only needed for LearnedActor.
Policy make_policy(PolicySource source, kinesim::TaskKind task, const funcapprox::MlpNetwork* actor = nullptr,
                   double noise_sigma = 0.1);

/// Evaluation on streams split from `seed`, disjoint from any training stream.
EvalResult run_evaluation(PolicySource source, kinesim::TaskKind task, int episodes, std::uint64_t seed,
                          const funcapprox::MlpNetwork* actor = nullptr);

/// Greedy action of a bare actor network.
kinesim::ActionVector actor_action(const funcapprox::MlpNetwork& actor, const kinesim::Observation& obs);

struct TrainingSummary {
  double final_eval_success = 0.0;
  double base_success = 0.0;  // scripted controller (macro for ensembles) on the final-eval layouts
  std::int64_t env_steps = 0;
  std::int64_t episodes = 0;
  std::int64_t updates = 0;
  double wallclock_seconds = 0.0;
};

/// Writes metrics.csv, checkpoint.dwb, config.txt and summary.json into
/// `out_dir`. Rows are flushed as they are produced, so a run that aborts
/// with NumericalFault leaves its partial metrics behind.
TrainingSummary run_training(const ExperimentConfig& config, const std::filesystem::path& out_dir);

void write_summary(const std::filesystem::path& path, const ExperimentConfig& config, const TrainingSummary& s);
/// Reads the numeric fields back from summary.json.
TrainingSummary read_summary(const std::filesystem::path& path);

struct PlotOptions {
  std::string title;
  std::optional<double> base_level;  // dashed reference line
};

/// Mean eval-success line with a min-max band across the given runs.
void emit_plots(const std::vector<std::filesystem::path>& metrics_files, const std::filesystem::path& out_svg,
                const PlotOptions& options = {});

/// Writes demo episodes as trajectory lines under a header row.
void write_demos(const std::filesystem::path& path, const agent::DemoSet& demos);

}  // namespace ddpgwb::harness
