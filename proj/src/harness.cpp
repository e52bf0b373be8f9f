#include "ddpgwb/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <deque>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "ddpgwb/errors.hpp"

namespace ddpgwb::harness {

namespace fs = std::filesystem;
using agent::Variant;
using kinesim::ActionVector;
using kinesim::Observation;
using kinesim::TaskKind;

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError(fmt::format("config key '{}': '{}' is not a number", key, v));
  return out;
}

std::int64_t parse_int(std::string_view key, std::string_view v) {
  std::int64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(fmt::format("config key '{}': '{}' is not an integer", key, v));
  return out;
}

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(fmt::format("config key '{}': '{}' is not an unsigned integer", key, v));
  return out;
}

int parse_int32(std::string_view key, std::string_view v) {
  const std::int64_t x = parse_int(key, v);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
    throw ConfigError(fmt::format("config key '{}': {} is out of range", key, v));
  return static_cast<int>(x);
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(fmt::format("config key '{}': '{}' is not a boolean", key, v));
}

std::vector<int> parse_widths(std::string_view key, std::string_view v) {
  std::vector<int> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(parse_int32(key, trim(v.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  if (out.empty()) throw ConfigError(fmt::format("config key '{}': empty layer list", key));
  return out;
}

std::string join_widths(const std::vector<int>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
  return s;
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

std::string opt(const std::optional<double>& v) { return v ? fmt::format("{:.10g}", *v) : std::string(); }

struct Streams {
  Rng init, env, explore, replay, eval, final_eval, final_policy, demos;

  explicit Streams(std::uint64_t seed) {
    const Rng master(seed);
    init = master.split("init");
    env = master.split("env");
    explore = master.split("explore");
    replay = master.split("replay");
    eval = master.split("eval");
    final_eval = master.split("final-eval");
    final_policy = master.split("final-eval-policy");
    demos = master.split("demos");
  }
};

}  // namespace

// ---------------------------------------------------------------------------

void ExperimentConfig::set_variant(Variant v) {
  variant = v;
  agent.apply_variant(v);
}

void ExperimentConfig::validate() const {
  if (total_env_steps <= 0) throw ConfigError("total_env_steps must be positive");
  if (eval_every <= 0) throw ConfigError("eval_every must be positive");
  if (eval_episodes <= 0) throw ConfigError("eval_episodes must be positive");
  if (final_eval_episodes <= 0) throw ConfigError("final_eval_episodes must be positive");
  if (horizon != kinesim::kHorizon) throw ConfigError("horizon is fixed at 100");
  if (demo_count <= 0) throw ConfigError("demo_count must be positive");
  agent.validate();
}

std::string ExperimentConfig::canonical() const {
  const agent::AgentConfig& a = agent;
  std::string s;
  auto line = [&](std::string_view k, const std::string& v) { s += fmt::format("{} = {}\n", k, v); };
  auto flag = [](bool b) { return std::string(b ? "true" : "false"); };
  line("task", std::string(kinesim::to_string(task)));
  line("variant", std::string(agent::to_string(variant)));
  line("seed", std::to_string(seed));
  line("total_env_steps", std::to_string(total_env_steps));
  line("eval_every", std::to_string(eval_every));
  line("eval_episodes", std::to_string(eval_episodes));
  line("final_eval_episodes", std::to_string(final_eval_episodes));
  line("horizon", std::to_string(horizon));
  line("demo_count", std::to_string(demo_count));
  line("record_wallclock", flag(record_wallclock));
  line("gamma", num(a.gamma));
  line("tau", num(a.tau));
  line("lambda", num(a.lambda_dpg));
  line("delta", num(a.delta));
  line("batch_n", std::to_string(a.batch_n));
  line("demo_batch_nd", std::to_string(a.demo_batch_nd));
  line("noise_sigma", num(a.noise_sigma));
  line("actor_lr", num(a.actor_lr));
  line("critic_lr", num(a.critic_lr));
  line("buffer_capacity", std::to_string(a.buffer_capacity));
  line("actor_hidden", join_widths(a.actor_hidden));
  line("critic_hidden", join_widths(a.critic_hidden));
  line("initial_epsilon", num(a.initial_epsilon));
  line("use_bb", flag(a.use_bb));
  line("use_mq_argmax", flag(a.use_mq_argmax));
  line("use_bc_loss", flag(a.use_bc_loss));
  line("use_target_actor", flag(a.use_target_actor));
  line("ensemble_mode", flag(a.ensemble_mode));
  line("demo_baseline", flag(a.demo_baseline));
  return s;
}

std::uint64_t ExperimentConfig::hash() const { return hash_name(canonical()); }

ExperimentConfig parse_config_text(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::map<std::string, int> seen;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(fmt::format("config line {}: expected 'key = value'", line_no));
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError(fmt::format("config line {}: missing key", line_no));
    if (seen[key]++) throw ConfigError(fmt::format("config key '{}' given twice", key));
    entries.emplace_back(std::move(key), std::move(value));
  }

  ExperimentConfig c;
  // The variant decides the default flags, so it goes first; explicit flags override it.
  for (const auto& [k, v] : entries) {
    if (k != "variant") continue;
    const auto variant = agent::parse_variant(v);
    if (!variant) throw ConfigError(fmt::format("config key 'variant': unknown variant '{}'", v));
    c.set_variant(*variant);
  }
  agent::AgentConfig& a = c.agent;
  for (const auto& [k, v] : entries) {
    if (k == "variant") continue;
    if (k == "task") {
      const auto task = kinesim::parse_task(v);
      if (!task) throw ConfigError(fmt::format("config key 'task': unknown task '{}'", v));
      c.task = *task;
    } else if (k == "seed") c.seed = parse_u64(k, v);
    else if (k == "total_env_steps") c.total_env_steps = parse_int(k, v);
    else if (k == "eval_every") c.eval_every = parse_int32(k, v);
    else if (k == "eval_episodes") c.eval_episodes = parse_int32(k, v);
    else if (k == "final_eval_episodes") c.final_eval_episodes = parse_int32(k, v);
    else if (k == "horizon") c.horizon = parse_int32(k, v);
    else if (k == "demo_count") c.demo_count = parse_int32(k, v);
    else if (k == "record_wallclock") c.record_wallclock = parse_bool(k, v);
    else if (k == "gamma") a.gamma = parse_double(k, v);
    else if (k == "tau") a.tau = parse_double(k, v);
    else if (k == "lambda") a.lambda_dpg = parse_double(k, v);
    else if (k == "delta") a.delta = parse_double(k, v);
    else if (k == "batch_n") a.batch_n = parse_int32(k, v);
    else if (k == "demo_batch_nd") a.demo_batch_nd = parse_int32(k, v);
    else if (k == "noise_sigma") a.noise_sigma = parse_double(k, v);
    else if (k == "actor_lr") a.actor_lr = parse_double(k, v);
    else if (k == "critic_lr") a.critic_lr = parse_double(k, v);
    else if (k == "buffer_capacity") a.buffer_capacity = parse_int32(k, v);
    else if (k == "actor_hidden") a.actor_hidden = parse_widths(k, v);
    else if (k == "critic_hidden") a.critic_hidden = parse_widths(k, v);
    else if (k == "initial_epsilon") a.initial_epsilon = parse_double(k, v);
    else if (k == "use_bb") a.use_bb = parse_bool(k, v);
    else if (k == "use_mq_argmax") a.use_mq_argmax = parse_bool(k, v);
    else if (k == "use_bc_loss") a.use_bc_loss = parse_bool(k, v);
    else if (k == "use_target_actor") a.use_target_actor = parse_bool(k, v);
    else if (k == "ensemble_mode") a.ensemble_mode = parse_bool(k, v);
    else if (k == "demo_baseline") a.demo_baseline = parse_bool(k, v);
    else throw ConfigError(fmt::format("unknown config key '{}'", k));
  }
  c.validate();
  return c;
}

ExperimentConfig parse_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

// ---------------------------------------------------------------------------

std::string format_metrics_row(const MetricsRow& r) {
  return fmt::format("{},{},{:.10g},{:.10g},{},{},{},{},{},{}", r.env_step, r.episode_index, r.epsilon,
                     r.train_success_rolling100, opt(r.eval_success), opt(r.mean_q_on_batch), opt(r.critic_loss),
                     opt(r.actor_bc_loss), opt(r.bc_active_fraction), opt(r.wallclock_seconds));
}

std::vector<MetricsRow> read_metrics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open metrics file '{}'", path.string()));
  std::vector<MetricsRow> rows;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& why) {
    throw ConfigError(fmt::format("{}:{}: {}", path.string(), line_no, why));
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != kMetricsHeader) fail("unexpected header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      f.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (f.size() != 10) fail(fmt::format("expected 10 fields, found {}", f.size()));
    auto number = [&](std::string_view v) {
      double out = 0.0;
      const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
      if (ec != std::errc() || p != v.data() + v.size()) fail(fmt::format("bad number '{}'", v));
      return out;
    };
    auto optional = [&](std::string_view v) { return v.empty() ? std::nullopt : std::optional<double>(number(v)); };
    MetricsRow r;
    r.env_step = static_cast<std::int64_t>(number(f[0]));
    r.episode_index = static_cast<std::int64_t>(number(f[1]));
    r.epsilon = number(f[2]);
    r.train_success_rolling100 = number(f[3]);
    r.eval_success = optional(f[4]);
    r.mean_q_on_batch = optional(f[5]);
    r.critic_loss = optional(f[6]);
    r.actor_bc_loss = optional(f[7]);
    r.bc_active_fraction = optional(f[8]);
    r.wallclock_seconds = optional(f[9]);
    if (!rows.empty() && r.env_step < rows.back().env_step) fail("env_step decreases");
    rows.push_back(r);
  }
  if (line_no == 0) fail("empty file");
  return rows;
}

// ---------------------------------------------------------------------------

EvalResult evaluate(TaskKind task, const Policy& policy, int episodes, Rng& env_rng, Rng& policy_rng) {
  EvalResult result;
  for (int e = 0; e < episodes; ++e) {
    auto [state, obs] = kinesim::reset(task, env_rng);
    kinesim::StepResult res;
    do {
      res = kinesim::step(state, policy(obs, policy_rng));
      obs = res.observation;
    } while (!res.done);
    ++result.episodes;
    switch (res.cause) {
      case kinesim::Termination::Success: ++result.successes; break;
      case kinesim::Termination::Tipped: ++result.tipped; break;
      case kinesim::Termination::Timeout: ++result.timeouts; break;
      case kinesim::Termination::Running: break;
    }
  }
  return result;
}

std::string_view to_string(PolicySource source) {
  switch (source) {
    case PolicySource::LearnedActor: return "learned-actor";
    case PolicySource::Sequential: return "sequential";
    case PolicySource::NoisySequential: return "noisy-sequential";
    case PolicySource::MacroEnsemble: return "macro-ensemble";
  }
  return "?";
}

ActionVector actor_action(const funcapprox::MlpNetwork& actor, const Observation& obs) {
  return actor.forward(agent::encode_observations(funcapprox::Matrix(obs))).col(0);
}

Policy make_policy(PolicySource source, TaskKind task, const funcapprox::MlpNetwork* actor, double noise_sigma) {
  switch (source) {
    case PolicySource::LearnedActor: {
      if (actor == nullptr) throw ContractViolation("make_policy: learned actor requested without a network");
      return [net = *actor](const Observation& obs, Rng&) { return actor_action(net, obs); };
    }
    case PolicySource::Sequential:
      return [c = controllers::SequentialController(task)](const Observation& obs, Rng&) { return c.act(obs); };
    case PolicySource::NoisySequential:
      return [c = controllers::SequentialController(task), noise_sigma](const Observation& obs, Rng& rng) {
        ActionVector a = c.act(obs);
        for (int i = 0; i < kinesim::kActionDim; ++i) a[i] += noise_sigma * rng.normal();
        return ActionVector(a.cwiseMax(-1.0).cwiseMin(1.0));
      };
    case PolicySource::MacroEnsemble:
      return [c = controllers::MacroEnsembleController(controllers::make_primitive_ensemble(task))](
                 const Observation& obs, Rng& rng) { return c.act(obs, rng); };
  }
  throw ContractViolation("make_policy: unknown source");
}

EvalResult run_evaluation(PolicySource source, TaskKind task, int episodes, std::uint64_t seed,
                          const funcapprox::MlpNetwork* actor) {
  const Rng root(seed);
  Rng env = root.split("eval-env");
  Rng policy_rng = root.split("eval-policy");
  return evaluate(task, make_policy(source, task, actor), episodes, env, policy_rng);
}

// ---------------------------------------------------------------------------

TrainingSummary run_training(const ExperimentConfig& config, const fs::path& out_dir) {
  config.validate();
  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count(); };

  fs::create_directories(out_dir);
  {
    std::ofstream cfg(out_dir / "config.txt");
    cfg << config.canonical();
  }
  std::ofstream metrics(out_dir / "metrics.csv");
  if (!metrics) throw ConfigError(fmt::format("cannot write to '{}'", out_dir.string()));
  metrics << kMetricsHeader << '\n';

  Streams rng(config.seed);
  const agent::AgentConfig& acfg = config.agent;
  agent::DdpgwbAgent learner(acfg, rng.init);

  const controllers::ControllerSet members = acfg.ensemble_mode ? controllers::make_primitive_ensemble(config.task)
                                                                : controllers::make_single(config.task);
  const int base_count = acfg.demo_baseline ? 0 : static_cast<int>(members.size());
  auto base_actions = [&](const Observation& obs) {
    if (base_count == 0) return std::vector<ActionVector>{};
    return controllers::ensemble_action_set(members, obs).candidates;
  };

  agent::ReplayBuffer buffer(acfg.buffer_capacity, base_count);
  std::optional<agent::ReplayBuffer> demo_buffer;
  if (acfg.demo_baseline) {
    const controllers::SequentialController demo_controller(config.task);
    demo_buffer = agent::to_buffer(
        agent::collect_demonstrations(config.task, demo_controller, config.demo_count, rng.demos));
  }

  TrainingSummary summary;
  std::deque<bool> recent;
  int recent_successes = 0;
  double sum_q = 0.0, sum_critic = 0.0, sum_bc = 0.0, sum_frac = 0.0;
  int n_updates = 0;

  auto write_row = [&](std::int64_t step, std::optional<double> eval) {
    MetricsRow row;
    row.env_step = step;
    row.episode_index = summary.episodes;
    row.epsilon = learner.epsilon();
    row.train_success_rolling100 = recent.empty() ? 0.0 : static_cast<double>(recent_successes) / recent.size();
    row.eval_success = eval;
    if (n_updates > 0) {
      row.mean_q_on_batch = sum_q / n_updates;
      row.critic_loss = sum_critic / n_updates;
      row.actor_bc_loss = sum_bc / n_updates;
      row.bc_active_fraction = sum_frac / n_updates;
    }
    if (config.record_wallclock) row.wallclock_seconds = elapsed();
    metrics << format_metrics_row(row) << '\n';
    metrics.flush();
    sum_q = sum_critic = sum_bc = sum_frac = 0.0;
    n_updates = 0;
  };

  const Policy greedy = [&](const Observation& obs, Rng&) { return learner.act(obs); };

  auto [state, obs] = kinesim::reset(config.task, rng.env);
  std::vector<ActionVector> base = base_actions(obs);
  for (std::int64_t step = 1; step <= config.total_env_steps; ++step) {
    const ActionVector a = learner.select_exploration_action(obs, base, rng.explore);
    const kinesim::StepResult res = kinesim::step(state, a);
    std::vector<ActionVector> base_next = base_actions(res.observation);
    buffer.push({obs, a, res.reward, res.observation, res.done}, base, base_next);
    learner.epsilon_decay();

    if (buffer.size() >= acfg.batch_n) {
      const agent::Batch batch = buffer.sample(rng.replay, acfg.batch_n);
      agent::UpdateStats stats;
      try {
        if (demo_buffer) {
          const agent::Batch demo = demo_buffer->sample(rng.replay, acfg.demo_batch_nd);
          stats = learner.train_step(batch, &demo);
        } else {
          stats = learner.train_step(batch);
        }
      } catch (const NumericalFault&) {
        // record where the run stopped before giving up
        write_row(step, std::nullopt);
        throw;
      }
      sum_q += stats.critic.mean_q;
      sum_critic += stats.critic.loss;
      sum_bc += stats.actor.bc_loss;
      sum_frac += stats.actor.bc_active_fraction;
      ++n_updates;
    }

    if (res.done) {
      const bool success = res.cause == kinesim::Termination::Success;
      recent.push_back(success);
      recent_successes += success;
      if (recent.size() > 100) {
        recent_successes -= recent.front();
        recent.pop_front();
      }
      ++summary.episodes;
      write_row(step, std::nullopt);
      std::tie(state, obs) = kinesim::reset(config.task, rng.env);
      base = base_actions(obs);
    } else {
      obs = res.observation;
      base = std::move(base_next);
    }

    if (step % config.eval_every == 0) {
      Rng unused;
      const EvalResult ev = evaluate(config.task, greedy, config.eval_episodes, rng.eval, unused);
      write_row(step, ev.success_rate());
    }
  }

  summary.env_steps = config.total_env_steps;
  summary.updates = learner.update_count();
  {
    Rng layouts = rng.final_eval;
    Rng unused;
    summary.final_eval_success =
        evaluate(config.task, greedy, config.final_eval_episodes, layouts, unused).success_rate();
  }
  {
    Rng layouts = rng.final_eval;
    const PolicySource base_source = acfg.ensemble_mode ? PolicySource::MacroEnsemble : PolicySource::Sequential;
    summary.base_success = evaluate(config.task, make_policy(base_source, config.task), config.final_eval_episodes,
                                    layouts, rng.final_policy)
                               .success_rate();
  }
  {
    std::ofstream ckpt(out_dir / "checkpoint.dwb", std::ios::binary);
    learner.save(ckpt, config.total_env_steps, config.hash());
  }
  summary.wallclock_seconds = elapsed();
  write_summary(out_dir / "summary.json", config, summary);
  return summary;
}

void write_summary(const fs::path& path, const ExperimentConfig& config, const TrainingSummary& s) {
  nlohmann::ordered_json j;
  j["task"] = std::string(kinesim::to_string(config.task));
  j["variant"] = std::string(agent::to_string(config.variant));
  j["seed"] = config.seed;
  j["final_eval_success"] = s.final_eval_success;
  j["final_eval_episodes"] = config.final_eval_episodes;
  j["base_success"] = s.base_success;
  j["env_steps"] = s.env_steps;
  j["episodes"] = s.episodes;
  j["updates"] = s.updates;
  j["wallclock_seconds"] = s.wallclock_seconds;
  j["config_hash"] = fmt::format("{:016x}", config.hash());
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

TrainingSummary read_summary(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open summary '{}'", path.string()));
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    TrainingSummary s;
    s.final_eval_success = j.at("final_eval_success").get<double>();
    s.base_success = j.at("base_success").get<double>();
    s.env_steps = j.at("env_steps").get<std::int64_t>();
    s.episodes = j.at("episodes").get<std::int64_t>();
    s.updates = j.at("updates").get<std::int64_t>();
    s.wallclock_seconds = j.at("wallclock_seconds").get<double>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("summary '{}': {}", path.string(), e.what()));
  }
}

// ---------------------------------------------------------------------------

void emit_plots(const std::vector<fs::path>& metrics_files, const fs::path& out_svg, const PlotOptions& options) {
  if (metrics_files.empty()) throw ConfigError("plot: no metrics files given");
  // step -> eval values, one per run that reported that step
  std::map<std::int64_t, std::vector<double>> points;
  for (const fs::path& f : metrics_files) {
    std::map<std::int64_t, double> run;
    for (const MetricsRow& r : read_metrics(f))
      if (r.eval_success) run[r.env_step] = *r.eval_success;
    for (const auto& [step, v] : run) points[step].push_back(v);
  }
  std::vector<std::int64_t> steps;
  std::vector<double> mean, lo, hi;
  for (const auto& [step, vs] : points) {
    if (vs.size() != metrics_files.size()) continue;  // only steps every run reached
    steps.push_back(step);
    double sum = 0.0;
    for (double v : vs) sum += v;
    mean.push_back(sum / vs.size());
    lo.push_back(*std::min_element(vs.begin(), vs.end()));
    hi.push_back(*std::max_element(vs.begin(), vs.end()));
  }

  constexpr double W = 720, H = 440, left = 70, right = 20, top = 40, bottom = 60;
  const double x_max = steps.empty() ? 1.0 : static_cast<double>(std::max<std::int64_t>(steps.back(), 1));
  auto X = [&](double step) { return left + (W - left - right) * step / x_max; };
  auto Y = [&](double v) { return top + (H - top - bottom) * (1.0 - v); };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      W, H);
  if (!options.title.empty())
    svg += fmt::format("<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
                       W / 2, options.title);
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    svg += fmt::format(
        "<line x1=\"{0}\" y1=\"{1:.2f}\" x2=\"{2}\" y2=\"{1:.2f}\" stroke=\"#dddddd\"/>\n"
        "<text x=\"{3}\" y=\"{4:.2f}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{5:.1f}</text>\n",
        left, Y(v), W - right, left - 6, Y(v) + 4, v);
  }
  for (int i = 0; i <= 5; ++i) {
    const double s = x_max * i / 5.0;
    svg += fmt::format(
        "<text x=\"{:.2f}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{:.0f}k</text>\n",
        X(s), H - bottom + 18, s / 1000.0);
  }
  svg += fmt::format(
      "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">environment steps</text>\n"
      "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
      "transform=\"rotate(-90 16 {})\">success rate</text>\n",
      (left + W - right) / 2, H - 16, (top + H - bottom) / 2, (top + H - bottom) / 2);
  svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", left, top,
                     W - left - right, H - top - bottom);

  if (metrics_files.size() > 1 && !steps.empty()) {
    std::string band;
    for (std::size_t i = 0; i < steps.size(); ++i) band += fmt::format("{:.2f},{:.2f} ", X(steps[i]), Y(hi[i]));
    for (std::size_t i = steps.size(); i-- > 0;) band += fmt::format("{:.2f},{:.2f} ", X(steps[i]), Y(lo[i]));
    svg += fmt::format("<polygon class=\"band\" points=\"{}\" fill=\"#1f77b4\" fill-opacity=\"0.2\" stroke=\"none\"/>\n",
                       band);
  }
  if (!steps.empty()) {
    std::string line;
    for (std::size_t i = 0; i < steps.size(); ++i) line += fmt::format("{:.2f},{:.2f} ", X(steps[i]), Y(mean[i]));
    svg += fmt::format("<polyline class=\"mean\" points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n",
                       line);
  }
  if (options.base_level) {
    svg += fmt::format(
        "<line class=\"base\" x1=\"{0}\" y1=\"{1:.2f}\" x2=\"{2}\" y2=\"{1:.2f}\" stroke=\"#444444\" "
        "stroke-dasharray=\"6,4\" data-level=\"{3:.6g}\"/>\n",
        left, Y(*options.base_level), W - right, *options.base_level);
  }
  svg += "</svg>\n";

  std::ofstream out(out_svg);
  if (!out) throw ConfigError(fmt::format("cannot write '{}'", out_svg.string()));
  out << svg;
}

void write_demos(const fs::path& path, const agent::DemoSet& demos) {
  std::ofstream out(path);
  if (!out) throw ConfigError(fmt::format("cannot write '{}'", path.string()));
  out << "time_step";
  for (int i = 0; i < kinesim::kObservationDim; ++i) out << ",obs" << i;
  for (int i = 0; i < kinesim::kActionDim; ++i) out << ",act" << i;
  out << ",reward,done\n";
  for (const auto& episode : demos.episodes)
    for (std::size_t t = 0; t < episode.size(); ++t) {
      const agent::Transition& tr = episode[t];
      out << kinesim::trajectory_line(static_cast<int>(t), tr.s, tr.a, tr.r, tr.done) << '\n';
    }
}

}  // namespace ddpgwb::harness
