#include "criteria.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <unistd.h>

#include <fmt/format.h>

#include "ddpgwb/harness.hpp"
#include "oracles.hpp"

namespace criteria {

using namespace ddpgwb;
using agent::AgentConfig;
using agent::Batch;
using agent::DdpgwbAgent;
using funcapprox::Activation;
using funcapprox::Matrix;
using funcapprox::MlpNetwork;
using funcapprox::Vector;
using kinesim::ActionVector;
using kinesim::Observation;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Matrix stack(const Matrix& top, const Matrix& bottom) {
  Matrix m(top.rows() + bottom.rows(), top.cols());
  m << top, bottom;
  return m;
}

ActionVector random_action(Rng& rng) {
  ActionVector a;
  for (int i = 0; i < kinesim::kActionDim; ++i) a[i] = rng.uniform(-1.0, 1.0);
  return a;
}

bool same_bits(const Vector& a, const Vector& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

bool same_bits(const MlpNetwork& a, const MlpNetwork& b) { return same_bits(a.flat_parameters(), b.flat_parameters()); }

bool same_bits(const funcapprox::AdamState& a, const funcapprox::AdamState& b) {
  if (a.step_count != b.step_count) return false;
  for (std::size_t l = 0; l < a.m_weights.size(); ++l) {
    if (!same_bits(Vector(a.m_weights[l].reshaped()), Vector(b.m_weights[l].reshaped()))) return false;
    if (!same_bits(Vector(a.v_weights[l].reshaped()), Vector(b.v_weights[l].reshaped()))) return false;
    if (!same_bits(a.m_bias[l], b.m_bias[l]) || !same_bits(a.v_bias[l], b.v_bias[l])) return false;
  }
  return true;
}

// Q of one (encoded state, action) pair through the loop oracle.
double oracle_q(const MlpNetwork& critic, const Vector& es, const ActionVector& a) {
  std::vector<double> in = oracle::to_std(es);
  for (int i = 0; i < kinesim::kActionDim; ++i) in.push_back(a[i]);
  return oracle::forward(critic, in)[0];
}

ActionVector oracle_action(const MlpNetwork& actor, const Vector& es) {
  const auto out = oracle::forward(actor, oracle::to_std(es));
  return Eigen::Map<const ActionVector>(out.data());
}

// L_BC - lambda * J written out from its definition.
double actor_objective(const AgentConfig& cfg, const MlpNetwork& actor, const MlpNetwork& critic, const Batch& b,
                       const Batch* demo) {
  const Matrix es = agent::encode_observations(b.s);
  const Matrix a = actor.forward(es);
  const double J = critic.forward(stack(es, a)).mean();
  if (!cfg.use_bc_loss) return -J;
  double bc = 0.0;
  if (demo != nullptr) {
    const Matrix ed = agent::encode_observations(demo->s);
    const Matrix ad = actor.forward(ed);
    const Matrix qa = critic.forward(stack(ed, ad)), qd = critic.forward(stack(ed, demo->a));
    for (int i = 0; i < demo->size(); ++i)
      if (qd(0, i) > qa(0, i)) bc += (ad.col(i) - demo->a.col(i)).squaredNorm();
    bc /= demo->size();
  } else {
    const Matrix q = critic.forward(stack(es, a));
    std::vector<Matrix> qk;
    for (const Matrix& base : b.base) qk.push_back(critic.forward(stack(es, base)));
    for (int i = 0; i < b.size(); ++i) {
      int best = 0;
      for (int k = 1; k < b.base_count(); ++k)
        if (qk[k](0, i) > qk[best](0, i)) best = k;
      if (qk[best](0, i) > q(0, i)) bc += (a.col(i) - b.base[best].col(i)).squaredNorm();
    }
    bc /= b.size();
  }
  return bc - cfg.lambda_dpg * J;
}

double actor_gradient_error(const AgentConfig& cfg, Rng& rng, int n) {
  DdpgwbAgent ag(cfg, rng);
  scramble(ag, rng);
  const Batch b = random_batch(rng, n, cfg.demo_baseline ? 0 : (cfg.ensemble_mode ? 3 : 1));
  std::optional<Batch> demo;
  if (cfg.demo_baseline) demo = random_batch(rng, n / 2, 0);
  const Batch* d = demo ? &*demo : nullptr;
  const auto [stats, grad] = ag.actor_loss_gradient(b, d);
  const Vector numeric = oracle::finite_difference(
      [&](const Vector& p) {
        MlpNetwork actor = ag.actor();
        actor.set_flat_parameters(p);
        return actor_objective(cfg, actor, ag.critic(), b, d);
      },
      ag.actor().flat_parameters());
  return oracle::relative_error(grad.flatten(), numeric);
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string pct(double v) { return fmt::format("{:.1f}%", 100.0 * v); }

}  // namespace

// ---------------------------------------------------------------------------

AgentConfig small_config(int width) {
  AgentConfig cfg;
  cfg.actor_hidden = {width, width};
  cfg.critic_hidden = {width, width};
  return cfg;
}

Observation random_observation(Rng& rng) {
  Observation o = Observation::Zero();
  o[0] = rng.uniform(-0.3, 0.3);
  o[1] = rng.uniform(-0.3, 0.3);
  o[2] = rng.uniform(0.0, 0.5);
  o[5] = rng.uniform(-1.5, 1.5);
  o[6] = rng.uniform();
  o[7] = rng.uniform() < 0.5 ? 1.0 : 0.0;
  for (int k = 0; k < 2; ++k) {
    o[8 + 6 * k] = rng.uniform(-0.2, 0.2);
    o[9 + 6 * k] = rng.uniform(-0.2, 0.2);
    o[10 + 6 * k] = rng.uniform(0.0, 0.2);
    o[13 + 6 * k] = rng.uniform(-0.8, 0.8);
  }
  return o;
}

Batch random_batch(Rng& rng, int n, int base_count, double done_rate) {
  Batch b;
  b.s.resize(kinesim::kObservationDim, n);
  b.s_next.resize(kinesim::kObservationDim, n);
  b.a.resize(kinesim::kActionDim, n);
  b.r.resize(n);
  b.done.resize(n);
  b.base.assign(base_count, Matrix(kinesim::kActionDim, n));
  b.base_next.assign(base_count, Matrix(kinesim::kActionDim, n));
  for (int i = 0; i < n; ++i) {
    b.s.col(i) = random_observation(rng);
    b.s_next.col(i) = random_observation(rng);
    b.a.col(i) = random_action(rng);
    const bool done = rng.uniform() < done_rate;
    b.done[i] = done ? 1.0 : 0.0;
    b.r[i] = done && rng.uniform() < 0.5 ? 1.0 : 0.0;
    for (int k = 0; k < base_count; ++k) {
      b.base[k].col(i) = random_action(rng);
      b.base_next[k].col(i) = random_action(rng);
    }
  }
  return b;
}

void scramble(DdpgwbAgent& ag, Rng& rng) {
  auto redraw = [&](MlpNetwork& net) {
    net = MlpNetwork::random(net.dims(), net.hidden_activation(), net.output_activation(), rng, 1.0);
  };
  redraw(ag.actor());
  redraw(ag.critic());
  redraw(ag.target_actor());
  redraw(ag.target_critic());
}

double GradientReport::worst() const {
  return std::max({critic, actor_full, actor_ensemble, actor_demo, actor_no_bc});
}

GradientReport gradient_check(std::uint64_t seed, int width) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(seed);
  GradientReport rep;
  const int n = 16;
  {
    DdpgwbAgent ag(small_config(width), rng);
    scramble(ag, rng);
    const Batch b = random_batch(rng, n, 1);
    Vector y(n);
    for (int i = 0; i < n; ++i) y[i] = rng.uniform();
    const auto [stats, grad] = ag.critic_loss_gradient(b, y);
    const Matrix input = stack(agent::encode_observations(b.s), b.a);
    const Vector numeric = oracle::finite_difference(
        [&](const Vector& p) {
          MlpNetwork critic = ag.critic();
          critic.set_flat_parameters(p);
          return (critic.forward(input) - y.transpose()).squaredNorm() / n;
        },
        ag.critic().flat_parameters());
    rep.critic = oracle::relative_error(grad.flatten(), numeric);
  }
  AgentConfig cfg = small_config(width);
  rep.actor_full = actor_gradient_error(cfg, rng, n);
  cfg.apply_variant(agent::Variant::Ensemble);
  rep.actor_ensemble = actor_gradient_error(cfg, rng, n);
  cfg.apply_variant(agent::Variant::DemoBC);
  rep.actor_demo = actor_gradient_error(cfg, rng, n);
  cfg.apply_variant(agent::Variant::NoBC);
  rep.actor_no_bc = actor_gradient_error(cfg, rng, n);
  rep.seconds = seconds_since(t0);
  return rep;
}

TargetReport target_dominance(int cases, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(seed);
  AgentConfig with_bb = small_config(16), without_bb = small_config(16);
  without_bb.use_bb = false;
  DdpgwbAgent bb(with_bb, rng), plain(without_bb, rng);
  TargetReport rep;
  const int n = 4;
  for (int c = 0; c < cases; ++c) {
    scramble(bb, rng);
    plain.target_actor() = bb.target_actor();
    plain.target_critic() = bb.target_critic();
    const Batch b = random_batch(rng, n, 3);

    Batch single = b;
    single.base_next.resize(1);
    const Vector y4 = bb.compute_bootstrap_targets(single);
    const Vector y3 = plain.compute_bootstrap_targets(single);
    const Matrix es = agent::encode_observations(b.s_next);
    const Matrix q_actor = bb.target_critic().forward(stack(es, bb.target_actor().forward(es)));
    const Matrix q_base = bb.target_critic().forward(stack(es, single.base_next[0]));
    for (int i = 0; i < n; ++i) {
      ++rep.comparisons;
      if (!(y4[i] >= y3[i])) ++rep.dominance_violations;
      if (b.done[i] == 0.0 && (y4[i] == y3[i]) != (q_base(0, i) <= q_actor(0, i))) ++rep.equality_mismatches;
      const double gamma = with_bb.gamma;
      const bool in_range = b.done[i] != 0.0 ? y4[i] == b.r[i]
                                             : (y4[i] > 0.0 && y4[i] < gamma && y3[i] > 0.0 && y3[i] < gamma);
      if (!in_range) ++rep.range_violations;
    }

    Vector previous = y4;
    for (int k = 2; k <= 3; ++k) {
      Batch prefix = b;
      prefix.base_next.resize(static_cast<std::size_t>(k));
      const Vector yk = bb.compute_bootstrap_targets(prefix);
      for (int i = 0; i < n; ++i)
        if (!(yk[i] >= previous[i])) ++rep.monotone_violations;
      previous = yk;
    }
  }
  rep.seconds = seconds_since(t0);
  return rep;
}

SelectionReport selection_and_filter(int cases, std::uint64_t seed) {
  Rng rng(seed);
  SelectionReport rep;
  AgentConfig cfg = small_config(16);
  DdpgwbAgent ag(cfg, rng);
  for (int c = 0; c < cases; ++c) {
    scramble(ag, rng);
    const Observation s = random_observation(rng);
    const int k = 1 + c % 3;
    std::vector<ActionVector> base;
    for (int j = 0; j < k; ++j) base.push_back(random_action(rng));
    const agent::Selection sel = ag.mixed_q_argmax(s, base);
    ++rep.argmax_cases;
    const double chosen = sel.q[static_cast<std::size_t>(sel.index + 1)];
    for (double q : sel.q)
      if (q > chosen) ++rep.argmax_violations;

    // brute force with the loop oracle
    const Vector es = agent::encode_observations(Matrix(s)).col(0);
    std::vector<ActionVector> candidates{oracle_action(ag.actor(), es)};
    candidates.insert(candidates.end(), base.begin(), base.end());
    double best_q = -1.0;
    for (const ActionVector& a : candidates) best_q = std::max(best_q, oracle_q(ag.critic(), es, a));
    if (oracle_q(ag.critic(), es, sel.action) < best_q - 1e-12) ++rep.oracle_disagreements;

    // a base candidate equal to the actor's action ties; the actor keeps it
    std::vector<ActionVector> tied = base;
    tied.insert(tied.begin() + c % (k + 1), ag.act(s));
    std::vector<ActionVector> only_tie{ag.act(s)};
    if (ag.mixed_q_argmax(s, only_tie).index != -1) ++rep.tie_violations;
    const agent::Selection tsel = ag.mixed_q_argmax(s, tied);
    if (tsel.index != -1 && !(tsel.q[static_cast<std::size_t>(tsel.index + 1)] > tsel.q[0])) ++rep.tie_violations;
  }

  // Q-filter: replay mode with one and three controllers, and demo mode.
  const int filter_batches = std::max(1, cases / 10);
  for (int c = 0; c < filter_batches; ++c) {
    const int mode = c % 3;
    AgentConfig fc = small_config(16);
    if (mode == 1) fc.apply_variant(agent::Variant::Ensemble);
    if (mode == 2) fc.apply_variant(agent::Variant::DemoBC);
    DdpgwbAgent fa(fc, rng);
    scramble(fa, rng);
    const int n = 16;
    const Batch b = random_batch(rng, n, mode == 0 ? 1 : (mode == 1 ? 3 : 0));
    std::optional<Batch> demo;
    if (mode == 2) demo = random_batch(rng, n, 0);
    const agent::ActorStats stats = fa.actor_loss_gradient(b, demo ? &*demo : nullptr).first;

    std::vector<int> expected;
    const Batch& src = demo ? *demo : b;
    const Matrix es = agent::encode_observations(src.s);
    for (int i = 0; i < n; ++i) {
      const Vector e = es.col(i);
      const double q_actor = oracle_q(fa.critic(), e, oracle_action(fa.actor(), e));
      double q_ref = -1.0;
      if (demo) {
        q_ref = oracle_q(fa.critic(), e, src.a.col(i));
      } else {
        for (const Matrix& base : b.base) q_ref = std::max(q_ref, oracle_q(fa.critic(), e, base.col(i)));
      }
      if (q_ref > q_actor) expected.push_back(i);
    }
    ++rep.filter_cases;
    if (expected != stats.bc_active) ++rep.filter_mismatches;
  }
  return rep;
}

ScheduleReport epsilon_schedule() {
  Rng rng(4);
  DdpgwbAgent ag(small_config(8), rng);
  ScheduleReport rep;
  for (long t = 0; t <= 60000; ++t) {
    const double expected = std::max(0.0, 1.0 - 2e-5 * static_cast<double>(t));
    if (ag.epsilon() != expected) ++rep.mismatches;
    if (t == 25000) rep.at_25000 = ag.epsilon();
    if (rep.first_zero < 0 && ag.epsilon() == 0.0) rep.first_zero = t;
    ag.epsilon_decay();
  }
  return rep;
}

ReductionReport ddpg_reduction(std::uint64_t seed) {
  AgentConfig cfg;
  cfg.use_bb = false;
  cfg.use_mq_argmax = false;
  cfg.use_bc_loss = false;
  cfg.initial_epsilon = 0.0;
  Rng init(seed);
  DdpgwbAgent ag(cfg, init);

  // Plain DDPG, written directly against the network library.
  MlpNetwork actor = ag.actor(), critic = ag.critic(), target_actor = ag.target_actor(),
             target_critic = ag.target_critic();
  funcapprox::AdamState actor_adam(actor), critic_adam(critic);

  Rng data(seed + 1);
  const Batch b = random_batch(data, cfg.batch_n, 1, 0.2);
  const int n = b.size();

  const Matrix es_next = agent::encode_observations(b.s_next);
  const Matrix q_next = target_critic.forward(stack(es_next, target_actor.forward(es_next)));
  Vector y(n);
  for (int i = 0; i < n; ++i) y[i] = b.done[i] != 0.0 ? b.r[i] : b.r[i] + cfg.gamma * q_next(0, i);

  const Matrix es = agent::encode_observations(b.s);
  funcapprox::ForwardCache cc;
  const Matrix q = critic.forward(stack(es, b.a), cc);
  funcapprox::adam_step(critic, critic.backward(cc, (2.0 / n) * (q - y.transpose())), critic_adam, cfg.critic_lr);

  funcapprox::ForwardCache ac, qc;
  const Matrix a_pi = actor.forward(es, ac);
  critic.forward(stack(es, a_pi), qc);
  const Matrix dq_da =
      critic.backward(qc, Matrix::Constant(1, n, -1.0 / n), false, true).input.bottomRows(kinesim::kActionDim);
  funcapprox::adam_step(actor, actor.backward(ac, dq_da), actor_adam, cfg.actor_lr);
  funcapprox::soft_update(target_actor, actor, cfg.tau);
  funcapprox::soft_update(target_critic, critic, cfg.tau);

  const Vector y_agent = ag.compute_bootstrap_targets(b);
  ag.train_step(b);

  ReductionReport rep;
  rep.targets_identical = same_bits(y, y_agent);
  rep.parameters_identical = same_bits(actor, ag.actor()) && same_bits(critic, ag.critic()) &&
                             same_bits(target_actor, ag.target_actor()) &&
                             same_bits(target_critic, ag.target_critic());
  rep.adam_identical = same_bits(actor_adam, ag.actor_adam()) && same_bits(critic_adam, ag.critic_adam());

  // exploration: actor action plus Gaussian noise, clamped
  Rng r1(seed + 2), r2(seed + 2);
  rep.action_identical = true;
  for (int t = 0; t < 20; ++t) {
    const Observation s = random_observation(data);
    const std::vector<ActionVector> base{random_action(data)};
    const ActionVector got = ag.select_exploration_action(s, base, r1);
    ActionVector want = actor.forward(agent::encode_observations(Matrix(s))).col(0);
    for (int i = 0; i < kinesim::kActionDim; ++i) want[i] += cfg.noise_sigma * r2.normal();
    want = want.cwiseMax(-1.0).cwiseMin(1.0);
    if (!same_bits(Vector(got), Vector(want))) rep.action_identical = false;
  }
  return rep;
}

CalibrationReport calibration(int episodes, std::uint64_t seed) {
  using harness::PolicySource;
  using kinesim::TaskKind;
  auto rate = [&](PolicySource src, TaskKind task) {
    return harness::run_evaluation(src, task, episodes, seed).success_rate();
  };
  CalibrationReport rep;
  rep.stacking = rate(PolicySource::Sequential, TaskKind::Stacking);
  rep.block_cup = rate(PolicySource::Sequential, TaskKind::BlockCup);
  rep.cup_cup = rate(PolicySource::Sequential, TaskKind::CupCup);
  rep.macro_stacking = rate(PolicySource::MacroEnsemble, TaskKind::Stacking);
  rep.macro_block_cup = rate(PolicySource::MacroEnsemble, TaskKind::BlockCup);
  rep.macro_cup_cup = rate(PolicySource::MacroEnsemble, TaskKind::CupCup);
  return rep;
}

Result determinism(std::int64_t steps) {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / fmt::format("ddpgwb-determinism-{}", ::getpid());
  harness::ExperimentConfig cfg;
  cfg.seed = 2718;
  cfg.total_env_steps = steps;
  cfg.final_eval_episodes = 20;
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  harness::run_training(cfg, root / "a");
  harness::run_training(cfg, root / "b");
  const std::string a = slurp(root / "a" / "metrics.csv"), b = slurp(root / "b" / "metrics.csv");
  const bool ckpt_same = slurp(root / "a" / "checkpoint.dwb") == slurp(root / "b" / "checkpoint.dwb");
  const long rows = std::count(a.begin(), a.end(), '\n');
  fs::remove_all(root);
  Result r{13, "determinism", !a.empty() && a == b,
           fmt::format("{} steps: metrics {} ({} lines, {} bytes), checkpoints {}", steps,
                       a == b ? "identical" : "differ", rows, a.size(), ckpt_same ? "identical" : "differ")};
  return r;
}

// ---------------------------------------------------------------------------

std::vector<Result> fast_criteria() {
  std::vector<Result> out;
  {
    const GradientReport g = gradient_check();
    out.push_back({1, "gradient oracle", g.worst() < 1e-5 && g.seconds < 10.0,
                   fmt::format("max rel err {:.2e} (critic {:.1e}, actor full {:.1e}, ensemble {:.1e}, demo {:.1e}, "
                               "no-bc {:.1e}), {:.2f} s",
                               g.worst(), g.critic, g.actor_full, g.actor_ensemble, g.actor_demo, g.actor_no_bc,
                               g.seconds)});
  }
  {
    const TargetReport t = target_dominance();
    const bool ok = t.dominance_violations == 0 && t.equality_mismatches == 0 && t.monotone_violations == 0 &&
                    t.range_violations == 0 && t.seconds < 5.0;
    out.push_back({2, "target dominance", ok,
                   fmt::format("{} comparisons: {} dominance, {} equality, {} K-monotone, {} range violations, {:.2f} s",
                               t.comparisons, t.dominance_violations, t.equality_mismatches, t.monotone_violations,
                               t.range_violations, t.seconds)});
  }
  {
    const SelectionReport s = selection_and_filter();
    const bool ok = s.argmax_violations == 0 && s.oracle_disagreements == 0 && s.tie_violations == 0 &&
                    s.filter_mismatches == 0;
    out.push_back({3, "selection and filter", ok,
                   fmt::format("{} argmax cases ({} violations, {} oracle disagreements, {} tie errors); "
                               "{} filter batches, {} mismatches",
                               s.argmax_cases, s.argmax_violations, s.oracle_disagreements, s.tie_violations,
                               s.filter_cases, s.filter_mismatches)});
  }
  {
    const ScheduleReport e = epsilon_schedule();
    out.push_back({4, "epsilon schedule", e.mismatches == 0 && e.first_zero == 50000 && std::abs(e.at_25000 - 0.5) <= 1e-9,
                   fmt::format("{} mismatches over 60001 steps, eps(25000) = {}, first zero at {}", e.mismatches,
                               e.at_25000, e.first_zero)});
  }
  {
    const ReductionReport r = ddpg_reduction();
    out.push_back({5, "DDPG reduction", r.all(),
                   fmt::format("targets {}, parameters {}, Adam moments {}, exploration actions {}",
                               r.targets_identical ? "identical" : "differ",
                               r.parameters_identical ? "identical" : "differ", r.adam_identical ? "identical" : "differ",
                               r.action_identical ? "identical" : "differ")});
  }
  {
    const CalibrationReport c = calibration();
    const bool band = c.stacking >= 0.80 && c.stacking <= 0.95;
    const bool hardest = c.cup_cup < c.stacking && c.cup_cup < c.block_cup;
    const bool macro = c.macro_stacking < c.stacking && c.macro_block_cup < c.block_cup && c.macro_cup_cup < c.cup_cup;
    out.push_back({6, "controller calibration", band && hardest && macro,
                   fmt::format("sequential stacking {} / block-cup {} / cup-cup {}; macro {} / {} / {} (500 episodes)",
                               pct(c.stacking), pct(c.block_cup), pct(c.cup_cup), pct(c.macro_stacking),
                               pct(c.macro_block_cup), pct(c.macro_cup_cup))});
  }
  return out;
}

namespace {

struct RunSet {
  std::vector<double> final_success, base_success, wallclock;
  std::vector<std::filesystem::path> dirs;
  int expected = 0;
};

RunSet load_runs(const std::filesystem::path& results, const std::string& task, const std::string& variant) {
  RunSet set;
  const auto dir = results / task / variant;
  if (!std::filesystem::is_directory(dir)) return set;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_directory()) continue;
    ++set.expected;
    const auto summary = entry.path() / "summary.json";
    if (!std::filesystem::exists(summary)) continue;
    const harness::TrainingSummary s = harness::read_summary(summary);
    set.final_success.push_back(s.final_eval_success);
    set.base_success.push_back(s.base_success);
    set.wallclock.push_back(s.wallclock_seconds);
    set.dirs.push_back(entry.path());
  }
  std::sort(set.dirs.begin(), set.dirs.end());
  return set;
}

std::string describe(const RunSet& r) {
  std::string s = fmt::format("n={}", r.final_success.size());
  if (!r.final_success.empty()) s += fmt::format(" median {}", pct(median(r.final_success)));
  return s;
}

constexpr std::size_t kSeeds = 5;

}  // namespace

std::vector<Result> learning_criteria(const std::filesystem::path& results) {
  std::vector<Result> out;
  const RunSet full = load_runs(results, "stacking", "full");
  auto enough = [](const RunSet& r) { return r.final_success.size() >= kSeeds; };

  {  // 7
    Result r{7, "end-to-end learning", false, ""};
    if (!enough(full)) {
      r.detail = fmt::format("full/stacking runs incomplete ({})", describe(full));
    } else {
      const double learned = median(full.final_success), base = median(full.base_success);
      r.pass = learned >= base + 0.02;
      r.detail = fmt::format("median final {} vs base controller {} (+2 needed); median runtime {:.1f} min (target 30)",
                             pct(learned), pct(base), median(full.wallclock) / 60.0);
    }
    out.push_back(r);
  }
  {  // 8
    Result r{8, "training-cost curve", false, ""};
    if (!enough(full)) {
      r.detail = fmt::format("full/stacking runs incomplete ({})", describe(full));
    } else {
      const double noisy =
          harness::run_evaluation(harness::PolicySource::NoisySequential, kinesim::TaskKind::Stacking, 500, 42)
              .success_rate();
      std::vector<double> deviations, means;
      for (const auto& dir : full.dirs) {
        double worst = 0.0, sum = 0.0;
        int rows = 0;
        for (const harness::MetricsRow& row : harness::read_metrics(dir / "metrics.csv")) {
          if (row.env_step > 20000) break;
          if (row.eval_success || row.episode_index < 100) continue;  // episode rows with a full window
          worst = std::max(worst, std::abs(row.train_success_rolling100 - noisy));
          sum += row.train_success_rolling100;
          ++rows;
        }
        deviations.push_back(worst);
        means.push_back(rows ? sum / rows : 0.0);
      }
      const double med = median(deviations);
      r.pass = med <= 0.20;
      r.detail = fmt::format("noisy base {}; median over seeds of max |rolling100 - base| in first 20k steps = {:.1f} "
                             "points (limit 20); median mean rolling100 {}",
                             pct(noisy), 100.0 * med, pct(median(means)));
    }
    out.push_back(r);
  }
  {  // 9
    Result r{9, "ablation direction", false, ""};
    const RunSet no_bb = load_runs(results, "stacking", "no-bb");
    const RunSet no_mq = load_runs(results, "stacking", "no-mq-arg");
    const RunSet no_bc = load_runs(results, "stacking", "no-bc");
    if (!enough(full) || !enough(no_bb) || !enough(no_mq) || !enough(no_bc)) {
      r.detail = fmt::format("runs incomplete (full {}, no-bb {}, no-mq-arg {}, no-bc {})", describe(full),
                             describe(no_bb), describe(no_mq), describe(no_bc));
    } else {
      const double f = median(full.final_success);
      const double bb = median(no_bb.final_success), mq = median(no_mq.final_success), bc = median(no_bc.final_success);
      r.pass = f >= bb - 0.02 && f >= mq - 0.02 && bc <= 0.05;
      r.detail = fmt::format("full {} vs no-bb {}, no-mq-arg {} (within -2); no-bc {} (near zero: <= 5%)", pct(f),
                             pct(bb), pct(mq), pct(bc));
    }
    out.push_back(r);
  }
  {  // 10
    Result r{10, "no-target-actor robustness", false, ""};
    const RunSet nta = load_runs(results, "stacking", "no-target-actor");
    if (!enough(full) || !enough(nta)) {
      r.detail = fmt::format("runs incomplete (full {}, no-target-actor {})", describe(full), describe(nta));
    } else {
      const double f = median(full.final_success), t = median(nta.final_success);
      r.pass = std::abs(t - f) <= 0.05;
      r.detail = fmt::format("no-target-actor {} vs full {} (within 5 points)", pct(t), pct(f));
    }
    out.push_back(r);
  }
  {  // 11
    Result r{11, "ensemble learning", false, ""};
    const RunSet ens = load_runs(results, "stacking", "ensemble");
    if (!enough(full) || !enough(ens)) {
      r.detail = fmt::format("runs incomplete (full {}, ensemble {})", describe(full), describe(ens));
    } else {
      const double e = median(ens.final_success), macro = median(ens.base_success), f = median(full.final_success);
      r.pass = e >= macro + 0.20 && e >= f - 0.05;
      r.detail = fmt::format("ensemble-trained {} vs macro controller {} (+20 needed) and single-trained {} "
                             "(-5 allowed)",
                             pct(e), pct(macro), pct(f));
    }
    out.push_back(r);
  }
  {  // 12
    Result r{12, "demo baseline contrast", false, ""};
    const RunSet cf = load_runs(results, "cup-cup", "full");
    const RunSet demo = load_runs(results, "cup-cup", "demo-bc");
    if (!enough(cf) || !enough(demo) || demo.expected != static_cast<int>(demo.final_success.size())) {
      r.detail = fmt::format("runs incomplete (full {}, demo-bc {} of {} dirs)", describe(cf), describe(demo),
                             demo.expected);
    } else {
      const double d = median(demo.final_success), f = median(cf.final_success);
      r.pass = d < f;
      r.detail = fmt::format("cup-cup: demo-bc {} vs full {} (all {} demo-bc runs completed)", pct(d), pct(f),
                             demo.final_success.size());
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace criteria
