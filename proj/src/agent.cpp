#include "ddpgwb/agent.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "ddpgwb/errors.hpp"

namespace ddpgwb::agent {

using funcapprox::ForwardCache;
using funcapprox::GradientBundle;
using funcapprox::MlpNetwork;
using kinesim::kActionDim;
using kinesim::kObservationDim;

namespace {

constexpr double kPositionScale = 5.0;
constexpr char kMagic[4] = {'D', 'W', 'B', '1'};

std::vector<int> layer_dims(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

Matrix stack(const Matrix& top, const Matrix& bottom) {
  Matrix m(top.rows() + bottom.rows(), top.cols());
  m << top, bottom;
  return m;
}

void accumulate(GradientBundle& into, const GradientBundle& other) {
  for (std::size_t l = 0; l < into.weights.size(); ++l) {
    into.weights[l] += other.weights[l];
    into.bias[l] += other.bias[l];
  }
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoBB: return "no-bb";
    case Variant::NoMQArg: return "no-mq-arg";
    case Variant::NoBC: return "no-bc";
    case Variant::NoTargetActor: return "no-target-actor";
    case Variant::Ensemble: return "ensemble";
    case Variant::DemoBC: return "demo-bc";
  }
  return "?";
}

std::optional<Variant> parse_variant(std::string_view name) {
  for (Variant v : {Variant::Full, Variant::NoBB, Variant::NoMQArg, Variant::NoBC, Variant::NoTargetActor,
                    Variant::Ensemble, Variant::DemoBC})
    if (name == to_string(v)) return v;
  return std::nullopt;
}

void AgentConfig::apply_variant(Variant v) {
  use_bb = use_mq_argmax = use_bc_loss = use_target_actor = true;
  ensemble_mode = demo_baseline = false;
  initial_epsilon = 1.0;
  switch (v) {
    case Variant::Full: break;
    case Variant::NoBB: use_bb = false; break;
    case Variant::NoMQArg: use_mq_argmax = false; break;
    case Variant::NoBC: use_bc_loss = false; break;
    case Variant::NoTargetActor: use_target_actor = false; break;
    case Variant::Ensemble: ensemble_mode = true; break;
    case Variant::DemoBC:
      demo_baseline = true;
      use_bb = false;
      use_mq_argmax = false;
      initial_epsilon = 0.0;
      break;
  }
}

void AgentConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma must lie in (0, 1)");
  if (!(tau >= 0.0 && tau <= 1.0)) fail("tau must lie in [0, 1]");
  if (!(lambda_dpg >= 0.0)) fail("lambda must be >= 0");
  if (!(delta >= 0.0)) fail("delta must be >= 0");
  if (batch_n <= 0) fail("batch_n must be positive");
  if (demo_batch_nd <= 0) fail("demo_batch_nd must be positive");
  if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  if (!(actor_lr > 0.0)) fail("actor_lr must be positive");
  if (!(critic_lr > 0.0)) fail("critic_lr must be positive");
  if (buffer_capacity <= 0) fail("buffer_capacity must be positive");
  if (!(initial_epsilon >= 0.0 && initial_epsilon <= 1.0)) fail("initial_epsilon must lie in [0, 1]");
  for (int h : actor_hidden)
    if (h <= 0) fail("actor hidden widths must be positive");
  for (int h : critic_hidden)
    if (h <= 0) fail("critic hidden widths must be positive");
  if (demo_baseline && (use_mq_argmax || use_bb || initial_epsilon != 0.0))
    fail("demo baseline excludes mixed Q-control and base-controller bootstrap");
  if (demo_baseline && ensemble_mode) fail("demo baseline excludes ensemble mode");
}

// ---------------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(int capacity, int base_count) : capacity_(capacity), base_count_(base_count) {
  if (capacity <= 0) throw ContractViolation("ReplayBuffer: capacity must be positive");
  if (base_count < 0) throw ContractViolation("ReplayBuffer: negative base count");
  s_.resize(kObservationDim, capacity);
  s_next_.resize(kObservationDim, capacity);
  a_.resize(kActionDim, capacity);
  r_.resize(capacity);
  done_.resize(capacity);
  base_.assign(base_count, Matrix(kActionDim, capacity));
  base_next_.assign(base_count, Matrix(kActionDim, capacity));
}

void ReplayBuffer::push(const Transition& t, const std::vector<ActionVector>& base,
                        const std::vector<ActionVector>& base_next) {
  if (static_cast<int>(base.size()) != base_count_ || static_cast<int>(base_next.size()) != base_count_)
    throw ContractViolation("ReplayBuffer::push: wrong number of base actions");
  const int i = cursor_;
  s_.col(i) = t.s;
  a_.col(i) = t.a;
  r_[i] = t.r;
  s_next_.col(i) = t.s_next;
  done_[i] = t.done ? 1.0 : 0.0;
  for (int k = 0; k < base_count_; ++k) {
    base_[k].col(i) = base[k];
    base_next_[k].col(i) = base_next[k];
  }
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

std::vector<int> ReplayBuffer::sample_indices(Rng& rng, int n) const {
  if (size_ == 0) throw ContractViolation("ReplayBuffer::sample: buffer is empty");
  if (n <= 0) throw ContractViolation("ReplayBuffer::sample: batch size must be positive");
  std::vector<int> idx(n);
  for (int& i : idx) i = static_cast<int>(rng.index(static_cast<std::uint64_t>(size_)));
  return idx;
}

Batch ReplayBuffer::sample(Rng& rng, int n) const { return gather(sample_indices(rng, n)); }

Batch ReplayBuffer::gather(const std::vector<int>& slots) const {
  const int n = static_cast<int>(slots.size());
  Batch b;
  b.s.resize(kObservationDim, n);
  b.s_next.resize(kObservationDim, n);
  b.a.resize(kActionDim, n);
  b.r.resize(n);
  b.done.resize(n);
  b.base.assign(base_count_, Matrix(kActionDim, n));
  b.base_next.assign(base_count_, Matrix(kActionDim, n));
  for (int j = 0; j < n; ++j) {
    const int i = slots[j];
    if (i < 0 || i >= size_) throw ContractViolation("ReplayBuffer::gather: slot out of range");
    b.s.col(j) = s_.col(i);
    b.a.col(j) = a_.col(i);
    b.r[j] = r_[i];
    b.s_next.col(j) = s_next_.col(i);
    b.done[j] = done_[i];
    for (int k = 0; k < base_count_; ++k) {
      b.base[k].col(j) = base_[k].col(i);
      b.base_next[k].col(j) = base_next_[k].col(i);
    }
  }
  return b;
}

int ReplayBuffer::slot_of(int logical) const {
  if (logical < 0 || logical >= size_) throw ContractViolation("ReplayBuffer::at: index out of range");
  const int oldest = size_ < capacity_ ? 0 : cursor_;
  return (oldest + logical) % capacity_;
}

Transition ReplayBuffer::at(int i) const {
  const int k = slot_of(i);
  Transition t;
  t.s = s_.col(k);
  t.a = a_.col(k);
  t.r = r_[k];
  t.s_next = s_next_.col(k);
  t.done = done_[k] != 0.0;
  return t;
}

// ---------------------------------------------------------------------------

Matrix encode_observations(const Matrix& obs) {
  if (obs.rows() != kObservationDim) throw ContractViolation("encode_observations: expected 20 rows");
  Matrix e = obs;
  e.topRows<3>() = kPositionScale * obs.topRows<3>();
  e.middleRows<3>(8) = kPositionScale * (obs.middleRows<3>(8) - obs.topRows<3>());
  e.middleRows<3>(14) = kPositionScale * (obs.middleRows<3>(14) - obs.middleRows<3>(8));
  return e;
}

DdpgwbAgent::DdpgwbAgent(AgentConfig config, Rng& init_rng) : config_(std::move(config)) {
  config_.validate();
  actor_ = MlpNetwork::random(layer_dims(kObservationDim, config_.actor_hidden, kActionDim),
                              funcapprox::Activation::ReLU, funcapprox::Activation::Tanh, init_rng);
  critic_ = MlpNetwork::random(layer_dims(kObservationDim + kActionDim, config_.critic_hidden, 1),
                               funcapprox::Activation::ReLU, funcapprox::Activation::Sigmoid, init_rng);
  target_actor_ = actor_;
  target_critic_ = critic_;
  actor_adam_ = funcapprox::AdamState(actor_);
  critic_adam_ = funcapprox::AdamState(critic_);
}

Matrix DdpgwbAgent::critic_values(const MlpNetwork& critic, const Matrix& encoded_s, const Matrix& a) const {
  return critic.forward(stack(encoded_s, a));
}

ActionVector DdpgwbAgent::act(const Observation& s) const {
  return actor_.forward(encode_observations(Matrix(s))).col(0);
}

double DdpgwbAgent::q_value(const Observation& s, const ActionVector& a) const {
  return critic_values(critic_, encode_observations(Matrix(s)), Matrix(a))(0, 0);
}

Selection DdpgwbAgent::mixed_q_argmax(const Observation& s, const std::vector<ActionVector>& base) const {
  const Matrix es = encode_observations(Matrix(s));
  const int k = static_cast<int>(base.size());
  Matrix candidates(kActionDim, k + 1);
  candidates.col(0) = actor_.forward(es).col(0);
  for (int j = 0; j < k; ++j) candidates.col(j + 1) = base[j];
  const Matrix q = critic_values(critic_, es.replicate(1, k + 1), candidates);

  Selection sel;
  sel.q.assign(q.data(), q.data() + q.size());
  int best = 0;
  for (int j = 1; j <= k; ++j)
    if (q(0, j) > q(0, best)) best = j;
  sel.index = best - 1;
  sel.action = candidates.col(best);
  return sel;
}

ActionVector DdpgwbAgent::select_exploration_action(const Observation& s, const std::vector<ActionVector>& base,
                                                    Rng& rng) const {
  ActionVector a;
  const double eps = epsilon();
  // No draw once epsilon is zero, so the late phase consumes the same stream as plain DDPG.
  if (eps > 0.0 && rng.uniform() < eps) {
    if (base.empty()) throw ContractViolation("select_exploration_action: no base action");
    if (config_.ensemble_mode) {
      controllers::EnsembleActionSet set{base};
      a = controllers::ensemble_sample(set, rng);
    } else {
      a = base.front();
    }
  } else if (config_.use_mq_argmax && !base.empty()) {
    a = mixed_q_argmax(s, base).action;
  } else {
    a = act(s);
  }
  for (int i = 0; i < kActionDim; ++i) a[i] += config_.noise_sigma * rng.normal();
  return a.cwiseMax(-1.0).cwiseMin(1.0);
}

double DdpgwbAgent::epsilon() const {
  return std::max(0.0, config_.initial_epsilon - config_.delta * static_cast<double>(epsilon_steps_));
}

void DdpgwbAgent::epsilon_decay() {
  if (epsilon() > 0.0) ++epsilon_steps_;
}

Vector DdpgwbAgent::compute_bootstrap_targets(const Batch& batch) const {
  const int n = batch.size();
  const Matrix es = encode_observations(batch.s_next);
  const MlpNetwork& policy = config_.use_target_actor ? target_actor_ : actor_;
  const Matrix a_next = policy.forward(es);
  Matrix best = critic_values(target_critic_, es, a_next);
  if (config_.use_bb) {
    for (const Matrix& b : batch.base_next) best = best.cwiseMax(critic_values(target_critic_, es, b));
  }
  Vector y(n);
  for (int i = 0; i < n; ++i) y[i] = batch.done[i] != 0.0 ? batch.r[i] : batch.r[i] + config_.gamma * best(0, i);
  return y;
}

std::pair<CriticStats, GradientBundle> DdpgwbAgent::critic_loss_gradient(const Batch& batch,
                                                                         const Vector& targets) const {
  const int n = batch.size();
  if (targets.size() != n) throw ContractViolation("critic update: target count mismatch");
  ForwardCache cache;
  const Matrix q = critic_.forward(stack(encode_observations(batch.s), batch.a), cache);
  const Matrix diff = q - targets.transpose();
  CriticStats stats;
  stats.loss = diff.squaredNorm() / n;
  stats.mean_q = q.mean();
  if (!std::isfinite(stats.loss)) throw NumericalFault("critic loss is not finite");
  GradientBundle g = critic_.backward(cache, (2.0 / n) * diff);
  return {stats, std::move(g)};
}

std::pair<ActorStats, GradientBundle> DdpgwbAgent::actor_loss_gradient(const Batch& batch, const Batch* demo) const {
  const int n = batch.size();
  const Matrix es = encode_observations(batch.s);
  ForwardCache actor_cache, critic_cache;
  const Matrix a_pi = actor_.forward(es, actor_cache);
  const Matrix q_pi = critic_.forward(stack(es, a_pi), critic_cache);

  ActorStats stats;
  stats.dpg_objective = q_pi.mean();
  // Without a BC term there is nothing for lambda to balance; the objective is plain -J.
  const bool bc = config_.use_bc_loss;
  const double weight = bc ? config_.lambda_dpg : 1.0;
  Matrix upstream = critic_.backward(critic_cache, Matrix::Constant(1, n, -weight / n), false, true)
                        .input.bottomRows(kActionDim);

  double bc_sum = 0.0;
  int active_count = 0;
  GradientBundle grad;
  if (bc && demo == nullptr && batch.base_count() > 0) {
    // BC target: the best base candidate under the online critic; it only
    // counts where it beats the actor's own action.
    Matrix best_q = critic_values(critic_, es, batch.base[0]);
    std::vector<int> best_k(n, 0);
    for (int k = 1; k < batch.base_count(); ++k) {
      const Matrix qk = critic_values(critic_, es, batch.base[k]);
      for (int i = 0; i < n; ++i)
        if (qk(0, i) > best_q(0, i)) {
          best_q(0, i) = qk(0, i);
          best_k[i] = k;
        }
    }
    for (int i = 0; i < n; ++i) {
      if (!(best_q(0, i) > q_pi(0, i))) continue;
      const Vector diff = a_pi.col(i) - batch.base[best_k[i]].col(i);
      bc_sum += diff.squaredNorm();
      upstream.col(i) += (2.0 / n) * diff;
      stats.bc_active.push_back(i);
      ++active_count;
    }
    stats.bc_loss = bc_sum / n;
    stats.bc_active_fraction = static_cast<double>(active_count) / n;
    grad = actor_.backward(actor_cache, upstream);
  } else if (bc && demo != nullptr) {
    const int nd = demo->size();
    const Matrix ed = encode_observations(demo->s);
    ForwardCache demo_cache;
    const Matrix a_d = actor_.forward(ed, demo_cache);
    const Matrix q_actor = critic_values(critic_, ed, a_d);
    const Matrix q_demo = critic_values(critic_, ed, demo->a);
    Matrix demo_upstream = Matrix::Zero(kActionDim, nd);
    for (int i = 0; i < nd; ++i) {
      if (!(q_demo(0, i) > q_actor(0, i))) continue;
      const Vector diff = a_d.col(i) - demo->a.col(i);
      bc_sum += diff.squaredNorm();
      demo_upstream.col(i) = (2.0 / nd) * diff;
      stats.bc_active.push_back(i);
      ++active_count;
    }
    stats.bc_loss = bc_sum / nd;
    stats.bc_active_fraction = static_cast<double>(active_count) / nd;
    grad = actor_.backward(actor_cache, upstream);
    accumulate(grad, actor_.backward(demo_cache, demo_upstream));
  } else {
    grad = actor_.backward(actor_cache, upstream);
  }
  stats.loss = stats.bc_loss - weight * stats.dpg_objective;
  if (!std::isfinite(stats.loss)) throw NumericalFault("actor loss is not finite");
  return {std::move(stats), std::move(grad)};
}

CriticStats DdpgwbAgent::critic_update(const Batch& batch, const Vector& targets) {
  auto [stats, grad] = critic_loss_gradient(batch, targets);
  funcapprox::adam_step(critic_, grad, critic_adam_, config_.critic_lr);
  return stats;
}

ActorStats DdpgwbAgent::actor_update(const Batch& batch, const Batch* demo) {
  auto [stats, grad] = actor_loss_gradient(batch, demo);
  funcapprox::adam_step(actor_, grad, actor_adam_, config_.actor_lr);
  return std::move(stats);
}

void DdpgwbAgent::update_targets() {
  funcapprox::soft_update(target_actor_, actor_, config_.tau);
  funcapprox::soft_update(target_critic_, critic_, config_.tau);
}

UpdateStats DdpgwbAgent::train_step(const Batch& batch, const Batch* demo) {
  UpdateStats stats;
  const Vector y = compute_bootstrap_targets(batch);
  stats.critic = critic_update(batch, y);
  stats.actor = actor_update(batch, demo);
  update_targets();
  ++update_count_;
  return stats;
}

void DdpgwbAgent::save(std::ostream& out, std::int64_t env_steps, std::uint64_t config_hash) const {
  out.write(kMagic, 4);
  funcapprox::write_u32(out, kCheckpointVersion);
  for (const MlpNetwork* net : {&actor_, &critic_, &target_actor_, &target_critic_})
    funcapprox::write_network(out, *net);
  funcapprox::write_f64(out, epsilon());
  funcapprox::write_u64(out, static_cast<std::uint64_t>(epsilon_steps_));
  funcapprox::write_u64(out, static_cast<std::uint64_t>(update_count_));
  funcapprox::write_u64(out, static_cast<std::uint64_t>(env_steps));
  funcapprox::write_u64(out, config_hash);
  if (!out) throw std::runtime_error("checkpoint write failed");
}

DdpgwbAgent::Checkpoint DdpgwbAgent::load(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic))
    throw ContractViolation("checkpoint: bad magic (expected DWB1)");
  const std::uint32_t version = funcapprox::read_u32(in);
  if (version != kCheckpointVersion) throw ContractViolation("checkpoint: unsupported version");
  Checkpoint c;
  c.actor = funcapprox::read_network(in);
  c.critic = funcapprox::read_network(in);
  c.target_actor = funcapprox::read_network(in);
  c.target_critic = funcapprox::read_network(in);
  c.epsilon = funcapprox::read_f64(in);
  c.epsilon_steps = static_cast<std::int64_t>(funcapprox::read_u64(in));
  c.update_count = static_cast<std::int64_t>(funcapprox::read_u64(in));
  c.env_steps = static_cast<std::int64_t>(funcapprox::read_u64(in));
  c.config_hash = funcapprox::read_u64(in);
  if (c.actor.input_dim() != kObservationDim || c.actor.output_dim() != kActionDim)
    throw ContractViolation("checkpoint: actor has the wrong shape");
  return c;
}

// ---------------------------------------------------------------------------

int DemoSet::transition_count() const {
  int n = 0;
  for (const auto& e : episodes) n += static_cast<int>(e.size());
  return n;
}

DemoSet collect_demonstrations(kinesim::TaskKind task, const controllers::Controller& controller, int count,
                               Rng& rng) {
  if (count <= 0) throw ConfigError("collect_demonstrations: count must be positive");
  DemoSet demos;
  const int max_attempts = 20 * count;
  while (static_cast<int>(demos.episodes.size()) < count) {
    if (demos.attempts == max_attempts)
      throw ConfigError("collect_demonstrations: only " + std::to_string(demos.episodes.size()) + " of " +
                        std::to_string(count) + " successes in " + std::to_string(max_attempts) + " attempts");
    ++demos.attempts;
    auto [state, obs] = kinesim::reset(task, rng);
    std::vector<Transition> episode;
    kinesim::StepResult res;
    do {
      const ActionVector a = controller.act(obs);
      res = kinesim::step(state, a);
      episode.push_back({obs, a, res.reward, res.observation, res.done});
      obs = res.observation;
    } while (!res.done);
    if (res.cause == kinesim::Termination::Success) demos.episodes.push_back(std::move(episode));
  }
  return demos;
}

ReplayBuffer to_buffer(const DemoSet& demos) {
  ReplayBuffer buf(std::max(1, demos.transition_count()), 0);
  for (const auto& e : demos.episodes)
    for (const Transition& t : e) buf.push(t);
  return buf;
}

}  // namespace ddpgwb::agent
