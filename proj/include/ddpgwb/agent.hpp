#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "ddpgwb/controllers.hpp"
#include "ddpgwb/funcapprox.hpp"
#include "ddpgwb/kinesim.hpp"
#include "ddpgwb/rng.hpp"

// The learner: replay storage, action selection, critic and actor updates.
namespace ddpgwb::agent {

using funcapprox::Matrix;
using funcapprox::Vector;
using kinesim::ActionVector;
using kinesim::Observation;

enum class Variant { Full, NoBB, NoMQArg, NoBC, NoTargetActor, Ensemble, DemoBC };

std::string_view to_string(Variant v);
/// "full", "no-bb", "no-mq-arg", "no-bc", "no-target-actor", "ensemble", "demo-bc".
std::optional<Variant> parse_variant(std::string_view name);

struct AgentConfig {
  double gamma = 0.99;
  double tau = 5e-3;
  double lambda_dpg = 2e-2;
  double delta = 2e-5;
  int batch_n = 256;
  int demo_batch_nd = 128;
  double noise_sigma = 0.1;
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  int buffer_capacity = 100000;
  std::vector<int> actor_hidden{256, 256};
  std::vector<int> critic_hidden{256, 256};
  double initial_epsilon = 1.0;

  bool use_bb = true;
  bool use_mq_argmax = true;
  bool use_bc_loss = true;
  bool use_target_actor = true;
  bool ensemble_mode = false;
  bool demo_baseline = false;

  /// Sets the flags for a variant; other fields are untouched.
  void apply_variant(Variant v);
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

struct Transition {
  Observation s;
  ActionVector a;
  double r = 0.0;
  Observation s_next;
  bool done = false;
};

/// Column-per-sample minibatch. `base[k]` holds controller k's action at s,
/// `base_next[k]` at s_next.
struct Batch {
  Matrix s, a, s_next;
  Vector r, done;  // done is 1.0 / 0.0
  std::vector<Matrix> base, base_next;

  int size() const { return static_cast<int>(s.cols()); }
  int base_count() const { return static_cast<int>(base.size()); }
};

/// Fixed-capacity ring of transitions plus the base-controller candidates
/// recorded alongside each one.
class ReplayBuffer {
 public:
  ReplayBuffer(int capacity, int base_count);

  void push(const Transition& t, const std::vector<ActionVector>& base = {},
            const std::vector<ActionVector>& base_next = {});
  /// Uniform with replacement over the current contents.
  Batch sample(Rng& rng, int n) const;
  /// Slot indices as drawn by `sample` for the same rng state.
  std::vector<int> sample_indices(Rng& rng, int n) const;
  Batch gather(const std::vector<int>& slots) const;

  /// i-th oldest stored transition.
  Transition at(int i) const;
  int size() const { return size_; }
  int capacity() const { return capacity_; }
  int base_count() const { return base_count_; }

 private:
  int slot_of(int logical) const;

  int capacity_;
  int base_count_;
  int cursor_ = 0;
  int size_ = 0;
  Matrix s_, a_, s_next_;
  Vector r_, done_;
  std::vector<Matrix> base_, base_next_;
};

/// Agent-side input encoding: object positions become offsets (object A from
/// the gripper, object B from A) and positions are scaled to unit-ish range.
Matrix encode_observations(const Matrix& obs);

struct CriticStats {
  double loss = 0.0;
  double mean_q = 0.0;
};

struct ActorStats {
  double loss = 0.0;  // L_BC - lambda * J
  double bc_loss = 0.0;
  double dpg_objective = 0.0;  // J
  double bc_active_fraction = 0.0;
  std::vector<int> bc_active;  // batch columns that received a BC gradient
};

struct UpdateStats {
  CriticStats critic;
  ActorStats actor;
};

/// Which candidate the critic prefers; index -1 is the actor's own action.
struct Selection {
  ActionVector action;
  int index = -1;
  std::vector<double> q;  // actor first, then candidates in order
};

class DdpgwbAgent {
 public:
  DdpgwbAgent(AgentConfig config, Rng& init_rng);

  const AgentConfig& config() const { return config_; }

  /// Greedy actor action, no noise.
  ActionVector act(const Observation& s) const;
  double q_value(const Observation& s, const ActionVector& a) const;

  /// argmax of Q(s, .) over {actor action} u base candidates; ties go to the actor.
  Selection mixed_q_argmax(const Observation& s, const std::vector<ActionVector>& base) const;

  /// Exploration action: base branch with probability epsilon (a random
  /// member in ensemble mode), otherwise the critic's pick (or the bare actor
  /// without the argmax); then Gaussian noise and clamping. Does not decay epsilon.
  /// The branch draw is skipped while epsilon is zero.
  ActionVector select_exploration_action(const Observation& s, const std::vector<ActionVector>& base, Rng& rng) const;

  double epsilon() const;
  void epsilon_decay();
  std::int64_t epsilon_steps() const { return epsilon_steps_; }

  Vector compute_bootstrap_targets(const Batch& batch) const;

  /// Critic MSE and its gradient; no state change.
  std::pair<CriticStats, funcapprox::GradientBundle> critic_loss_gradient(const Batch& batch,
                                                                          const Vector& targets) const;
  /// Actor objective L_BC - lambda * J and its gradient; no state change.
  /// With `demo` set (demo baseline), BC is taken on the demo batch toward the
  /// recorded actions and J on `batch`.
  std::pair<ActorStats, funcapprox::GradientBundle> actor_loss_gradient(const Batch& batch,
                                                                        const Batch* demo = nullptr) const;

  CriticStats critic_update(const Batch& batch, const Vector& targets);
  ActorStats actor_update(const Batch& batch, const Batch* demo = nullptr);
  void update_targets();

  /// Critic, then actor, then both target networks.
  UpdateStats train_step(const Batch& batch, const Batch* demo = nullptr);

  funcapprox::MlpNetwork& actor() { return actor_; }
  funcapprox::MlpNetwork& critic() { return critic_; }
  funcapprox::MlpNetwork& target_actor() { return target_actor_; }
  funcapprox::MlpNetwork& target_critic() { return target_critic_; }
  const funcapprox::MlpNetwork& actor() const { return actor_; }
  const funcapprox::MlpNetwork& critic() const { return critic_; }
  const funcapprox::MlpNetwork& target_actor() const { return target_actor_; }
  const funcapprox::MlpNetwork& target_critic() const { return target_critic_; }
  const funcapprox::AdamState& actor_adam() const { return actor_adam_; }
  const funcapprox::AdamState& critic_adam() const { return critic_adam_; }

  std::int64_t update_count() const { return update_count_; }

  /// Checkpoint: "DWB1", version, actor, critic, target actor, target critic,
  /// epsilon, epsilon steps, update count, env steps, config hash.
  void save(std::ostream& out, std::int64_t env_steps, std::uint64_t config_hash) const;

  struct Checkpoint {
    funcapprox::MlpNetwork actor, critic, target_actor, target_critic;
    double epsilon = 0.0;
    std::int64_t epsilon_steps = 0;
    std::int64_t update_count = 0;
    std::int64_t env_steps = 0;
    std::uint64_t config_hash = 0;
  };
  static Checkpoint load(std::istream& in);

 private:
  // Q for each column of (s, a); both already as matrices.
  Matrix critic_values(const funcapprox::MlpNetwork& critic, const Matrix& encoded_s, const Matrix& a) const;

  AgentConfig config_;
  funcapprox::MlpNetwork actor_, critic_, target_actor_, target_critic_;
  funcapprox::AdamState actor_adam_, critic_adam_;
  std::int64_t epsilon_steps_ = 0;
  std::int64_t update_count_ = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Episodes of the noise-free sequential controller that ended in success.
struct DemoSet {
  std::vector<std::vector<Transition>> episodes;
  int attempts = 0;
  int transition_count() const;
};

/// Rolls out `controller` until `count` successful episodes are collected.
/// Throws ConfigError after 20 x count attempts.
DemoSet collect_demonstrations(kinesim::TaskKind task, const controllers::Controller& controller, int count,
                               Rng& rng);

ReplayBuffer to_buffer(const DemoSet& demos);

}  // namespace ddpgwb::agent
