#pragma once

#include <memory>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "ddpgwb/kinesim.hpp"
#include "ddpgwb/rng.hpp"

// Scripted base controllers: the waypoint state machine, its action
// primitives, and the ensemble action set built from several of them.
namespace ddpgwb::controllers {

using kinesim::ActionVector;
using kinesim::Observation;
using kinesim::TaskKind;

struct Pose {
  Eigen::Vector3d pos = Eigen::Vector3d::Zero();
  double yaw = 0.0;
};

/// a = tanh(K_p (p_dist - p_curr)); yaw error is wrapped, grip component is 0.
ActionVector move_and_align(const Pose& dist, const Pose& curr, double kp_linear = 5.0,
                            double kp_angular = 2.0);

enum class ControllerPhase { ApproachAbove, Descend, CloseGrip, Lift, TransportAbove, Lower, OpenGrip, Done };

std::string_view to_string(ControllerPhase phase);

struct ControllerParams {
  double kp_linear = 5.0;
  double kp_angular = 2.0;
  double close_enough_pos = 0.01;
  double close_enough_yaw = 0.05;
  double safe_height = 0.2;
  // Hover height above the grasp point before descending.
  double approach_clearance = 0.15;
  // Alignment tolerance once the gripper is already below the travel height;
  // stays inside the cup tipping band.
  double hold_alignment = 0.015;
  double hold_yaw = 0.1;
};

/// Anything that maps an observation to an action.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual ActionVector act(const Observation& obs) const = 0;
  virtual std::string_view name() const = 0;
};

/// The waypoint controller.
///
/// The phase is recovered from the observation alone (gripper contact,
/// gripper height and the object poses), so the controller can be queried on
/// arbitrary replayed states, not only along its own rollouts. `step` also
/// records the phase for inspection.
class SequentialController final : public Controller {
 public:
  explicit SequentialController(TaskKind task, ControllerParams params = {});

  ActionVector act(const Observation& obs) const override;
  std::string_view name() const override { return "sequential"; }

  ActionVector step(const Observation& obs);
  ControllerPhase infer_phase(const Observation& obs) const;
  /// The waypoint MoveAndAlign drives toward in `phase`; the second pose is
  /// the current pose being compared against it (gripper or held object).
  std::pair<Pose, Pose> waypoint(ControllerPhase phase, const Observation& obs) const;

  ControllerPhase phase() const { return phase_; }
  void reset() { phase_ = ControllerPhase::ApproachAbove; }
  TaskKind task() const { return task_; }
  const ControllerParams& params() const { return params_; }

 private:
  TaskKind task_;
  ControllerParams params_;
  ControllerPhase phase_ = ControllerPhase::ApproachAbove;
};

/// MoveAndAlign toward the sequential controller's current waypoint; grip 0.
class MoveAndAlignPrimitive final : public Controller {
 public:
  explicit MoveAndAlignPrimitive(TaskKind task, ControllerParams params = {}) : sequencer_(task, params) {}
  ActionVector act(const Observation& obs) const override;
  std::string_view name() const override { return "move-and-align"; }

 private:
  SequentialController sequencer_;
};

/// Holds still and closes the gripper.
class CloseGripPrimitive final : public Controller {
 public:
  ActionVector act(const Observation&) const override;
  std::string_view name() const override { return "close-grip"; }
};

/// Holds still and opens the gripper.
class OpenGripPrimitive final : public Controller {
 public:
  ActionVector act(const Observation&) const override;
  std::string_view name() const override { return "open-grip"; }
};

using ControllerSet = std::vector<std::shared_ptr<const Controller>>;

/// The three primitives in declaration order: move, close, open.
ControllerSet make_primitive_ensemble(TaskKind task);
ControllerSet make_single(TaskKind task);

/// Candidate actions, one per member controller.
struct EnsembleActionSet {
  std::vector<ActionVector> candidates;
  int size() const { return static_cast<int>(candidates.size()); }
};

/// Throws ConfigError on an empty controller list.
EnsembleActionSet ensemble_action_set(const ControllerSet& members, const Observation& obs);

/// Uniform draw over the candidates.
ActionVector ensemble_sample(const EnsembleActionSet& set, Rng& rng);

/// Uniformly random member per step; the exploration policy of an ensemble.
class MacroEnsembleController {
 public:
  explicit MacroEnsembleController(ControllerSet members) : members_(std::move(members)) {}
  ActionVector act(const Observation& obs, Rng& rng) const {
    return ensemble_sample(ensemble_action_set(members_, obs), rng);
  }

 private:
  ControllerSet members_;
};

}  // namespace ddpgwb::controllers
