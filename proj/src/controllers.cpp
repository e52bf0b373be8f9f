#include "ddpgwb/controllers.hpp"

#include <algorithm>
#include <cmath>

#include "ddpgwb/errors.hpp"

namespace ddpgwb::controllers {

using Eigen::Vector3d;
using kinesim::wrap_angle;

namespace {

// Extra clearance kept between a carried object and the receptacle top.
constexpr double kCarryClearance = 0.03;
// Release height above the stacking surface.
constexpr double kStackReleaseGap = 0.005;
// Bottom height inside a cup at which the carried object is let go.
constexpr double kCupReleaseHeight = 0.02;
// A grasp further than this from the moved object's grasp point is the wrong object.
constexpr double kWrongGraspDistance = 0.04;

struct View {
  Vector3d ee;
  double ee_yaw;
  double grip;
  bool holding;
  Vector3d a_pos;
  double a_yaw;
  Vector3d b_pos;
  double b_yaw;
  double a_height;
  double b_height;
  kinesim::ObjectKind a_kind;

  Vector3d a_grasp() const {
    kinesim::ObjectSpec o = kinesim::make_object(a_kind);
    o.pos = a_pos;
    o.yaw = a_yaw;
    return o.grasp_point();
  }
  double b_top() const { return b_pos.z() + b_height; }
  double horizontal_to_b() const { return (a_pos.head<2>() - b_pos.head<2>()).norm(); }
};

View decode(const Observation& obs, TaskKind task) {
  View v;
  v.ee = obs.head<3>();
  v.ee_yaw = obs[5];
  v.grip = obs[6];
  v.holding = obs[7] > 0.5;
  v.a_pos = obs.segment<3>(8);
  v.a_yaw = obs[13];
  v.b_pos = obs.segment<3>(14);
  v.b_yaw = obs[19];
  v.a_height = task == TaskKind::CupCup ? kinesim::constants::kCupHeight : kinesim::constants::kCubeSide;
  v.a_kind = task == TaskKind::CupCup ? kinesim::ObjectKind::GreenCup : kinesim::ObjectKind::Cube;
  v.b_height = task == TaskKind::Stacking ? kinesim::constants::kCubeSide : kinesim::constants::kCupHeight;
  return v;
}

struct CarryPlan {
  double grasp_offset_z;  // ee height above the held object's bottom
  double carry_ee_z;
  double place_ee_z;
};

CarryPlan carry_plan(const View& v, TaskKind task, const ControllerParams& p) {
  CarryPlan plan;
  plan.grasp_offset_z = v.ee.z() - v.a_pos.z();
  plan.carry_ee_z = std::max(p.safe_height, v.b_top() + plan.grasp_offset_z + kCarryClearance);
  const double release_bottom =
      task == TaskKind::Stacking ? v.b_top() + kStackReleaseGap : v.b_pos.z() + kCupReleaseHeight;
  plan.place_ee_z = release_bottom + plan.grasp_offset_z;
  return plan;
}

bool placed(const View& v, TaskKind task) {
  const double offset = v.horizontal_to_b();
  if (offset >= kinesim::constants::kStackOffsetTol) return false;
  if (task == TaskKind::Stacking) return std::abs(v.a_pos.z() - v.b_top()) < kinesim::constants::kStackHeightTol;
  return v.a_pos.z() < v.b_top();
}

}  // namespace

ActionVector move_and_align(const Pose& dist, const Pose& curr, double kp_linear, double kp_angular) {
  ActionVector a;
  a.head<3>() = (kp_linear * (dist.pos - curr.pos)).array().tanh();
  a[3] = std::tanh(kp_angular * wrap_angle(dist.yaw - curr.yaw));
  a[4] = 0.0;
  return a;
}

std::string_view to_string(ControllerPhase phase) {
  switch (phase) {
    case ControllerPhase::ApproachAbove: return "approach-above";
    case ControllerPhase::Descend: return "descend";
    case ControllerPhase::CloseGrip: return "close-grip";
    case ControllerPhase::Lift: return "lift";
    case ControllerPhase::TransportAbove: return "transport-above";
    case ControllerPhase::Lower: return "lower";
    case ControllerPhase::OpenGrip: return "open-grip";
    case ControllerPhase::Done: return "done";
  }
  return "?";
}

SequentialController::SequentialController(TaskKind task, ControllerParams params)
    : task_(task), params_(params) {}

ControllerPhase SequentialController::infer_phase(const Observation& obs) const {
  const View v = decode(obs, task_);
  const ControllerParams& p = params_;

  if (v.holding) {
    if ((v.ee - v.a_grasp()).norm() > kWrongGraspDistance) return ControllerPhase::OpenGrip;
    const CarryPlan plan = carry_plan(v, task_, p);
    const bool low = v.ee.z() < plan.carry_ee_z - p.close_enough_pos;
    const double h_err = v.horizontal_to_b();
    const double yaw_err = std::abs(wrap_angle(v.b_yaw - v.a_yaw));
    // The held object's yaw keeps converging while it is lowered; release waits for it.
    if (h_err < (low ? p.hold_alignment : p.close_enough_pos)) {
      if (std::abs(v.ee.z() - plan.place_ee_z) < p.hold_alignment && yaw_err < p.close_enough_yaw)
        return ControllerPhase::OpenGrip;
      return ControllerPhase::Lower;
    }
    return low ? ControllerPhase::Lift : ControllerPhase::TransportAbove;
  }

  if (placed(v, task_)) return ControllerPhase::Done;
  const Vector3d grasp = v.a_grasp();
  const bool low = v.ee.z() < std::max(p.safe_height, grasp.z() + p.approach_clearance) - p.close_enough_pos;
  const double h_err = (v.ee.head<2>() - grasp.head<2>()).norm();
  const double yaw_err = std::abs(wrap_angle(v.a_yaw - v.ee_yaw));
  if (h_err < (low ? p.hold_alignment : p.close_enough_pos) &&
      yaw_err < (low ? p.hold_yaw : p.close_enough_yaw)) {
    if (std::abs(v.ee.z() - grasp.z()) < p.hold_alignment && h_err < p.close_enough_pos)
      return ControllerPhase::CloseGrip;
    return ControllerPhase::Descend;
  }
  return ControllerPhase::ApproachAbove;
}

std::pair<Pose, Pose> SequentialController::waypoint(ControllerPhase phase, const Observation& obs) const {
  const View v = decode(obs, task_);
  const Pose gripper{v.ee, v.ee_yaw};
  const Pose object{v.a_pos, v.a_yaw};
  switch (phase) {
    case ControllerPhase::ApproachAbove: {
      const Vector3d grasp = v.a_grasp();
      return {{{grasp.x(), grasp.y(), std::max(params_.safe_height, grasp.z() + params_.approach_clearance)}, v.a_yaw}, gripper};
    }
    case ControllerPhase::Descend:
    case ControllerPhase::CloseGrip:
      return {{v.a_grasp(), v.a_yaw}, gripper};
    case ControllerPhase::Lift: {
      const CarryPlan plan = carry_plan(v, task_, params_);
      return {{{v.ee.x(), v.ee.y(), plan.carry_ee_z}, v.ee_yaw + wrap_angle(v.b_yaw - v.a_yaw)}, gripper};
    }
    case ControllerPhase::TransportAbove: {
      const CarryPlan plan = carry_plan(v, task_, params_);
      return {{{v.b_pos.x(), v.b_pos.y(), plan.carry_ee_z - plan.grasp_offset_z}, v.b_yaw}, object};
    }
    case ControllerPhase::Lower:
    case ControllerPhase::OpenGrip: {
      if (v.holding && (v.ee - v.a_grasp()).norm() > kWrongGraspDistance) return {gripper, gripper};
      const CarryPlan plan = carry_plan(v, task_, params_);
      return {{{v.b_pos.x(), v.b_pos.y(), plan.place_ee_z - plan.grasp_offset_z}, v.b_yaw}, object};
    }
    case ControllerPhase::Done:
      return {{{v.ee.x(), v.ee.y(), params_.safe_height}, v.ee_yaw}, gripper};
  }
  return {gripper, gripper};
}

ActionVector SequentialController::act(const Observation& obs) const {
  const ControllerPhase phase = infer_phase(obs);
  const auto [dist, curr] = waypoint(phase, obs);
  ActionVector a = move_and_align(dist, curr, params_.kp_linear, params_.kp_angular);
  const double grip = obs[6];
  switch (phase) {
    case ControllerPhase::CloseGrip: a[4] = -1.0; break;
    case ControllerPhase::OpenGrip: a[4] = 1.0; break;
    case ControllerPhase::ApproachAbove:
    case ControllerPhase::Done: a[4] = grip < 1.0 ? 1.0 : 0.0; break;
    default: break;
  }
  return a;
}

ActionVector SequentialController::step(const Observation& obs) {
  phase_ = infer_phase(obs);
  return act(obs);
}

ActionVector MoveAndAlignPrimitive::act(const Observation& obs) const {
  const auto [dist, curr] = sequencer_.waypoint(sequencer_.infer_phase(obs), obs);
  const ControllerParams& p = sequencer_.params();
  return move_and_align(dist, curr, p.kp_linear, p.kp_angular);
}

ActionVector CloseGripPrimitive::act(const Observation&) const {
  ActionVector a = ActionVector::Zero();
  a[4] = -1.0;
  return a;
}

ActionVector OpenGripPrimitive::act(const Observation&) const {
  ActionVector a = ActionVector::Zero();
  a[4] = 1.0;
  return a;
}

ControllerSet make_primitive_ensemble(TaskKind task) {
  return {std::make_shared<MoveAndAlignPrimitive>(task), std::make_shared<CloseGripPrimitive>(),
          std::make_shared<OpenGripPrimitive>()};
}

ControllerSet make_single(TaskKind task) { return {std::make_shared<SequentialController>(task)}; }

EnsembleActionSet ensemble_action_set(const ControllerSet& members, const Observation& obs) {
  if (members.empty()) throw ConfigError("ensemble_action_set: no controllers configured");
  EnsembleActionSet set;
  set.candidates.reserve(members.size());
  for (const auto& m : members) set.candidates.push_back(m->act(obs));
  return set;
}

ActionVector ensemble_sample(const EnsembleActionSet& set, Rng& rng) {
  if (set.candidates.empty()) throw ContractViolation("ensemble_sample: empty action set");
  if (set.candidates.size() == 1) return set.candidates.front();
  return set.candidates[rng.index(set.candidates.size())];
}

}  // namespace ddpgwb::controllers
