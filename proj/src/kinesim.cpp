#include "ddpgwb/kinesim.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numbers>

#include "ddpgwb/errors.hpp"

namespace ddpgwb::kinesim {

using namespace constants;
using Eigen::Vector2d;

namespace {

Vector3d rotate_z(const Vector3d& v, double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y(), v.z()};
}

std::array<ObjectKind, 2> roster(TaskKind task) {
  switch (task) {
    case TaskKind::Stacking: return {ObjectKind::Cube, ObjectKind::PurpleCube};
    case TaskKind::BlockCup: return {ObjectKind::Cube, ObjectKind::BlueCup};
    case TaskKind::CupCup: return {ObjectKind::GreenCup, ObjectKind::BlueCup};
  }
  return {ObjectKind::Cube, ObjectKind::PurpleCube};
}

// Distance range from `center` to points on the segment [a, b].
std::pair<double, double> segment_distance_range(const Vector2d& a, const Vector2d& b,
                                                 const Vector2d& center) {
  const Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp((center - a).dot(ab) / len2, 0.0, 1.0);
  const double nearest = (a + t * ab - center).norm();
  const double farthest = std::max((a - center).norm(), (b - center).norm());
  return {nearest, farthest};
}

void place_attached(WorldState& state) {
  if (!state.attached) return;
  ObjectSpec& held = state.objects[*state.attached];
  held.pos = state.ee_pos + rotate_z(state.attach_offset, state.ee_yaw);
  held.yaw = state.ee_yaw + state.attach_yaw_offset;
}

// Rigid bodies below a held object push the gripper back up: a held object
// can rest on the table or on a cube but not sink into them.
void resolve_held_penetration(WorldState& state) {
  if (!state.attached) return;
  const int i = *state.attached;
  const ObjectSpec& held = state.objects[i];
  double floor = 0.0;
  for (int j = 0; j < 2; ++j) {
    if (j == i) continue;
    const ObjectSpec& other = state.objects[j];
    if (other.is_cup()) continue;  // cup walls are handled by the tipping rule
    const double d = (held.pos.head<2>() - other.pos.head<2>()).norm();
    if (d < held.half_width() + other.half_width()) floor = std::max(floor, other.top());
  }
  const double deficit = floor - held.pos.z();
  if (deficit > 0.0) {
    state.ee_pos.z() = std::min(state.ee_pos.z() + deficit, kWorkspaceZMax);
    place_attached(state);
  }
}

}  // namespace

bool fits_opening(const ObjectSpec& held, const ObjectSpec& cup) {
  const double turn = cube_yaw_difference(held.yaw, cup.yaw);
  const double extent = 2.0 * held.half_width() * (std::cos(turn) + std::sin(turn));
  return extent <= cup.opening() + 2.0 * kInsertMargin;
}

namespace {

bool tips_cup(const ObjectSpec& held, const Vector2d& held_xy_before, const ObjectSpec& cup) {
  if (!cup.is_cup() || held.pos.z() >= cup.top()) return false;
  const double lo = cup.opening() / 2.0 - kInsertMargin;
  const double hi = cup.opening() / 2.0 + kTipBand;
  const auto [nearest, farthest] =
      segment_distance_range(held_xy_before, held.pos.head<2>(), cup.pos.head<2>());
  if (nearest <= hi && farthest >= lo) return true;
  // Inside the opening: a square footprint turned against the square opening jams on the rim.
  return nearest < lo && !fits_opening(held, cup);
}

}  // namespace

std::string_view to_string(TaskKind task) {
  switch (task) {
    case TaskKind::Stacking: return "stacking";
    case TaskKind::BlockCup: return "block-cup";
    case TaskKind::CupCup: return "cup-cup";
  }
  return "?";
}

std::optional<TaskKind> parse_task(std::string_view name) {
  for (TaskKind t : {TaskKind::Stacking, TaskKind::BlockCup, TaskKind::CupCup})
    if (name == to_string(t)) return t;
  return std::nullopt;
}

std::string_view to_string(Termination cause) {
  switch (cause) {
    case Termination::Running: return "running";
    case Termination::Success: return "success";
    case Termination::Tipped: return "tipped";
    case Termination::Timeout: return "timeout";
  }
  return "?";
}

double ObjectSpec::opening() const {
  switch (kind) {
    case ObjectKind::GreenCup: return 0.05;
    case ObjectKind::BlueCup: return 0.06;
    default: return 0.0;
  }
}

double ObjectSpec::half_width() const {
  return is_cup() ? opening() / 2.0 + kCupWall : kCubeSide / 2.0;
}

Vector3d ObjectSpec::grasp_point() const {
  if (!is_cup()) return pos + Vector3d(0.0, 0.0, height);
  return pos + rotate_z(Vector3d(opening() / 2.0 + kCupWall / 2.0, 0.0, height), yaw);
}

ObjectSpec make_object(ObjectKind kind) {
  ObjectSpec o;
  o.kind = kind;
  o.height = (kind == ObjectKind::GreenCup || kind == ObjectKind::BlueCup) ? kCupHeight : kCubeSide;
  return o;
}

double wrap_angle(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  angle = std::fmod(angle + std::numbers::pi, two_pi);
  if (angle <= 0.0) angle += two_pi;
  return angle - std::numbers::pi;
}

double cube_yaw_difference(double a, double b) {
  constexpr double quarter = std::numbers::pi / 2.0;
  double d = std::fmod(a - b, quarter);
  if (d > quarter / 2.0) d -= quarter;
  if (d < -quarter / 2.0) d += quarter;
  return std::abs(d);
}

std::pair<WorldState, Observation> reset(TaskKind task, Rng& rng) {
  WorldState state;
  state.task = task;
  const auto kinds = roster(task);
  for (int i = 0; i < 2; ++i) state.objects[i] = make_object(kinds[i]);

  constexpr int kMaxTries = 10000;
  int tries = 0;
  for (;; ++tries) {
    if (tries == kMaxTries) throw ContractViolation("reset: could not separate objects");
    for (auto& o : state.objects) {
      o.pos = {rng.uniform(-kPlacementXY, kPlacementXY), rng.uniform(-kPlacementXY, kPlacementXY), 0.0};
    }
    if ((state.objects[0].pos - state.objects[1].pos).norm() >= kMinSeparation) break;
  }
  for (auto& o : state.objects) o.yaw = rng.uniform(-kMaxInitialYaw, kMaxInitialYaw);
  return {state, observe(state)};
}

Observation observe(const WorldState& state) {
  Observation obs;
  obs << state.ee_pos, 0.0, 0.0, state.ee_yaw, state.grip_open, state.finger_force, Eigen::Matrix<double, 12, 1>::Zero();
  for (int i = 0; i < 2; ++i) {
    const ObjectSpec& o = state.objects[i];
    const bool lying = state.tipped && o.is_cup() && !(state.attached && *state.attached == i);
    obs.segment<6>(8 + 6 * i) << o.pos, (lying ? std::numbers::pi / 2.0 : 0.0), 0.0, o.yaw;
  }
  return obs;
}

double support_height(const WorldState& state, int object_index, const Vector2d& xy) {
  const ObjectSpec& obj = state.objects[object_index];
  double rest = 0.0;
  for (int j = 0; j < 2; ++j) {
    if (j == object_index) continue;
    const ObjectSpec& other = state.objects[j];
    const double d = (xy - other.pos.head<2>()).norm();
    double surface = -1.0;
    if (other.is_cup() && d < other.opening() / 2.0 - kInsertMargin) {
      surface = other.pos.z();
    } else if (d < obj.half_width() + other.half_width()) {
      surface = other.top();
    }
    // Only surfaces at or below the object can catch it.
    if (surface <= obj.pos.z() + 1e-9) rest = std::max(rest, surface);
  }
  return rest;
}

StepResult step(WorldState& state, const ActionVector& action) {
  if (state.done) throw ContractViolation("step: episode already finished");
  if (!action.allFinite()) throw ContractViolation("step: non-finite action");
  const ActionVector a = action.cwiseMax(-1.0).cwiseMin(1.0);

  Vector2d held_xy_before = Vector2d::Zero();
  if (state.attached) held_xy_before = state.objects[*state.attached].pos.head<2>();

  state.ee_pos += kMoveScale * a.head<3>();
  state.ee_pos.x() = std::clamp(state.ee_pos.x(), -kWorkspaceXY, kWorkspaceXY);
  state.ee_pos.y() = std::clamp(state.ee_pos.y(), -kWorkspaceXY, kWorkspaceXY);
  state.ee_pos.z() = std::clamp(state.ee_pos.z(), 0.0, kWorkspaceZMax);
  state.ee_yaw = std::clamp(state.ee_yaw + kYawScale * a[3], -std::numbers::pi / 2.0, std::numbers::pi / 2.0);
  state.grip_open = std::clamp(state.grip_open + kGripScale * a[4], 0.0, 1.0);

  place_attached(state);
  resolve_held_penetration(state);

  if (state.attached) {
    const int i = *state.attached;
    for (int j = 0; j < 2; ++j) {
      if (j != i && tips_cup(state.objects[i], held_xy_before, state.objects[j])) state.tipped = true;
    }
  }

  if (state.attached && state.grip_open > kReleaseAbove) {
    const int i = *state.attached;
    state.attached.reset();
    state.finger_force = 0.0;
    ObjectSpec& obj = state.objects[i];
    obj.pos.z() = support_height(state, i, obj.pos.head<2>());
  } else if (!state.attached && !state.tipped && state.grip_open < kGraspCloseBelow) {
    std::optional<int> best;
    double best_dist = 0.0;
    for (int i = 0; i < 2; ++i) {
      const Vector3d diff = state.objects[i].grasp_point() - state.ee_pos;
      if (diff.head<2>().norm() <= kGraspReachXY && std::abs(diff.z()) <= kGraspReachZ) {
        const double d = diff.norm();
        if (!best || d < best_dist) {
          best = i;
          best_dist = d;
        }
      }
    }
    if (best) {
      state.attached = best;
      state.finger_force = 1.0;
      const ObjectSpec& obj = state.objects[*best];
      state.attach_offset = rotate_z(obj.pos - state.ee_pos, -state.ee_yaw);
      state.attach_yaw_offset = obj.yaw - state.ee_yaw;
    }
  }

  state.time_step += 1;
  StepResult result;
  if (!state.tipped && check_success(state, state.task)) {
    result.cause = Termination::Success;
    result.reward = 1.0;
  } else if (state.tipped) {
    result.cause = Termination::Tipped;
  } else if (state.time_step >= kHorizon) {
    result.cause = Termination::Timeout;
  }
  result.done = result.cause != Termination::Running;
  state.done = result.done;
  result.observation = observe(state);
  return result;
}

bool check_success(const WorldState& state, TaskKind task) {
  if (state.attached) return false;
  const ObjectSpec& moved = state.objects[0];
  const ObjectSpec& goal = state.objects[1];
  const double offset = (moved.pos.head<2>() - goal.pos.head<2>()).norm();
  switch (task) {
    case TaskKind::Stacking:
      return offset < kStackOffsetTol && std::abs(moved.pos.z() - goal.top()) <= kStackHeightTol &&
             cube_yaw_difference(moved.yaw, goal.yaw) < kStackYawTol;
    case TaskKind::BlockCup:
    case TaskKind::CupCup: {
      const double inner = task == TaskKind::BlockCup ? kCubeSide : moved.opening();
      const double tol = (goal.opening() - inner) / 2.0 + kInsertMargin;
      return !state.tipped && offset < tol && moved.pos.z() < goal.top();
    }
  }
  return false;
}

std::string trajectory_line(int time_step, const Observation& obs, const ActionVector& action,
                            double reward, bool done) {
  std::string line = std::to_string(time_step);
  for (double v : obs) line += fmt::format(",{:.17g}", v);
  for (double v : action) line += fmt::format(",{:.17g}", v);
  line += fmt::format(",{:g},{}", reward, done ? 1 : 0);
  return line;
}

}  // namespace ddpgwb::kinesim
