#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include <Eigen/Core>

#include "ddpgwb/rng.hpp"

// Kinematic desk-top manipulation: one gripper, two objects, sparse reward.
namespace ddpgwb::kinesim {

inline constexpr int kActionDim = 5;
inline constexpr int kObservationDim = 20;
inline constexpr int kHorizon = 100;

using ActionVector = Eigen::Matrix<double, kActionDim, 1>;
using Observation = Eigen::Matrix<double, kObservationDim, 1>;
using Eigen::Vector3d;

enum class TaskKind { Stacking, BlockCup, CupCup };

std::string_view to_string(TaskKind task);
/// Accepts "stacking", "block-cup", "cup-cup" (case-sensitive).
std::optional<TaskKind> parse_task(std::string_view name);

namespace constants {
inline constexpr double kMoveScale = 0.05;   // m per unit translation command
inline constexpr double kYawScale = 0.04;    // rad per unit yaw command
inline constexpr double kGripScale = 0.1;  // open fraction per unit grip command
inline constexpr double kWorkspaceXY = 0.3;  // |x|, |y| bound
inline constexpr double kWorkspaceZMax = 0.5;
inline constexpr double kPlacementXY = 0.2;
inline constexpr double kMinSeparation = 0.12;
inline constexpr double kMaxInitialYaw = 0.7853981633974483;  // pi / 4
inline constexpr double kGraspCloseBelow = 0.3;
inline constexpr double kReleaseAbove = 0.5;
inline constexpr double kGraspReachXY = 0.02;
inline constexpr double kGraspReachZ = 0.02;
inline constexpr double kCubeSide = 0.05;
inline constexpr double kCupHeight = 0.15;
inline constexpr double kCupWall = 0.005;
inline constexpr double kInsertMargin = 0.005;
inline constexpr double kTipBand = 0.02;
inline constexpr double kStackOffsetTol = 0.025;
inline constexpr double kStackHeightTol = 0.01;
inline constexpr double kStackYawTol = 0.3;
inline const Vector3d kHomePosition{0.0, 0.0, 0.3};
}  // namespace constants

enum class ObjectKind { Cube, GreenCup, BlueCup, PurpleCube };

struct ObjectSpec {
  ObjectKind kind = ObjectKind::Cube;
  Vector3d pos = Vector3d::Zero();  // bottom-face centre
  double yaw = 0.0;
  double height = constants::kCubeSide;

  bool is_cup() const { return kind == ObjectKind::GreenCup || kind == ObjectKind::BlueCup; }
  /// Side length of the square cup opening; zero for cubes.
  double opening() const;
  /// Half-width of the object's footprint on the table.
  double half_width() const;
  /// Cube: centre of the top face. Cup: mid-wall on the rim along the cup's local +x.
  Vector3d grasp_point() const;
  double top() const { return pos.z() + height; }

  bool operator==(const ObjectSpec&) const = default;
};

ObjectSpec make_object(ObjectKind kind);

struct WorldState {
  TaskKind task = TaskKind::Stacking;
  Vector3d ee_pos = constants::kHomePosition;
  double ee_yaw = 0.0;
  double grip_open = 1.0;
  double finger_force = 0.0;
  // objects[0] is the one to be moved (green), objects[1] the goal receptacle.
  std::array<ObjectSpec, 2> objects{};
  std::optional<int> attached;
  Vector3d attach_offset = Vector3d::Zero();  // object pos - ee pos, in the ee yaw frame
  double attach_yaw_offset = 0.0;
  int time_step = 0;
  bool tipped = false;
  bool done = false;

  bool operator==(const WorldState&) const = default;
};

enum class Termination { Running, Success, Tipped, Timeout };

std::string_view to_string(Termination cause);

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  Termination cause = Termination::Running;
};

/// Fresh episode: both objects uniform in the placement square with their
/// centres at least kMinSeparation apart; gripper at home, open.
std::pair<WorldState, Observation> reset(TaskKind task, Rng& rng);

/// The 20-d agent view of a world state.
Observation observe(const WorldState& state);

/// Advances one control step in place. Throws ContractViolation if the
/// episode is already over or the action is not finite.
StepResult step(WorldState& state, const ActionVector& action);

bool check_success(const WorldState& state, TaskKind task);

/// Height at which an object would come to rest if released at `xy`.
double support_height(const WorldState& state, int object_index, const Eigen::Vector2d& xy);

/// Wrap an angle to (-pi, pi].
double wrap_angle(double angle);

/// Whether the held object's square footprint, at its current yaw, passes
/// through the cup's square opening (insert margin on each side).
bool fits_opening(const ObjectSpec& held, const ObjectSpec& cup);

/// Yaw difference between two cubes modulo their quarter-turn symmetry.
double cube_yaw_difference(double a, double b);

/// One line of the trajectory dump: time_step, observation, action, reward, done.
std::string trajectory_line(int time_step, const Observation& obs, const ActionVector& action,
                            double reward, bool done);

}  // namespace ddpgwb::kinesim
