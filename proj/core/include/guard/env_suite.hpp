#pragma once

// Constrained-MDP environment family: a square arena, two reduced robots
// (planar unicycle "Point" and damped double-integrator "Drone"), four tasks
// and four constraint kinds, including the movable-object dynamics of chase
// targets, defense targets and ghosts.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "guard/numerics.hpp"

namespace guard::env {

using num::Vector;
using Vec3 = Eigen::Vector3d;

enum class RobotKind { kPoint, kDrone };
enum class TaskKind { kGoal, kPush, kChase, kDefense };
enum class ConstraintKind { kHazards, kHazards3D, kGhosts, kGhosts3D };
enum class MovableKind { kChaseTarget, kDefenseTarget, kGhost };

std::string_view to_string(RobotKind kind);
std::string_view to_string(TaskKind kind);
std::string_view to_string(ConstraintKind kind);
std::optional<RobotKind> parse_robot(std::string_view name);
std::optional<TaskKind> parse_task(std::string_view name);
std::optional<ConstraintKind> parse_constraint(std::string_view name);

bool is_3d(ConstraintKind kind);
bool is_ghost(ConstraintKind kind);

struct ConstraintSpec {
  ConstraintKind kind = ConstraintKind::kHazards;
  int count = 8;
  double radius = 0.3;
  bool trespassable = true;  // hazards are always trespassable
};

// Parameters of the piecewise movable-object law. `origin` is the centre of
// the r0 region (world origin by default).
struct MovableDynamics {
  double v0 = 1.0;
  double v1 = 0.3;
  double v2 = 0.3;
  double r0 = 2.5;
  double r1 = 1.0;
  Vec3 origin = Vec3::Zero();
};

struct RobotParams {
  double turn_rate_max = 2.0;  // rad/s, Point
  double accel_max = 1.0;      // m/s^2
  double speed_max = 1.5;      // m/s, Point
  double drag = 0.5;           // 1/s, Drone
  double radius = 0.1;         // m, contact and spawn keep-out
};

struct WorldConfig {
  double arena_half_extent = 3.0;
  double arena_height = 3.0;  // Drone altitude range [0, arena_height]
  RobotKind robot = RobotKind::kPoint;
  TaskKind task = TaskKind::kGoal;
  ConstraintSpec constraint;
  MovableDynamics dynamics;
  RobotParams robot_params;
  int lidar_bins = 16;
  double lidar_range = 3.0;
  double dt = 0.1;
  int max_episode_steps = 1000;
  std::uint64_t seed = 0;

  double goal_radius = 0.3;
  double ball_radius = 0.3;
  double ball_drag = 2.0;
  double protected_radius = 1.0;
  int num_targets = 3;
  double target_radius = 0.3;
  double object_z_min = 0.5;
  double object_z_max = 2.5;
  double reward_distance = 1.0;  // k_d
  double reward_goal = 1.0;      // k_g

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
  int action_dim() const { return robot == RobotKind::kPoint ? 2 : 3; }
  /// Task objects live in 3D only for the Drone; the ball always rolls on the floor.
  bool task_objects_3d() const { return robot == RobotKind::kDrone; }
};

/// Applies one `key=value` setting; throws std::invalid_argument on an
/// unknown key or unparsable value.
void apply_world_setting(WorldConfig& config, std::string_view key, std::string_view value);
/// Returns true if `key` names a WorldConfig field.
bool is_world_setting(std::string_view key);
/// Reads `key=value` lines ('#' starts a comment) on top of `base`.
WorldConfig parse_world_config(std::istream& in, WorldConfig base = {});
std::string format_world_config(const WorldConfig& config);

struct RobotState {
  Vec3 position = Vec3::Zero();
  double heading = 0.0;            // Point
  double speed = 0.0;              // Point, forward speed >= 0
  Vec3 velocity = Vec3::Zero();    // Drone
};

struct ObjectSet {
  std::vector<Vec3> constraints;   // hazard or ghost centres
  std::vector<Vec3> targets;       // Chase / Defense
  std::optional<Vec3> goal;        // Goal / Push
  std::optional<Vec3> ball;        // Push
  Vec3 ball_velocity = Vec3::Zero();
  Vec3 protected_center = Vec3::Zero();  // Defense
  double protected_radius = 0.0;
};

struct EnvState {
  RobotState robot;
  ObjectSet objects;
  int steps = 0;
  int goals_reached = 0;
  int breaches = 0;
  num::RngStream rng;
};

struct StepInfo {
  int goals_reached = 0;  // this step
  int violations = 0;     // this step
  int breaches = 0;       // Defense targets entering the protected area, this step
};

struct StepOutcome {
  Vector observation;
  double reward = 0.0;
  double cost = 0.0;
  bool done = false;
  StepInfo info;
};

struct TaskEvents {
  bool goal_reached = false;
  int breaches = 0;
};

struct RewardResult {
  double reward = 0.0;
  TaskEvents events;
};

struct CostResult {
  double cost = 0.0;
  int violations = 0;
  RobotState robot;  // after untrespassable contact resolution
};

/// Distance between the robot and an object; planar objects ignore altitude.
double object_distance(const Vec3& object, bool planar, const Vec3& robot);

EnvState reset_state(const WorldConfig& config, std::uint64_t seed);
std::pair<EnvState, Vector> reset(const WorldConfig& config, std::uint64_t seed);

/// Clips the action to [-1, 1] and integrates the robot one step.
RobotState robot_step(const RobotState& state, const Vector& action, const WorldConfig& config);

/// Piecewise velocity law for one movable object.
Vec3 movable_velocity(MovableKind kind, const Vec3& object, const Vec3& robot,
                      const MovableDynamics& dynamics, bool planar);

ObjectSet update_movable_objects(const ObjectSet& objects, const RobotState& robot,
                                 const WorldConfig& config);

/// Push task: robot-ball contact impulse, ball integration and drag.
void resolve_ball_contact(ObjectSet& objects, const RobotState& robot, const WorldConfig& config);

RewardResult compute_reward(const EnvState& before, const EnvState& after,
                            const WorldConfig& config);

CostResult compute_cost(const RobotState& robot, const ObjectSet& objects,
                        const WorldConfig& config);

int observation_dim(const WorldConfig& config);
Vector build_observation(const RobotState& robot, const ObjectSet& objects,
                         const WorldConfig& config);

// Mutates `state`. Order: clip -> robot -> movable objects -> ball -> reward
// -> cost (with contact resolution) -> task resampling -> observation.
StepOutcome env_step(EnvState& state, const Vector& action, const WorldConfig& config);

struct TraceRow {
  int step = 0;
  Vec3 position = Vec3::Zero();
  double heading = 0.0;
  double reward = 0.0;
  double cost = 0.0;
};

/// Header `step,x,y,z,heading,reward,cost`.
void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows);

/// Owning environment instance. Each reset draws a fresh layout seed from a
/// stream seeded by config.seed, so an instance replays identically.
class Env {
 public:
  explicit Env(WorldConfig config);

  Vector reset();
  Vector reset(std::uint64_t layout_seed);
  StepOutcome step(const Vector& action);

  const WorldConfig& config() const { return config_; }
  const EnvState& state() const { return state_; }
  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return config_.action_dim(); }

  void set_trace(bool enabled) { trace_enabled_ = enabled; }
  const std::vector<TraceRow>& trace() const { return trace_; }

 private:
  WorldConfig config_;
  num::RngStream episode_seeds_;
  EnvState state_;
  int obs_dim_;
  bool trace_enabled_ = false;
  std::vector<TraceRow> trace_;
};

}  // namespace guard::env
