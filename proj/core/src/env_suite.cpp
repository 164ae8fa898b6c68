#include "guard/env_suite.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace guard::env {

namespace {

constexpr int kMaxPlacementAttempts = 10000;
constexpr int kElevationBands = 3;

struct Placed {
  Vec3 position;
  double radius;
  bool planar;
};

bool separated(const Placed& a, const Placed& b) {
  Vec3 d = a.position - b.position;
  if (a.planar || b.planar) d.z() = 0.0;
  return d.norm() >= 2.0 * (a.radius + b.radius);
}

template <typename Extra>
Vec3 place(num::RngStream& rng, std::vector<Placed>& placed, const WorldConfig& config,
           double radius, bool planar, Extra&& extra_ok) {
  const double lim = config.arena_half_extent - radius;
  if (!(lim > 0.0)) throw std::runtime_error("placement: object does not fit in the arena");
  for (int attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
    Vec3 p;
    p.x() = rng.uniform(-lim, lim);
    p.y() = rng.uniform(-lim, lim);
    p.z() = planar ? 0.0 : rng.uniform(config.object_z_min, config.object_z_max);
    const Placed candidate{p, radius, planar};
    if (!extra_ok(p)) continue;
    if (std::all_of(placed.begin(), placed.end(),
                    [&](const Placed& other) { return separated(candidate, other); })) {
      placed.push_back(candidate);
      return p;
    }
  }
  throw std::runtime_error("placement failed after " + std::to_string(kMaxPlacementAttempts) +
                           " attempts: arena too crowded");
}

Vec3 place(num::RngStream& rng, std::vector<Placed>& placed, const WorldConfig& config,
           double radius, bool planar) {
  return place(rng, placed, config, radius, planar, [](const Vec3&) { return true; });
}

double planar_distance(const Vec3& a, const Vec3& b) {
  return std::hypot(a.x() - b.x(), a.y() - b.y());
}

Vec3 relative(const Vec3& object, bool planar, const RobotState& robot) {
  Vec3 d = object - robot.position;
  if (planar) d.z() = 0.0;
  return d;
}

bool robot_is_planar(const WorldConfig& config) { return config.robot == RobotKind::kPoint; }

Vec3 spawn_position(const WorldConfig& config) {
  return robot_is_planar(config) ? Vec3::Zero() : Vec3(0.0, 0.0, 0.5 * config.arena_height);
}

int lidar_block_size(const WorldConfig& config) {
  return robot_is_planar(config) ? config.lidar_bins : config.lidar_bins * kElevationBands;
}

int compass_count(const WorldConfig& config) {
  switch (config.task) {
    case TaskKind::kGoal: return 1;
    case TaskKind::kPush: return 2;
    case TaskKind::kChase: return config.num_targets;
    case TaskKind::kDefense: return config.num_targets + 1;
  }
  return 0;
}

int lidar_block_count(const WorldConfig& config) {
  // constraints + task category (goal; ball and goal; targets)
  return config.task == TaskKind::kPush ? 3 : 2;
}

void write_compass(const Vec3& rel, const RobotState& robot, const WorldConfig& config,
                   Vector& obs, int& at) {
  const double n = rel.norm();
  const Vec3 unit = n > 0.0 ? Vec3(rel / n) : Vec3::Zero();
  if (robot_is_planar(config)) {
    const double c = std::cos(robot.heading);
    const double s = std::sin(robot.heading);
    obs[at++] = c * unit.x() + s * unit.y();
    obs[at++] = -s * unit.x() + c * unit.y();
  } else {
    obs[at++] = unit.x();
    obs[at++] = unit.y();
    obs[at++] = unit.z();
  }
}

void write_lidar(const std::vector<Vec3>& objects, bool planar, const RobotState& robot,
                 const WorldConfig& config, Vector& obs, int& at) {
  const int bins = config.lidar_bins;
  const int size = lidar_block_size(config);
  auto block = obs.segment(at, size);
  block.setZero();
  const double sector = 2.0 * std::numbers::pi / bins;
  for (const Vec3& object : objects) {
    const Vec3 rel = relative(object, planar, robot);
    const double dist = rel.norm();
    const double value = std::max(0.0, 1.0 - dist / config.lidar_range);
    if (value <= 0.0) continue;
    double azimuth = 0.0;
    int band = 0;
    if (robot_is_planar(config)) {
      azimuth = std::atan2(rel.y(), rel.x()) - robot.heading;
    } else {
      azimuth = std::atan2(rel.y(), rel.x());
      const double elevation = std::atan2(rel.z(), std::hypot(rel.x(), rel.y()));
      band = elevation < -std::numbers::pi / 6.0 ? 0 : (elevation < std::numbers::pi / 6.0 ? 1 : 2);
    }
    azimuth = std::fmod(azimuth, 2.0 * std::numbers::pi);
    if (azimuth < 0.0) azimuth += 2.0 * std::numbers::pi;
    const int bin = std::min(bins - 1, static_cast<int>(azimuth / sector));
    double& slot = block[band * bins + bin];
    slot = std::max(slot, value);
  }
  at += size;
}

Vec3 resample_goal(EnvState& state, const WorldConfig& config) {
  std::vector<Placed> placed;
  placed.push_back({state.robot.position, config.robot_params.radius, robot_is_planar(config)});
  const bool constraint_planar = !is_3d(config.constraint.kind);
  for (const Vec3& c : state.objects.constraints) placed.push_back({c, config.constraint.radius, constraint_planar});
  if (state.objects.ball) placed.push_back({*state.objects.ball, config.ball_radius, true});
  const bool planar = config.task == TaskKind::kPush || !config.task_objects_3d();
  return place(state.rng, placed, config, config.goal_radius, planar);
}

}  // namespace

// ------------------------------------------------------------------ reset --

EnvState reset_state(const WorldConfig& config, std::uint64_t seed) {
  config.validate();
  EnvState state;
  state.rng = num::RngStream(seed);
  state.robot.position = spawn_position(config);

  std::vector<Placed> placed;
  placed.push_back({state.robot.position, config.robot_params.radius, robot_is_planar(config)});

  const bool task_planar = !config.task_objects_3d();
  ObjectSet& objects = state.objects;
  switch (config.task) {
    case TaskKind::kGoal:
      objects.goal = place(state.rng, placed, config, config.goal_radius, task_planar);
      break;
    case TaskKind::kPush:
      objects.ball = place(state.rng, placed, config, config.ball_radius, true);
      objects.goal = place(state.rng, placed, config, config.goal_radius, true);
      break;
    case TaskKind::kChase:
    case TaskKind::kDefense: {
      const MovableDynamics& dyn = config.dynamics;
      objects.protected_center = Vec3(dyn.origin.x(), dyn.origin.y(), 0.0);
      objects.protected_radius = config.protected_radius;
      const bool defense = config.task == TaskKind::kDefense;
      const double keep_out = config.protected_radius + 2.0 * config.target_radius;
      auto admissible = [&](const Vec3& p) {
        const Vec3 d = task_planar ? Vec3(p.x() - dyn.origin.x(), p.y() - dyn.origin.y(), 0.0)
                                   : Vec3(p - dyn.origin);
        if (d.norm() > dyn.r0) return false;
        return !defense || planar_distance(p, objects.protected_center) >= keep_out;
      };
      for (int i = 0; i < config.num_targets; ++i) {
        objects.targets.push_back(place(state.rng, placed, config, config.target_radius, task_planar, admissible));
      }
      break;
    }
  }

  const bool constraint_planar = !is_3d(config.constraint.kind);
  for (int i = 0; i < config.constraint.count; ++i) {
    objects.constraints.push_back(place(state.rng, placed, config, config.constraint.radius, constraint_planar));
  }
  return state;
}

std::pair<EnvState, Vector> reset(const WorldConfig& config, std::uint64_t seed) {
  EnvState state = reset_state(config, seed);
  Vector obs = build_observation(state.robot, state.objects, config);
  return {std::move(state), std::move(obs)};
}

// ----------------------------------------------------------------- reward --

RewardResult compute_reward(const EnvState& before, const EnvState& after,
                            const WorldConfig& config) {
  RewardResult result;
  const double kd = config.reward_distance;
  const double kg = config.reward_goal;
  const bool task_planar = !config.task_objects_3d();
  const Vec3& rb = before.robot.position;
  const Vec3& ra = after.robot.position;

  switch (config.task) {
    case TaskKind::kGoal: {
      const Vec3& goal = *after.objects.goal;
      const double d_before = object_distance(goal, task_planar, rb);
      const double d_after = object_distance(goal, task_planar, ra);
      result.reward = kd * (d_before - d_after);
      if (d_after <= config.goal_radius) {
        result.reward += kg;
        result.events.goal_reached = true;
      }
      break;
    }
    case TaskKind::kPush: {
      const Vec3& goal = *after.objects.goal;
      const Vec3& ball_b = *before.objects.ball;
      const Vec3& ball_a = *after.objects.ball;
      const double robot_ball = object_distance(ball_b, true, rb) - object_distance(ball_a, true, ra);
      const double ball_goal_after = planar_distance(ball_a, goal);
      const double ball_goal = planar_distance(ball_b, goal) - ball_goal_after;
      result.reward = kd * robot_ball + kd * ball_goal;
      if (ball_goal_after <= config.goal_radius) {
        result.reward += kg;
        result.events.goal_reached = true;
      }
      break;
    }
    case TaskKind::kChase: {
      for (std::size_t i = 0; i < after.objects.targets.size(); ++i) {
        result.reward += kd * (object_distance(before.objects.targets[i], task_planar, rb) -
                               object_distance(after.objects.targets[i], task_planar, ra));
      }
      break;
    }
    case TaskKind::kDefense: {
      const Vec3& center = after.objects.protected_center;
      for (std::size_t i = 0; i < after.objects.targets.size(); ++i) {
        const double d_after = planar_distance(after.objects.targets[i], center);
        result.reward += kd * (d_after - planar_distance(before.objects.targets[i], center));
        if (d_after <= after.objects.protected_radius) {
          result.reward -= kg;
          ++result.events.breaches;
        }
      }
      break;
    }
  }
  return result;
}

// ------------------------------------------------------------------- cost --

CostResult compute_cost(const RobotState& robot, const ObjectSet& objects,
                        const WorldConfig& config) {
  CostResult result;
  result.robot = robot;
  const ConstraintSpec& spec = config.constraint;
  const bool planar = !is_3d(spec.kind);
  const bool blocking = is_ghost(spec.kind) && !spec.trespassable;
  const double reach = blocking ? spec.radius + config.robot_params.radius : spec.radius;

  std::vector<const Vec3*> touched;
  for (const Vec3& c : objects.constraints) {
    if (object_distance(c, planar, robot.position) <= reach) {
      ++result.violations;
      touched.push_back(&c);
    }
  }
  result.cost = static_cast<double>(result.violations);

  if (blocking) {
    // Move the robot out to the ghost surface along the contact normal.
    for (const Vec3* c : touched) {
      Vec3 away = result.robot.position - *c;
      if (planar) away.z() = 0.0;
      const double dist = away.norm();
      if (dist >= reach) continue;
      const Vec3 normal = dist > 0.0 ? Vec3(away / dist) : Vec3::UnitX();
      Vec3 pos = *c + reach * normal;
      if (planar) pos.z() = result.robot.position.z();
      const double h = config.arena_half_extent;
      pos.x() = std::clamp(pos.x(), -h, h);
      pos.y() = std::clamp(pos.y(), -h, h);
      pos.z() = robot_is_planar(config) ? 0.0 : std::clamp(pos.z(), 0.0, config.arena_height);
      result.robot.position = pos;
    }
  }
  return result;
}

// ------------------------------------------------------------ observation --

int observation_dim(const WorldConfig& config) {
  const bool planar = robot_is_planar(config);
  const int proprio = planar ? 4 : 3;
  const int compass = compass_count(config) * (planar ? 2 : 3);
  return proprio + compass + lidar_block_count(config) * lidar_block_size(config);
}

Vector build_observation(const RobotState& robot, const ObjectSet& objects,
                         const WorldConfig& config) {
  Vector obs = Vector::Zero(observation_dim(config));
  int at = 0;
  const bool task_planar = !config.task_objects_3d();

  if (robot_is_planar(config)) {
    obs[at++] = robot.speed;  // body-frame forward velocity
    obs[at++] = 0.0;          // body-frame lateral velocity (unicycle)
    obs[at++] = std::cos(robot.heading);
    obs[at++] = std::sin(robot.heading);
  } else {
    obs[at++] = robot.velocity.x();
    obs[at++] = robot.velocity.y();
    obs[at++] = robot.velocity.z();
  }

  switch (config.task) {
    case TaskKind::kGoal:
      write_compass(relative(*objects.goal, task_planar, robot), robot, config, obs, at);
      break;
    case TaskKind::kPush:
      write_compass(relative(*objects.ball, true, robot), robot, config, obs, at);
      write_compass(relative(*objects.goal, true, robot), robot, config, obs, at);
      break;
    case TaskKind::kChase:
    case TaskKind::kDefense:
      for (const Vec3& t : objects.targets) write_compass(relative(t, task_planar, robot), robot, config, obs, at);
      // Missing targets (never in practice) leave zeros.
      at += static_cast<int>(config.num_targets - objects.targets.size()) * (robot_is_planar(config) ? 2 : 3);
      if (config.task == TaskKind::kDefense) {
        write_compass(relative(objects.protected_center, true, robot), robot, config, obs, at);
      }
      break;
  }

  write_lidar(objects.constraints, !is_3d(config.constraint.kind), robot, config, obs, at);
  switch (config.task) {
    case TaskKind::kGoal:
      write_lidar({*objects.goal}, task_planar, robot, config, obs, at);
      break;
    case TaskKind::kPush:
      write_lidar({*objects.goal}, true, robot, config, obs, at);
      write_lidar({*objects.ball}, true, robot, config, obs, at);
      break;
    case TaskKind::kChase:
    case TaskKind::kDefense:
      write_lidar(objects.targets, task_planar, robot, config, obs, at);
      break;
  }
  return obs;
}

// ------------------------------------------------------------------- step --

StepOutcome env_step(EnvState& state, const Vector& action, const WorldConfig& config) {
  const EnvState before = state;

  state.robot = robot_step(state.robot, action, config);
  state.objects = update_movable_objects(state.objects, state.robot, config);
  if (config.task == TaskKind::kPush) resolve_ball_contact(state.objects, state.robot, config);

  const RewardResult reward = compute_reward(before, state, config);
  const CostResult cost = compute_cost(state.robot, state.objects, config);
  state.robot = cost.robot;
  ++state.steps;

  StepOutcome out;
  out.reward = reward.reward;
  out.cost = cost.cost;
  out.info.violations = cost.violations;
  out.info.breaches = reward.events.breaches;
  if (reward.events.goal_reached) {
    state.objects.goal = resample_goal(state, config);
    ++state.goals_reached;
    out.info.goals_reached = 1;
  }
  state.breaches += reward.events.breaches;

  out.observation = build_observation(state.robot, state.objects, config);
  out.done = state.steps >= config.max_episode_steps || reward.events.breaches > 0;
  return out;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows) {
  out << "step,x,y,z,heading,reward,cost\n";
  out.precision(17);
  for (const TraceRow& r : rows) {
    out << r.step << ',' << r.position.x() << ',' << r.position.y() << ',' << r.position.z() << ','
        << r.heading << ',' << r.reward << ',' << r.cost << '\n';
  }
}

// -------------------------------------------------------------------- Env --

Env::Env(WorldConfig config)
    : config_(std::move(config)), episode_seeds_(config_.seed), obs_dim_(observation_dim(config_)) {
  config_.validate();
}

Vector Env::reset() { return reset(episode_seeds_.next_u64()); }

Vector Env::reset(std::uint64_t layout_seed) {
  auto [state, obs] = env::reset(config_, layout_seed);
  state_ = std::move(state);
  trace_.clear();
  return obs;
}

StepOutcome Env::step(const Vector& action) {
  StepOutcome out = env_step(state_, action, config_);
  if (trace_enabled_) {
    trace_.push_back({state_.steps, state_.robot.position, state_.robot.heading, out.reward, out.cost});
  }
  return out;
}

}  // namespace guard::env
