#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "guard/env_suite.hpp"

namespace guard::env {

namespace {

Vec3 flatten_if(const Vec3& v, bool planar) {
  return planar ? Vec3(v.x(), v.y(), 0.0) : v;
}

Vec3 clamp_to_arena(Vec3 p, const WorldConfig& config, bool planar) {
  const double h = config.arena_half_extent;
  p.x() = std::clamp(p.x(), -h, h);
  p.y() = std::clamp(p.y(), -h, h);
  p.z() = planar ? 0.0 : std::clamp(p.z(), 0.0, config.arena_height);
  return p;
}

}  // namespace

double object_distance(const Vec3& object, bool planar, const Vec3& robot) {
  return flatten_if(robot - object, planar).norm();
}

RobotState robot_step(const RobotState& state, const Vector& action, const WorldConfig& config) {
  const int dim = config.action_dim();
  if (action.size() != dim) {
    throw std::invalid_argument("robot_step: expected action of length " + std::to_string(dim));
  }
  const Vector a = action.cwiseMax(-1.0).cwiseMin(1.0);
  const RobotParams& p = config.robot_params;
  const double dt = config.dt;

  RobotState next = state;
  if (config.robot == RobotKind::kPoint) {
    next.heading = state.heading + a[0] * p.turn_rate_max * dt;
    next.speed = std::clamp(state.speed + a[1] * p.accel_max * dt, 0.0, p.speed_max);
    next.position = state.position +
                    next.speed * dt * Vec3(std::cos(next.heading), std::sin(next.heading), 0.0);
    next.position = clamp_to_arena(next.position, config, true);
  } else {
    const Vec3 accel(a[0], a[1], a[2]);
    next.velocity = (1.0 - p.drag * dt) * state.velocity + accel * p.accel_max * dt;
    next.position = clamp_to_arena(state.position + next.velocity * dt, config, false);
  }
  return next;
}

Vec3 movable_velocity(MovableKind kind, const Vec3& object, const Vec3& robot,
                      const MovableDynamics& dyn, bool planar) {
  const Vec3 d_origin = flatten_if(dyn.origin - object, planar);
  const Vec3 d_robot = flatten_if(robot - object, planar);
  const double dist_origin = d_origin.norm();
  const double dist_robot = d_robot.norm();

  if (dist_origin > dyn.r0) return dyn.v0 * d_origin;
  switch (kind) {
    case MovableKind::kChaseTarget:
      return dist_robot <= dyn.r1 ? Vec3(-dyn.v1 * d_robot) : Vec3::Zero();
    case MovableKind::kDefenseTarget:
      return dist_robot <= dyn.r1 ? Vec3(-dyn.v1 * d_robot) : Vec3(dyn.v2 * d_origin);
    case MovableKind::kGhost:
      return dist_robot > dyn.r1 ? Vec3(dyn.v1 * d_robot) : Vec3::Zero();
  }
  return Vec3::Zero();
}

ObjectSet update_movable_objects(const ObjectSet& objects, const RobotState& robot,
                                 const WorldConfig& config) {
  ObjectSet next = objects;
  const double dt = config.dt;

  if (is_ghost(config.constraint.kind)) {
    const bool planar = !is_3d(config.constraint.kind);
    for (Vec3& ghost : next.constraints) {
      ghost += dt * movable_velocity(MovableKind::kGhost, ghost, robot.position, config.dynamics, planar);
      ghost = clamp_to_arena(ghost, config, planar);
    }
  }

  if (config.task == TaskKind::kChase || config.task == TaskKind::kDefense) {
    const MovableKind kind =
        config.task == TaskKind::kChase ? MovableKind::kChaseTarget : MovableKind::kDefenseTarget;
    const bool planar = !config.task_objects_3d();
    for (Vec3& target : next.targets) {
      target += dt * movable_velocity(kind, target, robot.position, config.dynamics, planar);
      target = clamp_to_arena(target, config, planar);
    }
  }
  return next;
}

void resolve_ball_contact(ObjectSet& objects, const RobotState& robot, const WorldConfig& config) {
  if (!objects.ball) return;
  Vec3& ball = *objects.ball;
  const double dt = config.dt;
  const Vec3 offset = flatten_if(ball - robot.position, true);
  const double dist = offset.norm();
  const double contact = config.robot_params.radius + config.ball_radius;
  if (dist < contact) {
    const Vec3 normal = dist > 0.0 ? Vec3(offset / dist) : Vec3(std::cos(robot.heading), std::sin(robot.heading), 0.0);
    objects.ball_velocity += (contact - dist) / dt * normal;
  }
  ball = clamp_to_arena(ball + objects.ball_velocity * dt, config, true);
  objects.ball_velocity *= std::max(0.0, 1.0 - config.ball_drag * dt);
  // A wall stops the ball along that axis.
  const double h = config.arena_half_extent;
  if (std::abs(ball.x()) >= h) objects.ball_velocity.x() = 0.0;
  if (std::abs(ball.y()) >= h) objects.ball_velocity.y() = 0.0;
}

}  // namespace guard::env
