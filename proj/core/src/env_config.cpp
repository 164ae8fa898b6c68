#include <array>
#include <charconv>
#include <functional>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

#include "guard/env_suite.hpp"

namespace guard::env {

namespace {

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(const std::array<std::pair<std::string_view, Enum>, N>& table,
                           std::string_view name) {
  for (const auto& [key, value] : table) {
    if (key == name) return value;
  }
  return std::nullopt;
}

template <typename Enum, std::size_t N>
std::string_view name_of(const std::array<std::pair<std::string_view, Enum>, N>& table, Enum e) {
  for (const auto& [key, value] : table) {
    if (value == e) return key;
  }
  return "?";
}

constexpr std::array<std::pair<std::string_view, RobotKind>, 2> kRobots = {{
    {"Point", RobotKind::kPoint},
    {"Drone", RobotKind::kDrone},
}};
constexpr std::array<std::pair<std::string_view, TaskKind>, 4> kTasks = {{
    {"Goal", TaskKind::kGoal},
    {"Push", TaskKind::kPush},
    {"Chase", TaskKind::kChase},
    {"Defense", TaskKind::kDefense},
}};
constexpr std::array<std::pair<std::string_view, ConstraintKind>, 4> kConstraints = {{
    {"Hazards", ConstraintKind::kHazards},
    {"Hazards3D", ConstraintKind::kHazards3D},
    {"Ghosts", ConstraintKind::kGhosts},
    {"Ghosts3D", ConstraintKind::kGhosts3D},
}};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double to_real(std::string_view key, std::string_view text) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument("config: '" + std::string(key) + "' expects a number, got '" +
                                std::string(text) + "'");
  }
  return value;
}

template <typename Int>
Int to_int(std::string_view key, std::string_view text) {
  Int value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument("config: '" + std::string(key) + "' expects an integer, got '" +
                                std::string(text) + "'");
  }
  return value;
}

bool to_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument("config: '" + std::string(key) + "' expects true/false");
}

using Setter = std::function<void(WorldConfig&, std::string_view, std::string_view)>;

Setter real_field(double WorldConfig::*field) {
  return [field](WorldConfig& c, std::string_view k, std::string_view v) { c.*field = to_real(k, v); };
}

template <typename Sub>
Setter real_sub(Sub WorldConfig::*sub, double Sub::*field) {
  return [sub, field](WorldConfig& c, std::string_view k, std::string_view v) {
    (c.*sub).*field = to_real(k, v);
  };
}

const std::vector<std::pair<std::string_view, Setter>>& setters() {
  static const std::vector<std::pair<std::string_view, Setter>> table = {
      {"arena_half_extent", real_field(&WorldConfig::arena_half_extent)},
      {"arena_height", real_field(&WorldConfig::arena_height)},
      {"robot",
       [](WorldConfig& c, std::string_view k, std::string_view v) {
         auto r = parse_robot(v);
         if (!r) throw std::invalid_argument("config: unknown " + std::string(k) + " '" + std::string(v) + "'");
         c.robot = *r;
       }},
      {"task",
       [](WorldConfig& c, std::string_view k, std::string_view v) {
         auto t = parse_task(v);
         if (!t) throw std::invalid_argument("config: unknown " + std::string(k) + " '" + std::string(v) + "'");
         c.task = *t;
       }},
      {"constraint_kind",
       [](WorldConfig& c, std::string_view k, std::string_view v) {
         auto kind = parse_constraint(v);
         if (!kind) throw std::invalid_argument("config: unknown " + std::string(k) + " '" + std::string(v) + "'");
         c.constraint.kind = *kind;
       }},
      {"constraint_count",
       [](WorldConfig& c, std::string_view k, std::string_view v) { c.constraint.count = to_int<int>(k, v); }},
      {"constraint_radius", real_sub(&WorldConfig::constraint, &ConstraintSpec::radius)},
      {"trespassable",
       [](WorldConfig& c, std::string_view k, std::string_view v) { c.constraint.trespassable = to_bool(k, v); }},
      {"v0", real_sub(&WorldConfig::dynamics, &MovableDynamics::v0)},
      {"v1", real_sub(&WorldConfig::dynamics, &MovableDynamics::v1)},
      {"v2", real_sub(&WorldConfig::dynamics, &MovableDynamics::v2)},
      {"r0", real_sub(&WorldConfig::dynamics, &MovableDynamics::r0)},
      {"r1", real_sub(&WorldConfig::dynamics, &MovableDynamics::r1)},
      {"turn_rate_max", real_sub(&WorldConfig::robot_params, &RobotParams::turn_rate_max)},
      {"accel_max", real_sub(&WorldConfig::robot_params, &RobotParams::accel_max)},
      {"speed_max", real_sub(&WorldConfig::robot_params, &RobotParams::speed_max)},
      {"drag", real_sub(&WorldConfig::robot_params, &RobotParams::drag)},
      {"robot_radius", real_sub(&WorldConfig::robot_params, &RobotParams::radius)},
      {"lidar_bins",
       [](WorldConfig& c, std::string_view k, std::string_view v) { c.lidar_bins = to_int<int>(k, v); }},
      {"lidar_range", real_field(&WorldConfig::lidar_range)},
      {"dt", real_field(&WorldConfig::dt)},
      {"max_episode_steps",
       [](WorldConfig& c, std::string_view k, std::string_view v) { c.max_episode_steps = to_int<int>(k, v); }},
      {"seed",
       [](WorldConfig& c, std::string_view k, std::string_view v) { c.seed = to_int<std::uint64_t>(k, v); }},
      {"goal_radius", real_field(&WorldConfig::goal_radius)},
      {"ball_radius", real_field(&WorldConfig::ball_radius)},
      {"ball_drag", real_field(&WorldConfig::ball_drag)},
      {"protected_radius", real_field(&WorldConfig::protected_radius)},
      {"num_targets",
       [](WorldConfig& c, std::string_view k, std::string_view v) { c.num_targets = to_int<int>(k, v); }},
      {"target_radius", real_field(&WorldConfig::target_radius)},
      {"object_z_min", real_field(&WorldConfig::object_z_min)},
      {"object_z_max", real_field(&WorldConfig::object_z_max)},
      {"reward_distance", real_field(&WorldConfig::reward_distance)},
      {"reward_goal", real_field(&WorldConfig::reward_goal)},
  };
  return table;
}

}  // namespace

std::string_view to_string(RobotKind kind) { return name_of(kRobots, kind); }
std::string_view to_string(TaskKind kind) { return name_of(kTasks, kind); }
std::string_view to_string(ConstraintKind kind) { return name_of(kConstraints, kind); }
std::optional<RobotKind> parse_robot(std::string_view name) { return lookup(kRobots, name); }
std::optional<TaskKind> parse_task(std::string_view name) { return lookup(kTasks, name); }
std::optional<ConstraintKind> parse_constraint(std::string_view name) { return lookup(kConstraints, name); }

bool is_3d(ConstraintKind kind) {
  return kind == ConstraintKind::kHazards3D || kind == ConstraintKind::kGhosts3D;
}

bool is_ghost(ConstraintKind kind) {
  return kind == ConstraintKind::kGhosts || kind == ConstraintKind::kGhosts3D;
}

void WorldConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("WorldConfig: " + msg); };
  if (!(arena_half_extent > 0.0)) fail("arena_half_extent must be > 0");
  if (!(arena_height > 0.0)) fail("arena_height must be > 0");
  if (constraint.count < 0) fail("constraint count must be >= 0");
  if (!(constraint.radius > 0.0)) fail("constraint radius must be > 0");
  if (!(dynamics.r0 > 0.0) || !(dynamics.r1 > 0.0)) fail("r0 and r1 must be > 0");
  if (!(dynamics.r1 < dynamics.r0)) fail("r1 must be smaller than r0");
  if (dynamics.v0 < 0.0 || dynamics.v1 < 0.0 || dynamics.v2 < 0.0) fail("v0, v1, v2 must be >= 0");
  if (lidar_bins < 1) fail("lidar_bins must be >= 1");
  if (!(lidar_range > 0.0)) fail("lidar_range must be > 0");
  if (!(dt > 0.0)) fail("dt must be > 0");
  if (max_episode_steps < 1) fail("max_episode_steps must be >= 1");
  if (!(goal_radius > 0.0) || !(ball_radius > 0.0) || !(target_radius > 0.0)) fail("object radii must be > 0");
  if (!(protected_radius > 0.0)) fail("protected_radius must be > 0");
  if (num_targets < 1) fail("num_targets must be >= 1");
  if (!(robot_params.radius > 0.0)) fail("robot_radius must be > 0");
  if (!(object_z_min < object_z_max) || object_z_min < 0.0 || object_z_max > arena_height) {
    fail("object altitude range must lie inside [0, arena_height]");
  }
}

bool is_world_setting(std::string_view key) {
  for (const auto& [name, setter] : setters()) {
    if (name == key) return true;
  }
  return false;
}

void apply_world_setting(WorldConfig& config, std::string_view key, std::string_view value) {
  for (const auto& [name, setter] : setters()) {
    if (name == key) {
      setter(config, key, trim(value));
      return;
    }
  }
  throw std::invalid_argument("config: unknown key '" + std::string(key) + "'");
}

WorldConfig parse_world_config(std::istream& in, WorldConfig base) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key=value");
    }
    apply_world_setting(base, trim(view.substr(0, eq)), view.substr(eq + 1));
  }
  base.validate();
  return base;
}

std::string format_world_config(const WorldConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "arena_half_extent=" << c.arena_half_extent << '\n'
      << "arena_height=" << c.arena_height << '\n'
      << "robot=" << to_string(c.robot) << '\n'
      << "task=" << to_string(c.task) << '\n'
      << "constraint_kind=" << to_string(c.constraint.kind) << '\n'
      << "constraint_count=" << c.constraint.count << '\n'
      << "constraint_radius=" << c.constraint.radius << '\n'
      << "trespassable=" << (c.constraint.trespassable ? "true" : "false") << '\n'
      << "v0=" << c.dynamics.v0 << '\n'
      << "v1=" << c.dynamics.v1 << '\n'
      << "v2=" << c.dynamics.v2 << '\n'
      << "r0=" << c.dynamics.r0 << '\n'
      << "r1=" << c.dynamics.r1 << '\n'
      << "turn_rate_max=" << c.robot_params.turn_rate_max << '\n'
      << "accel_max=" << c.robot_params.accel_max << '\n'
      << "speed_max=" << c.robot_params.speed_max << '\n'
      << "drag=" << c.robot_params.drag << '\n'
      << "robot_radius=" << c.robot_params.radius << '\n'
      << "lidar_bins=" << c.lidar_bins << '\n'
      << "lidar_range=" << c.lidar_range << '\n'
      << "dt=" << c.dt << '\n'
      << "max_episode_steps=" << c.max_episode_steps << '\n'
      << "seed=" << c.seed << '\n'
      << "goal_radius=" << c.goal_radius << '\n'
      << "ball_radius=" << c.ball_radius << '\n'
      << "ball_drag=" << c.ball_drag << '\n'
      << "protected_radius=" << c.protected_radius << '\n'
      << "num_targets=" << c.num_targets << '\n'
      << "target_radius=" << c.target_radius << '\n'
      << "object_z_min=" << c.object_z_min << '\n'
      << "object_z_max=" << c.object_z_max << '\n'
      << "reward_distance=" << c.reward_distance << '\n'
      << "reward_goal=" << c.reward_goal << '\n';
  return out.str();
}

}  // namespace guard::env
