#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>

#include "guard/bench.hpp"

namespace guard::bench {

namespace {

std::vector<std::string_view> split_underscores(std::string_view name) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t at = name.find('_', start);
    parts.push_back(name.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start));
    if (at == std::string_view::npos) break;
    start = at + 1;
  }
  return parts;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument("setting '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
  }
  return value;
}

double parse_real(std::string_view key, std::string_view text) { return parse_number<double>(key, text); }
int parse_int(std::string_view key, std::string_view text) { return parse_number<int>(key, text); }

}  // namespace

SuiteId parse_suite(std::string_view name) {
  const auto parts = split_underscores(name);
  if (parts.size() != 3) {
    throw std::invalid_argument("suite '" + std::string(name) + "' is not of the form Task_Robot_<count><Kind>");
  }
  SuiteId id;
  const auto task = env::parse_task(parts[0]);
  if (!task) throw std::invalid_argument("unknown task '" + std::string(parts[0]) + "' (Goal, Push, Chase, Defense)");
  const auto robot = env::parse_robot(parts[1]);
  if (!robot) throw std::invalid_argument("unknown robot '" + std::string(parts[1]) + "' (Point, Drone)");

  const std::string_view tail = parts[2];
  std::size_t digits = 0;
  while (digits < tail.size() && tail[digits] >= '0' && tail[digits] <= '9') ++digits;
  if (digits == 0) {
    throw std::invalid_argument("suite '" + std::string(name) + "': missing constraint count before '" +
                                std::string(tail) + "'");
  }
  int count = 0;
  // A zero count is allowed: it names the cost-free variant of a suite.
  const auto parsed = std::from_chars(tail.data(), tail.data() + digits, count);
  if (parsed.ec != std::errc() || count > 1000) {
    throw std::invalid_argument("suite '" + std::string(name) + "': constraint count out of range");
  }
  const auto kind = env::parse_constraint(tail.substr(digits));
  if (!kind) {
    throw std::invalid_argument("unknown constraint kind '" + std::string(tail.substr(digits)) +
                                "' (Hazards, Hazards3D, Ghosts, Ghosts3D)");
  }
  id.task = *task;
  id.robot = *robot;
  id.constraint_count = count;
  id.constraint_kind = *kind;
  return id;
}

std::string format_suite(const SuiteId& id) {
  return std::string(env::to_string(id.task)) + "_" + std::string(env::to_string(id.robot)) + "_" +
         std::to_string(id.constraint_count) + std::string(env::to_string(id.constraint_kind));
}

std::vector<SuiteId> all_suites(int constraint_count) {
  std::vector<SuiteId> out;
  for (auto task : {env::TaskKind::kGoal, env::TaskKind::kPush, env::TaskKind::kChase, env::TaskKind::kDefense}) {
    for (auto robot : {env::RobotKind::kPoint, env::RobotKind::kDrone}) {
      for (auto kind : {env::ConstraintKind::kHazards, env::ConstraintKind::kHazards3D,
                        env::ConstraintKind::kGhosts, env::ConstraintKind::kGhosts3D}) {
        out.push_back({task, robot, constraint_count, kind});
      }
    }
  }
  return out;
}

env::WorldConfig make_world(const SuiteId& id, env::WorldConfig base) {
  base.task = id.task;
  base.robot = id.robot;
  base.constraint.count = id.constraint_count;
  base.constraint.kind = id.constraint_kind;
  return base;
}

// ------------------------------------------------------------------ config --

RunConfig RunConfig::full_scale() {
  RunConfig c;
  c.epochs = 200;
  c.steps_per_epoch = 30000;
  return c;
}

void RunConfig::validate() const {
  if (seeds.empty()) throw std::invalid_argument("RunConfig: at least one seed is required");
  if (epochs < 1 || steps_per_epoch < 1) throw std::invalid_argument("RunConfig: epochs and steps must be >= 1");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("RunConfig: gamma must lie in [0, 1)");
  if (!(lam >= 0.0 && lam <= 1.0)) throw std::invalid_argument("RunConfig: lam must lie in [0, 1]");
  if (rollout_instances < 1) throw std::invalid_argument("RunConfig: rollout_instances must be >= 1");
  if (critic_fit.iters < 0 || !(critic_fit.lr > 0.0)) throw std::invalid_argument("RunConfig: critic fit options");
  const auto& names = algo::algorithm_names();
  if (std::find(names.begin(), names.end(), algorithm) == names.end()) {
    throw std::invalid_argument("RunConfig: unknown algorithm '" + algorithm + "'");
  }
  algorithm_config.validate();
  make_world(suite, world).validate();
}

void apply_setting(RunConfig& c, std::string_view key, std::string_view value) {
  auto& tr = c.algorithm_config.trust_region;
  auto& cc = c.algorithm_config.constraint;
  auto& sc = c.algorithm_config.shield;
  auto optimizer = [&](nn::FitOptions& fit) {
    if (value == "adam") fit.optimizer = nn::Optimizer::kAdam;
    else if (value == "sgd") fit.optimizer = nn::Optimizer::kSgd;
    else throw std::invalid_argument("setting '" + std::string(key) + "': expected adam or sgd");
  };

  if (key == "gamma") {
    c.gamma = parse_real(key, value);
    cc.gamma = c.gamma;
  } else if (key == "lam") c.lam = parse_real(key, value);
  else if (key == "hidden") {
    c.hidden.clear();
    std::size_t start = 0;
    while (start <= value.size()) {
      const std::size_t at = std::min(value.find('x', start), value.size());
      c.hidden.push_back(parse_int(key, value.substr(start, at - start)));
      start = at + 1;
    }
  } else if (key == "max_kl") tr.max_kl = parse_real(key, value);
  else if (key == "cg_iters") tr.cg_iters = parse_int(key, value);
  else if (key == "damping") tr.damping = parse_real(key, value);
  else if (key == "backtrack_steps") tr.backtrack_steps = parse_int(key, value);
  else if (key == "backtrack_coeff") tr.backtrack_coeff = parse_real(key, value);
  else if (key == "target_cost") cc.target_cost = parse_real(key, value);
  else if (key == "cost_reduction") cc.cost_reduction = parse_real(key, value);
  else if (key == "ipo_t") cc.ipo_t = parse_real(key, value);
  else if (key == "ipo_infeasible_weight") cc.ipo_infeasible_weight = parse_real(key, value);
  else if (key == "lagrangian_lr") cc.lagrangian_lr = parse_real(key, value);
  else if (key == "fac_lr") cc.fac_lr = parse_real(key, value);
  else if (key == "warmup_ratio") sc.warmup_ratio = parse_real(key, value);
  else if (key == "usl_iters") sc.usl_iters = parse_int(key, value);
  else if (key == "usl_eta") sc.usl_eta = parse_real(key, value);
  else if (key == "shield_fit_iters") sc.fit.iters = parse_int(key, value);
  else if (key == "shield_lr") sc.fit.lr = parse_real(key, value);
  else if (key == "shield_optimizer") optimizer(sc.fit);
  else if (key == "replay_capacity") sc.replay_capacity = static_cast<std::size_t>(parse_int(key, value));
  else if (key == "critic_iters") c.critic_fit.iters = parse_int(key, value);
  else if (key == "critic_lr") c.critic_fit.lr = parse_real(key, value);
  else if (key == "critic_optimizer") optimizer(c.critic_fit);
  else if (key == "rollout_instances") c.rollout_instances = parse_int(key, value);
  else if (env::is_world_setting(key)) env::apply_world_setting(c.world, key, value);
  else throw std::invalid_argument("unknown setting '" + std::string(key) + "'");
}

void apply_setting(RunConfig& config, std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw std::invalid_argument("expected key=value, got '" + std::string(assignment) + "'");
  }
  apply_setting(config, assignment.substr(0, eq), assignment.substr(eq + 1));
}

int thread_budget() {
  if (const char* env = std::getenv("GUARD_BENCH_THREADS")) {
    int n = 0;
    const std::string_view text(env);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
    if (ec == std::errc() && ptr == text.data() + text.size() && n >= 1) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace guard::bench
