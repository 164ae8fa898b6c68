#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "guard/bench.hpp"
#include "guard/cmdp_runtime.hpp"

namespace guard::bench {

namespace {

using num::Index;

std::mutex g_log_mutex;

void write_step_log(std::ostream& out, int epoch, const rt::Batch& batch) {
  for (std::size_t e = 0; e < batch.trajectories.size(); ++e) {
    const rt::Trajectory& t = batch.trajectories[e];
    for (Index i = 0; i < t.length(); ++i) {
      const bool done = t.terminal && i + 1 == t.length();
      out << epoch << ',' << e << ',' << i << ',' << format_double(t.rewards[i]) << ','
          << format_double(t.costs[i]) << ',' << (done ? 1 : 0) << '\n';
    }
  }
}

std::vector<MetricsRow> train_seed(const RunConfig& config, std::uint64_t seed, std::ostream& csv,
                                   std::ostream* steps) {
  const num::RngStream master(seed);
  env::WorldConfig world = make_world(config.suite, config.world);

  std::vector<env::Env> envs;
  for (int k = 0; k < config.rollout_instances; ++k) {
    world.seed = master.split(0x100 + static_cast<std::uint64_t>(k)).seed();
    envs.emplace_back(world);
  }
  const int obs_dim = envs.front().obs_dim();
  const int act_dim = envs.front().act_dim();

  num::RngStream init = master.split(1);
  nn::GaussianPolicy policy(obs_dim, act_dim, init, config.hidden);
  nn::ScalarNet value(obs_dim, init, nn::OutputHead::kLinear, config.hidden);
  nn::ScalarNet cost_value(obs_dim, init, nn::OutputHead::kLinear, config.hidden);
  algo::AlgorithmConfig algo_config = config.algorithm_config;
  algo_config.constraint.gamma = config.gamma;
  auto algorithm = algo::make_algorithm(config.algorithm, algo_config, obs_dim, act_dim,
                                        master.split(2).next_u64());
  num::RngStream rollout_rng = master.split(3);

  CumulativeCounters counters;
  std::vector<MetricsRow> rows;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rt::CollectOptions collect;
    collect.steps = config.steps_per_epoch;
    collect.shield = algorithm->shield(epoch, config.epochs);
    collect.max_threads = 1;
    const bool cost_critic = algorithm->uses_cost_critic();
    rt::Batch batch = rt::collect_rollouts(envs, policy, {&value, cost_critic ? &cost_value : nullptr},
                                           collect, rollout_rng);
    batch.epoch = epoch;

    const rt::AdvantageEstimates est = rt::compute_advantages(batch, {config.gamma, config.lam, true});
    const rt::StackedBatch stacked = batch.stack();
    value = nn::fit_value(std::move(value), stacked.observations, est.reward_returns, config.critic_fit).net;
    if (cost_critic) {
      cost_value =
          nn::fit_value(std::move(cost_value), stacked.observations, est.cost_returns, config.critic_fit).net;
    }
    const algo::UpdateReport report =
        algorithm->update(policy, {batch, stacked, est, epoch, config.epochs});

    std::vector<EpisodeTotals> completed;
    double epoch_cost = 0.0;
    for (const rt::Trajectory& t : batch.trajectories) {
      EpisodeTotals totals;
      for (Index i = 0; i < t.length(); ++i) {
        totals.reward += t.rewards[i];
        totals.cost += t.costs[i];
        epoch_cost += t.costs[i];
      }
      if (t.terminal) completed.push_back(totals);
    }
    MetricsRow row = compute_metrics(epoch + 1, completed, epoch_cost, batch.total_steps(), counters,
                                     rows.empty() ? nullptr : &rows.back());
    row.kl = report.kl_after;
    row.multiplier = algorithm->multiplier();
    csv << format_row(row) << '\n' << std::flush;
    if (steps != nullptr) write_step_log(*steps, epoch + 1, batch);
    if (config.verbose) {
      std::lock_guard lock(g_log_mutex);
      std::cerr << format_suite(config.suite) << ' ' << config.algorithm << " seed " << seed << " epoch "
                << row.epoch << " J_r " << row.J_r << " M_c " << row.M_c << " rho_c " << row.rho_c
                << " kl " << row.kl << " [" << report.branch << (report.rejected ? ", rejected" : "")
                << "]\n";
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

std::filesystem::path seed_csv_path(const RunConfig& config, std::uint64_t seed) {
  return config.output_dir / format_suite(config.suite) / config.algorithm /
         ("seed_" + std::to_string(seed) + ".csv");
}

std::filesystem::path step_log_path(const RunConfig& config, std::uint64_t seed) {
  return config.output_dir / format_suite(config.suite) / config.algorithm /
         ("steps_seed_" + std::to_string(seed) + ".csv");
}

ExperimentResult run_experiment(const RunConfig& config) {
  config.validate();
  num::keep_large_allocations_on_heap();
  ExperimentResult result;
  result.algorithm = config.algorithm;
  result.suite = config.suite;
  result.seeds.resize(config.seeds.size());

  auto run_one = [&](std::size_t i) {
    SeedResult& out = result.seeds[i];
    out.seed = config.seeds[i];
    out.csv_path = seed_csv_path(config, out.seed);
    std::filesystem::create_directories(out.csv_path.parent_path());
    std::ofstream csv(out.csv_path, std::ios::binary | std::ios::trunc);
    if (!csv) {
      out.failed = true;
      out.error = "cannot write " + out.csv_path.string();
      return;
    }
    csv << kMetricsHeader << '\n';
    std::ofstream steps;
    if (config.step_log) {
      steps.open(step_log_path(config, out.seed), std::ios::binary | std::ios::trunc);
      steps << kStepLogHeader << '\n';
    }
    try {
      out.rows = train_seed(config, out.seed, csv, config.step_log ? &steps : nullptr);
    } catch (const std::exception& e) {
      out.failed = true;
      out.error = e.what();
      std::string message = out.error;
      std::replace(message.begin(), message.end(), '\n', ' ');
      csv << "#failed," << message << '\n';
    }
  };

  const std::size_t workers =
      std::min<std::size_t>(config.seeds.size(),
                            static_cast<std::size_t>(config.threads > 0 ? config.threads : thread_budget()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < config.seeds.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < config.seeds.size(); i = next++) run_one(i);
      });
    }
  }
  return result;
}

}  // namespace guard::bench
