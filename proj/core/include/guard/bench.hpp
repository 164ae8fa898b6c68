#pragma once

// Experiment driver: suite names, run configuration, per-epoch metrics,
// CSV persistence, cross-seed summaries and SVG plots.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "guard/env_suite.hpp"
#include "guard/policy_net.hpp"
#include "guard/safe_algos.hpp"

namespace guard::bench {

// ------------------------------------------------------------------ suites --

/// "{Task}_{Robot}_{Count}{Kind}", e.g. Goal_Point_8Hazards.
struct SuiteId {
  env::TaskKind task = env::TaskKind::kGoal;
  env::RobotKind robot = env::RobotKind::kPoint;
  int constraint_count = 8;
  env::ConstraintKind constraint_kind = env::ConstraintKind::kHazards;

  bool operator==(const SuiteId&) const = default;
};

/// Throws std::invalid_argument on malformed names or unknown parts.
SuiteId parse_suite(std::string_view name);
std::string format_suite(const SuiteId& id);
/// Every registered task x robot x kind combination with the given count.
std::vector<SuiteId> all_suites(int constraint_count = 8);

/// Applies the suite's task, robot and constraint fields on top of `base`.
env::WorldConfig make_world(const SuiteId& id, env::WorldConfig base = {});

// ------------------------------------------------------------------ config --

struct RunConfig {
  SuiteId suite;
  std::string algorithm = "trpo";
  int epochs = 30;
  int steps_per_epoch = 4000;
  std::vector<std::uint64_t> seeds = {0, 1};
  std::filesystem::path output_dir = "runs";

  double gamma = 0.99;
  double lam = 0.97;
  std::vector<int> hidden = nn::kDefaultHidden;
  algo::AlgorithmConfig algorithm_config{};
  nn::FitOptions critic_fit{};
  env::WorldConfig world{};  // suite fields are overwritten by `suite`
  int rollout_instances = 1;
  int threads = 0;  // 0: take GUARD_BENCH_THREADS or the hardware count
  bool step_log = false;
  bool verbose = false;

  /// Full scale: 200 epochs of 30000 steps.
  static RunConfig full_scale();

  void validate() const;
};

/// One `key=value` override (hyper-parameter or world field).
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);
/// Parses "key=value"; throws on a missing '='.
void apply_setting(RunConfig& config, std::string_view assignment);

/// Worker threads available: GUARD_BENCH_THREADS if set (>= 1), else the hardware count.
int thread_budget();

// ----------------------------------------------------------------- metrics --

struct MetricsRow {
  int epoch = 0;  // 1-based
  long long steps = 0;  // cumulative environment steps
  double J_r = 0.0;
  double M_c = 0.0;
  double rho_c = 0.0;
  double kl = 0.0;
  double multiplier = 0.0;
  bool carried = false;  // no completed episode: J_r and M_c repeat the previous row

  bool operator==(const MetricsRow&) const = default;
};

struct EpisodeTotals {
  double reward = 0.0;  // undiscounted
  double cost = 0.0;
};

struct CumulativeCounters {
  double cost = 0.0;
  long long steps = 0;
};

/// Updates `counters` with this epoch and returns its row (kl and multiplier zero).
MetricsRow compute_metrics(int epoch, std::span<const EpisodeTotals> completed, double epoch_cost,
                           long long epoch_steps, CumulativeCounters& counters,
                           const MetricsRow* previous);

/// Shortest decimal form that reads back to the same double.
std::string format_double(double value);

inline constexpr std::string_view kMetricsHeader = "epoch,steps,J_r,M_c,rho_c,kl,multiplier";
std::string format_row(const MetricsRow& row);
MetricsRow parse_row(std::string_view line);
/// Reads a metrics CSV, skipping '#' lines; throws if it holds no rows.
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

// -------------------------------------------------------------- experiment --

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<MetricsRow> rows;
  std::filesystem::path csv_path;
  bool failed = false;
  std::string error;
};

struct ExperimentResult {
  std::string algorithm;
  SuiteId suite;
  std::vector<SeedResult> seeds;

  bool ok() const;
};

/// out/<suite>/<algorithm>/seed_<s>.csv (and steps_seed_<s>.csv with step logging).
std::filesystem::path seed_csv_path(const RunConfig& config, std::uint64_t seed);
std::filesystem::path step_log_path(const RunConfig& config, std::uint64_t seed);

inline constexpr std::string_view kStepLogHeader = "epoch,episode,t,reward,cost,done";

// Trains one policy per seed for config.epochs epochs (seeds run on worker
// threads). Each epoch appends a CSV row as soon as it is computed. A seed
// that throws stops, gets a '#failed' line in its CSV, and is marked failed.
ExperimentResult run_experiment(const RunConfig& config);

// ----------------------------------------------------------------- summary --

struct SummaryRow {
  std::string algorithm;
  double J_r = 0.0;
  double M_c = 0.0;
  double rho_c = 0.0;
  int seeds = 0;    // seeds that contributed
  int missing = 0;  // failed or empty seeds
};

inline constexpr std::string_view kSummaryHeader = "algorithm,J_r,M_c,rho_c";

/// Arithmetic mean of each seed's final row.
SummaryRow summarize(std::string algorithm, const std::vector<std::vector<MetricsRow>>& seeds);
std::vector<SummaryRow> emit_summary(const std::vector<ExperimentResult>& results);
std::string summary_csv(const std::vector<SummaryRow>& rows);

// -------------------------------------------------------------------- plot --

enum class PlotMetric { kReward, kCost, kCostRate };
PlotMetric parse_plot_metric(std::string_view name);  // reward | cost | cost_rate
std::string_view to_string(PlotMetric metric);
double metric_value(const MetricsRow& row, PlotMetric metric);

struct PlotSeries {
  std::string label;
  std::vector<std::vector<MetricsRow>> seeds;
};

struct BandPoint {
  int epoch = 0;
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Mean and min-max across seeds for every epoch present in all of them.
std::vector<BandPoint> compute_band(const PlotSeries& series, PlotMetric metric);

inline constexpr int kPlotWidth = 800;
inline constexpr int kPlotHeight = 500;

/// Self-contained SVG: one mean line per series, a band when it has >= 2 seeds.
std::string render_svg(const std::vector<PlotSeries>& series, PlotMetric metric);

/// Groups CSVs by their parent directory (the algorithm) and writes the SVG.
void emit_plot(const std::vector<std::filesystem::path>& csv_paths, PlotMetric metric,
               const std::filesystem::path& svg_path);

}  // namespace guard::bench
