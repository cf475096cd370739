#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "flaketime/evaluation.hpp"
#include "flaketime/model.hpp"

namespace flaketime {

enum class DistributionKind { lognormal, exponential, constant };

std::string_view to_string(DistributionKind kind);
std::optional<DistributionKind> parse_distribution(std::string_view text);

/// Natural run time of a test, in seconds.
///   lognormal:   median = scale, log-space standard deviation = shape
///   exponential: mean = scale
///   constant:    every run takes scale
struct DurationDistribution {
  DistributionKind kind = DistributionKind::lognormal;
  double scale = 600.0;
  double shape = 0.5;

  void validate() const;
  double survival(double t) const;  // P(X > t)
  double quantile(double p) const;
  double mean() const;
  double draw(std::mt19937_64& rng) const;
};

struct WorkloadSpec {
  std::size_t test_count = 10;
  std::size_t executions_per_test = 100;
  DurationDistribution base;
  // Each test's scale is multiplied by a factor drawn log-uniformly here.
  std::pair<double, double> scale_spread{1.0, 1.0};
  double outlier_probability = 0.0;
  std::pair<double, double> outlier_factor_range{2.0, 5.0};
  // A hung run would never finish absent a timeout.
  double hang_probability = 0.0;
  // Non-timeout failures of runs that finish in time.
  double failure_probability = 0.0;
  // The developer-set timeout sits at this percentile of the true run time.
  double original_timeout_percentile = 0.85;
  // Data collection kills runs at this multiple of the original timeout.
  double enforced_timeout_factor = 10.0;
  double grid_unit_seconds = 60.0;
  std::uint64_t seed = 0;
  std::string revision_id = "sim";

  void validate() const;
};

/// Generating parameters of one test.
struct TestTruth {
  std::string test_id;
  DurationDistribution distribution;
  double outlier_probability = 0.0;
  std::pair<double, double> outlier_factor_range{1.0, 1.0};
  double hang_probability = 0.0;
  int original_timeout = 1;  // grid units
  double enforced_timeout_seconds = 0.0;

  /// P(T > t) for a fresh run, hangs included.
  double exceedance(double t_seconds) const;
  /// Smallest t with P(T <= t) >= p; infinite when hangs make p unreachable.
  double quantile(double p) const;
};

struct Workload {
  ExecutionDataset dataset;
  TimeoutPolicy original;
  std::vector<TestTruth> truth;
};

/// Deterministic given spec.seed. Runs longer than the original timeout get
/// verdict timeout; runs longer than the enforced timeout, and hung runs, are
/// recorded at the enforced timeout with interrupted = true. The original
/// timeout is the configured percentile rounded up to the grid, or the
/// largest generated run when the percentile is unbounded.
Workload generate_workload(const WorkloadSpec& spec);

enum class RerunAccounting {
  // Rerun chain stops at the first success.
  stop_on_success,
  // Every timeout is charged all m reruns, as the closed-form cost assumes.
  all_reruns,
};

struct SimulationOptions {
  int reruns = 3;
  std::uint64_t seed = 0;
  double grid_unit_seconds = 60.0;
  RerunAccounting accounting = RerunAccounting::stop_on_success;
};

struct TestSimulation {
  std::string test_id;
  std::size_t initial_runs = 0;
  std::size_t timeout_events = 0;
  std::size_t rerun_count = 0;
  double total_machine_seconds = 0.0;
  std::size_t final_passes = 0;
  std::size_t final_timeouts = 0;
};

struct SimulationReport {
  std::vector<TestSimulation> tests;
  std::size_t initial_runs = 0;
  std::size_t timeout_events = 0;
  std::size_t rerun_count = 0;
  double total_machine_seconds = 0.0;
  std::size_t final_passes = 0;
  std::size_t final_timeouts = 0;
  double mean_cost_per_initial_run = 0.0;
};

/// Replays every recorded execution under `policy`. A run over its timeout
/// is charged the timeout and triggers up to m reruns resampled with
/// replacement from the same test's durations; censored records never finish.
SimulationReport simulate_rerun_policy(const ExecutionDataset& dataset, const TimeoutPolicy& policy,
                                       const SimulationOptions& options);

}  // namespace flaketime
