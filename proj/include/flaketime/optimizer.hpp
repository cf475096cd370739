#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flaketime/model.hpp"

namespace flaketime {

enum class ProbabilityMethod { tolhurst_bound, empirical_ecdf };

std::string_view to_string(ProbabilityMethod method);
/// Accepts "tolhurst", "tolhurst_bound", "empirical" and "empirical_ecdf".
std::optional<ProbabilityMethod> parse_probability_method(std::string_view text);

struct OptimizationConfig {
  // Reruns triggered by a failing execution (m).
  int reruns = 3;
  // Probability that an execution hangs and consumes the whole timeout on
  // every attempt (P_b).
  double breakage_probability = 0.0;
  ProbabilityMethod method = ProbabilityMethod::tolhurst_bound;
  double grid_unit_seconds = 60.0;
  std::size_t min_samples = 30;
  // Grid units; used when a test has fewer than min_samples executions.
  int fallback_timeout = 120;

  /// Throws Error when a field is out of range.
  void validate() const;
};

/// Upper bound on P(T >= t) from the sample mean and Q_n (Tolhurst's
/// finite-sample analog of Cantelli's inequality). Returns 1 outside the
/// validity domain lambda > 1. Requires n >= 2.
double tolhurst_bound(const SampleStats& stats, double t_seconds);

/// Fraction of durations strictly greater than t.
double empirical_exceedance(const TestSample& sample, double t_seconds);

/// Mean of min(duration, t).
double truncated_mean(const TestSample& sample, double t_seconds);

/// C(t) = T_t + m * p * T_t + P_b * t * (m + 1).
double rerun_cost(double truncated_mean_seconds, double timeout_probability,
                  double t_seconds, int reruns, double breakage_probability);

/// Expected cost per execution with the configured probability method.
double expected_cost(const TestSample& sample, double t_seconds,
                     const OptimizationConfig& config);

/// Cost evaluation over many candidate timeouts for one sample. Keeps the
/// durations sorted with prefix sums, so each query is O(log n).
class CostModel {
 public:
  CostModel(const TestSample& sample, const OptimizationConfig& config);

  double exceedance(double t_seconds) const;
  double truncated_mean(double t_seconds) const;
  double timeout_probability(double t_seconds) const;
  double cost(double t_seconds) const;

  const SampleStats& stats() const { return stats_; }
  const OptimizationConfig& config() const { return config_; }

 private:
  std::vector<double> sorted_;
  std::vector<double> prefix_;
  SampleStats stats_;
  OptimizationConfig config_;
};

/// Inclusive range of timeouts in grid units.
struct GridRange {
  int lower = 1;
  int upper = 1;
};

struct OptimizationResult {
  std::string test_id;
  // Grid units.
  int optimal_timeout = 0;
  double expected_cost_at_optimum = 0.0;
  double timeout_probability_at_optimum = 0.0;
  GridRange search_range;
  ProbabilityMethod method_used = ProbabilityMethod::tolhurst_bound;
  bool fallback_applied = false;
  std::size_t sample_size = 0;
};

/// Exhaustive argmin of the expected cost over the integer grid
/// [ceil(mean), ceil(2 * max)]. Costs within a relative 1e-12 of each other
/// count as ties and resolve to the smallest timeout. Samples below
/// config.min_samples get config.fallback_timeout.
OptimizationResult optimize_timeout(const TestSample& sample, const OptimizationConfig& config);

/// One result per test id (executions pooled over revisions), sorted by id.
std::vector<OptimizationResult> optimize_all(const ExecutionDataset& dataset,
                                             const OptimizationConfig& config);

struct CostPoint {
  int timeout = 0;
  double average_cost = 0.0;
};

struct CostCurve {
  std::vector<CostPoint> points;
};

struct SweepResult {
  CostCurve curve;
  int argmin = 0;
  double min_cost = 0.0;
  // Interior grid points lower than the left neighbour and not higher than
  // the right one.
  std::vector<int> local_minima;
};

/// Average expected cost over all tests of one global timeout for every grid
/// value in range. Probabilities are always empirical: a run counts as timed
/// out when its duration exceeds the candidate, interrupted or not.
SweepResult static_sweep(const ExecutionDataset& dataset, GridRange range,
                         const OptimizationConfig& config);

}  // namespace flaketime
