#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flaketime/ingest.hpp"
#include "flaketime/model.hpp"
#include "flaketime/optimizer.hpp"

namespace flaketime {

enum class PolicyKind { original, optimized, static_value };

std::string_view to_string(PolicyKind kind);

/// Timeout per test in grid units, or one global value.
struct TimeoutPolicy {
  PolicyKind kind = PolicyKind::original;
  std::string name;
  std::map<std::string, int> values;
  std::optional<int> global_value;

  bool covers(const std::string& test_id) const;
  /// Throws Error naming the test when the policy has no value for it.
  int timeout_for(const std::string& test_id) const;

  static TimeoutPolicy fixed(int value, std::string name = "static");
  /// Minutes from a timeout table, rounded up to whole grid units.
  static TimeoutPolicy from_table(const TimeoutTable& minutes, double grid_unit_seconds,
                                  PolicyKind kind = PolicyKind::original,
                                  std::string name = "original");
};

TimeoutTable to_table(const TimeoutPolicy& policy, const std::vector<std::string>& test_ids,
                      double grid_unit_seconds);

/// Policy of per-test cost-optimal timeouts fitted on the whole dataset.
TimeoutPolicy optimized_policy(const ExecutionDataset& dataset, const OptimizationConfig& config,
                               std::string name = "optimized");

/// Fold index per record (-1 for records of excluded tests).
struct FoldAssignment {
  std::size_t k = 0;
  std::vector<int> fold_of;
  std::vector<std::string> excluded_tests;
  std::vector<std::string> warnings;

  /// Record indices of `test_id` inside (or outside) fold `fold`.
  std::vector<std::size_t> indices(const ExecutionDataset& dataset, const std::string& test_id,
                                   std::size_t fold, bool inside) const;
};

/// Stratified per test: each test's executions are shuffled with the seeded
/// generator and dealt round-robin, so its fold sizes differ by at most one.
/// Tests with fewer than k executions are excluded with a warning.
FoldAssignment make_folds(const ExecutionDataset& dataset, std::size_t k, std::uint64_t seed);

/// Number of durations strictly greater than t.
std::size_t count_timeouts(const TestSample& sample, double t_seconds);

struct PolicyFoldResult {
  std::string policy;
  std::size_t flaky_timeout_count = 0;
  double average_cost = 0.0;
};

struct FoldResult {
  std::size_t fold = 0;
  std::size_t evaluated_executions = 0;
  std::vector<PolicyFoldResult> policies;
  // Timeouts fitted on the other folds, grid units.
  std::map<std::string, int> fitted_timeouts;
};

/// Mean over folds of (reference - policy) / reference. Folds where the
/// reference value is zero are left out of the mean; 0 when none remain.
struct PolicyReduction {
  std::string policy;
  std::string reference;
  double timeout_reduction = 0.0;
  double cost_reduction = 0.0;
};

struct CvReport {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> policy_names;
  std::vector<FoldResult> folds;
  std::vector<PolicyReduction> reductions;
  std::vector<std::string> warnings;

  const PolicyFoldResult& result(std::size_t fold, std::string_view policy) const;
  const PolicyReduction& reduction(std::string_view policy, std::string_view reference) const;
};

/// k-fold cross-validation. A policy named "optimized" is fitted on k - 1
/// folds and evaluated on the held-out fold alongside `policies`; held-out
/// costs use empirical probabilities of the evaluated fold.
CvReport cross_validate(const ExecutionDataset& dataset, const std::vector<TimeoutPolicy>& policies,
                        const OptimizationConfig& config, std::size_t k, std::uint64_t seed);

struct PolicyTotals {
  std::string policy;
  PolicyKind kind = PolicyKind::original;
  std::size_t timeout_count = 0;
  double average_cost = 0.0;
  // Grid units over the dataset's tests.
  double median_timeout = 0.0;
};

struct PolicyDelta {
  std::string policy;
  std::string reference;
  double timeout_reduction = 0.0;
  double cost_reduction = 0.0;
};

struct PolicyComparison {
  std::vector<PolicyTotals> totals;
  // Every policy after the first against the first.
  std::vector<PolicyDelta> deltas;
};

PolicyComparison compare_policies(const ExecutionDataset& dataset,
                                  const std::vector<TimeoutPolicy>& policies,
                                  const OptimizationConfig& config);

}  // namespace flaketime
