#include "flaketime/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace flaketime {

namespace {

OptimizationConfig empirical_config(const OptimizationConfig& config) {
  OptimizationConfig out = config;
  out.method = ProbabilityMethod::empirical_ecdf;
  return out;
}

double ratio_reduction(double reference, double value) {
  return (reference - value) / reference;
}

void require_coverage(const std::vector<TimeoutPolicy>& policies,
                      const std::vector<std::string>& test_ids) {
  for (const auto& policy : policies) {
    for (const auto& id : test_ids) policy.timeout_for(id);
  }
}

}  // namespace

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::original:
      return "original";
    case PolicyKind::optimized:
      return "optimized";
    case PolicyKind::static_value:
      return "static";
  }
  return "unknown";
}

bool TimeoutPolicy::covers(const std::string& test_id) const {
  return global_value.has_value() || values.count(test_id) != 0;
}

int TimeoutPolicy::timeout_for(const std::string& test_id) const {
  if (global_value) return *global_value;
  auto it = values.find(test_id);
  if (it == values.end()) {
    throw Error("policy '" + name + "' has no timeout for test '" + test_id + "'");
  }
  return it->second;
}

TimeoutPolicy TimeoutPolicy::fixed(int value, std::string name) {
  if (value < 1) throw Error("static timeout must be at least one grid unit");
  TimeoutPolicy policy;
  policy.kind = PolicyKind::static_value;
  policy.name = std::move(name);
  policy.global_value = value;
  return policy;
}

TimeoutPolicy TimeoutPolicy::from_table(const TimeoutTable& minutes, double grid_unit_seconds,
                                        PolicyKind kind, std::string name) {
  TimeoutPolicy policy;
  policy.kind = kind;
  policy.name = std::move(name);
  for (const auto& [id, value] : minutes) {
    const int units = static_cast<int>(std::ceil(value * 60.0 / grid_unit_seconds - 1e-9));
    policy.values[id] = std::max(1, units);
  }
  return policy;
}

TimeoutTable to_table(const TimeoutPolicy& policy, const std::vector<std::string>& test_ids,
                      double grid_unit_seconds) {
  TimeoutTable table;
  for (const auto& id : test_ids) {
    table[id] = policy.timeout_for(id) * grid_unit_seconds / 60.0;
  }
  return table;
}

TimeoutPolicy optimized_policy(const ExecutionDataset& dataset, const OptimizationConfig& config,
                               std::string name) {
  TimeoutPolicy policy;
  policy.kind = PolicyKind::optimized;
  policy.name = std::move(name);
  for (const auto& result : optimize_all(dataset, config)) {
    policy.values[result.test_id] = result.optimal_timeout;
  }
  return policy;
}

std::vector<std::size_t> FoldAssignment::indices(const ExecutionDataset& dataset,
                                                 const std::string& test_id, std::size_t fold,
                                                 bool inside) const {
  std::vector<std::size_t> out;
  for (std::size_t i : dataset.test_indices(test_id)) {
    const int assigned = fold_of.at(i);
    if (assigned < 0) continue;
    if ((static_cast<std::size_t>(assigned) == fold) == inside) out.push_back(i);
  }
  return out;
}

FoldAssignment make_folds(const ExecutionDataset& dataset, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error("k must be at least 2");
  FoldAssignment folds;
  folds.k = k;
  folds.fold_of.assign(dataset.size(), -1);

  std::mt19937_64 rng(seed);
  for (const auto& id : dataset.test_ids()) {
    auto indices = dataset.test_indices(id);
    if (indices.size() < k) {
      folds.excluded_tests.push_back(id);
      folds.warnings.push_back("test '" + id + "' has " + std::to_string(indices.size()) +
                               " executions, fewer than k = " + std::to_string(k) +
                               "; excluded from cross-validation");
      continue;
    }
    std::shuffle(indices.begin(), indices.end(), rng);
    for (std::size_t pos = 0; pos < indices.size(); ++pos) {
      folds.fold_of[indices[pos]] = static_cast<int>(pos % k);
    }
  }
  return folds;
}

std::size_t count_timeouts(const TestSample& sample, double t_seconds) {
  return static_cast<std::size_t>(std::count_if(sample.durations.begin(), sample.durations.end(),
                                                [t_seconds](double d) { return d > t_seconds; }));
}

const PolicyFoldResult& CvReport::result(std::size_t fold, std::string_view policy) const {
  for (const auto& r : folds.at(fold).policies) {
    if (r.policy == policy) return r;
  }
  throw Error("no result for policy '" + std::string(policy) + "'");
}

const PolicyReduction& CvReport::reduction(std::string_view policy,
                                           std::string_view reference) const {
  for (const auto& r : reductions) {
    if (r.policy == policy && r.reference == reference) return r;
  }
  throw Error("no reduction for '" + std::string(policy) + "' vs '" + std::string(reference) + "'");
}

CvReport cross_validate(const ExecutionDataset& dataset, const std::vector<TimeoutPolicy>& policies,
                        const OptimizationConfig& config, std::size_t k, std::uint64_t seed) {
  config.validate();
  const auto folds = make_folds(dataset, k, seed);

  std::vector<std::string> tests;
  for (const auto& id : dataset.test_ids()) {
    if (std::find(folds.excluded_tests.begin(), folds.excluded_tests.end(), id) ==
        folds.excluded_tests.end()) {
      tests.push_back(id);
    }
  }
  if (tests.empty()) throw Error("no test has enough executions for " + std::to_string(k) + " folds");
  require_coverage(policies, tests);

  CvReport report;
  report.k = k;
  report.seed = seed;
  report.warnings = folds.warnings;
  report.policy_names.push_back("optimized");
  for (const auto& policy : policies) {
    if (policy.name == "optimized") throw Error("policy name 'optimized' is reserved");
    report.policy_names.push_back(policy.name);
  }

  const double unit = config.grid_unit_seconds;
  const auto evaluation = empirical_config(config);
  for (std::size_t fold = 0; fold < k; ++fold) {
    FoldResult result;
    result.fold = fold;
    std::vector<PolicyFoldResult> totals(report.policy_names.size());
    for (std::size_t p = 0; p < totals.size(); ++p) totals[p].policy = report.policy_names[p];

    for (const auto& id : tests) {
      const auto train = dataset.subsample(folds.indices(dataset, id, fold, false));
      const auto held_out = dataset.subsample(folds.indices(dataset, id, fold, true));
      const int fitted = optimize_timeout(train, config).optimal_timeout;
      result.fitted_timeouts[id] = fitted;
      result.evaluated_executions += held_out.size();

      const CostModel model(held_out, evaluation);
      for (std::size_t p = 0; p < totals.size(); ++p) {
        const int timeout = p == 0 ? fitted : policies[p - 1].timeout_for(id);
        totals[p].flaky_timeout_count += count_timeouts(held_out, timeout * unit);
        totals[p].average_cost += model.cost(timeout * unit);
      }
    }
    for (auto& t : totals) t.average_cost /= static_cast<double>(tests.size());
    result.policies = std::move(totals);
    report.folds.push_back(std::move(result));
  }

  for (std::size_t p = 0; p < report.policy_names.size(); ++p) {
    for (std::size_t r = 0; r < report.policy_names.size(); ++r) {
      double timeout_sum = 0.0, cost_sum = 0.0;
      std::size_t timeout_folds = 0, cost_folds = 0;
      for (const auto& fold : report.folds) {
        const auto& mine = fold.policies[p];
        const auto& ref = fold.policies[r];
        if (ref.flaky_timeout_count > 0) {
          timeout_sum += ratio_reduction(static_cast<double>(ref.flaky_timeout_count),
                                         static_cast<double>(mine.flaky_timeout_count));
          ++timeout_folds;
        }
        if (ref.average_cost > 0.0) {
          cost_sum += ratio_reduction(ref.average_cost, mine.average_cost);
          ++cost_folds;
        }
      }
      report.reductions.push_back(
          {report.policy_names[p], report.policy_names[r],
           timeout_folds ? timeout_sum / static_cast<double>(timeout_folds) : 0.0,
           cost_folds ? cost_sum / static_cast<double>(cost_folds) : 0.0});
    }
  }
  return report;
}

PolicyComparison compare_policies(const ExecutionDataset& dataset,
                                  const std::vector<TimeoutPolicy>& policies,
                                  const OptimizationConfig& config) {
  const auto tests = dataset.test_ids();
  require_coverage(policies, tests);
  const double unit = config.grid_unit_seconds;
  const auto evaluation = empirical_config(config);

  std::vector<CostModel> models;
  std::vector<TestSample> samples;
  for (const auto& id : tests) {
    samples.push_back(dataset.test_sample(id));
    models.emplace_back(samples.back(), evaluation);
  }

  PolicyComparison out;
  for (const auto& policy : policies) {
    PolicyTotals totals;
    totals.policy = policy.name;
    totals.kind = policy.kind;
    std::vector<double> timeouts;
    for (std::size_t i = 0; i < tests.size(); ++i) {
      const int timeout = policy.timeout_for(tests[i]);
      timeouts.push_back(timeout);
      totals.timeout_count += count_timeouts(samples[i], timeout * unit);
      totals.average_cost += models[i].cost(timeout * unit);
    }
    if (!tests.empty()) {
      totals.average_cost /= static_cast<double>(tests.size());
      totals.median_timeout = median(std::move(timeouts));
    }
    out.totals.push_back(std::move(totals));
  }
  for (std::size_t p = 1; p < out.totals.size(); ++p) {
    const auto& ref = out.totals.front();
    const auto& mine = out.totals[p];
    out.deltas.push_back(
        {mine.policy, ref.policy,
         ref.timeout_count ? ratio_reduction(static_cast<double>(ref.timeout_count),
                                             static_cast<double>(mine.timeout_count))
                           : 0.0,
         ref.average_cost > 0.0 ? ratio_reduction(ref.average_cost, mine.average_cost) : 0.0});
  }
  return out;
}

}  // namespace flaketime
