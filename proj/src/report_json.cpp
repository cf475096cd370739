#include "flaketime/report_json.hpp"

namespace flaketime {

using nlohmann::json;

namespace {

json quartiles_json(const std::optional<Quartiles>& q) {
  if (!q) return nullptr;
  return {{"q1", q->q1}, {"median", q->median}, {"q3", q->q3}};
}

}  // namespace

void to_json(json& j, const ValidationReport& report) {
  j = {{"accepted", report.accepted},
       {"rejected", report.rejected},
       {"reasons", report.reasons},
       {"warnings", report.warnings}};
}

void to_json(json& j, const DatasetSummary& summary) {
  j = {{"test_count", summary.test_count},
       {"execution_count", summary.execution_count},
       {"revision_count", summary.revision_count},
       {"censored_fraction", summary.censored_fraction}};
}

void to_json(json& j, const FlakinessReport& report) {
  j = {{"revision_id", report.revision_id},
       {"repetition_count", report.repetition_count},
       {"unique_tests", report.unique_tests},
       {"flaky_tests", report.flaky_tests},
       {"flakiness_rate", report.flakiness_rate},
       {"bin_counts", report.bin_counts}};
}

void to_json(json& j, const EvolutionSeries& series) {
  json points = json::array();
  for (const auto& p : series.points) {
    points.push_back({{"repetitions_used", p.repetitions_used},
                      {"flakiness_rate", p.flakiness_rate}});
  }
  j = {{"revision_id", series.revision_id}, {"points", std::move(points)}};
}

void to_json(json& j, const TimeoutShare& share) {
  j = {{"timeout_failure_share", share.share},
       {"flaky_failures", share.flaky_failures},
       {"timeout_failures", share.timeout_failures},
       {"warnings", share.warnings}};
}

void to_json(json& j, const FlakinessComparison& comparison) {
  j = {{"first", comparison.first},
       {"second", comparison.second},
       {"rate_delta", comparison.rate_delta},
       {"relative_change", comparison.relative_change},
       {"warnings", comparison.warnings}};
}

void to_json(json& j, const TimeoutChangeStats& stats) {
  j = {{"tests_with_changes", stats.tests_with_changes},
       {"changes_per_test_median", stats.changes_per_test_median},
       {"increase_count", stats.increase_count},
       {"decrease_count", stats.decrease_count},
       {"increase_ratios", quartiles_json(stats.increase_ratios)},
       {"decrease_ratios", quartiles_json(stats.decrease_ratios)}};
}

void to_json(json& j, const CostCurve& curve) {
  j = json::array();
  for (const auto& p : curve.points) {
    j.push_back({{"timeout", p.timeout}, {"average_cost", p.average_cost}});
  }
}

void to_json(json& j, const SweepResult& sweep) {
  j = {{"points", sweep.curve},
       {"argmin", sweep.argmin},
       {"min_cost", sweep.min_cost},
       {"local_minima", sweep.local_minima}};
}

void to_json(json& j, const CvReport& report) {
  json folds = json::array();
  for (const auto& fold : report.folds) {
    json policies = json::array();
    for (const auto& p : fold.policies) {
      policies.push_back({{"policy", p.policy},
                          {"flaky_timeout_count", p.flaky_timeout_count},
                          {"average_cost", p.average_cost}});
    }
    folds.push_back({{"fold", fold.fold},
                     {"evaluated_executions", fold.evaluated_executions},
                     {"policies", std::move(policies)},
                     {"fitted_timeouts", fold.fitted_timeouts}});
  }
  json reductions = json::array();
  for (const auto& r : report.reductions) {
    reductions.push_back({{"policy", r.policy},
                          {"reference", r.reference},
                          {"timeout_reduction", r.timeout_reduction},
                          {"cost_reduction", r.cost_reduction}});
  }
  j = {{"k", report.k},
       {"seed", report.seed},
       {"policies", report.policy_names},
       {"folds", std::move(folds)},
       {"reductions", std::move(reductions)},
       {"warnings", report.warnings}};
}

void to_json(json& j, const PolicyComparison& comparison) {
  json totals = json::array();
  for (const auto& t : comparison.totals) {
    totals.push_back({{"policy", t.policy},
                      {"kind", std::string(to_string(t.kind))},
                      {"timeout_count", t.timeout_count},
                      {"average_cost", t.average_cost},
                      {"median_timeout", t.median_timeout}});
  }
  json deltas = json::array();
  for (const auto& d : comparison.deltas) {
    deltas.push_back({{"policy", d.policy},
                      {"reference", d.reference},
                      {"timeout_reduction", d.timeout_reduction},
                      {"cost_reduction", d.cost_reduction}});
  }
  j = {{"totals", std::move(totals)}, {"deltas", std::move(deltas)}};
}

void to_json(json& j, const SimulationReport& report) {
  json tests = json::array();
  for (const auto& t : report.tests) {
    tests.push_back({{"test_id", t.test_id},
                     {"initial_runs", t.initial_runs},
                     {"timeout_events", t.timeout_events},
                     {"rerun_count", t.rerun_count},
                     {"total_machine_seconds", t.total_machine_seconds},
                     {"final_passes", t.final_passes},
                     {"final_timeouts", t.final_timeouts}});
  }
  j = {{"tests", std::move(tests)},
       {"initial_runs", report.initial_runs},
       {"timeout_events", report.timeout_events},
       {"rerun_count", report.rerun_count},
       {"total_machine_seconds", report.total_machine_seconds},
       {"final_passes", report.final_passes},
       {"final_timeouts", report.final_timeouts},
       {"mean_cost_per_initial_run", report.mean_cost_per_initial_run}};
}

json optimization_json(const OptimizationResult& result, double grid_unit_seconds) {
  return {{"test_id", result.test_id},
          {"optimal_timeout_minutes", result.optimal_timeout * grid_unit_seconds / 60.0},
          {"expected_cost_seconds", result.expected_cost_at_optimum},
          {"probability_method", std::string(to_string(result.method_used))},
          {"fallback_applied", result.fallback_applied},
          {"timeout_probability", result.timeout_probability_at_optimum},
          {"search_range", {result.search_range.lower, result.search_range.upper}},
          {"sample_size", result.sample_size}};
}

}  // namespace flaketime
