#pragma once

// JSON forms of the reports, field names as written to disk.

#include "json.hpp"

#include "flaketime/evaluation.hpp"
#include "flaketime/flakiness.hpp"
#include "flaketime/ingest.hpp"
#include "flaketime/optimizer.hpp"
#include "flaketime/simulator.hpp"

namespace flaketime {

void to_json(nlohmann::json& j, const ValidationReport& report);
void to_json(nlohmann::json& j, const DatasetSummary& summary);
void to_json(nlohmann::json& j, const FlakinessReport& report);
void to_json(nlohmann::json& j, const EvolutionSeries& series);
void to_json(nlohmann::json& j, const TimeoutShare& share);
void to_json(nlohmann::json& j, const FlakinessComparison& comparison);
void to_json(nlohmann::json& j, const TimeoutChangeStats& stats);
void to_json(nlohmann::json& j, const CostCurve& curve);
void to_json(nlohmann::json& j, const SweepResult& sweep);
void to_json(nlohmann::json& j, const CvReport& report);
void to_json(nlohmann::json& j, const PolicyComparison& comparison);
void to_json(nlohmann::json& j, const SimulationReport& report);

/// {test_id, optimal_timeout_minutes, expected_cost_seconds,
///  probability_method, fallback_applied} plus diagnostics.
nlohmann::json optimization_json(const OptimizationResult& result, double grid_unit_seconds);

}  // namespace flaketime
