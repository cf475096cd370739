#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "flaketime/ingest.hpp"
#include "flaketime/model.hpp"

namespace flaketime {

inline constexpr std::size_t kFailureRateBins = 5;

/// Bin of a flaky test's failure rate: (0,0.2], (0.2,0.4], (0.4,0.6],
/// (0.6,0.8], (0.8,1.0). Empty for rates 0 and 1 (not flaky).
std::optional<std::size_t> failure_rate_bin(std::size_t failures, std::size_t runs);

struct FlakinessReport {
  std::string revision_id;
  // Largest number of executions of any test on the revision.
  std::size_t repetition_count = 0;
  std::size_t unique_tests = 0;
  std::size_t flaky_tests = 0;
  double flakiness_rate = 0.0;
  std::array<std::size_t, kFailureRateBins> bin_counts{};
};

FlakinessReport flakiness_report(const ExecutionDataset& dataset,
                                 const std::string& revision_id);

struct EvolutionPoint {
  std::size_t repetitions_used = 0;
  double flakiness_rate = 0.0;
};

struct EvolutionSeries {
  std::string revision_id;
  std::vector<EvolutionPoint> points;
};

/// Flakiness rate over the first k executions of every test for
/// k = step, 2*step, ... and a final point at the largest sample size.
EvolutionSeries flakiness_evolution(const ExecutionDataset& dataset,
                                    const std::string& revision_id, std::size_t step);

struct TimeoutShare {
  double share = 0.0;
  std::size_t flaky_failures = 0;
  std::size_t timeout_failures = 0;
  std::vector<std::string> warnings;
};

/// Fraction of failed executions of flaky (test, revision) pairs that timed out.
TimeoutShare timeout_failure_share(const ExecutionDataset& dataset);

struct FlakinessComparison {
  FlakinessReport first;
  FlakinessReport second;
  // second.rate - first.rate, and the same relative to first.rate (0 when
  // the first rate is 0).
  double rate_delta = 0.0;
  double relative_change = 0.0;
  std::vector<std::string> warnings;
};

FlakinessComparison compare_flakiness(const ExecutionDataset& first,
                                      const ExecutionDataset& second,
                                      const std::string& first_revision,
                                      const std::string& second_revision);

struct Quartiles {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
};

struct TimeoutChangeStats {
  std::size_t tests_with_changes = 0;
  double changes_per_test_median = 0.0;
  std::size_t increase_count = 0;
  std::size_t decrease_count = 0;
  std::optional<Quartiles> increase_ratios;
  std::optional<Quartiles> decrease_ratios;
};

/// Ratios new/old over modification records; ratio 1 is ignored.
TimeoutChangeStats timeout_change_stats(const std::vector<TimeoutChangeRecord>& changes);

}  // namespace flaketime
