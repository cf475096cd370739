#include "flaketime/flakiness.hpp"

#include <algorithm>
#include <map>

namespace flaketime {

namespace {

std::vector<SampleKey> revision_keys(const ExecutionDataset& dataset,
                                     const std::string& revision_id) {
  auto keys = dataset.keys_for_revision(revision_id);
  if (keys.empty()) throw Error("unknown revision '" + revision_id + "'");
  return keys;
}

std::optional<Quartiles> quartiles(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  return Quartiles{quantile_sorted(values, 0.25), quantile_sorted(values, 0.5),
                   quantile_sorted(values, 0.75)};
}

}  // namespace

std::optional<std::size_t> failure_rate_bin(std::size_t failures, std::size_t runs) {
  if (failures == 0 || failures >= runs) return std::nullopt;
  // ceil(5 * failures / runs) - 1 in integers, so rates on an edge (0.2,
  // 0.4, ...) land in the lower bin exactly.
  return (kFailureRateBins * failures + runs - 1) / runs - 1;
}

FlakinessReport flakiness_report(const ExecutionDataset& dataset,
                                 const std::string& revision_id) {
  FlakinessReport report;
  report.revision_id = revision_id;
  for (const auto& key : revision_keys(dataset, revision_id)) {
    const auto& indices = dataset.sample_indices(key);
    std::size_t failures = 0;
    for (std::size_t i : indices) {
      if (dataset.records()[i].verdict != Verdict::pass) ++failures;
    }
    ++report.unique_tests;
    report.repetition_count = std::max(report.repetition_count, indices.size());
    if (auto bin = failure_rate_bin(failures, indices.size())) {
      ++report.flaky_tests;
      ++report.bin_counts[*bin];
    }
  }
  report.flakiness_rate = report.unique_tests == 0
                              ? 0.0
                              : static_cast<double>(report.flaky_tests) /
                                    static_cast<double>(report.unique_tests);
  return report;
}

EvolutionSeries flakiness_evolution(const ExecutionDataset& dataset,
                                    const std::string& revision_id, std::size_t step) {
  if (step < 1) throw Error("evolution step must be at least 1");
  const auto keys = revision_keys(dataset, revision_id);

  // Running failure count per test; a prefix flags a test flaky once it has
  // seen both outcomes, and that never reverts for longer prefixes.
  struct Cursor {
    const std::vector<std::size_t>* indices;
    std::size_t consumed = 0;
    std::size_t failures = 0;
  };
  std::vector<Cursor> cursors;
  std::size_t longest = 0;
  for (const auto& key : keys) {
    const auto& indices = dataset.sample_indices(key);
    cursors.push_back({&indices});
    longest = std::max(longest, indices.size());
  }

  EvolutionSeries series;
  series.revision_id = revision_id;
  for (std::size_t k = step;; k += step) {
    const std::size_t used = std::min(k, longest);
    std::size_t active = 0, flaky = 0;
    for (auto& cursor : cursors) {
      const std::size_t limit = std::min(used, cursor.indices->size());
      for (; cursor.consumed < limit; ++cursor.consumed) {
        const auto& record = dataset.records()[(*cursor.indices)[cursor.consumed]];
        if (record.verdict != Verdict::pass) ++cursor.failures;
      }
      if (cursor.consumed == 0) continue;
      ++active;
      if (cursor.failures > 0 && cursor.failures < cursor.consumed) ++flaky;
    }
    const double rate =
        active == 0 ? 0.0 : static_cast<double>(flaky) / static_cast<double>(active);
    series.points.push_back({used, rate});
    if (used >= longest) break;
  }
  return series;
}

TimeoutShare timeout_failure_share(const ExecutionDataset& dataset) {
  TimeoutShare out;
  for (const auto& key : dataset.keys()) {
    const auto sample = dataset.sample(key);
    if (!is_flaky(sample.verdicts)) continue;
    for (Verdict v : sample.verdicts) {
      if (v == Verdict::pass) continue;
      ++out.flaky_failures;
      if (v == Verdict::timeout) ++out.timeout_failures;
    }
  }
  if (out.flaky_failures == 0) {
    out.warnings.push_back("no flaky failures; timeout share defined as 0");
  } else {
    out.share = static_cast<double>(out.timeout_failures) /
                static_cast<double>(out.flaky_failures);
  }
  return out;
}

FlakinessComparison compare_flakiness(const ExecutionDataset& first,
                                      const ExecutionDataset& second,
                                      const std::string& first_revision,
                                      const std::string& second_revision) {
  FlakinessComparison out;
  out.first = flakiness_report(first, first_revision);
  out.second = flakiness_report(second, second_revision);
  out.rate_delta = out.second.flakiness_rate - out.first.flakiness_rate;
  out.relative_change =
      out.first.flakiness_rate == 0.0 ? 0.0 : out.rate_delta / out.first.flakiness_rate;
  if (out.first.repetition_count != out.second.repetition_count) {
    out.warnings.push_back("repetition counts differ (" +
                           std::to_string(out.first.repetition_count) + " vs " +
                           std::to_string(out.second.repetition_count) +
                           "); flakiness rates are not comparable");
  }
  return out;
}

TimeoutChangeStats timeout_change_stats(const std::vector<TimeoutChangeRecord>& changes) {
  std::map<std::string, std::size_t> modifications;
  std::vector<double> increases, decreases;
  for (const auto& change : changes) {
    if (!change.old_value) continue;
    const double ratio =
        static_cast<double>(change.new_value) / static_cast<double>(*change.old_value);
    if (ratio > 1.0) {
      increases.push_back(ratio);
    } else if (ratio < 1.0) {
      decreases.push_back(ratio);
    } else {
      continue;
    }
    ++modifications[change.test_id];
  }

  TimeoutChangeStats stats;
  stats.tests_with_changes = modifications.size();
  if (!modifications.empty()) {
    std::vector<double> counts;
    for (const auto& [_, count] : modifications) counts.push_back(static_cast<double>(count));
    stats.changes_per_test_median = median(std::move(counts));
  }
  stats.increase_count = increases.size();
  stats.decrease_count = decreases.size();
  stats.increase_ratios = quartiles(std::move(increases));
  stats.decrease_ratios = quartiles(std::move(decreases));
  return stats;
}

}  // namespace flaketime
