#include "flaketime/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace flaketime {

std::string_view to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::pass:
      return "pass";
    case Verdict::fail:
      return "fail";
    case Verdict::timeout:
      return "timeout";
  }
  return "unknown";
}

std::optional<Verdict> parse_verdict(std::string_view text) {
  if (text == "pass") return Verdict::pass;
  if (text == "fail") return Verdict::fail;
  if (text == "timeout") return Verdict::timeout;
  return std::nullopt;
}

TestSample TestSample::from_durations(std::vector<double> durations,
                                      std::string test_id) {
  TestSample sample;
  sample.test_id = std::move(test_id);
  sample.verdicts.assign(durations.size(), Verdict::pass);
  sample.durations = std::move(durations);
  return sample;
}

SampleStats sample_stats(std::span<const double> durations) {
  if (durations.empty()) throw Error("empty sample");

  SampleStats stats;
  stats.n = durations.size();
  const double n = static_cast<double>(stats.n);
  stats.mean = std::accumulate(durations.begin(), durations.end(), 0.0) / n;

  double squares = 0.0;
  for (double d : durations) squares += (d - stats.mean) * (d - stats.mean);
  stats.variance = stats.n > 1 ? squares / (n - 1.0) : 0.0;
  stats.q_n = std::sqrt((n + 1.0) / n * stats.variance);

  auto [lo, hi] = std::minmax_element(durations.begin(), durations.end());
  stats.min = *lo;
  stats.max = *hi;
  // Guard the min <= mean <= max invariant against summation rounding.
  stats.mean = std::clamp(stats.mean, stats.min, stats.max);
  return stats;
}

SampleStats sample_stats(const TestSample& sample) {
  return sample_stats(std::span<const double>(sample.durations));
}

std::size_t failure_count(std::span<const Verdict> verdicts) {
  return static_cast<std::size_t>(std::count_if(
      verdicts.begin(), verdicts.end(),
      [](Verdict v) { return v != Verdict::pass; }));
}

bool is_flaky(std::span<const Verdict> verdicts) {
  if (verdicts.empty()) throw Error("empty verdict list");
  const std::size_t failures = failure_count(verdicts);
  return failures > 0 && failures < verdicts.size();
}

double failure_rate(std::span<const Verdict> verdicts) {
  if (verdicts.empty()) throw Error("empty verdict list");
  return static_cast<double>(failure_count(verdicts)) /
         static_cast<double>(verdicts.size());
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error("quantile of empty sequence");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, 0.5);
}

ExecutionDataset::ExecutionDataset(std::vector<ExecutionRecord> records)
    : records_(std::move(records)) {
  std::vector<std::size_t> order(records_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) {
    return records_[a].started_at < records_[b].started_at;
  });
  for (std::size_t i : order) {
    const auto& r = records_[i];
    by_sample_[SampleKey{r.test_id, r.revision_id}].push_back(i);
    by_test_[r.test_id].push_back(i);
  }
}

std::vector<SampleKey> ExecutionDataset::keys() const {
  std::vector<SampleKey> out;
  out.reserve(by_sample_.size());
  for (const auto& [key, _] : by_sample_) out.push_back(key);
  return out;
}

std::vector<SampleKey> ExecutionDataset::keys_for_revision(
    std::string_view revision_id) const {
  std::vector<SampleKey> out;
  for (const auto& [key, _] : by_sample_) {
    if (key.revision_id == revision_id) out.push_back(key);
  }
  return out;
}

std::vector<std::string> ExecutionDataset::test_ids() const {
  std::vector<std::string> out;
  out.reserve(by_test_.size());
  for (const auto& [id, _] : by_test_) out.push_back(id);
  return out;
}

std::vector<std::string> ExecutionDataset::revision_ids() const {
  std::set<std::string> revisions;
  for (const auto& [key, _] : by_sample_) revisions.insert(key.revision_id);
  return {revisions.begin(), revisions.end()};
}

bool ExecutionDataset::has_revision(std::string_view revision_id) const {
  return std::any_of(by_sample_.begin(), by_sample_.end(), [&](const auto& entry) {
    return entry.first.revision_id == revision_id;
  });
}

const std::vector<std::size_t>& ExecutionDataset::sample_indices(
    const SampleKey& key) const {
  auto it = by_sample_.find(key);
  if (it == by_sample_.end()) {
    throw Error("unknown sample: test '" + key.test_id + "', revision '" +
                key.revision_id + "'");
  }
  return it->second;
}

const std::vector<std::size_t>& ExecutionDataset::test_indices(
    const std::string& test_id) const {
  auto it = by_test_.find(test_id);
  if (it == by_test_.end()) throw Error("unknown test '" + test_id + "'");
  return it->second;
}

TestSample ExecutionDataset::sample(const SampleKey& key) const {
  return subsample(sample_indices(key));
}

TestSample ExecutionDataset::test_sample(const std::string& test_id) const {
  return subsample(test_indices(test_id));
}

TestSample ExecutionDataset::subsample(std::span<const std::size_t> indices) const {
  TestSample sample;
  sample.durations.reserve(indices.size());
  sample.verdicts.reserve(indices.size());
  bool first = true;
  for (std::size_t i : indices) {
    const auto& r = records_.at(i);
    if (first) {
      sample.test_id = r.test_id;
      sample.revision_id = r.revision_id;
      first = false;
    } else if (sample.revision_id != r.revision_id) {
      // Pooled over revisions.
      sample.revision_id.clear();
    }
    sample.durations.push_back(r.duration_seconds);
    sample.verdicts.push_back(r.verdict);
    if (r.censored()) ++sample.censored_count;
  }
  return sample;
}

}  // namespace flaketime
