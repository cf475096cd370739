#pragma once

#include <chrono>
#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace flaketime {

/// Raised for invalid input data and violated preconditions.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Verdict { pass, fail, timeout };

std::string_view to_string(Verdict verdict);
std::optional<Verdict> parse_verdict(std::string_view text);

using Timestamp = std::chrono::sys_seconds;

struct ExecutionRecord {
  std::string test_id;
  std::string revision_id;
  Timestamp started_at{};
  double duration_seconds = 0.0;
  Verdict verdict = Verdict::pass;
  // Whether the framework actually killed the run.
  bool interrupted = false;

  /// Duration capped by an enforced timeout rather than natural completion.
  bool censored() const { return verdict == Verdict::timeout && interrupted; }

  friend bool operator==(const ExecutionRecord&, const ExecutionRecord&) = default;
};

struct SampleKey {
  std::string test_id;
  std::string revision_id;

  friend auto operator<=>(const SampleKey&, const SampleKey&) = default;
  friend bool operator==(const SampleKey&, const SampleKey&) = default;
};

/// All observations of one test, in execution order.
struct TestSample {
  std::string test_id;
  std::string revision_id;
  std::vector<double> durations;
  std::vector<Verdict> verdicts;
  std::size_t censored_count = 0;

  std::size_t size() const { return durations.size(); }
  bool empty() const { return durations.empty(); }

  /// Sample of passing runs with the given durations (seconds).
  static TestSample from_durations(std::vector<double> durations,
                                   std::string test_id = {});
};

struct SampleStats {
  std::size_t n = 0;
  double mean = 0.0;
  // Unbiased (divisor n - 1); zero for a single observation.
  double variance = 0.0;
  // sqrt((n + 1) / n * variance)
  double q_n = 0.0;
  double max = 0.0;
  double min = 0.0;
};

SampleStats sample_stats(std::span<const double> durations);
SampleStats sample_stats(const TestSample& sample);

std::size_t failure_count(std::span<const Verdict> verdicts);

/// A test is flaky when it both passed and failed; timeouts count as failures.
bool is_flaky(std::span<const Verdict> verdicts);
double failure_rate(std::span<const Verdict> verdicts);

/// Linear interpolation between closest ranks. `sorted` must be ascending
/// and non-empty; p in [0, 1].
double quantile_sorted(std::span<const double> sorted, double p);
double median(std::vector<double> values);

/// Immutable collection of execution records, indexed by (test, revision)
/// and by test. Index lists are ordered by start time, ties by input order.
class ExecutionDataset {
 public:
  ExecutionDataset() = default;
  explicit ExecutionDataset(std::vector<ExecutionRecord> records);

  const std::vector<ExecutionRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  std::vector<SampleKey> keys() const;
  std::vector<SampleKey> keys_for_revision(std::string_view revision_id) const;
  std::vector<std::string> test_ids() const;
  std::vector<std::string> revision_ids() const;
  bool contains(const SampleKey& key) const { return by_sample_.count(key) != 0; }
  bool has_revision(std::string_view revision_id) const;

  const std::vector<std::size_t>& sample_indices(const SampleKey& key) const;
  const std::vector<std::size_t>& test_indices(const std::string& test_id) const;

  TestSample sample(const SampleKey& key) const;
  /// All executions of a test, pooled over revisions.
  TestSample test_sample(const std::string& test_id) const;
  /// Sample built from an explicit subset of record indices.
  TestSample subsample(std::span<const std::size_t> indices) const;

  friend bool operator==(const ExecutionDataset& a, const ExecutionDataset& b) {
    return a.records_ == b.records_;
  }

 private:
  std::vector<ExecutionRecord> records_;
  std::map<SampleKey, std::vector<std::size_t>> by_sample_;
  std::map<std::string, std::vector<std::size_t>> by_test_;
};

}  // namespace flaketime
