#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flaketime/model.hpp"

namespace flaketime {

enum class FileFormat { jsonl, csv };

std::optional<FileFormat> parse_format(std::string_view text);
/// Picks the format from the file extension (.jsonl/.json or .csv).
FileFormat format_from_path(const std::filesystem::path& path);

/// Parses "YYYY-MM-DDTHH:MM:SS[.fff](Z|+00:00)". Fractional seconds are
/// truncated; only UTC offsets are accepted.
std::optional<Timestamp> parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp ts);

struct ValidationReport {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::map<std::string, std::size_t> reasons;
  std::vector<std::string> warnings;

  void reject(const std::string& reason) {
    ++rejected;
    ++reasons[reason];
  }
};

struct LoadOptions {
  // Warn for every (test, revision) whose censored fraction exceeds this.
  double censored_warning_threshold = 0.05;
};

struct LoadedExecutions {
  ExecutionDataset dataset;
  ValidationReport report;
};

/// Field names: test_id, revision_id, started_at, duration_seconds, verdict,
/// interrupted (optional). Bad rows are rejected and counted; an unreadable
/// file or a CSV header without the required columns throws Error.
LoadedExecutions load_executions(const std::filesystem::path& path, FileFormat format,
                                 const LoadOptions& options = {});
LoadedExecutions parse_executions(std::istream& in, FileFormat format,
                                  const LoadOptions& options = {});

void write_executions_jsonl(const ExecutionDataset& dataset, std::ostream& out);

struct TimeoutChangeRecord {
  std::string test_id;
  Timestamp changed_at{};
  // Minutes. Absent when the record creates the timeout.
  std::optional<int> old_value;
  int new_value = 1;

  bool is_creation() const { return !old_value.has_value(); }
};

struct LoadedChanges {
  std::vector<TimeoutChangeRecord> changes;  // sorted by (test_id, changed_at)
  ValidationReport report;
};

/// Field names: test_id, changed_at, old_value_minutes (optional, empty or
/// null for creation), new_value_minutes.
LoadedChanges load_timeout_changes(const std::filesystem::path& path, FileFormat format);
LoadedChanges parse_timeout_changes(std::istream& in, FileFormat format);

struct DatasetSummary {
  std::size_t test_count = 0;
  std::size_t execution_count = 0;
  std::size_t revision_count = 0;
  double censored_fraction = 0.0;
};

DatasetSummary summarize(const ExecutionDataset& dataset);

/// Two-column CSV "test_id,timeout_minutes" consumed by CI config generators.
using TimeoutTable = std::map<std::string, double>;

TimeoutTable read_timeout_table(const std::filesystem::path& path);
TimeoutTable parse_timeout_table(std::istream& in);
void write_timeout_table(const TimeoutTable& table, std::ostream& out);

/// Formats with a fixed number of decimals ("0.60").
std::string format_fixed(double value, int decimals);
/// Shortest decimal text that round-trips the value.
std::string format_number(double value);

}  // namespace flaketime
