#include "flaketime/ingest.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include <boost/tokenizer.hpp>
#include "json.hpp"

namespace flaketime {

namespace {

using json = nlohmann::json;
using Fields = std::map<std::string, std::optional<std::string>>;

constexpr std::array kExecutionColumns = {"test_id", "revision_id", "started_at",
                                          "duration_seconds", "verdict"};
constexpr std::array kChangeColumns = {"test_id", "changed_at", "new_value_minutes"};

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  boost::escaped_list_separator<char> separator('\\', ',', '"');
  boost::tokenizer<boost::escaped_list_separator<char>> tokens(line, separator);
  std::vector<std::string> out;
  for (const auto& token : tokens) out.push_back(trim(token));
  return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

std::optional<std::string> json_field_text(const json& object, const char* name) {
  auto it = object.find(name);
  if (it == object.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_boolean()) return it->get<bool>() ? "true" : "false";
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  if (it->is_number()) return format_number(it->get<double>());
  return it->dump();
}

std::optional<bool> parse_flag(const std::optional<std::string>& text) {
  if (!text || text->empty()) return false;
  if (*text == "true" || *text == "1") return true;
  if (*text == "false" || *text == "0") return false;
  return std::nullopt;
}

bool is_blank(const std::optional<std::string>& text) {
  return !text || trim(*text).empty();
}

// Either a record or the rejection reason.
struct ExecutionRow {
  std::optional<ExecutionRecord> record;
  std::string reason;
};

ExecutionRow validate_execution(const Fields& fields) {
  auto get = [&](const char* name) -> std::optional<std::string> {
    auto it = fields.find(name);
    return it == fields.end() ? std::nullopt : it->second;
  };
  ExecutionRow row;
  const auto test_id = get("test_id");
  const auto revision_id = get("revision_id");
  if (is_blank(test_id) || is_blank(revision_id)) {
    row.reason = "missing id";
    return row;
  }
  const auto duration_text = get("duration_seconds");
  if (is_blank(duration_text)) {
    row.reason = "missing duration";
    return row;
  }
  const auto duration = parse_number<double>(trim(*duration_text));
  if (!duration || !std::isfinite(*duration)) {
    row.reason = "invalid duration";
    return row;
  }
  if (*duration < 0.0) {
    row.reason = "negative duration";
    return row;
  }
  const auto verdict_text = get("verdict");
  const auto verdict = verdict_text ? parse_verdict(trim(*verdict_text)) : std::nullopt;
  if (!verdict) {
    row.reason = "unknown verdict";
    return row;
  }
  const auto started_text = get("started_at");
  const auto started = started_text ? parse_timestamp(trim(*started_text)) : std::nullopt;
  if (!started) {
    row.reason = "invalid timestamp";
    return row;
  }
  const auto interrupted = parse_flag(get("interrupted"));
  if (!interrupted) {
    row.reason = "invalid interrupted flag";
    return row;
  }
  row.record = ExecutionRecord{*test_id, *revision_id, *started, *duration, *verdict,
                               *interrupted};
  return row;
}

// Runs `handle(fields)` for every data row; `handle_malformed()` for rows that
// cannot be split into fields at all.
template <typename Handle, typename Malformed, std::size_t N>
void for_each_row(std::istream& in, FileFormat format,
                  const std::array<const char*, N>& required, Handle handle,
                  Malformed handle_malformed) {
  std::string line;
  if (format == FileFormat::jsonl) {
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      const json object = json::parse(line, nullptr, false);
      if (object.is_discarded() || !object.is_object()) {
        handle_malformed();
        continue;
      }
      Fields fields;
      for (const auto& [name, _] : object.items()) {
        fields[name] = json_field_text(object, name.c_str());
      }
      handle(fields);
    }
    return;
  }

  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    header = split_csv_line(line);
    break;
  }
  if (header.empty()) throw Error("malformed header: empty CSV input");
  for (const char* column : required) {
    if (std::find(header.begin(), header.end(), column) == header.end()) {
      throw Error(std::string("malformed header: missing column '") + column + "'");
    }
  }
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    try {
      cells = split_csv_line(line);
    } catch (const boost::escaped_list_error&) {
      handle_malformed();
      continue;
    }
    if (cells.size() != header.size()) {
      handle_malformed();
      continue;
    }
    Fields fields;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (!cells[i].empty()) fields[header[i]] = cells[i];
    }
    handle(fields);
  }
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read '" + path.string() + "'");
  return in;
}

}  // namespace

std::optional<FileFormat> parse_format(std::string_view text) {
  if (text == "jsonl" || text == "json") return FileFormat::jsonl;
  if (text == "csv") return FileFormat::csv;
  return std::nullopt;
}

FileFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return FileFormat::jsonl;
  if (ext == ".csv") return FileFormat::csv;
  throw Error("cannot infer format of '" + path.string() + "'; pass --format");
}

std::optional<Timestamp> parse_timestamp(std::string_view text) {
  // YYYY-MM-DDTHH:MM:SS
  if (text.size() < 19) return std::nullopt;
  auto field = [&](std::size_t pos, std::size_t len) {
    return parse_number<int>(text.substr(pos, len));
  };
  if (text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') ||
      text[13] != ':' || text[16] != ':') {
    return std::nullopt;
  }
  const auto year = field(0, 4), month = field(5, 2), day = field(8, 2);
  const auto hour = field(11, 2), minute = field(14, 2), second = field(17, 2);
  if (!year || !month || !day || !hour || !minute || !second) return std::nullopt;
  if (*hour > 23 || *minute > 59 || *second > 60) return std::nullopt;

  std::string_view rest = text.substr(19);
  if (!rest.empty() && rest.front() == '.') {
    std::size_t digits = 1;
    while (digits < rest.size() && rest[digits] >= '0' && rest[digits] <= '9') ++digits;
    if (digits == 1) return std::nullopt;
    rest.remove_prefix(digits);
  }
  if (rest != "Z" && rest != "+00:00" && rest != "+0000") return std::nullopt;

  const std::chrono::year_month_day date{std::chrono::year{*year},
                                         std::chrono::month{static_cast<unsigned>(*month)},
                                         std::chrono::day{static_cast<unsigned>(*day)}};
  if (!date.ok()) return std::nullopt;
  return std::chrono::sys_days{date} + std::chrono::hours{*hour} +
         std::chrono::minutes{*minute} + std::chrono::seconds{*second};
}

std::string format_timestamp(Timestamp ts) {
  const auto days = std::chrono::floor<std::chrono::days>(ts);
  const std::chrono::year_month_day date{days};
  const std::chrono::hh_mm_ss time{ts - days};
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%04d-%02u-%02uT%02d:%02d:%02dZ",
                static_cast<int>(date.year()), static_cast<unsigned>(date.month()),
                static_cast<unsigned>(date.day()), static_cast<int>(time.hours().count()),
                static_cast<int>(time.minutes().count()),
                static_cast<int>(time.seconds().count()));
  return buffer;
}

LoadedExecutions parse_executions(std::istream& in, FileFormat format,
                                  const LoadOptions& options) {
  std::vector<ExecutionRecord> records;
  ValidationReport report;
  for_each_row(
      in, format, kExecutionColumns,
      [&](const Fields& fields) {
        auto row = validate_execution(fields);
        if (row.record) {
          records.push_back(std::move(*row.record));
          ++report.accepted;
        } else {
          report.reject(row.reason);
        }
      },
      [&] { report.reject("malformed row"); });

  LoadedExecutions out{ExecutionDataset(std::move(records)), std::move(report)};
  for (const auto& key : out.dataset.keys()) {
    const auto sample = out.dataset.sample(key);
    const double fraction =
        static_cast<double>(sample.censored_count) / static_cast<double>(sample.size());
    if (fraction > options.censored_warning_threshold) {
      out.report.warnings.push_back(
          "censored fraction " + format_fixed(fraction, 2) + " exceeds " +
          format_fixed(options.censored_warning_threshold, 2) + " (test '" +
          key.test_id + "', revision '" + key.revision_id + "')");
    }
  }
  return out;
}

LoadedExecutions load_executions(const std::filesystem::path& path, FileFormat format,
                                 const LoadOptions& options) {
  auto in = open_input(path);
  return parse_executions(in, format, options);
}

void write_executions_jsonl(const ExecutionDataset& dataset, std::ostream& out) {
  for (const auto& r : dataset.records()) {
    json row = json::object();
    row["test_id"] = r.test_id;
    row["revision_id"] = r.revision_id;
    row["started_at"] = format_timestamp(r.started_at);
    row["duration_seconds"] = r.duration_seconds;
    row["verdict"] = std::string(to_string(r.verdict));
    row["interrupted"] = r.interrupted;
    out << row.dump() << '\n';
  }
}

LoadedChanges parse_timeout_changes(std::istream& in, FileFormat format) {
  LoadedChanges out;
  auto positive_minutes = [](const std::optional<std::string>& text) -> std::optional<int> {
    if (is_blank(text)) return std::nullopt;
    if (auto value = parse_number<int>(trim(*text))) return *value;
    // Accept integral values written as reals ("15.0").
    if (auto real = parse_number<double>(trim(*text));
        real && std::floor(*real) == *real && std::abs(*real) < 1e9) {
      return static_cast<int>(*real);
    }
    return std::nullopt;
  };

  for_each_row(
      in, format, kChangeColumns,
      [&](const Fields& fields) {
        auto get = [&](const char* name) -> std::optional<std::string> {
          auto it = fields.find(name);
          return it == fields.end() ? std::nullopt : it->second;
        };
        const auto test_id = get("test_id");
        if (is_blank(test_id)) return out.report.reject("missing id");
        const auto changed_text = get("changed_at");
        const auto changed = changed_text ? parse_timestamp(trim(*changed_text)) : std::nullopt;
        if (!changed) return out.report.reject("invalid timestamp");

        const auto new_text = get("new_value_minutes");
        const auto new_value = positive_minutes(new_text);
        if (!new_value) return out.report.reject("invalid timeout value");
        if (*new_value < 1) return out.report.reject("non-positive timeout value");

        std::optional<int> old_value;
        if (const auto old_text = get("old_value_minutes"); !is_blank(old_text)) {
          old_value = positive_minutes(old_text);
          if (!old_value) return out.report.reject("invalid timeout value");
          if (*old_value < 1) return out.report.reject("non-positive timeout value");
        }
        out.changes.push_back(TimeoutChangeRecord{*test_id, *changed, old_value, *new_value});
        ++out.report.accepted;
      },
      [&] { out.report.reject("malformed row"); });

  std::stable_sort(out.changes.begin(), out.changes.end(),
                   [](const TimeoutChangeRecord& a, const TimeoutChangeRecord& b) {
                     if (a.test_id != b.test_id) return a.test_id < b.test_id;
                     return a.changed_at < b.changed_at;
                   });
  return out;
}

LoadedChanges load_timeout_changes(const std::filesystem::path& path, FileFormat format) {
  auto in = open_input(path);
  return parse_timeout_changes(in, format);
}

DatasetSummary summarize(const ExecutionDataset& dataset) {
  DatasetSummary summary;
  summary.test_count = dataset.test_ids().size();
  summary.execution_count = dataset.size();
  summary.revision_count = dataset.revision_ids().size();
  if (!dataset.empty()) {
    const auto censored = std::count_if(dataset.records().begin(), dataset.records().end(),
                                        [](const ExecutionRecord& r) { return r.censored(); });
    summary.censored_fraction =
        static_cast<double>(censored) / static_cast<double>(dataset.size());
  }
  return summary;
}

TimeoutTable parse_timeout_table(std::istream& in) {
  static constexpr std::array kColumns = {"test_id", "timeout_minutes"};
  TimeoutTable table;
  std::size_t line_no = 1;
  for_each_row(
      in, FileFormat::csv, kColumns,
      [&](const Fields& fields) {
        ++line_no;
        const auto id = fields.count("test_id") ? fields.at("test_id") : std::nullopt;
        const auto value_text =
            fields.count("timeout_minutes") ? fields.at("timeout_minutes") : std::nullopt;
        const auto value =
            is_blank(value_text) ? std::nullopt : parse_number<double>(trim(*value_text));
        if (is_blank(id) || !value || !(*value > 0.0)) {
          throw Error("invalid timeout table row " + std::to_string(line_no));
        }
        table[*id] = *value;
      },
      [&] { throw Error("malformed timeout table row " + std::to_string(++line_no)); });
  return table;
}

TimeoutTable read_timeout_table(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_timeout_table(in);
}

void write_timeout_table(const TimeoutTable& table, std::ostream& out) {
  out << "test_id,timeout_minutes\n";
  for (const auto& [id, minutes] : table) {
    // Escapes match the reader's tokenizer (backslash, quote).
    if (id.find_first_of(",\"\\") != std::string::npos) {
      out << '"';
      for (char c : id) {
        if (c == '"' || c == '\\') out << '\\';
        out << c;
      }
      out << '"';
    } else {
      out << id;
    }
    out << ',' << format_number(minutes) << '\n';
  }
}

std::string format_fixed(double value, int decimals) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.*f", decimals, value);
  return buffer;
}

std::string format_number(double value) {
  char buffer[64];
  auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  if (ec != std::errc()) return format_fixed(value, 6);
  return std::string(buffer, ptr);
}

}  // namespace flaketime
