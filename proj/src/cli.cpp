#include "flaketime/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "flaketime/evaluation.hpp"
#include "flaketime/flakiness.hpp"
#include "flaketime/ingest.hpp"
#include "flaketime/report_json.hpp"
#include "flaketime/optimizer.hpp"
#include "flaketime/simulator.hpp"

namespace flaketime::cli {

namespace {

using nlohmann::json;

enum class OutputFormat { json, csv, table };

struct InputOptions {
  std::string path;
  std::string format;
};

struct OptimizerOptions {
  std::string method = "tolhurst";
  int m = 3;
  double pb = 0.0;
  std::size_t min_samples = 30;
  double fallback_minutes = 120.0;
  double grid_seconds = 60.0;
};

// Flags shared by every subcommand, plus the per-subcommand ones.
struct RunConfig {
  InputOptions input;
  std::string out_path;
  std::string output_format;
  OptimizerOptions optimizer;

  std::string revision;
  std::size_t step = 10;

  InputOptions input_b;
  std::string revision_a;
  std::string revision_b;

  double sweep_lo = 75.0;
  double sweep_hi = 180.0;

  std::string original_policy;
  std::optional<double> static_minutes;
  std::size_t k = 5;
  std::uint64_t seed = 0;

  std::size_t tests = 20;
  std::size_t runs = 100;
  std::string distribution = "lognormal";
  double scale_minutes = 10.0;
  double shape = 0.5;
  double spread_lo = 1.0;
  double spread_hi = 1.0;
  double outlier_prob = 0.0;
  double outlier_lo = 2.0;
  double outlier_hi = 5.0;
  double hang_prob = 0.0;
  double fail_prob = 0.0;
  double percentile = 0.85;
  double enforce_factor = 10.0;
  std::string accounting = "stop";
  std::string simulate_policy;
  std::string write_dataset;
  std::string write_policy;
};

FileFormat resolve_format(const InputOptions& input) {
  if (input.format.empty()) return format_from_path(input.path);
  if (auto format = parse_format(input.format)) return *format;
  throw CLI::ValidationError("--format", "unknown format '" + input.format + "'");
}

LoadedExecutions load(const InputOptions& input) {
  return load_executions(input.path, resolve_format(input));
}

int grid_units(double minutes, double grid_seconds) {
  return std::max(1, static_cast<int>(std::ceil(minutes * 60.0 / grid_seconds - 1e-9)));
}

OptimizationConfig make_config(const OptimizerOptions& options) {
  OptimizationConfig config;
  const auto method = parse_probability_method(options.method);
  if (!method) throw CLI::ValidationError("--method", "unknown method '" + options.method + "'");
  config.method = *method;
  config.reruns = options.m;
  config.breakage_probability = options.pb;
  config.min_samples = options.min_samples;
  config.grid_unit_seconds = options.grid_seconds;
  config.fallback_timeout = grid_units(options.fallback_minutes, options.grid_seconds);
  config.validate();
  return config;
}

OutputFormat output_format(const RunConfig& config, OutputFormat fallback) {
  if (config.output_format == "json") return OutputFormat::json;
  if (config.output_format == "csv") return OutputFormat::csv;
  if (config.output_format == "table") return OutputFormat::table;
  if (!config.output_format.empty()) {
    throw CLI::ValidationError("--output-format", "unknown output format '" +
                                                      config.output_format + "'");
  }
  if (config.out_path.size() >= 4 &&
      config.out_path.compare(config.out_path.size() - 4, 4, ".csv") == 0) {
    return OutputFormat::csv;
  }
  return fallback;
}

void emit(const RunConfig& config, std::ostream& out, const std::string& text) {
  if (config.out_path.empty()) {
    out << text;
    return;
  }
  std::ofstream file(config.out_path, std::ios::binary);
  if (!file) throw Error("cannot write '" + config.out_path + "'");
  file << text;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void add_input(CLI::App* app, InputOptions& input, const std::string& flag = "--input",
               const std::string& format_flag = "--format") {
  app->add_option(flag, input.path, "Execution records (JSONL or CSV)")->required();
  app->add_option(format_flag, input.format, "jsonl or csv (default: from extension)");
}

void add_output(CLI::App* app, RunConfig& config) {
  app->add_option("--out", config.out_path, "Write the report here instead of stdout");
  app->add_option("--output-format", config.output_format, "json, csv or table");
}

void add_optimizer(CLI::App* app, OptimizerOptions& options) {
  app->add_option("--method", options.method, "tolhurst or empirical")->capture_default_str();
  app->add_option("--m", options.m, "Reruns after a failed execution")->capture_default_str();
  app->add_option("--pb", options.pb, "Breakage probability P_b")->capture_default_str();
  app->add_option("--min-samples", options.min_samples, "Fallback below this sample size")
      ->capture_default_str();
  app->add_option("--fallback", options.fallback_minutes, "Fallback timeout, minutes")
      ->capture_default_str();
  app->add_option("--grid-seconds", options.grid_seconds, "Timeout granularity, seconds")
      ->capture_default_str();
}

std::string summary_table(const DatasetSummary& s, const ValidationReport& v) {
  std::ostringstream os;
  os << "tests              " << s.test_count << "\n"
     << "executions         " << s.execution_count << "\n"
     << "revisions          " << s.revision_count << "\n"
     << "censored fraction  " << format_fixed(s.censored_fraction, 4) << "\n"
     << "rejected rows      " << v.rejected << "\n";
  return os.str();
}

std::string optimize_table(const std::vector<OptimizationResult>& results, double grid_seconds) {
  std::ostringstream os;
  os << std::left << std::setw(32) << "test_id" << std::right << std::setw(10) << "timeout"
     << std::setw(14) << "cost_s" << std::setw(10) << "p_timeout" << "  fallback\n";
  for (const auto& r : results) {
    os << std::left << std::setw(32) << r.test_id << std::right << std::setw(10)
       << format_number(r.optimal_timeout * grid_seconds / 60.0) << std::setw(14)
       << format_fixed(r.expected_cost_at_optimum, 2) << std::setw(10)
       << format_fixed(r.timeout_probability_at_optimum, 4) << "  "
       << (r.fallback_applied ? "yes" : "no") << "\n";
  }
  return os.str();
}

std::string sweep_table(const SweepResult& sweep, double grid_seconds) {
  std::ostringstream os;
  os << std::setw(10) << "timeout" << std::setw(16) << "average_cost_s" << "\n";
  for (const auto& p : sweep.curve.points) {
    os << std::setw(10) << format_number(p.timeout * grid_seconds / 60.0) << std::setw(16)
       << format_fixed(p.average_cost, 3) << "\n";
  }
  os << "argmin " << format_number(sweep.argmin * grid_seconds / 60.0) << "\n";
  return os.str();
}

std::string cv_table(const CvReport& report, const PolicyComparison& comparison) {
  std::ostringstream os;
  os << std::setw(6) << "fold" << "  " << std::left << std::setw(16) << "policy" << std::right
     << std::setw(12) << "timeouts" << std::setw(16) << "avg_cost_s" << "\n";
  for (const auto& fold : report.folds) {
    for (const auto& p : fold.policies) {
      os << std::setw(6) << fold.fold << "  " << std::left << std::setw(16) << p.policy
         << std::right << std::setw(12) << p.flaky_timeout_count << std::setw(16)
         << format_fixed(p.average_cost, 3) << "\n";
    }
  }
  os << "\nmean reduction vs reference\n";
  for (const auto& r : report.reductions) {
    if (r.policy == r.reference) continue;
    os << "  " << std::left << std::setw(16) << r.policy << " vs " << std::setw(16)
       << r.reference << std::right << " timeouts " << format_fixed(r.timeout_reduction, 4)
       << "  cost " << format_fixed(r.cost_reduction, 4) << "\n";
  }
  os << "\nwhole dataset\n";
  for (const auto& t : comparison.totals) {
    os << "  " << std::left << std::setw(16) << t.policy << std::right << " timeouts "
       << std::setw(8) << t.timeout_count << "  avg_cost_s " << format_fixed(t.average_cost, 3)
       << "  median_timeout " << format_number(t.median_timeout) << "\n";
  }
  for (const auto& w : report.warnings) os << "warning: " << w << "\n";
  return os.str();
}

int cmd_summarize(const RunConfig& config, std::ostream& out) {
  const auto loaded = load(config.input);
  const auto summary = summarize(loaded.dataset);
  if (output_format(config, OutputFormat::json) == OutputFormat::table) {
    emit(config, out, summary_table(summary, loaded.report));
  } else {
    emit(config, out, dump({{"summary", summary}, {"validation", loaded.report}}));
  }
  return kExitOk;
}

int cmd_flakiness(const RunConfig& config, std::ostream& out) {
  const auto loaded = load(config.input);
  std::vector<std::string> revisions;
  if (config.revision.empty()) {
    revisions = loaded.dataset.revision_ids();
  } else {
    revisions.push_back(config.revision);
  }
  json reports = json::array();
  for (const auto& revision : revisions) {
    reports.push_back({{"report", flakiness_report(loaded.dataset, revision)},
                       {"evolution", flakiness_evolution(loaded.dataset, revision, config.step)}});
  }
  emit(config, out,
       dump({{"revisions", std::move(reports)},
             {"timeout_failure_share", timeout_failure_share(loaded.dataset)},
             {"validation", loaded.report}}));
  return kExitOk;
}

int cmd_compare(const RunConfig& config, std::ostream& out) {
  const auto first = load(config.input);
  const auto second = config.input_b.path.empty() ? first : load(config.input_b);
  emit(config, out,
       dump(compare_flakiness(first.dataset, second.dataset, config.revision_a,
                              config.revision_b)));
  return kExitOk;
}

int cmd_timeout_history(const RunConfig& config, std::ostream& out) {
  const auto loaded = load_timeout_changes(config.input.path, resolve_format(config.input));
  emit(config, out,
       dump({{"stats", timeout_change_stats(loaded.changes)}, {"validation", loaded.report}}));
  return kExitOk;
}

int cmd_optimize(const RunConfig& config, std::ostream& out) {
  const auto options = make_config(config.optimizer);
  const auto loaded = load(config.input);
  const auto results = optimize_all(loaded.dataset, options);
  switch (output_format(config, OutputFormat::json)) {
    case OutputFormat::csv: {
      TimeoutTable table;
      for (const auto& r : results) {
        table[r.test_id] = r.optimal_timeout * options.grid_unit_seconds / 60.0;
      }
      std::ostringstream os;
      write_timeout_table(table, os);
      emit(config, out, os.str());
      break;
    }
    case OutputFormat::table:
      emit(config, out, optimize_table(results, options.grid_unit_seconds));
      break;
    case OutputFormat::json: {
      json rows = json::array();
      for (const auto& r : results) rows.push_back(optimization_json(r, options.grid_unit_seconds));
      emit(config, out, dump(rows));
      break;
    }
  }
  return kExitOk;
}

int cmd_sweep(const RunConfig& config, std::ostream& out) {
  const auto options = make_config(config.optimizer);
  const auto loaded = load(config.input);
  const GridRange range{grid_units(config.sweep_lo, options.grid_unit_seconds),
                        grid_units(config.sweep_hi, options.grid_unit_seconds)};
  const auto sweep = static_sweep(loaded.dataset, range, options);
  switch (output_format(config, OutputFormat::json)) {
    case OutputFormat::table:
      emit(config, out, sweep_table(sweep, options.grid_unit_seconds));
      break;
    case OutputFormat::csv: {
      std::ostringstream os;
      os << "timeout_minutes,average_cost_seconds\n";
      for (const auto& p : sweep.curve.points) {
        os << format_number(p.timeout * options.grid_unit_seconds / 60.0) << ','
           << format_number(p.average_cost) << '\n';
      }
      emit(config, out, os.str());
      break;
    }
    case OutputFormat::json:
      emit(config, out, dump(sweep));
      break;
  }
  return kExitOk;
}

int cmd_evaluate(const RunConfig& config, std::ostream& out) {
  const auto options = make_config(config.optimizer);
  const auto loaded = load(config.input);

  std::vector<TimeoutPolicy> baselines;
  if (!config.original_policy.empty()) {
    baselines.push_back(TimeoutPolicy::from_table(read_timeout_table(config.original_policy),
                                                  options.grid_unit_seconds));
  }
  if (config.static_minutes) {
    baselines.push_back(TimeoutPolicy::fixed(
        grid_units(*config.static_minutes, options.grid_unit_seconds), "static"));
  }
  const auto cv = cross_validate(loaded.dataset, baselines, options, config.k, config.seed);

  std::vector<TimeoutPolicy> whole{optimized_policy(loaded.dataset, options)};
  whole.insert(whole.end(), baselines.begin(), baselines.end());
  const auto comparison = compare_policies(loaded.dataset, whole, options);

  const json report = {{"cross_validation", cv}, {"comparison", comparison}};
  const auto format = output_format(config, OutputFormat::table);
  if (format == OutputFormat::json) {
    emit(config, out, dump(report));
    return kExitOk;
  }
  if (!config.out_path.empty()) emit(config, out, dump(report));
  out << cv_table(cv, comparison);
  return kExitOk;
}

int cmd_simulate(const RunConfig& config, std::ostream& out) {
  WorkloadSpec spec;
  spec.test_count = config.tests;
  spec.executions_per_test = config.runs;
  const auto kind = parse_distribution(config.distribution);
  if (!kind) {
    throw CLI::ValidationError("--distribution", "unknown distribution '" + config.distribution + "'");
  }
  spec.base = {*kind, config.scale_minutes * 60.0, config.shape};
  spec.scale_spread = {config.spread_lo, config.spread_hi};
  spec.outlier_probability = config.outlier_prob;
  spec.outlier_factor_range = {config.outlier_lo, config.outlier_hi};
  spec.hang_probability = config.hang_prob;
  spec.failure_probability = config.fail_prob;
  spec.original_timeout_percentile = config.percentile;
  spec.enforced_timeout_factor = config.enforce_factor;
  spec.grid_unit_seconds = config.optimizer.grid_seconds;
  spec.seed = config.seed;
  const auto workload = generate_workload(spec);

  if (!config.write_dataset.empty()) {
    std::ofstream file(config.write_dataset, std::ios::binary);
    if (!file) throw Error("cannot write '" + config.write_dataset + "'");
    write_executions_jsonl(workload.dataset, file);
  }
  if (!config.write_policy.empty()) {
    std::ofstream file(config.write_policy, std::ios::binary);
    if (!file) throw Error("cannot write '" + config.write_policy + "'");
    write_timeout_table(
        to_table(workload.original, workload.dataset.test_ids(), spec.grid_unit_seconds), file);
  }

  SimulationOptions options;
  options.reruns = config.optimizer.m;
  options.seed = config.seed;
  options.grid_unit_seconds = spec.grid_unit_seconds;
  if (config.accounting == "all") {
    options.accounting = RerunAccounting::all_reruns;
  } else if (config.accounting != "stop") {
    throw CLI::ValidationError("--accounting", "expected 'stop' or 'all'");
  }
  const TimeoutPolicy policy =
      config.simulate_policy.empty()
          ? workload.original
          : TimeoutPolicy::from_table(read_timeout_table(config.simulate_policy),
                                      spec.grid_unit_seconds, PolicyKind::original, "input");
  const auto report = simulate_rerun_policy(workload.dataset, policy, options);
  emit(config, out,
       dump({{"workload", summarize(workload.dataset)},
             {"policy", policy.name},
             {"simulation", report}}));
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Test execution analytics and timeout optimization", "flaketime"};
  app.require_subcommand(1);
  RunConfig config;

  auto* summarize_cmd = app.add_subcommand("summarize", "Dataset summary and validation counts");
  add_input(summarize_cmd, config.input);
  add_output(summarize_cmd, config);

  auto* flakiness_cmd = app.add_subcommand("flakiness", "Flakiness rates, bins and evolution");
  add_input(flakiness_cmd, config.input);
  add_output(flakiness_cmd, config);
  flakiness_cmd->add_option("--revision", config.revision, "Only this revision");
  flakiness_cmd->add_option("--step", config.step, "Evolution step (repetitions)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  auto* compare_cmd = app.add_subcommand("compare", "Compare flakiness of two revisions");
  add_input(compare_cmd, config.input, "--input-a", "--format-a");
  compare_cmd->add_option("--input-b", config.input_b.path, "Second dataset (default: first)");
  compare_cmd->add_option("--format-b", config.input_b.format, "jsonl or csv");
  compare_cmd->add_option("--revision-a", config.revision_a)->required();
  compare_cmd->add_option("--revision-b", config.revision_b)->required();
  add_output(compare_cmd, config);

  auto* history_cmd = app.add_subcommand("timeout-history", "Statistics of timeout changes");
  add_input(history_cmd, config.input);
  add_output(history_cmd, config);

  auto* optimize_cmd = app.add_subcommand("optimize", "Cost-optimal timeout per test");
  add_input(optimize_cmd, config.input);
  add_output(optimize_cmd, config);
  add_optimizer(optimize_cmd, config.optimizer);

  auto* sweep_cmd = app.add_subcommand("sweep", "Average cost of static timeouts");
  add_input(sweep_cmd, config.input);
  add_output(sweep_cmd, config);
  add_optimizer(sweep_cmd, config.optimizer);
  sweep_cmd->add_option("--lo", config.sweep_lo, "Smallest timeout, minutes")->required();
  sweep_cmd->add_option("--hi", config.sweep_hi, "Largest timeout, minutes")->required();

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Cross-validate timeout policies");
  add_input(evaluate_cmd, config.input);
  add_output(evaluate_cmd, config);
  add_optimizer(evaluate_cmd, config.optimizer);
  evaluate_cmd->add_option("--original", config.original_policy,
                           "CSV test_id,timeout_minutes of the current timeouts");
  evaluate_cmd->add_option("--static", config.static_minutes, "Global timeout, minutes");
  evaluate_cmd->add_option("--k", config.k, "Folds")->capture_default_str();
  evaluate_cmd->add_option("--seed", config.seed, "Fold shuffling seed")->required();

  auto* simulate_cmd = app.add_subcommand("simulate", "Synthetic workload and rerun simulation");
  add_output(simulate_cmd, config);
  simulate_cmd->add_option("--tests", config.tests)->capture_default_str();
  simulate_cmd->add_option("--runs", config.runs, "Executions per test")->capture_default_str();
  simulate_cmd->add_option("--distribution", config.distribution,
                           "lognormal, exponential or constant")
      ->capture_default_str();
  simulate_cmd->add_option("--scale", config.scale_minutes,
                           "Median (lognormal), mean (exponential) or value, minutes")
      ->capture_default_str();
  simulate_cmd->add_option("--shape", config.shape, "Lognormal sigma")->capture_default_str();
  simulate_cmd->add_option("--spread-lo", config.spread_lo, "Per-test scale factor range");
  simulate_cmd->add_option("--spread-hi", config.spread_hi);
  simulate_cmd->add_option("--outlier-prob", config.outlier_prob);
  simulate_cmd->add_option("--outlier-lo", config.outlier_lo);
  simulate_cmd->add_option("--outlier-hi", config.outlier_hi);
  simulate_cmd->add_option("--hang-prob", config.hang_prob);
  simulate_cmd->add_option("--fail-prob", config.fail_prob);
  simulate_cmd->add_option("--percentile", config.percentile,
                           "Percentile of the original timeouts")
      ->capture_default_str();
  simulate_cmd->add_option("--enforce-factor", config.enforce_factor)->capture_default_str();
  simulate_cmd->add_option("--m", config.optimizer.m)->capture_default_str();
  simulate_cmd->add_option("--grid-seconds", config.optimizer.grid_seconds)->capture_default_str();
  simulate_cmd->add_option("--seed", config.seed)->required();
  simulate_cmd->add_option("--policy", config.simulate_policy,
                           "CSV test_id,timeout_minutes (default: generated original)");
  simulate_cmd->add_option("--accounting", config.accounting, "stop or all")
      ->capture_default_str();
  simulate_cmd->add_option("--write-dataset", config.write_dataset, "Write runs as JSONL");
  simulate_cmd->add_option("--write-policy", config.write_policy, "Write original timeouts CSV");

  const std::vector<std::pair<CLI::App*, std::function<int(const RunConfig&, std::ostream&)>>>
      commands = {{summarize_cmd, cmd_summarize}, {flakiness_cmd, cmd_flakiness},
                  {compare_cmd, cmd_compare},     {history_cmd, cmd_timeout_history},
                  {optimize_cmd, cmd_optimize},   {sweep_cmd, cmd_sweep},
                  {evaluate_cmd, cmd_evaluate},   {simulate_cmd, cmd_simulate}};

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    for (const auto& [command, handler] : commands) {
      if (command->parsed()) return handler(config, out);
    }
    return kExitUsage;
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace flaketime::cli
