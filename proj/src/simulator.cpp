#include "flaketime/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/lognormal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace flaketime {

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

std::string test_name(std::size_t index, std::size_t count) {
  std::string digits = std::to_string(index);
  const std::size_t width = std::max<std::size_t>(3, std::to_string(count - 1).size());
  return "test-" + std::string(width - std::min(width, digits.size()), '0') + digits;
}

}  // namespace

std::string_view to_string(DistributionKind kind) {
  switch (kind) {
    case DistributionKind::lognormal:
      return "lognormal";
    case DistributionKind::exponential:
      return "exponential";
    case DistributionKind::constant:
      return "constant";
  }
  return "unknown";
}

std::optional<DistributionKind> parse_distribution(std::string_view text) {
  if (text == "lognormal") return DistributionKind::lognormal;
  if (text == "exponential") return DistributionKind::exponential;
  if (text == "constant") return DistributionKind::constant;
  return std::nullopt;
}

void DurationDistribution::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw Error("distribution scale must be positive");
  if (kind == DistributionKind::lognormal && (!(shape > 0.0) || !std::isfinite(shape))) {
    throw Error("lognormal shape must be positive");
  }
}

double DurationDistribution::survival(double t) const {
  switch (kind) {
    case DistributionKind::lognormal:
      if (t <= 0.0) return 1.0;
      return boost::math::cdf(
          boost::math::complement(boost::math::lognormal(std::log(scale), shape), t));
    case DistributionKind::exponential:
      return t <= 0.0 ? 1.0 : std::exp(-t / scale);
    case DistributionKind::constant:
      return t < scale ? 1.0 : 0.0;
  }
  return 0.0;
}

double DurationDistribution::quantile(double p) const {
  if (p <= 0.0) return kind == DistributionKind::constant ? scale : 0.0;
  switch (kind) {
    case DistributionKind::lognormal:
      if (p >= 1.0) return kInfinity;
      return boost::math::quantile(boost::math::lognormal(std::log(scale), shape), p);
    case DistributionKind::exponential:
      if (p >= 1.0) return kInfinity;
      return -scale * std::log1p(-p);
    case DistributionKind::constant:
      return scale;
  }
  return kInfinity;
}

double DurationDistribution::mean() const {
  switch (kind) {
    case DistributionKind::lognormal:
      return scale * std::exp(0.5 * shape * shape);
    case DistributionKind::exponential:
    case DistributionKind::constant:
      return scale;
  }
  return scale;
}

double DurationDistribution::draw(std::mt19937_64& rng) const {
  switch (kind) {
    case DistributionKind::lognormal:
      return std::lognormal_distribution<double>(std::log(scale), shape)(rng);
    case DistributionKind::exponential:
      return std::exponential_distribution<double>(1.0 / scale)(rng);
    case DistributionKind::constant:
      return scale;
  }
  return scale;
}

void WorkloadSpec::validate() const {
  if (test_count < 1) throw Error("workload needs at least one test");
  if (executions_per_test < 1) throw Error("executions_per_test must be at least 1");
  base.validate();
  if (!(scale_spread.first > 0.0) || scale_spread.second < scale_spread.first) {
    throw Error("scale spread must be a positive range");
  }
  if (!is_probability(outlier_probability) || !is_probability(hang_probability) ||
      !is_probability(failure_probability) || !is_probability(original_timeout_percentile)) {
    throw Error("probabilities must lie in [0, 1]");
  }
  if (!(outlier_factor_range.first > 0.0) ||
      outlier_factor_range.second < outlier_factor_range.first) {
    throw Error("outlier factor range must be a positive range");
  }
  if (!(enforced_timeout_factor >= 1.0)) throw Error("enforced timeout factor must be >= 1");
  if (!(grid_unit_seconds > 0.0)) throw Error("grid unit must be positive");
}

double TestTruth::exceedance(double t_seconds) const {
  const auto [lo, hi] = outlier_factor_range;
  double outlier_tail = 0.0;
  if (outlier_probability > 0.0) {
    if (hi == lo) {
      outlier_tail = distribution.survival(t_seconds / lo);
    } else if (distribution.kind == DistributionKind::constant) {
      // Step in the factor: the run exceeds t once factor > t / scale.
      const double cut = t_seconds / distribution.scale;
      outlier_tail = std::clamp((hi - std::max(cut, lo)) / (hi - lo), 0.0, 1.0);
      if (cut >= hi) outlier_tail = 0.0;
    } else {
      outlier_tail = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
                         [&](double f) { return distribution.survival(t_seconds / f); }, lo, hi,
                         10, 1e-12) /
                     (hi - lo);
    }
  }
  const double finite = (1.0 - outlier_probability) * distribution.survival(t_seconds) +
                        outlier_probability * outlier_tail;
  return hang_probability + (1.0 - hang_probability) * finite;
}

double TestTruth::quantile(double p) const {
  const bool bounded =
      distribution.kind == DistributionKind::constant && hang_probability == 0.0;
  if (p >= 1.0 - hang_probability && (!bounded || p > 1.0)) return kInfinity;
  if (p >= 1.0 && bounded) {
    return distribution.scale * (outlier_probability > 0.0 ? outlier_factor_range.second : 1.0);
  }

  auto reached = [&](double x) { return 1.0 - exceedance(x) >= p; };
  double upper = std::max(1.0, distribution.scale);
  for (int i = 0; i < 200 && !reached(upper); ++i) upper *= 2.0;
  if (!reached(upper)) return kInfinity;
  double lower = 0.0;
  for (int i = 0; i < 200 && upper - lower > 1e-12 * upper; ++i) {
    const double mid = 0.5 * (lower + upper);
    (reached(mid) ? upper : lower) = mid;
  }
  return upper;
}

Workload generate_workload(const WorkloadSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit_uniform(0.0, 1.0);
  const Timestamp start = std::chrono::sys_days{std::chrono::year{2023} / 6 / 1};

  Workload workload;
  workload.original.kind = PolicyKind::original;
  workload.original.name = "original";
  std::vector<ExecutionRecord> records;
  records.reserve(spec.test_count * spec.executions_per_test);

  struct Run {
    double natural;
    bool hang;
    bool fail;
  };
  for (std::size_t test = 0; test < spec.test_count; ++test) {
    TestTruth truth;
    truth.test_id = test_name(test, spec.test_count);
    truth.distribution = spec.base;
    if (spec.scale_spread.second > spec.scale_spread.first) {
      std::uniform_real_distribution<double> log_factor(std::log(spec.scale_spread.first),
                                                        std::log(spec.scale_spread.second));
      truth.distribution.scale *= std::exp(log_factor(rng));
    } else {
      truth.distribution.scale *= spec.scale_spread.first;
    }
    truth.outlier_probability = spec.outlier_probability;
    truth.outlier_factor_range = spec.outlier_factor_range;
    truth.hang_probability = spec.hang_probability;

    std::vector<Run> runs(spec.executions_per_test);
    std::uniform_real_distribution<double> outlier_factor(spec.outlier_factor_range.first,
                                                          spec.outlier_factor_range.second);
    double longest = 0.0;
    for (auto& run : runs) {
      run.hang = unit_uniform(rng) < spec.hang_probability;
      run.natural = truth.distribution.draw(rng);
      if (unit_uniform(rng) < spec.outlier_probability) run.natural *= outlier_factor(rng);
      run.fail = unit_uniform(rng) < spec.failure_probability;
      if (!run.hang) longest = std::max(longest, run.natural);
    }

    double placed = truth.quantile(spec.original_timeout_percentile);
    if (!std::isfinite(placed)) placed = longest > 0.0 ? longest : truth.distribution.scale;
    truth.original_timeout =
        std::max(1, static_cast<int>(std::ceil(placed / spec.grid_unit_seconds - 1e-9)));
    const double timeout_seconds = truth.original_timeout * spec.grid_unit_seconds;
    truth.enforced_timeout_seconds = spec.enforced_timeout_factor * timeout_seconds;
    workload.original.values[truth.test_id] = truth.original_timeout;

    for (std::size_t j = 0; j < runs.size(); ++j) {
      const auto& run = runs[j];
      ExecutionRecord record;
      record.test_id = truth.test_id;
      record.revision_id = spec.revision_id;
      record.started_at =
          start + std::chrono::seconds{static_cast<long long>(j * spec.test_count + test) * 60};
      if (run.hang || run.natural > truth.enforced_timeout_seconds) {
        record.duration_seconds = truth.enforced_timeout_seconds;
        record.verdict = Verdict::timeout;
        record.interrupted = true;
      } else if (run.natural > timeout_seconds) {
        record.duration_seconds = run.natural;
        record.verdict = Verdict::timeout;
      } else {
        record.duration_seconds = run.natural;
        record.verdict = run.fail ? Verdict::fail : Verdict::pass;
      }
      records.push_back(std::move(record));
    }
    workload.truth.push_back(std::move(truth));
  }
  workload.dataset = ExecutionDataset(std::move(records));
  return workload;
}

SimulationReport simulate_rerun_policy(const ExecutionDataset& dataset, const TimeoutPolicy& policy,
                                       const SimulationOptions& options) {
  if (options.reruns < 0) throw Error("rerun count m must be non-negative");
  if (!(options.grid_unit_seconds > 0.0)) throw Error("grid unit must be positive");
  const auto tests = dataset.test_ids();
  for (const auto& id : tests) policy.timeout_for(id);

  std::mt19937_64 rng(options.seed);
  SimulationReport report;
  for (const auto& id : tests) {
    const double timeout = policy.timeout_for(id) * options.grid_unit_seconds;
    std::vector<double> durations;
    for (std::size_t i : dataset.test_indices(id)) {
      const auto& r = dataset.records()[i];
      durations.push_back(r.censored() ? kInfinity : r.duration_seconds);
    }
    std::uniform_int_distribution<std::size_t> pick(0, durations.size() - 1);

    TestSimulation sim;
    sim.test_id = id;
    for (double initial : durations) {
      ++sim.initial_runs;
      if (initial <= timeout) {
        sim.total_machine_seconds += initial;
        ++sim.final_passes;
        continue;
      }
      sim.total_machine_seconds += timeout;
      ++sim.timeout_events;
      bool passed = false;
      for (int attempt = 0; attempt < options.reruns; ++attempt) {
        if (passed && options.accounting == RerunAccounting::stop_on_success) break;
        const double rerun = durations[pick(rng)];
        ++sim.rerun_count;
        sim.total_machine_seconds += std::min(rerun, timeout);
        if (rerun <= timeout) passed = true;
      }
      ++(passed ? sim.final_passes : sim.final_timeouts);
    }

    report.initial_runs += sim.initial_runs;
    report.timeout_events += sim.timeout_events;
    report.rerun_count += sim.rerun_count;
    report.total_machine_seconds += sim.total_machine_seconds;
    report.final_passes += sim.final_passes;
    report.final_timeouts += sim.final_timeouts;
    report.tests.push_back(std::move(sim));
  }
  if (report.initial_runs > 0) {
    report.mean_cost_per_initial_run =
        report.total_machine_seconds / static_cast<double>(report.initial_runs);
  }
  return report;
}

}  // namespace flaketime
