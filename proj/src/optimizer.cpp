#include "flaketime/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace flaketime {

namespace {

constexpr double kTieTolerance = 1e-12;

bool lower_cost(double candidate, double incumbent) {
  return candidate < incumbent - kTieTolerance * std::abs(incumbent);
}

int grid_ceil(double seconds, double unit) {
  return static_cast<int>(std::ceil(seconds / unit));
}

}  // namespace

std::string_view to_string(ProbabilityMethod method) {
  switch (method) {
    case ProbabilityMethod::tolhurst_bound:
      return "tolhurst_bound";
    case ProbabilityMethod::empirical_ecdf:
      return "empirical_ecdf";
  }
  return "unknown";
}

std::optional<ProbabilityMethod> parse_probability_method(std::string_view text) {
  if (text == "tolhurst" || text == "tolhurst_bound") return ProbabilityMethod::tolhurst_bound;
  if (text == "empirical" || text == "empirical_ecdf") return ProbabilityMethod::empirical_ecdf;
  return std::nullopt;
}

void OptimizationConfig::validate() const {
  if (reruns < 0) throw Error("rerun count m must be non-negative");
  if (!(breakage_probability >= 0.0 && breakage_probability <= 1.0)) {
    throw Error("breakage probability must lie in [0, 1]");
  }
  if (!(grid_unit_seconds > 0.0) || !std::isfinite(grid_unit_seconds)) {
    throw Error("grid unit must be positive");
  }
  if (min_samples < 2) throw Error("min_samples must be at least 2");
  if (fallback_timeout < 1) throw Error("fallback timeout must be a positive grid value");
}

double tolhurst_bound(const SampleStats& stats, double t_seconds) {
  if (stats.n < 2) throw Error("insufficient sample: the bound needs n >= 2");
  if (stats.q_n == 0.0) return t_seconds <= stats.mean ? 1.0 : 0.0;

  const double lambda = (t_seconds - stats.mean) / stats.q_n;
  if (lambda <= 1.0) return 1.0;

  const double n = static_cast<double>(stats.n);
  const double lambda_sq = lambda * lambda;
  const double k_sq = n * lambda_sq / (n - 1.0 + lambda_sq);
  // Nudged up so rounding never pushes an exact integer quotient below its
  // floor; the error stays on the conservative side.
  const double quotient = (n + 1.0) / (k_sq + 1.0) * (1.0 + kTieTolerance);
  return std::clamp(std::floor(quotient) / (n + 1.0), 0.0, 1.0);
}

double rerun_cost(double truncated_mean_seconds, double timeout_probability,
                  double t_seconds, int reruns, double breakage_probability) {
  const double m = static_cast<double>(reruns);
  return truncated_mean_seconds + m * timeout_probability * truncated_mean_seconds +
         breakage_probability * t_seconds * (m + 1.0);
}

CostModel::CostModel(const TestSample& sample, const OptimizationConfig& config)
    : sorted_(sample.durations), config_(config) {
  if (sample.empty()) throw Error("empty sample");
  config_.validate();
  if (config_.method == ProbabilityMethod::tolhurst_bound && sample.size() < 2) {
    throw Error("insufficient sample: the bound needs n >= 2");
  }
  stats_ = sample_stats(sample);
  std::sort(sorted_.begin(), sorted_.end());
  prefix_.resize(sorted_.size() + 1, 0.0);
  std::partial_sum(sorted_.begin(), sorted_.end(), prefix_.begin() + 1);
}

double CostModel::exceedance(double t_seconds) const {
  const auto at_most = std::upper_bound(sorted_.begin(), sorted_.end(), t_seconds);
  return static_cast<double>(sorted_.end() - at_most) / static_cast<double>(sorted_.size());
}

double CostModel::truncated_mean(double t_seconds) const {
  const auto at_most = static_cast<std::size_t>(
      std::upper_bound(sorted_.begin(), sorted_.end(), t_seconds) - sorted_.begin());
  if (at_most == sorted_.size()) return stats_.mean;
  const double clamped = static_cast<double>(sorted_.size() - at_most) * t_seconds;
  return (prefix_[at_most] + clamped) / static_cast<double>(sorted_.size());
}

double CostModel::timeout_probability(double t_seconds) const {
  return config_.method == ProbabilityMethod::tolhurst_bound ? tolhurst_bound(stats_, t_seconds)
                                                             : exceedance(t_seconds);
}

double CostModel::cost(double t_seconds) const {
  return rerun_cost(truncated_mean(t_seconds), timeout_probability(t_seconds), t_seconds,
                    config_.reruns, config_.breakage_probability);
}

double empirical_exceedance(const TestSample& sample, double t_seconds) {
  if (sample.empty()) throw Error("empty sample");
  const auto over = std::count_if(sample.durations.begin(), sample.durations.end(),
                                  [t_seconds](double d) { return d > t_seconds; });
  return static_cast<double>(over) / static_cast<double>(sample.size());
}

double truncated_mean(const TestSample& sample, double t_seconds) {
  OptimizationConfig config;
  config.method = ProbabilityMethod::empirical_ecdf;
  return CostModel(sample, config).truncated_mean(t_seconds);
}

double expected_cost(const TestSample& sample, double t_seconds,
                     const OptimizationConfig& config) {
  if (!(t_seconds > 0.0)) throw Error("timeout must be positive");
  return CostModel(sample, config).cost(t_seconds);
}

OptimizationResult optimize_timeout(const TestSample& sample, const OptimizationConfig& config) {
  config.validate();
  OptimizationResult result;
  result.test_id = sample.test_id;
  result.method_used = config.method;
  result.sample_size = sample.size();
  const double unit = config.grid_unit_seconds;

  if (sample.size() < config.min_samples) {
    result.fallback_applied = true;
    result.optimal_timeout = config.fallback_timeout;
    result.search_range = {config.fallback_timeout, config.fallback_timeout};
    if (!sample.empty()) {
      OptimizationConfig usable = config;
      if (sample.size() < 2) usable.method = ProbabilityMethod::empirical_ecdf;
      const CostModel model(sample, usable);
      const double t = config.fallback_timeout * unit;
      result.method_used = usable.method;
      result.expected_cost_at_optimum = model.cost(t);
      result.timeout_probability_at_optimum = model.timeout_probability(t);
    }
    return result;
  }

  const CostModel model(sample, config);
  const int lower = std::max(1, grid_ceil(model.stats().mean, unit));
  const int upper = std::max(lower, grid_ceil(2.0 * model.stats().max, unit));
  result.search_range = {lower, upper};

  result.optimal_timeout = lower;
  result.expected_cost_at_optimum = model.cost(lower * unit);
  for (int t = lower + 1; t <= upper; ++t) {
    const double cost = model.cost(t * unit);
    if (lower_cost(cost, result.expected_cost_at_optimum)) {
      result.optimal_timeout = t;
      result.expected_cost_at_optimum = cost;
    }
  }
  result.timeout_probability_at_optimum =
      model.timeout_probability(result.optimal_timeout * unit);
  return result;
}

std::vector<OptimizationResult> optimize_all(const ExecutionDataset& dataset,
                                             const OptimizationConfig& config) {
  std::vector<OptimizationResult> results;
  for (const auto& id : dataset.test_ids()) {
    results.push_back(optimize_timeout(dataset.test_sample(id), config));
  }
  return results;
}

SweepResult static_sweep(const ExecutionDataset& dataset, GridRange range,
                         const OptimizationConfig& config) {
  if (range.lower >= range.upper) throw Error("sweep range must satisfy lo < hi");
  if (range.lower < 1) throw Error("sweep range must be positive");
  if (dataset.empty()) throw Error("cannot sweep an empty dataset");

  OptimizationConfig empirical = config;
  empirical.method = ProbabilityMethod::empirical_ecdf;
  std::vector<CostModel> models;
  for (const auto& id : dataset.test_ids()) models.emplace_back(dataset.test_sample(id), empirical);

  SweepResult result;
  for (int t = range.lower; t <= range.upper; ++t) {
    const double seconds = t * config.grid_unit_seconds;
    double total = 0.0;
    for (const auto& model : models) total += model.cost(seconds);
    result.curve.points.push_back({t, total / static_cast<double>(models.size())});
  }

  const auto& points = result.curve.points;
  result.argmin = points.front().timeout;
  result.min_cost = points.front().average_cost;
  for (const auto& p : points) {
    if (lower_cost(p.average_cost, result.min_cost)) {
      result.argmin = p.timeout;
      result.min_cost = p.average_cost;
    }
  }
  for (std::size_t i = 1; i + 1 < points.size(); ++i) {
    if (lower_cost(points[i].average_cost, points[i - 1].average_cost) &&
        !lower_cost(points[i + 1].average_cost, points[i].average_cost)) {
      result.local_minima.push_back(points[i].timeout);
    }
  }
  return result;
}

}  // namespace flaketime
