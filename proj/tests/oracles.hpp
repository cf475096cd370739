#pragma once

// Naive reference computations used as oracles. Deliberately written with
// plain loops over the raw data and no code shared with the library.

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "flaketime/model.hpp"

namespace oracle {

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
  double q_n = 0.0;
};

inline Moments moments(const std::vector<double>& xs) {
  Moments m;
  const double n = static_cast<double>(xs.size());
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.mean = sum / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  m.variance = xs.size() > 1 ? ss / (n - 1.0) : 0.0;
  m.q_n = std::sqrt(m.variance * (n + 1.0) / n);
  return m;
}

// P(X - mean >= lambda * Q_n) <= floor((n + 1) / (k^2 + 1)) / (n + 1) with
// k^2 = n lambda^2 / (n - 1 + lambda^2), valid for lambda > 1.
inline double bound(std::size_t count, double mean, double q_n, double t) {
  if (q_n == 0.0) return t <= mean ? 1.0 : 0.0;
  const double lambda = (t - mean) / q_n;
  if (lambda <= 1.0) return 1.0;
  const double n = static_cast<double>(count);
  const double k2 = n * std::pow(lambda, 2) / (n - 1.0 + std::pow(lambda, 2));
  return std::floor((n + 1.0) / (k2 + 1.0) + 1e-9) / (n + 1.0);
}

inline double exceedance(const std::vector<double>& xs, double t) {
  std::size_t over = 0;
  for (double x : xs) {
    if (x > t) ++over;
  }
  return static_cast<double>(over) / static_cast<double>(xs.size());
}

inline double truncated_mean(const std::vector<double>& xs, double t) {
  double sum = 0.0;
  for (double x : xs) sum += x < t ? x : t;
  return sum / static_cast<double>(xs.size());
}

inline double cost(const std::vector<double>& xs, double t, bool empirical, int m, double pb) {
  const double tm = truncated_mean(xs, t);
  double p = 0.0;
  if (empirical) {
    p = exceedance(xs, t);
  } else {
    const auto mo = moments(xs);
    p = bound(xs.size(), mo.mean, mo.q_n, t);
  }
  return tm * (1.0 + m * p) + pb * t * (m + 1);
}

// Full-grid argmin over [ceil(mean / unit), ceil(2 max / unit)]; a later
// grid point wins only when it is lower by more than a relative 1e-12.
inline std::pair<int, double> brute_force_argmin(const std::vector<double>& xs, double unit,
                                                 bool empirical, int m, double pb) {
  double mx = xs[0];
  for (double x : xs) mx = x > mx ? x : mx;
  int lo = static_cast<int>(std::ceil(moments(xs).mean / unit));
  if (lo < 1) lo = 1;
  int hi = static_cast<int>(std::ceil(2.0 * mx / unit));
  if (hi < lo) hi = lo;
  std::vector<double> costs;
  for (int t = lo; t <= hi; ++t) costs.push_back(cost(xs, t * unit, empirical, m, pb));
  std::size_t best = 0;
  for (std::size_t i = 1; i < costs.size(); ++i) {
    if (costs[i] < costs[best] - 1e-12 * std::abs(costs[best])) best = i;
  }
  return {lo + static_cast<int>(best), costs[best]};
}

struct Flakiness {
  std::size_t tests = 0;
  std::size_t flaky = 0;
  double rate = 0.0;
  std::vector<std::size_t> bins = std::vector<std::size_t>(5, 0);
};

// Groups records of `revision` by test, in the given order (records passed
// here are expected to be already in execution order), optionally keeping
// only the first `prefix` runs of each test.
inline std::map<std::string, std::vector<flaketime::Verdict>> verdicts_by_test(
    const std::vector<flaketime::ExecutionRecord>& records, const std::string& revision,
    std::size_t prefix = static_cast<std::size_t>(-1)) {
  std::map<std::string, std::vector<flaketime::Verdict>> out;
  for (const auto& r : records) {
    if (r.revision_id != revision) continue;
    auto& v = out[r.test_id];
    if (v.size() < prefix) v.push_back(r.verdict);
  }
  return out;
}

inline Flakiness flakiness(const std::map<std::string, std::vector<flaketime::Verdict>>& tests) {
  Flakiness f;
  for (const auto& [id, verdicts] : tests) {
    ++f.tests;
    std::size_t failures = 0;
    for (auto v : verdicts) {
      if (v != flaketime::Verdict::pass) ++failures;
    }
    const std::size_t n = verdicts.size();
    if (failures == 0 || failures == n) continue;
    ++f.flaky;
    // failures / n in (b/5, (b+1)/5], compared exactly in integers.
    for (std::size_t b = 0; b < 5; ++b) {
      if (failures * 5 > b * n && failures * 5 <= (b + 1) * n) {
        ++f.bins[b];
        break;
      }
    }
  }
  f.rate = f.tests ? static_cast<double>(f.flaky) / static_cast<double>(f.tests) : 0.0;
  return f;
}

inline double timeout_share(const std::vector<flaketime::ExecutionRecord>& records) {
  std::map<std::pair<std::string, std::string>, std::vector<flaketime::Verdict>> groups;
  for (const auto& r : records) groups[{r.test_id, r.revision_id}].push_back(r.verdict);
  std::size_t failures = 0, timeouts = 0;
  for (const auto& [key, verdicts] : groups) {
    std::size_t fails = 0;
    for (auto v : verdicts) fails += v != flaketime::Verdict::pass;
    if (fails == 0 || fails == verdicts.size()) continue;
    for (auto v : verdicts) {
      if (v == flaketime::Verdict::fail) ++failures;
      if (v == flaketime::Verdict::timeout) {
        ++failures;
        ++timeouts;
      }
    }
  }
  return failures ? static_cast<double>(timeouts) / static_cast<double>(failures) : 0.0;
}

}  // namespace oracle
