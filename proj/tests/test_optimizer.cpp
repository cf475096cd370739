#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "flaketime/optimizer.hpp"
#include "oracles.hpp"

using namespace flaketime;

namespace {

OptimizationConfig empirical_config() {
  OptimizationConfig c;
  c.method = ProbabilityMethod::empirical_ecdf;
  return c;
}

std::vector<double> random_sample(std::mt19937_64& rng, std::size_t n) {
  std::lognormal_distribution<double> body(std::log(300.0), 0.6);
  std::bernoulli_distribution outlier(0.05);
  std::uniform_real_distribution<double> factor(2.0, 8.0);
  std::vector<double> xs(n);
  for (auto& x : xs) {
    x = body(rng);
    if (outlier(rng)) x *= factor(rng);
  }
  return xs;
}

}  // namespace

TEST_SUITE("optimizer") {

TEST_CASE("probability method names") {
  CHECK(parse_probability_method("tolhurst") == ProbabilityMethod::tolhurst_bound);
  CHECK(parse_probability_method("empirical_ecdf") == ProbabilityMethod::empirical_ecdf);
  CHECK_FALSE(parse_probability_method("normal").has_value());
}

TEST_CASE("bound for one to five minutes at six minutes is one sixth") {
  const auto stats = sample_stats(fixtures::minutes({1, 2, 3, 4, 5}));
  CHECK(tolhurst_bound(stats, 360.0) == doctest::Approx(1.0 / 6.0));
  // Outside lambda > 1 the bound is uninformative.
  CHECK(tolhurst_bound(stats, 180.0) == 1.0);
  CHECK(tolhurst_bound(stats, 180.0 + stats.q_n) == 1.0);
}

TEST_CASE("bound approaches Cantelli for large n") {
  SampleStats stats;
  stats.n = 100000;
  stats.mean = 100.0;
  stats.q_n = 10.0;
  const double b = tolhurst_bound(stats, 120.0);
  CHECK(b == doctest::Approx(1.0 / (1.0 + 4.0)).epsilon(1e-3));
  CHECK(b <= 0.2);
}

TEST_CASE("bound edge cases") {
  SampleStats one;
  one.n = 1;
  CHECK_THROWS_WITH_AS(tolhurst_bound(one, 10.0), doctest::Contains("insufficient sample"),
                       Error);
  const auto constant = sample_stats(fixtures::minutes({7, 7, 7}));
  CHECK(tolhurst_bound(constant, 420.0) == 1.0);
  CHECK(tolhurst_bound(constant, 421.0) == 0.0);
}

TEST_CASE("bound matches the hand formula and is monotone") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto xs = random_sample(rng, 2 + trial % 60);
    const auto stats = sample_stats(xs);
    const auto o = oracle::moments(xs);
    double previous = 1.0;
    // Grid kept off lambda = 1 where rounding decides the branch.
    for (int j = 0; j < 200; ++j) {
      const double t = stats.mean + stats.q_n * (j + 0.5) / 7.0;
      const double b = tolhurst_bound(stats, t);
      CHECK(b == doctest::Approx(oracle::bound(xs.size(), o.mean, o.q_n, t)));
      CHECK(b <= previous);
      CHECK(b >= 0.0);
      previous = b;
    }
  }
}

TEST_CASE("bound covers the next exchangeable draw") {
  // For i.i.d. X_1..X_{n+1}, P(X_{n+1} - mean_n >= lambda Q_n) stays below
  // the bound. Checked by Monte Carlo on normal and exponential data.
  std::mt19937_64 rng(77);
  const std::size_t n = 10;
  for (int family = 0; family < 2; ++family) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::exponential_distribution<double> expo(1.0);
    for (double lambda : {1.5, 2.0, 3.0}) {
      const int trials = 20000;
      int hits = 0;
      double bound_value = 0.0;
      for (int i = 0; i < trials; ++i) {
        std::vector<double> xs(n);
        for (auto& x : xs) x = family == 0 ? normal(rng) : expo(rng);
        const double next = family == 0 ? normal(rng) : expo(rng);
        const auto stats = sample_stats(xs);
        bound_value = tolhurst_bound(stats, stats.mean + lambda * stats.q_n);
        if (next - stats.mean >= lambda * stats.q_n) ++hits;
      }
      CHECK(static_cast<double>(hits) / trials <= bound_value + 0.01);
    }
  }
}

TEST_CASE("empirical exceedance and truncated mean") {
  const auto sample = TestSample::from_durations(fixtures::minutes({1, 2, 3, 4, 5}));
  CHECK(empirical_exceedance(sample, 180.0) == doctest::Approx(0.4));
  CHECK(empirical_exceedance(sample, 300.0) == 0.0);  // strict
  CHECK(empirical_exceedance(sample, 30.0) == 1.0);
  CHECK(truncated_mean(sample, 180.0) == doctest::Approx((60 + 120 + 180 * 3) / 5.0));
  CHECK(truncated_mean(sample, 1e9) == doctest::Approx(180.0));
  CHECK_THROWS_AS(empirical_exceedance(TestSample{}, 1.0), Error);
}

TEST_CASE("cost formula") {
  CHECK(rerun_cost(1.55, 0.15, 3.0, 3, 0.0) == doctest::Approx(2.2475));
  CHECK(rerun_cost(1.77, 0.04, 6.0, 3, 0.0) == doctest::Approx(1.9824));
  CHECK(rerun_cost(10.0, 0.0, 20.0, 3, 0.01) == doctest::Approx(10.0 + 0.01 * 20.0 * 4));
  CHECK(rerun_cost(10.0, 0.5, 20.0, 0, 0.0) == 10.0);
}

TEST_CASE("skewed sample has its optimum at six minutes") {
  const auto xs = fixtures::skewed_seconds();
  REQUIRE(xs.size() == 536);
  const auto sample = TestSample::from_durations(xs, "skewed");
  const auto config = empirical_config();
  const CostModel model(sample, config);

  CHECK(model.stats().mean / 60.0 == doctest::Approx(2.12).epsilon(0.005));
  CHECK(model.truncated_mean(180.0) / 60.0 == doctest::Approx(1.55).epsilon(0.005));
  CHECK(model.exceedance(180.0) == doctest::Approx(0.15).epsilon(0.01));
  CHECK(model.cost(180.0) / 60.0 == doctest::Approx(2.244).epsilon(1e-3));
  CHECK(model.truncated_mean(360.0) / 60.0 == doctest::Approx(1.77).epsilon(0.005));
  CHECK(model.exceedance(360.0) == doctest::Approx(0.04).epsilon(0.03));
  CHECK(model.cost(360.0) / 60.0 == doctest::Approx(1.98).epsilon(1e-3));
  // No timeouts from 31 minutes on, at the cost of the full mean.
  CHECK(model.exceedance(30 * 60.0) > 0.0);
  CHECK(model.exceedance(31 * 60.0) == 0.0);
  CHECK(model.cost(31 * 60.0) == doctest::Approx(model.stats().mean));

  const auto result = optimize_timeout(sample, config);
  CHECK(result.optimal_timeout == 6);
  CHECK(result.search_range.lower == 3);
  CHECK(result.search_range.upper == 61);
  CHECK_FALSE(result.fallback_applied);
  CHECK(result.method_used == ProbabilityMethod::empirical_ecdf);
  CHECK(result.expected_cost_at_optimum == doctest::Approx(model.cost(360.0)));

  // The distribution-free bound reacts to the long tail through Q_n and
  // pushes the optimum far out.
  const auto bounded = optimize_timeout(sample, OptimizationConfig{});
  CHECK(bounded.optimal_timeout == 53);
  CHECK(bounded.optimal_timeout ==
        oracle::brute_force_argmin(xs, 60.0, false, 3, 0.0).first);
}

TEST_CASE("constant sample") {
  const auto sample = TestSample::from_durations(std::vector<double>(30, 420.0));
  const auto empirical = optimize_timeout(sample, empirical_config());
  CHECK(empirical.optimal_timeout == 7);
  CHECK(empirical.expected_cost_at_optimum == doctest::Approx(420.0));
  // With Q_n = 0 the bound puts all mass at t <= mean, so 7 costs 4x.
  const auto bounded = optimize_timeout(sample, OptimizationConfig{});
  CHECK(bounded.optimal_timeout == 8);
  CHECK(bounded.timeout_probability_at_optimum == 0.0);
}

TEST_CASE("small samples fall back") {
  auto config = empirical_config();
  const auto few = optimize_timeout(TestSample::from_durations(fixtures::minutes({1, 2, 3})),
                                    config);
  CHECK(few.fallback_applied);
  CHECK(few.optimal_timeout == 120);
  CHECK(few.expected_cost_at_optimum == doctest::Approx(120.0));

  const auto none = optimize_timeout(TestSample{}, OptimizationConfig{});
  CHECK(none.fallback_applied);
  CHECK(none.sample_size == 0);
  CHECK(none.expected_cost_at_optimum == 0.0);

  const auto single = optimize_timeout(TestSample::from_durations({50.0}), OptimizationConfig{});
  CHECK(single.fallback_applied);
  CHECK(single.method_used == ProbabilityMethod::empirical_ecdf);

  config.fallback_timeout = 45;
  CHECK(optimize_timeout(TestSample::from_durations({50.0}), config).optimal_timeout == 45);
}

TEST_CASE("invalid configuration and inputs") {
  OptimizationConfig c;
  c.reruns = -1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.breakage_probability = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.grid_unit_seconds = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  const auto sample = TestSample::from_durations(fixtures::minutes({1, 2, 3}));
  CHECK_THROWS_AS(expected_cost(sample, 0.0, OptimizationConfig{}), Error);
  CHECK_THROWS_AS(expected_cost(TestSample::from_durations({5.0}), 10.0, OptimizationConfig{}),
                  Error);
  CHECK_THROWS_AS(CostModel(TestSample{}, empirical_config()), Error);
}

TEST_CASE("cost model agrees with the naive oracle") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> pick_t(1.0, 4000.0);
  std::uniform_real_distribution<double> pick_pb(0.0, 0.05);
  for (int trial = 0; trial < 150; ++trial) {
    const auto xs = random_sample(rng, 2 + trial % 80);
    const auto sample = TestSample::from_durations(xs);
    for (bool empirical : {true, false}) {
      OptimizationConfig c;
      c.method = empirical ? ProbabilityMethod::empirical_ecdf : ProbabilityMethod::tolhurst_bound;
      c.reruns = trial % 5;
      c.breakage_probability = trial % 3 == 0 ? pick_pb(rng) : 0.0;
      const CostModel model(sample, c);
      for (int i = 0; i < 10; ++i) {
        const double t = pick_t(rng);
        CHECK(model.exceedance(t) == doctest::Approx(oracle::exceedance(xs, t)));
        CHECK(model.truncated_mean(t) == doctest::Approx(oracle::truncated_mean(xs, t)));
        CHECK(model.cost(t) ==
              doctest::Approx(oracle::cost(xs, t, empirical, c.reruns, c.breakage_probability)));
        CHECK(expected_cost(sample, t, c) == doctest::Approx(model.cost(t)));
      }
    }
  }
}

TEST_CASE("optimizer agrees with brute force") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 120; ++trial) {
    const auto xs = random_sample(rng, 30 + trial % 100);
    const auto sample = TestSample::from_durations(xs);
    for (bool empirical : {true, false}) {
      OptimizationConfig c;
      c.method = empirical ? ProbabilityMethod::empirical_ecdf : ProbabilityMethod::tolhurst_bound;
      c.breakage_probability = trial % 4 == 0 ? 0.002 : 0.0;
      const auto result = optimize_timeout(sample, c);
      const auto [t, cost] = oracle::brute_force_argmin(xs, 60.0, empirical, 3,
                                                        c.breakage_probability);
      CHECK(result.optimal_timeout == t);
      CHECK(result.expected_cost_at_optimum == doctest::Approx(cost));
      CHECK(result.optimal_timeout >= result.search_range.lower);
      CHECK(result.optimal_timeout <= result.search_range.upper);
    }
  }
}

TEST_CASE("monotone pieces of the cost") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const auto xs = random_sample(rng, 40);
    const auto sample = TestSample::from_durations(xs);
    auto c = empirical_config();
    c.breakage_probability = 0.01;
    const CostModel model(sample, c);
    const double mean = model.stats().mean;
    double prev_p = 2.0, prev_tm = -1.0, prev_cost = -1.0;
    for (double t = 1.0; t < 3.0 * model.stats().max; t += 17.0) {
      const double p = model.exceedance(t);
      const double tm = model.truncated_mean(t);
      CHECK(p <= prev_p);
      CHECK(tm >= prev_tm);
      CHECK(tm <= mean * (1.0 + 1e-12));
      if (t - 17.0 > model.stats().max) {
        // Past the longest run only the breakage term moves.
        CHECK(model.cost(t) > prev_cost);
      }
      prev_p = p;
      prev_tm = tm;
      prev_cost = model.cost(t);
    }
  }
}

TEST_CASE("optimize_all pools revisions per test") {
  std::vector<ExecutionRecord> records;
  for (int i = 0; i < 40; ++i) {
    records.push_back(fixtures::record("b", i % 2 ? "r1" : "r2", i, 300.0));
    records.push_back(fixtures::record("a", "r1", i, 60.0 * (1 + i % 3)));
  }
  const auto results = optimize_all(ExecutionDataset(records), empirical_config());
  REQUIRE(results.size() == 2);
  CHECK(results[0].test_id == "a");
  CHECK(results[0].sample_size == 40);
  CHECK(results[1].test_id == "b");
  CHECK(results[1].optimal_timeout == 5);
  CHECK_FALSE(results[1].fallback_applied);
}

TEST_CASE("static sweep") {
  const ExecutionDataset fleet(fixtures::sweep_fleet());
  const auto sweep = static_sweep(fleet, {75, 180}, OptimizationConfig{});
  CHECK(sweep.argmin == 115);
  CHECK(sweep.curve.points.size() == 106);
  CHECK(sweep.curve.points.front().timeout == 75);
  CHECK(sweep.local_minima == std::vector<int>{115});

  // Average of per-test empirical costs, recomputed naively.
  const auto a = fleet.test_sample("A").durations;
  const auto b = fleet.test_sample("B").durations;
  for (const auto& p : sweep.curve.points) {
    const double t = p.timeout * 60.0;
    const double expected = (oracle::cost(a, t, true, 3, 0.0) + oracle::cost(b, t, true, 3, 0.0)) / 2;
    CHECK(p.average_cost == doctest::Approx(expected));
  }
}

TEST_CASE("sweep of a short constant test is flat") {
  std::vector<ExecutionRecord> records;
  for (int i = 0; i < 30; ++i) records.push_back(fixtures::record("a", "r", i, 600.0));
  const auto sweep = static_sweep(ExecutionDataset(records), {75, 180}, OptimizationConfig{});
  CHECK(sweep.argmin == 75);
  CHECK(sweep.min_cost == doctest::Approx(600.0));
  CHECK(sweep.local_minima.empty());
  for (const auto& p : sweep.curve.points) CHECK(p.average_cost == doctest::Approx(600.0));
}

TEST_CASE("sweep argument errors") {
  const ExecutionDataset fleet(fixtures::sweep_fleet());
  CHECK_THROWS_AS(static_sweep(fleet, {180, 75}, OptimizationConfig{}), Error);
  CHECK_THROWS_AS(static_sweep(fleet, {10, 10}, OptimizationConfig{}), Error);
  CHECK_THROWS_AS(static_sweep(fleet, {0, 10}, OptimizationConfig{}), Error);
  CHECK_THROWS_AS(static_sweep(ExecutionDataset{}, {1, 10}, OptimizationConfig{}), Error);
}

}  // TEST_SUITE
