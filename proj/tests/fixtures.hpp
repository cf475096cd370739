#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "flaketime/model.hpp"

namespace fixtures {

using flaketime::ExecutionRecord;
using flaketime::Verdict;

inline flaketime::Timestamp at(long long seconds) {
  return flaketime::Timestamp{std::chrono::seconds{1700000000 + seconds}};
}

inline ExecutionRecord record(std::string test, std::string revision, long long when,
                              double duration, Verdict verdict = Verdict::pass,
                              bool interrupted = false) {
  ExecutionRecord r;
  r.test_id = std::move(test);
  r.revision_id = std::move(revision);
  r.started_at = at(when);
  r.duration_seconds = duration;
  r.verdict = verdict;
  r.interrupted = interrupted;
  return r;
}

inline std::vector<double> minutes(std::initializer_list<double> values) {
  std::vector<double> out;
  for (double v : values) out.push_back(v * 60.0);
  return out;
}

inline void linspace(std::vector<double>& out, double a, double b, int k) {
  for (int i = 0; i < k; ++i) out.push_back(a + (b - a) * i / (k - 1));
}

// 536 durations (minutes) shaped like a skewed CI test: most runs take
// 0.5-2.1 min, a shoulder around 3-5.5 min and a sparse tail to 30.5 min.
// With m = 3 and empirical probabilities: C(3) = 2.244, C(6) = 1.9779, and
// 6 minutes is the grid optimum.
inline std::vector<double> skewed_minutes() {
  std::vector<double> d;
  linspace(d, 0.5, 2.0912, 456);
  linspace(d, 3.1, 4.06, 47);
  linspace(d, 5.05, 5.55, 12);
  for (double v : {6.2, 6.6, 7.0, 7.5, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0, 14.0,
                   15.0, 16.0, 17.0, 18.0, 19.0, 20.0, 23.0, 24.8, 26.0, 30.5}) {
    d.push_back(v);
  }
  return d;
}

inline std::vector<double> skewed_seconds() {
  auto d = skewed_minutes();
  for (double& v : d) v *= 60.0;
  return d;
}

// Two-test fleet whose static-timeout sweep over [75, 180] minutes bottoms
// out at 115: test A always runs 114.5 min; test B runs 5 min except for
// one 600 min outlier per hundred runs.
inline std::vector<ExecutionRecord> sweep_fleet() {
  std::vector<ExecutionRecord> records;
  long long when = 0;
  for (int i = 0; i < 100; ++i) records.push_back(record("A", "r1", when++, 114.5 * 60));
  for (int i = 0; i < 100; ++i) {
    const bool outlier = i == 37;
    records.push_back(record("B", "r1", when++, (outlier ? 600.0 : 5.0) * 60,
                             outlier ? Verdict::timeout : Verdict::pass));
  }
  return records;
}

// Random records over a handful of tests and revisions.
inline std::vector<ExecutionRecord> random_records(std::uint64_t seed, std::size_t tests,
                                                   std::size_t revisions, std::size_t max_runs) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> runs(1, max_runs);
  std::uniform_real_distribution<double> dur(1.0, 900.0);
  std::uniform_int_distribution<int> verdict(0, 9);
  std::uniform_int_distribution<int> jitter(0, 5);
  std::vector<ExecutionRecord> records;
  for (std::size_t r = 0; r < revisions; ++r) {
    for (std::size_t t = 0; t < tests; ++t) {
      // Per-test failure propensity so that some tests are stable.
      const int threshold = static_cast<int>(t % 4) * 3;
      const std::size_t n = runs(rng);
      for (std::size_t i = 0; i < n; ++i) {
        const int v = verdict(rng);
        Verdict verdict_value = v < threshold ? (v % 2 ? Verdict::timeout : Verdict::fail)
                                              : Verdict::pass;
        records.push_back(record("t" + std::to_string(t), "r" + std::to_string(r),
                                 static_cast<long long>(i) * 10 + jitter(rng), dur(rng),
                                 verdict_value, verdict_value == Verdict::timeout && v == 1));
      }
    }
  }
  std::shuffle(records.begin(), records.end(), rng);
  return records;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("flaketime-test-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path file(const std::string& name) const { return path_ / name; }

  std::filesystem::path write(const std::string& name, const std::string& content) const {
    const auto p = file(name);
    std::ofstream(p, std::ios::binary) << content;
    return p;
  }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fixtures
