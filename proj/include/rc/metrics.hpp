#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rc/common.hpp"

namespace rc {

enum class ForgettingMode { relative, absolute };

ForgettingMode parse_forgetting(const std::string& s);
std::string to_string(ForgettingMode m);

/// Lower-triangular accuracy table. Row t holds the accuracy on each task
/// i <= t measured after training task t. Tasks are 0-based here; row 0 is
/// the model after the first task.
class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;

  /// Append the row for the next task from per-task (correct, total) counts.
  void add_row(const std::vector<std::size_t>& correct, const std::vector<std::size_t>& total);

  std::size_t tasks() const { return correct_.size(); }
  /// Percent accuracy on task i after task t.
  double at(std::size_t t, std::size_t i) const;
  std::size_t correct(std::size_t t, std::size_t i) const;
  std::size_t total(std::size_t t, std::size_t i) const;

  /// Build from percentages with a nominal 100 test instances per task;
  /// for tests and worked examples.
  static AccuracyMatrix from_percent(const std::vector<std::vector<double>>& rows);

 private:
  std::vector<std::vector<std::size_t>> correct_, total_;
  std::vector<std::vector<double>> percent_;
};

/// F_t for the first task's classes. Relative: 100 (A[0][0] - A[t][0]) / A[0][0].
/// Absolute: A[0][0] - A[t][0]. Throws MetricError when A[0][0] == 0.
double forgetfulness(const AccuracyMatrix& a, std::size_t t, ForgettingMode mode = ForgettingMode::relative);

/// Pooled accuracy (percent) over the test instances of tasks 0..t.
double avg_accuracy(const AccuracyMatrix& a, std::size_t t);

/// Per-task metrics for one run.
struct RunMetrics {
  std::vector<double> forget_rel;
  std::vector<double> forget_abs;
  std::vector<double> avg_accu;

  static RunMetrics from(const AccuracyMatrix& a);
  double mean_forget(ForgettingMode mode = ForgettingMode::relative) const;
  double mean_avg_accu() const;
};

struct Aggregate {
  double mean_forget_rel = 0;
  double mean_forget_abs = 0;
  double mean_avg_accu = 0;
  std::size_t n_runs = 0;
  std::vector<double> per_run_forget_rel, per_run_forget_abs, per_run_avg_accu;
};

/// Unweighted mean over tasks (F_1 = 0 included), then over runs. Throws
/// AggregationError if runs differ in task count or the list is empty.
Aggregate aggregate(const std::vector<RunMetrics>& runs);

}  // namespace rc
