#include "rc/metrics.hpp"

#include <cmath>
#include <numeric>

namespace rc {

ForgettingMode parse_forgetting(const std::string& s) {
  if (s == "relative") return ForgettingMode::relative;
  if (s == "absolute") return ForgettingMode::absolute;
  throw ConfigError("unknown forgetting mode '" + s + "' (expected relative or absolute)");
}

std::string to_string(ForgettingMode m) { return m == ForgettingMode::relative ? "relative" : "absolute"; }

void AccuracyMatrix::add_row(const std::vector<std::size_t>& correct, const std::vector<std::size_t>& total) {
  const std::size_t t = correct_.size();
  if (correct.size() != t + 1 || total.size() != t + 1) {
    throw InvalidInput("accuracy row " + std::to_string(t) + " must cover exactly " + std::to_string(t + 1) + " tasks");
  }
  std::vector<double> pct;
  for (std::size_t i = 0; i <= t; ++i) {
    if (correct[i] > total[i]) throw InvalidInput("accuracy row has more correct than total instances");
    pct.push_back(total[i] ? 100.0 * static_cast<double>(correct[i]) / static_cast<double>(total[i]) : 0.0);
  }
  correct_.push_back(correct);
  total_.push_back(total);
  percent_.push_back(std::move(pct));
}

double AccuracyMatrix::at(std::size_t t, std::size_t i) const {
  if (t >= percent_.size() || i > t) throw InvalidInput("accuracy entry (" + std::to_string(t) + "," + std::to_string(i) + ") undefined");
  return percent_[t][i];
}

std::size_t AccuracyMatrix::correct(std::size_t t, std::size_t i) const {
  at(t, i);
  return correct_[t][i];
}

std::size_t AccuracyMatrix::total(std::size_t t, std::size_t i) const {
  at(t, i);
  return total_[t][i];
}

AccuracyMatrix AccuracyMatrix::from_percent(const std::vector<std::vector<double>>& rows) {
  AccuracyMatrix a;
  for (const auto& row : rows) {
    std::vector<std::size_t> c, n;
    for (double v : row) {
      if (!(v >= 0 && v <= 100)) throw InvalidInput("accuracy must lie in [0, 100]");
      c.push_back(static_cast<std::size_t>(std::llround(v)));
      n.push_back(100);
    }
    a.add_row(c, n);
    a.percent_.back() = row;
  }
  return a;
}

double forgetfulness(const AccuracyMatrix& a, std::size_t t, ForgettingMode mode) {
  const double first = a.at(0, 0);
  const double now = a.at(t, 0);
  if (mode == ForgettingMode::absolute) return t == 0 ? 0.0 : first - now;
  if (first == 0) throw MetricError("forgetfulness undefined: first-task accuracy after task 1 is 0");
  if (t == 0) return 0.0;
  return 100.0 * (first - now) / first;
}

double avg_accuracy(const AccuracyMatrix& a, std::size_t t) {
  if (t == 0) return a.at(0, 0);
  // Instance-weighted pooling of the per-task percentages.
  double weighted = 0, n = 0;
  for (std::size_t i = 0; i <= t; ++i) {
    const auto w = static_cast<double>(a.total(t, i));
    weighted += a.at(t, i) * w;
    n += w;
  }
  return n == 0 ? 0.0 : weighted / n;
}

RunMetrics RunMetrics::from(const AccuracyMatrix& a) {
  RunMetrics m;
  for (std::size_t t = 0; t < a.tasks(); ++t) {
    m.forget_rel.push_back(forgetfulness(a, t, ForgettingMode::relative));
    m.forget_abs.push_back(forgetfulness(a, t, ForgettingMode::absolute));
    m.avg_accu.push_back(avg_accuracy(a, t));
  }
  return m;
}

namespace {
double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}
}  // namespace

double RunMetrics::mean_forget(ForgettingMode mode) const {
  return mean(mode == ForgettingMode::relative ? forget_rel : forget_abs);
}

double RunMetrics::mean_avg_accu() const { return mean(avg_accu); }

Aggregate aggregate(const std::vector<RunMetrics>& runs) {
  if (runs.empty()) throw AggregationError("no runs to aggregate");
  const std::size_t T = runs.front().avg_accu.size();
  Aggregate agg;
  for (const auto& r : runs) {
    if (r.avg_accu.size() != T || r.forget_rel.size() != T || r.forget_abs.size() != T) {
      throw AggregationError("runs disagree on task count (" + std::to_string(T) + " vs " +
                             std::to_string(r.avg_accu.size()) + ")");
    }
    agg.per_run_forget_rel.push_back(r.mean_forget(ForgettingMode::relative));
    agg.per_run_forget_abs.push_back(r.mean_forget(ForgettingMode::absolute));
    agg.per_run_avg_accu.push_back(r.mean_avg_accu());
  }
  agg.n_runs = runs.size();
  agg.mean_forget_rel = mean(agg.per_run_forget_rel);
  agg.mean_forget_abs = mean(agg.per_run_forget_abs);
  agg.mean_avg_accu = mean(agg.per_run_avg_accu);
  return agg;
}

}  // namespace rc
