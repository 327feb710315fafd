#pragma once

// Reference implementations used by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "rc/metrics.hpp"
#include "rc/nn.hpp"
#include "rc/replay.hpp"

namespace rc::oracle {

inline constexpr double kFdStep = 1e-3;

inline double rel_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  if (scale < 1e-10) return std::abs(a - b) < 1e-10 ? 0.0 : 1.0;
  return std::abs(a - b) / scale;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = static_cast<real>(u(rng));
  return t;
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

template <typename F>
double central_diff(Tensor& t, std::size_t i, F&& f) {
  const real saved = t[i];
  t[i] = static_cast<real>(saved + kFdStep);
  const double up = f();
  t[i] = static_cast<real>(saved - kFdStep);
  const double down = f();
  t[i] = saved;
  return (up - down) / (2 * kFdStep);
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Each fd_* function returns the worst relative error between the analytic
// gradient and a central difference over `trials` random configurations.
// Layer losses are random linear projections of the layer output.

inline double fd_conv(std::mt19937_64& rng, int trials) {
  double worst = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const std::size_t B = pick(rng, 1, 3), C = pick(rng, 1, 3), O = pick(rng, 1, 4), k = pick(rng, 1, 3);
    const std::size_t H = pick(rng, k, k + 4), W = pick(rng, k, k + 4);
    Conv2d conv(C, O, k);
    conv.weight = random_tensor(conv.weight.shape(), rng);
    conv.bias = random_tensor(conv.bias.shape(), rng);
    Tensor x = random_tensor({B, C, H, W}, rng);
    const Tensor proj = random_tensor({B, O, H - k + 1, W - k + 1}, rng);
    auto loss = [&] { return dot(conv.forward(x), proj); };
    Conv2d::Cache cache;
    conv.forward(x, &cache);
    conv.weight.enable_grad();
    conv.bias.enable_grad();
    conv.weight.zero_grad();
    conv.bias.zero_grad();
    const Tensor gx = conv.backward(cache, proj);
    for (std::size_t i = 0; i < conv.weight.size(); ++i)
      worst = std::max(worst, rel_error(conv.weight.grad()[i], central_diff(conv.weight, i, loss)));
    for (std::size_t i = 0; i < conv.bias.size(); ++i)
      worst = std::max(worst, rel_error(conv.bias.grad()[i], central_diff(conv.bias, i, loss)));
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, rel_error(gx[i], central_diff(x, i, loss)));
  }
  return worst;
}

inline double fd_linear(std::mt19937_64& rng, int trials) {
  double worst = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const std::size_t B = pick(rng, 1, 4), I = pick(rng, 1, 12), O = pick(rng, 1, 9);
    Linear fc(I, O);
    fc.weight = random_tensor(fc.weight.shape(), rng);
    fc.bias = random_tensor(fc.bias.shape(), rng);
    Tensor x = random_tensor({B, I}, rng);
    const Tensor proj = random_tensor({B, O}, rng);
    auto loss = [&] { return dot(fc.forward(x), proj); };
    Linear::Cache cache;
    fc.forward(x, &cache);
    fc.weight.enable_grad();
    fc.bias.enable_grad();
    fc.weight.zero_grad();
    fc.bias.zero_grad();
    const Tensor gx = fc.backward(cache, proj);
    for (std::size_t i = 0; i < fc.weight.size(); ++i)
      worst = std::max(worst, rel_error(fc.weight.grad()[i], central_diff(fc.weight, i, loss)));
    for (std::size_t i = 0; i < fc.bias.size(); ++i)
      worst = std::max(worst, rel_error(fc.bias.grad()[i], central_diff(fc.bias, i, loss)));
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, rel_error(gx[i], central_diff(x, i, loss)));
  }
  return worst;
}

inline double fd_relu(std::mt19937_64& rng, int trials) {
  double worst = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const std::size_t n = pick(rng, 1, 30);
    Tensor x = random_tensor({1, n}, rng);
    // Away from the kink the central difference is exact.
    for (auto& v : x.data()) {
      if (std::abs(v) < 10 * kFdStep) v = v < 0 ? real(-0.1) : real(0.1);
    }
    const Tensor proj = random_tensor({1, n}, rng);
    Relu relu;
    auto loss = [&] { return dot(relu.forward(x), proj); };
    Relu::Cache cache;
    relu.forward(x, &cache);
    const Tensor gx = relu.backward(cache, proj);
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, rel_error(gx[i], central_diff(x, i, loss)));
  }
  return worst;
}

inline double fd_pool(std::mt19937_64& rng, int trials) {
  double worst = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const std::size_t B = pick(rng, 1, 2), C = pick(rng, 1, 3), H = pick(rng, 2, 7), W = pick(rng, 2, 7);
    // Distinct values spaced well beyond the step so the argmax never flips.
    std::vector<real> vals(B * C * H * W);
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = static_cast<real>(0.01 * static_cast<double>(i));
    std::shuffle(vals.begin(), vals.end(), rng);
    Tensor x({B, C, H, W}, vals);
    const Tensor proj = random_tensor({B, C, H / 2, W / 2}, rng);
    MaxPool2d pool;
    auto loss = [&] { return dot(pool.forward(x), proj); };
    MaxPool2d::Cache cache;
    pool.forward(x, &cache);
    const Tensor gx = pool.backward(cache, proj);
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, rel_error(gx[i], central_diff(x, i, loss)));
  }
  return worst;
}

inline double fd_cross_entropy(std::mt19937_64& rng, int trials) {
  double worst = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const std::size_t B = pick(rng, 1, 5), K = pick(rng, 2, 12);
    Tensor z = random_tensor({B, K}, rng, -3, 3);
    std::vector<int> labels(B);
    for (auto& l : labels) l = static_cast<int>(pick(rng, 0, K - 1));
    auto loss = [&] { return static_cast<double>(softmax_cross_entropy(z, labels).loss); };
    const CrossEntropy ce = softmax_cross_entropy(z, labels);
    for (std::size_t i = 0; i < z.size(); ++i)
      worst = std::max(worst, rel_error(ce.grad_logits[i], central_diff(z, i, loss)));
  }
  return worst;
}

/// raw_i = sum_j ||f_i - f_j|| by double loop.
inline std::vector<double> brute_force_raws(const std::vector<double>& f, std::size_t n, std::size_t dim) {
  std::vector<double> raw(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < dim; ++k) s += (f[i * dim + k] - f[j * dim + k]) * (f[i * dim + k] - f[j * dim + k]);
      raw[i] += std::sqrt(s);
    }
  return raw;
}

/// Empty string if the schedule is exhaustive, alternating (current first)
/// and balanced within one; otherwise a description of the first violation.
inline std::string schedule_violation(const InterleaveSchedule& s, const std::vector<SampleId>& D,
                                      const std::vector<SampleId>& R, std::size_t d) {
  const std::size_t expected_groups = R.empty() ? d : 2 * d;
  if (s.groups.size() != expected_groups) return "group count " + std::to_string(s.groups.size());
  std::multiset<SampleId> cur, rep;
  std::vector<std::size_t> cs, rs;
  for (std::size_t g = 0; g < s.groups.size(); ++g) {
    const bool replay = !R.empty() && g % 2 == 1;
    if ((s.groups[g].kind == ScheduleGroup::Kind::replay) != replay) return "group " + std::to_string(g) + " kind";
    (replay ? rep : cur).insert(s.groups[g].ids.begin(), s.groups[g].ids.end());
    (replay ? rs : cs).push_back(s.groups[g].ids.size());
  }
  if (cur != std::multiset<SampleId>(D.begin(), D.end())) return "current stream not exhaustive";
  if (rep != std::multiset<SampleId>(R.begin(), R.end())) return "replay stream not exhaustive";
  for (const auto* sz : {&cs, &rs}) {
    if (sz->empty()) continue;
    if (*std::max_element(sz->begin(), sz->end()) - *std::min_element(sz->begin(), sz->end()) > 1)
      return "unbalanced groups";
  }
  return {};
}

}  // namespace rc::oracle
