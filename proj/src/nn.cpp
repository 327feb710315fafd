#include "rc/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

namespace rc {
namespace {

using MatR = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw InvalidInput(std::string(what) + ": expected rank " + std::to_string(rank) + " input, got " +
                       shape_string(t.shape()));
  }
}

void init_uniform(Tensor& t, real bound, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
  for (auto& v : t.data()) v = static_cast<real>(dist(gen));
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel)
    : weight({out_channels, in_channels, kernel, kernel}), bias({out_channels}),
      in_(in_channels), out_(out_channels), k_(kernel) {}

Tensor Conv2d::forward(const Tensor& x, Cache* cache) const {
  require_rank(x, 4, "conv2d");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (C != in_ || H < k_ || W < k_) {
    throw InvalidInput("conv2d: expected [B x " + std::to_string(in_) + " x >=" + std::to_string(k_) +
                       " x >=" + std::to_string(k_) + "], got " + shape_string(x.shape()));
  }
  const std::size_t Ho = H - k_ + 1, Wo = W - k_ + 1, plane = Ho * Wo;
  const std::size_t rows = C * k_ * k_, ncols = B * plane;

  Tensor columns({rows, ncols});
  real* col = columns.ptr();
  const real* src = x.ptr();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < k_; ++ki) {
      for (std::size_t kj = 0; kj < k_; ++kj) {
        real* dst_row = col + ((c * k_ + ki) * k_ + kj) * ncols;
        for (std::size_t b = 0; b < B; ++b) {
          const real* img = src + (b * C + c) * H * W;
          real* dst = dst_row + b * plane;
          for (std::size_t oh = 0; oh < Ho; ++oh) {
            std::memcpy(dst + oh * Wo, img + (oh + ki) * W + kj, Wo * sizeof(real));
          }
        }
      }
    }
  }

  MatR y(out_, ncols);
  y.noalias() = CMapR(weight.ptr(), out_, rows) * CMapR(columns.ptr(), rows, ncols);

  Tensor out({B, out_, Ho, Wo});
  real* o = out.ptr();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t oc = 0; oc < out_; ++oc) {
      const real* yrow = y.data() + oc * ncols + b * plane;
      real* dst = o + (b * out_ + oc) * plane;
      const real bv = bias[oc];
      for (std::size_t p = 0; p < plane; ++p) dst[p] = yrow[p] + bv;
    }
  }
  if (cache) {
    cache->columns = std::move(columns);
    cache->input_shape = x.shape();
  }
  return out;
}

Tensor Conv2d::backward(const Cache& cache, const Tensor& grad_out, bool need_input_grad) {
  const std::size_t B = cache.input_shape[0], C = in_, H = cache.input_shape[2], W = cache.input_shape[3];
  const std::size_t Ho = H - k_ + 1, Wo = W - k_ + 1, plane = Ho * Wo;
  const std::size_t rows = C * k_ * k_, ncols = B * plane;
  if (grad_out.shape() != Shape{B, out_, Ho, Wo}) {
    throw InvalidInput("conv2d backward: gradient shape " + shape_string(grad_out.shape()) +
                       " does not match output shape");
  }

  MatR g(out_, ncols);
  const real* go = grad_out.ptr();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t oc = 0; oc < out_; ++oc) {
      std::memcpy(g.data() + oc * ncols + b * plane, go + (b * out_ + oc) * plane, plane * sizeof(real));
    }
  }

  weight.enable_grad();
  bias.enable_grad();
  CMapR cols(cache.columns.ptr(), rows, ncols);
  MapR(weight.grad().data(), out_, rows).noalias() += g * cols.transpose();
  Eigen::Map<Eigen::Matrix<real, Eigen::Dynamic, 1>>(bias.grad().data(), out_) += g.rowwise().sum();

  if (!need_input_grad) return {};

  MatR dcols(rows, ncols);
  dcols.noalias() = CMapR(weight.ptr(), out_, rows).transpose() * g;
  Tensor gx(cache.input_shape);
  real* dx = gx.ptr();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < k_; ++ki) {
      for (std::size_t kj = 0; kj < k_; ++kj) {
        const real* src_row = dcols.data() + ((c * k_ + ki) * k_ + kj) * ncols;
        for (std::size_t b = 0; b < B; ++b) {
          real* img = dx + (b * C + c) * H * W;
          const real* src = src_row + b * plane;
          for (std::size_t oh = 0; oh < Ho; ++oh) {
            real* dst = img + (oh + ki) * W + kj;
            const real* s = src + oh * Wo;
            for (std::size_t ow = 0; ow < Wo; ++ow) dst[ow] += s[ow];
          }
        }
      }
    }
  }
  return gx;
}

// ------------------------------------------------------------- MaxPool2d

Tensor MaxPool2d::forward(const Tensor& x, Cache* cache) const {
  require_rank(x, 4, "maxpool2d");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Ho = H / 2, Wo = W / 2;
  if (Ho == 0 || Wo == 0) throw InvalidInput("maxpool2d: input too small " + shape_string(x.shape()));
  Tensor out({B, C, Ho, Wo});
  std::vector<std::uint32_t> argmax(out.size());
  const real* in = x.ptr();
  real* o = out.ptr();
  std::size_t idx = 0;
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const std::size_t base = bc * H * W;
    for (std::size_t i = 0; i < Ho; ++i) {
      for (std::size_t j = 0; j < Wo; ++j, ++idx) {
        std::size_t best = base + (2 * i) * W + 2 * j;
        for (std::size_t di = 0; di < 2; ++di) {
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t cand = base + (2 * i + di) * W + 2 * j + dj;
            if (in[cand] > in[best]) best = cand;
          }
        }
        o[idx] = in[best];
        argmax[idx] = static_cast<std::uint32_t>(best);
      }
    }
  }
  if (cache) {
    cache->argmax = std::move(argmax);
    cache->input_shape = x.shape();
  }
  return out;
}

Tensor MaxPool2d::backward(const Cache& cache, const Tensor& grad_out) const {
  if (grad_out.size() != cache.argmax.size()) throw InvalidInput("maxpool2d backward: gradient size mismatch");
  Tensor gx(cache.input_shape);
  for (std::size_t i = 0; i < cache.argmax.size(); ++i) gx[cache.argmax[i]] += grad_out[i];
  return gx;
}

// ------------------------------------------------------------------ Relu

Tensor Relu::forward(const Tensor& x, Cache* cache) const {
  Tensor out(x.shape());
  if (cache) cache->mask.assign(x.size(), 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool on = x[i] > real{0};
    out[i] = on ? x[i] : real{0};
    if (cache) cache->mask[i] = on;
  }
  return out;
}

Tensor Relu::backward(const Cache& cache, const Tensor& grad_out) const {
  if (grad_out.size() != cache.mask.size()) throw InvalidInput("relu backward: gradient size mismatch");
  Tensor gx(grad_out.shape());
  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = cache.mask[i] ? grad_out[i] : real{0};
  return gx;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::size_t in_features, std::size_t out_features)
    : weight({out_features, in_features}), bias({out_features}), in_(in_features), out_(out_features) {}

Tensor Linear::forward(const Tensor& x, Cache* cache) const {
  require_rank(x, 2, "linear");
  if (x.dim(1) != in_) {
    throw InvalidInput("linear: expected [B x " + std::to_string(in_) + "], got " + shape_string(x.shape()));
  }
  const std::size_t B = x.dim(0);
  Tensor out({B, out_});
  MapR y(out.ptr(), B, out_);
  y.noalias() = CMapR(x.ptr(), B, in_) * CMapR(weight.ptr(), out_, in_).transpose();
  y.rowwise() += Eigen::Map<const Eigen::Matrix<real, 1, Eigen::Dynamic>>(bias.ptr(), out_);
  if (cache) cache->input = x;
  return out;
}

Tensor Linear::backward(const Cache& cache, const Tensor& grad_out, bool need_input_grad) {
  const std::size_t B = cache.input.dim(0);
  if (grad_out.shape() != Shape{B, out_}) {
    throw InvalidInput("linear backward: gradient shape " + shape_string(grad_out.shape()) + " mismatch");
  }
  CMapR g(grad_out.ptr(), B, out_);
  weight.enable_grad();
  bias.enable_grad();
  MapR(weight.grad().data(), out_, in_).noalias() += g.transpose() * CMapR(cache.input.ptr(), B, in_);
  Eigen::Map<Eigen::Matrix<real, 1, Eigen::Dynamic>>(bias.grad().data(), out_) += g.colwise().sum();
  if (!need_input_grad) return {};
  Tensor gx({B, in_});
  MapR(gx.ptr(), B, in_).noalias() = g * CMapR(weight.ptr(), out_, in_);
  return gx;
}

// ------------------------------------------------------- softmax / loss

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 2, "softmax");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t b = 0; b < B; ++b) {
    const real* z = logits.ptr() + b * K;
    real* p = out.ptr() + b * K;
    const real m = *std::max_element(z, z + K);
    real sum = 0;
    for (std::size_t k = 0; k < K; ++k) {
      p[k] = std::exp(z[k] - m);
      sum += p[k];
    }
    for (std::size_t k = 0; k < K; ++k) p[k] /= sum;
  }
  return out;
}

CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross entropy");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  if (labels.size() != B) {
    throw InvalidInput("cross entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                       std::to_string(B));
  }
  for (std::size_t b = 0; b < B; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= K) {
      throw InvalidInput("cross entropy: label " + std::to_string(labels[b]) + " outside [0, " +
                         std::to_string(K) + ")");
    }
  }
  CrossEntropy result;
  result.grad_logits = Tensor(logits.shape());
  double total = 0;
  const real inv_b = real{1} / static_cast<real>(B);
  for (std::size_t b = 0; b < B; ++b) {
    const real* z = logits.ptr() + b * K;
    real* g = result.grad_logits.ptr() + b * K;
    const real m = *std::max_element(z, z + K);
    real sum = 0;
    for (std::size_t k = 0; k < K; ++k) sum += std::exp(z[k] - m);
    const real log_sum = std::log(sum);
    const auto y = static_cast<std::size_t>(labels[b]);
    total += static_cast<double>(m + log_sum - z[y]);
    for (std::size_t k = 0; k < K; ++k) g[k] = std::exp(z[k] - m - log_sum) * inv_b;
    g[y] -= inv_b;
  }
  result.loss = static_cast<real>(total / static_cast<double>(B));
  return result;
}

// -------------------------------------------------------------- SmallCnn

struct SmallCnn::Trace {
  Conv2d::Cache c1, c2;
  Relu::Cache r1, r2, r3, r4, r5;
  MaxPool2d::Cache p1, p2;
  Linear::Cache f1, f2, f3, h;
  Shape pooled_shape;
};

SmallCnn::SmallCnn(CnnConfig config, std::uint64_t seed) : config_(config) {
  if (config_.height < 16 || config_.width < 16) {
    throw ConfigError("SmallCnn needs inputs of at least 16x16, got " + std::to_string(config_.height) + "x" +
                      std::to_string(config_.width));
  }
  if (config_.num_classes == 0 || config_.channels == 0) throw ConfigError("SmallCnn: zero classes or channels");
  const std::size_t h2 = ((config_.height - 4) / 2 - 4) / 2;
  const std::size_t w2 = ((config_.width - 4) / 2 - 4) / 2;
  conv1 = Conv2d(config_.channels, 6, 5);
  conv2 = Conv2d(6, 16, 5);
  fc1 = Linear(16 * h2 * w2, 400);
  fc2 = Linear(400, 120);
  fc3 = Linear(120, kFeatureDim);
  head = Linear(kFeatureDim, config_.num_classes);

  std::uint64_t index = 0;
  auto init_layer = [&](Tensor& w, Tensor& b, std::size_t fan_in) {
    const double f = static_cast<double>(fan_in);
    init_uniform(w, static_cast<real>(std::sqrt(6.0 / f)), derive_seed(seed, seed_tag::init, index++));
    init_uniform(b, static_cast<real>(1.0 / std::sqrt(f)), derive_seed(seed, seed_tag::init, index++));
  };
  init_layer(conv1.weight, conv1.bias, config_.channels * 25);
  init_layer(conv2.weight, conv2.bias, 6 * 25);
  init_layer(fc1.weight, fc1.bias, fc1.in_features());
  init_layer(fc2.weight, fc2.bias, fc2.in_features());
  init_layer(fc3.weight, fc3.bias, fc3.in_features());
  init_layer(head.weight, head.bias, head.in_features());
}

void SmallCnn::check_input(const Tensor& batch) const {
  const Shape& s = batch.shape();
  if (s.size() != 4 || s[0] == 0 || s[1] != config_.channels || s[2] != config_.height || s[3] != config_.width) {
    throw InvalidInput("SmallCnn: expected input [B x " + std::to_string(config_.channels) + " x " +
                       std::to_string(config_.height) + " x " + std::to_string(config_.width) + "] with B >= 1, got " +
                       shape_string(s));
  }
}

Tensor SmallCnn::run(const Tensor& batch, Trace* t, bool stop_at_features) const {
  check_input(batch);
  Relu relu;
  MaxPool2d pool;
  Tensor x = conv1.forward(batch, t ? &t->c1 : nullptr);
  x = relu.forward(x, t ? &t->r1 : nullptr);
  x = pool.forward(x, t ? &t->p1 : nullptr);
  x = conv2.forward(x, t ? &t->c2 : nullptr);
  x = relu.forward(x, t ? &t->r2 : nullptr);
  x = pool.forward(x, t ? &t->p2 : nullptr);
  if (t) t->pooled_shape = x.shape();
  x.reshape({x.dim(0), x.size() / x.dim(0)});
  x = relu.forward(fc1.forward(x, t ? &t->f1 : nullptr), t ? &t->r3 : nullptr);
  x = relu.forward(fc2.forward(x, t ? &t->f2 : nullptr), t ? &t->r4 : nullptr);
  x = relu.forward(fc3.forward(x, t ? &t->f3 : nullptr), t ? &t->r5 : nullptr);
  if (stop_at_features) return x;
  return head.forward(x, t ? &t->h : nullptr);
}

Tensor SmallCnn::forward(const Tensor& batch) const { return run(batch, nullptr, false); }

Tensor SmallCnn::features(const Tensor& batch) const { return run(batch, nullptr, true); }

real SmallCnn::loss_and_grads(const Tensor& batch, std::span<const int> labels) {
  for (auto& p : parameters()) {
    p.tensor->enable_grad();
    p.tensor->zero_grad();
  }
  Trace t;
  Tensor logits = run(batch, &t, false);
  CrossEntropy ce = softmax_cross_entropy(logits, labels);

  Relu relu;
  MaxPool2d pool;
  Tensor g = head.backward(t.h, ce.grad_logits);
  g = fc3.backward(t.f3, relu.backward(t.r5, g));
  g = fc2.backward(t.f2, relu.backward(t.r4, g));
  g = fc1.backward(t.f1, relu.backward(t.r3, g));
  g.reshape(t.pooled_shape);
  g = relu.backward(t.r2, pool.backward(t.p2, g));
  g = conv2.backward(t.c2, g);
  g = relu.backward(t.r1, pool.backward(t.p1, g));
  conv1.backward(t.c1, g, /*need_input_grad=*/false);
  return ce.loss;
}

std::vector<NamedParam> SmallCnn::parameters() {
  return {{"conv1.weight", &conv1.weight}, {"conv1.bias", &conv1.bias}, {"conv2.weight", &conv2.weight},
          {"conv2.bias", &conv2.bias},     {"fc1.weight", &fc1.weight},     {"fc1.bias", &fc1.bias},
          {"fc2.weight", &fc2.weight},     {"fc2.bias", &fc2.bias},         {"fc3.weight", &fc3.weight},
          {"fc3.bias", &fc3.bias},         {"head.weight", &head.weight},   {"head.bias", &head.bias}};
}

std::vector<std::pair<std::string, const Tensor*>> SmallCnn::parameters() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& p : const_cast<SmallCnn*>(this)->parameters()) out.emplace_back(p.name, p.tensor);
  return out;
}

std::size_t SmallCnn::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : parameters()) n += t->size();
  return n;
}

// ------------------------------------------------------------------- SGD

void SgdConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must lie in [0, 1)");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
}

SgdMomentum::SgdMomentum(SgdConfig config) : config_(config) { config_.validate(); }

void SgdMomentum::step(std::span<const NamedParam> params) {
  for (const auto& p : params) {
    for (real g : p.tensor->grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + p.name);
    }
  }
  if (velocity_.size() != params.size()) {
    velocity_.clear();
    for (const auto& p : params) velocity_.emplace_back(p.tensor->size(), real{0});
  }
  const real lr = config_.learning_rate, mu = config_.momentum;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto data = params[i].tensor->data();
    auto grad = params[i].tensor->grad();
    auto& v = velocity_[i];
    if (v.size() != data.size()) throw ConsistencyError("velocity size mismatch for " + params[i].name);
    bool finite = true;
    for (std::size_t j = 0; j < data.size(); ++j) {
      v[j] = mu * v[j] + grad[j];
      data[j] -= lr * v[j];
      finite = finite && std::isfinite(data[j]);
    }
    if (!finite) throw NumericError("parameter " + params[i].name + " became non-finite after update");
  }
}

void sgd_step(SmallCnn& model, SgdMomentum& optimizer) {
  auto params = model.parameters();
  optimizer.step(params);
}

}  // namespace rc
