#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rc/tensor.hpp"

namespace rc {

/// 2D convolution, stride 1, no padding. Input [B, C, H, W].
class Conv2d {
 public:
  struct Cache {
    Tensor columns;  // [C*k*k, B*Ho*Wo]
    Shape input_shape;
  };

  Conv2d() = default;
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel);

  Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
  /// Accumulates parameter gradients; returns dL/dx unless `need_input_grad` is false.
  Tensor backward(const Cache& cache, const Tensor& grad_out, bool need_input_grad = true);

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  std::size_t kernel() const { return k_; }

  Tensor weight;  // [out, in, k, k]
  Tensor bias;    // [out]

 private:
  std::size_t in_ = 0, out_ = 0, k_ = 0;
};

/// 2x2 max pooling with stride 2. Odd trailing rows/columns are dropped.
class MaxPool2d {
 public:
  struct Cache {
    std::vector<std::uint32_t> argmax;
    Shape input_shape;
  };
  Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
  Tensor backward(const Cache& cache, const Tensor& grad_out) const;
};

class Relu {
 public:
  struct Cache {
    std::vector<std::uint8_t> mask;
  };
  Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
  Tensor backward(const Cache& cache, const Tensor& grad_out) const;
};

/// Fully connected layer: y = x W^T + b with x [B, in].
class Linear {
 public:
  struct Cache {
    Tensor input;
  };

  Linear() = default;
  Linear(std::size_t in_features, std::size_t out_features);

  Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
  Tensor backward(const Cache& cache, const Tensor& grad_out, bool need_input_grad = true);

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

 private:
  std::size_t in_ = 0, out_ = 0;
};

/// Row-wise softmax of [B, K] logits.
Tensor softmax(const Tensor& logits);

struct CrossEntropy {
  real loss = 0;       // mean over the batch
  Tensor grad_logits;  // dL/dlogits, [B, K]
};

/// Mean softmax cross-entropy. Labels must lie in [0, K).
CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

struct NamedParam {
  std::string name;
  Tensor* tensor;
};

struct CnnConfig {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t num_classes = 10;
};

/// conv(6,5x5) -> relu -> pool -> conv(16,5x5) -> relu -> pool -> fc1(400) ->
/// relu -> fc2(120) -> relu -> fc3(84) -> relu -> head(num_classes).
class SmallCnn {
 public:
  static constexpr std::size_t kFeatureDim = 84;

  SmallCnn() = default;
  SmallCnn(CnnConfig config, std::uint64_t seed);

  const CnnConfig& config() const { return config_; }
  std::size_t num_classes() const { return config_.num_classes; }

  /// Logits [B, num_classes]. Does not touch parameters.
  Tensor forward(const Tensor& batch) const;
  /// Penultimate activations (post-ReLU fc3 output), [B, 84].
  Tensor features(const Tensor& batch) const;

  /// Zeroes gradients, runs forward + backward and leaves dL/dp in each
  /// parameter's gradient buffer. Returns the mean loss.
  real loss_and_grads(const Tensor& batch, std::span<const int> labels);

  std::vector<NamedParam> parameters();
  std::vector<std::pair<std::string, const Tensor*>> parameters() const;
  std::size_t parameter_count() const;

  Conv2d conv1, conv2;
  Linear fc1, fc2, fc3, head;

 private:
  struct Trace;
  Tensor run(const Tensor& batch, Trace* trace, bool stop_at_features) const;
  void check_input(const Tensor& batch) const;

  CnnConfig config_;
};

struct SgdConfig {
  real learning_rate = real(0.001);
  real momentum = real(0.9);
  std::size_t batch_size = 32;

  void validate() const;
};

/// Per-parameter momentum buffers.
class SgdMomentum {
 public:
  SgdMomentum() = default;
  explicit SgdMomentum(SgdConfig config);

  /// v <- momentum * v + g;  p <- p - lr * v. Throws NumericError naming the
  /// first parameter with a non-finite gradient, before anything is modified.
  void step(std::span<const NamedParam> params);
  void reset() { velocity_.clear(); }

  const SgdConfig& config() const { return config_; }
  const std::vector<std::vector<real>>& velocity() const { return velocity_; }

 private:
  SgdConfig config_;
  std::vector<std::vector<real>> velocity_;
};

/// One SGD step over every parameter of the model, using its gradient buffers.
void sgd_step(SmallCnn& model, SgdMomentum& optimizer);

}  // namespace rc
