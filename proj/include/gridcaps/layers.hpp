#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gridcaps/rng.hpp"
#include "gridcaps/tensor.hpp"

namespace gridcaps {

struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;  // dropout masks; required when training
};

/// A differentiable layer. forward caches what backward needs, so one
/// instance serves one forward/backward pair at a time.
template <class T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) = 0;
  /// Accumulates parameter gradients and returns the input gradient.
  virtual Tensor<T> backward(const Tensor<T>& gy) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
  virtual std::string kind() const = 0;
};

/// Gaussian N(0, std^2) fill, std = sqrt(2 / fan_in) unless given.
template <class T>
void init_gaussian(Tensor<T>& t, Rng& rng, double std);

/// Valid cross-correlation over NHWC input with HWIO kernels.
template <class T>
class Conv2D : public Layer<T> {
 public:
  Conv2D(std::string name, int c_in, int c_out, int kh, int kw, int sh, int sw, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override;
  Tensor<T> backward(const Tensor<T>& gy) override;
  std::vector<Param<T>*> params() override { return {&kernel_, &bias_}; }
  std::string kind() const override { return "conv2d"; }

  /// Output (H', W'); throws StructuralError when either is non-positive.
  std::pair<int, int> output_hw(int h, int w) const;
  Param<T>& kernel() { return kernel_; }
  Param<T>& bias() { return bias_; }

 private:
  int c_in_, c_out_, kh_, kw_, sh_, sw_;
  Param<T> kernel_;  // kh x kw x c_in x c_out
  Param<T> bias_;    // c_out
  std::vector<int> in_shape_;
  std::vector<T> cols_;
  int ho_ = 0, wo_ = 0;
};

/// Affine map over the flattened per-item input.
template <class T>
class Dense : public Layer<T> {
 public:
  Dense(std::string name, int n_in, int n_out, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override;
  Tensor<T> backward(const Tensor<T>& gy) override;
  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }
  std::string kind() const override { return "dense"; }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

 private:
  int n_in_, n_out_;
  Param<T> weight_;  // n_in x n_out
  Param<T> bias_;
  Tensor<T> x_;
};

template <class T>
class ReLU : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override;
  Tensor<T> backward(const Tensor<T>& gy) override;
  std::string kind() const override { return "relu"; }

 private:
  Tensor<T> y_;
};

/// Inverted dropout: kept units are scaled by 1/(1 - rate) in training,
/// identity at inference.
template <class T>
class Dropout : public Layer<T> {
 public:
  explicit Dropout(double rate);
  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override;
  Tensor<T> backward(const Tensor<T>& gy) override;
  std::string kind() const override { return "dropout"; }
  double rate() const { return rate_; }

 private:
  double rate_;
  std::vector<T> mask_;
  bool active_ = false;
};

/// Non-overlapping max pooling over (H, W) windows of size (ph, pw).
template <class T>
class MaxPool2D : public Layer<T> {
 public:
  MaxPool2D(int ph, int pw);
  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override;
  Tensor<T> backward(const Tensor<T>& gy) override;
  std::string kind() const override { return "maxpool2d"; }

 private:
  int ph_, pw_;
  std::vector<int> in_shape_;
  std::vector<std::size_t> argmax_;
};

/// [N, ...] -> [N, prod(...)].
template <class T>
class Flatten : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override;
  Tensor<T> backward(const Tensor<T>& gy) override;
  std::string kind() const override { return "flatten"; }

 private:
  std::vector<int> in_shape_;
};

template <class T>
class Sequential : public Layer<T> {
 public:
  template <class L, class... Args>
  L& add(Args&&... args) {
    auto p = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *p;
    layers_.push_back(std::move(p));
    return ref;
  }
  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override;
  Tensor<T> backward(const Tensor<T>& gy) override;
  std::vector<Param<T>*> params() override;
  std::string kind() const override { return "sequential"; }
  std::size_t size() const { return layers_.size(); }
  Layer<T>& at(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// Row-wise softmax of an [N, Q] tensor (max-subtracted).
template <class T>
Tensor<T> softmax(const Tensor<T>& logits);

/// Mean softmax cross-entropy over the batch; fills d loss / d logits.
template <class T>
double softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels,
                             Tensor<T>* grad);

std::size_t param_count(const std::vector<Param<float>*>& params);

}  // namespace gridcaps
