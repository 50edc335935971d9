#pragma once

#include <cstdint>
#include <string>

#include "gridcaps/layers.hpp"
#include "gridcaps/model.hpp"

namespace gridcaps {

/// Softmax classifiers used for comparison:
///   mlp   flatten -> 512 -> 256 -> Q
///   cnn1d per-bus conv (64, 1x10, stride 1x2) x2 -> 128 -> Q
///   cnn2d conv 64 (2x10) -> pool 1x2 -> conv 128 (2x5) -> pool 1x2 -> 256 -> Q
/// ReLU activations and dropout 0.1 after each hidden block.
template <class T>
class BaselineNet : public Classifier<T> {
 public:
  BaselineNet(std::string kind, int n_gen, int t_len, int n_classes, std::uint64_t seed,
              double dropout = 0.1);

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override;
  void backward(const Tensor<T>& g_out) override { net_.backward(g_out); }
  Tensor<T> class_scores(const Tensor<T>& out) const override { return softmax(out); }
  double loss(const Tensor<T>& out, const std::vector<int>& labels, Tensor<T>* grad) const override {
    return softmax_cross_entropy(out, labels, grad);
  }
  std::vector<Param<T>*> params() override { return net_.params(); }
  std::string kind() const override { return kind_; }
  nlohmann::json architecture() const override;
  int n_classes() const override { return n_classes_; }

 private:
  std::string kind_;
  int n_gen_, t_len_, n_classes_;
  double dropout_;
  Sequential<T> net_;
};

}  // namespace gridcaps
