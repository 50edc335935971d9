#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcaps/layers.hpp"

namespace gridcaps {

/// Common surface of the capsule network and the baselines.
template <class T>
class Classifier {
 public:
  virtual ~Classifier() = default;
  /// x is [N, n_gen, T, 2].
  virtual Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) = 0;
  virtual void backward(const Tensor<T>& g_out) = 0;
  /// [N, Q] per-class scores; prediction is the row argmax.
  virtual Tensor<T> class_scores(const Tensor<T>& out) const = 0;
  /// Mean loss over the batch, with d loss / d out when grad is non-null.
  virtual double loss(const Tensor<T>& out, const std::vector<int>& labels, Tensor<T>* grad) const = 0;
  virtual std::vector<Param<T>*> params() = 0;
  virtual std::string kind() const = 0;
  /// Everything needed to rebuild the architecture (stored in checkpoints).
  virtual nlohmann::json architecture() const = 0;
  virtual int n_classes() const = 0;
};

/// capsnet | mlp | cnn1d | cnn2d
std::vector<std::string> model_kinds();

/// Rebuilds a model from its architecture description with seeded init.
template <class T>
std::unique_ptr<Classifier<T>> make_model(const nlohmann::json& architecture, std::uint64_t seed);

/// Architecture for a case-level model of the given kind.
nlohmann::json default_architecture(const std::string& kind, const std::string& case_name,
                                    int n_gen, int t_len, int n_classes);

/// Argmax with ties going to the lowest index.
template <class T>
int argmax_lowest(const T* scores, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

}  // namespace gridcaps
