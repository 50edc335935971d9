#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcaps/tensor.hpp"

namespace gridcaps {

struct OptimConfig {
  std::string kind = "adam";  // adam | sgd
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

nlohmann::json to_json(const OptimConfig& c);
OptimConfig optim_from_json(const nlohmann::json& j);

/// Adam (bias-corrected) or plain SGD over a fixed parameter list.
template <class T>
class Optimizer {
 public:
  Optimizer(OptimConfig cfg, std::vector<Param<T>*> params);

  /// Applies one update from the accumulated gradients. Throws TrainingError
  /// naming the batch when a gradient is non-finite.
  void step(std::size_t batch_index = 0);
  void zero_grad();
  long steps() const { return t_; }

 private:
  OptimConfig cfg_;
  std::vector<Param<T>*> params_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace gridcaps
