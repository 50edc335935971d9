#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcaps/checkpoint.hpp"
#include "gridcaps/dataset.hpp"
#include "gridcaps/model.hpp"
#include "gridcaps/optim.hpp"

namespace gridcaps {

/// Network input for one window: per channel, the deviation from nominal
/// minus its mean across generators at each time step, divided by the RMS
/// of the result over the whole window (left at zero when flat).
template <class T>
void normalize_window(const PmuWindow& w, T* out);

/// [N, n_gen, T, 2] batch of normalized windows for the given sample indices.
template <class T>
Tensor<T> make_batch(const Dataset& ds, const std::vector<std::size_t>& indices);
template <class T>
Tensor<T> make_batch(const std::vector<const PmuWindow*>& windows);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  int patience = 10;
  OptimConfig optim;
  std::uint64_t seed = 0;
  bool verbose = false;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  double best_val_acc = 0.0;

  /// epoch,train_loss,train_acc,val_loss,val_acc
  std::string to_csv() const;
};

/// Mini-batch training with early stopping on validation accuracy. The
/// model ends holding the best-validation parameters.
TrainHistory train_model(Classifier<float>& model, const Dataset& train, const Dataset& val,
                         const TrainConfig& cfg);

struct Evaluation {
  std::vector<int> predictions;
  double loss = 0.0;
  double accuracy = 0.0;  // plain fraction correct
};

Evaluation evaluate(Classifier<float>& model, const Dataset& ds, int batch_size = 64);
int predict(Classifier<float>& model, const PmuWindow& window);
std::vector<int> predict(Classifier<float>& model, const Dataset& ds, int batch_size = 64);

Checkpoint make_checkpoint(Classifier<float>& model, const nlohmann::json& run_meta);
std::unique_ptr<Classifier<float>> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace gridcaps
