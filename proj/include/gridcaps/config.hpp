#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcaps/dataset.hpp"
#include "gridcaps/eval.hpp"
#include "gridcaps/training.hpp"

namespace gridcaps {

/// Everything a gen/train/eval run depends on. Serialized into every
/// artifact it produces.
struct RunConfig {
  std::string case_name = "ieee14";
  std::uint64_t seed = 0;
  std::string data_dir;  // empty: built-in case data
  std::string out = "runs";

  // gen
  std::size_t n_samples = 2000;
  ScenarioConfig scenario;
  SplitFractions split;
  double duration_s = kDefaultDuration;
  double dt_s = kDefaultDt;
  int max_limit_retries = 200;
  double normal_fraction = 0.0;
  /// Test-split degradation at gen time; also applied to train/val when
  /// train_degraded is set.
  DegradationConfig degradation;
  bool train_degraded = false;

  // train
  std::string model = "capsnet";
  TrainConfig train;

  // eval
  std::string suite = "clean";
  std::vector<std::string> eval_models{"capsnet", "mlp"};
  std::vector<std::uint64_t> eval_seeds;  // empty: {seed}
  int latency_repeats = 0;
  /// Condition grid of the suites (SNR levels, drop/outlier ranges, delays).
  SuiteConfig suite_grid;

  /// Throws ConfigError on an inconsistent value.
  void validate() const;

  std::filesystem::path dataset_path(const std::string& kind, Split split) const;
  std::filesystem::path checkpoint_path(const std::string& model_kind) const;
  std::filesystem::path history_path(const std::string& model_kind) const;
  std::filesystem::path report_path(const std::string& suite_name) const;

  GenerationConfig generation() const;
  SuiteConfig suite_config() const;
};

nlohmann::json to_json(const RunConfig& c);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace gridcaps
