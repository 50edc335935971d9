#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcaps/dataset.hpp"
#include "gridcaps/model.hpp"

namespace gridcaps {

/// Mean over T_n contiguous episodes of the per-episode fraction correct.
/// Episode i covers [i*n/T_n, (i+1)*n/T_n).
double episode_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels,
                        std::size_t episodes);
/// n_test / 20, at least 1.
std::size_t default_episodes(std::size_t n_test);

struct EvalRow {
  std::string model;
  std::string case_name;
  std::string suite;
  std::string condition;
  double accuracy = 0.0;
  std::size_t n_test = 0;
  std::size_t episodes = 0;
  std::uint64_t seed = 0;
  bool mean = false;  // mean over the seed rows above it; seed column reads "mean"
  std::string dataset_sha256;
  double latency_ms = -1.0;  // negative: not measured
};

struct EvalReport {
  nlohmann::json config = nlohmann::json::object();
  std::vector<EvalRow> rows;

  static const char* header();
  /// '#'-prefixed config line, the header, then one line per row.
  std::string to_csv() const;
};

struct NamedModel {
  std::string name;
  Classifier<float>* model = nullptr;
};

struct SuiteConfig {
  /// Degradation seeds; with more than one, each (model, condition) gets a
  /// row per seed followed by their mean.
  std::vector<std::uint64_t> seeds{0};
  std::vector<double> snr_db{26.0, 20.0, 16.5};
  double drop_lo = 0.03, drop_hi = 0.05;
  double outlier_lo = 0.03, outlier_hi = 0.08;
  std::vector<double> delays_s{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  /// Median latency over this many single-window passes; 0 leaves the column empty.
  int latency_repeats = 0;
};

struct SuiteData {
  const Dataset* single_test = nullptr;
  const Dataset* multi_test = nullptr;  // clean suite only
  const GridCase* grid = nullptr;       // delay suite only
};

std::vector<std::string> suite_names();

/// clean | noise | missing_outlier | delay. Rows are ordered by model, then
/// condition, then seed; each condition degrades the clean test set with its
/// own stream, so a row does not depend on the others.
EvalReport run_suite(const std::string& suite, const std::vector<NamedModel>& models, const SuiteData& data,
                     const SuiteConfig& cfg);

/// Median wall-clock time (ms) of a single-window forward pass.
double measure_latency(Classifier<float>& model, const Dataset& ds, int n_repeat);

}  // namespace gridcaps
