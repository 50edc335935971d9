#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcaps/attack_sim.hpp"
#include "gridcaps/pmu.hpp"

namespace gridcaps {

/// One labeled observation. The scenario fields are kept alongside the
/// window so a test sample can be re-simulated (delay suite).
struct Sample {
  std::uint64_t id = 0;  // generation index, also the per-sample RNG stream
  int class_index = 0;
  int label_bus = 0;
  AttackKind kind = AttackKind::single_point;
  bool attacked = true;
  std::uint32_t gain_col = 0;
  double gain = 0.0;
  std::vector<double> epsilon_mw;
  PmuWindow window;

  AttackScenario scenario(const BusTopology& topology) const;
};

enum class Split : std::uint8_t { train = 0, val = 1, test = 2, all = 3 };
std::string to_string(Split s);

struct Dataset {
  std::string case_name;
  std::size_t n_gen = 0;
  std::size_t t_len = kWindowSamples;
  double sample_period = kSamplePeriod;
  std::vector<int> class_map;  // class_index -> load bus id
  Split split = Split::all;
  std::uint64_t seed = 0;
  nlohmann::json provenance = nlohmann::json::object();
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  std::size_t n_classes() const { return class_map.size(); }
  int class_of_bus(int bus) const;
  /// Throws StructuralError on a shape or label inconsistency.
  void validate() const;
  /// Copy holding only attack samples (drops detection-mode normals).
  Dataset attacked_only() const;
};

struct GenerationConfig {
  std::size_t n_samples = 2000;
  std::uint64_t seed = 0;
  ScenarioConfig scenario;
  double duration_s = kDefaultDuration;
  double dt_s = kDefaultDt;
  /// Redraws of (gain, eps) for one sample when the attack limit fails.
  int max_limit_retries = 200;
  /// Share of attack-free windows (static step only) for the detection channel.
  double normal_fraction = 0.0;
  unsigned threads = 0;  // 0: worker_count()
};

/// Worker count: $GRIDCAPS_THREADS if set, else hardware concurrency.
unsigned worker_count();

/// Samples, screens, simulates and limit-filters n scenarios. Sample i only
/// uses the RNG stream (seed, scenario, i), so the result does not depend on
/// the thread count.
Dataset generate_samples(const GridCase& grid, const GenerationConfig& cfg);

/// Full trajectory of a stored sample.
Trajectory resimulate(const GridCase& grid, const Sample& sample,
                      double duration_s = kDefaultDuration, double dt_s = kDefaultDt);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct SplitSet {
  Dataset train;
  Dataset val;
  Dataset test;
};

struct SplitDegradation {
  DegradationConfig train;
  DegradationConfig val;
  DegradationConfig test;
};

/// Stratified random split. Sizes are round(f * n) for train and val, the
/// remainder for test. Classes with fewer than 3 samples make the split fall
/// back to a global shuffle (with a warning on stderr). `grid` is needed only
/// when a delay degradation is requested.
SplitSet build_dataset(const Dataset& all, const SplitFractions& fracs, std::uint64_t seed,
                       const SplitDegradation& degradation = {}, const GridCase* grid = nullptr);

/// Applies a degradation to every sample with stream (seed, degrade, id ^ salt).
Dataset degrade_dataset(const Dataset& ds, const DegradationConfig& cfg, std::uint64_t seed,
                        std::uint64_t salt, const GridCase* grid);

/// Little-endian "GCAP" container, see README for the layout.
std::string serialize(const Dataset& ds);
Dataset deserialize(const std::string& bytes);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace gridcaps
