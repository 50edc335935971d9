#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "gridcaps/dynamics.hpp"
#include "gridcaps/rng.hpp"

namespace gridcaps {

inline constexpr double kNominalHz = 50.0;

struct ScenarioConfig {
  AttackKind kind = AttackKind::single_point;
  double eps_min_mw = 0.1;
  double eps_max_mw = 2.5;
  /// Gain magnitude search range (pu); negative means "use the case default".
  double gain_min_pu = -1.0;
  double gain_max_pu = -1.0;
  int max_rejections = 500;
  /// Fixes the D-LAA source bus; otherwise drawn uniformly from the load buses.
  std::optional<int> label_bus;
  int multi_min_static = 1;
  int multi_max_static = 3;
};

/// Draws an attack whose assembled model screens unstable or semi-unstable.
/// Each attempt redraws the sensed generator column and the gain magnitude.
AttackScenario sample_scenario(Rng& rng, const GridCase& grid, const ScenarioConfig& config);

/// Fixed-step trajectory of x = [delta; omega] from x(0) = 0.
struct Trajectory {
  double dt = 0.0;
  std::size_t n_gen = 0;
  std::vector<double> times;
  Matrix delta;  // n_gen x steps, rad
  Matrix omega;  // n_gen x steps, rad/s
  bool diverged = false;
  double divergence_time = 0.0;

  std::size_t steps() const { return times.size(); }
  double duration() const { return times.empty() ? 0.0 : times.back(); }
};

inline constexpr double kDefaultDt = 0.001;
inline constexpr double kDefaultDuration = 3.0;

/// Classic RK4 on x' = A x + b. A non-finite state truncates the run and
/// sets the divergence flag.
Trajectory simulate(const StateSpaceModel& model, double duration = kDefaultDuration,
                    double dt = kDefaultDt);

/// RK4 on the homogeneous system from a given initial state; returns the
/// state norm at every step.
std::vector<double> simulate_free_norms(const Matrix& a, const Vector& x0, double duration,
                                        double dt);

struct LimitCheck {
  bool ok = true;
  /// min over t and attacked rows of (P^LV - eps)/2 - |K_L,v . omega(t)|, in MW.
  double margin_mw = 0.0;
};

/// Attack magnitude limit |K_L,v . omega(t)| <= (P^LV_v - eps_v)/2 for every
/// attacked row v and every trajectory step. Throws RangeError when some
/// eps_v exceeds P^LV_v.
LimitCheck check_limit(const AttackScenario& scenario, const Trajectory& traj,
                       const Vector& p_lv_mw, double base_mva);
inline bool validate_limit(const AttackScenario& scenario, const Trajectory& traj,
                           const Vector& p_lv_mw, double base_mva) {
  return check_limit(scenario, traj, p_lv_mw, base_mva).ok;
}

/// PMU observation: n_gen x t_len x 2, channel 0 frequency (Hz), channel 1
/// phase angle (rad). Stored as float32 to match the dataset container.
struct PmuWindow {
  std::size_t n_gen = 0;
  std::size_t t_len = 0;
  double t_start = 0.0;
  double sample_period = 0.02;
  std::vector<float> data;

  PmuWindow() = default;
  PmuWindow(std::size_t gens, std::size_t steps, double start = 0.0, double period = 0.02)
      : n_gen(gens), t_len(steps), t_start(start), sample_period(period),
        data(gens * steps * 2, 0.0f) {}

  std::size_t index(std::size_t gen, std::size_t t, std::size_t channel) const {
    return (gen * t_len + t) * 2 + channel;
  }
  float& at(std::size_t gen, std::size_t t, std::size_t channel) {
    return data[index(gen, t, channel)];
  }
  float at(std::size_t gen, std::size_t t, std::size_t channel) const {
    return data[index(gen, t, channel)];
  }
  float frequency(std::size_t gen, std::size_t t) const { return at(gen, t, 0); }
  float angle(std::size_t gen, std::size_t t) const { return at(gen, t, 1); }
};

inline constexpr double kWindowSeconds = 2.0;
inline constexpr double kSamplePeriod = 0.02;
inline constexpr std::size_t kWindowSamples = 100;

/// Nearest-grid-point decimation at t_start + k * period, k = 0..t_len-1.
PmuWindow to_pmu_window(const Trajectory& traj, double t_start,
                        std::size_t t_len = kWindowSamples, double period = kSamplePeriod);

}  // namespace gridcaps
