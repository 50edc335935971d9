#pragma once

#include <limits>
#include <string>

#include <nlohmann/json.hpp>

#include "gridcaps/attack_sim.hpp"
#include "gridcaps/rng.hpp"

namespace gridcaps {

inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

/// Per channel, adds zero-mean Gaussian noise with
/// sigma = rms(deviation from nominal) / 10^(snr_db / 20).
/// snr_db = +inf leaves the window unchanged.
PmuWindow add_gaussian_noise(const PmuWindow& window, double snr_db, Rng& rng);

/// Replaces floor(fraction * n_gen * T) distinct (gen, t) points with the
/// reference values 50 Hz / 0 rad.
PmuWindow drop_points(const PmuWindow& window, double fraction, Rng& rng);

/// Scales the deviation part of floor(fraction * n_gen * T) distinct points
/// by (1 + u), u ~ U(-0.2, 0.2), independently per channel.
PmuWindow inject_outliers(const PmuWindow& window, double fraction, Rng& rng);

/// Window [delay_s, delay_s + 2 s] at the standard 20 ms sampling period.
PmuWindow delayed_window(const Trajectory& traj, double delay_s);

/// Measured 20 log10(rms(clean deviation) / rms(noisy - clean)) for one channel.
double empirical_snr_db(const PmuWindow& clean, const PmuWindow& noisy, int channel);

/// Degradation settings. Fractions given as [lo, hi] ranges are drawn per
/// window; a single value means lo == hi.
struct DegradationConfig {
  double snr_db = kNoNoise;
  double drop_frac_lo = 0.0;
  double drop_frac_hi = 0.0;
  double outlier_frac_lo = 0.0;
  double outlier_frac_hi = 0.0;
  double delay_s = 0.0;

  bool is_clean() const {
    return snr_db == kNoNoise && drop_frac_hi == 0.0 && outlier_frac_hi == 0.0 && delay_s == 0.0;
  }
  std::string label() const;
};

/// JSON keys: snr_db (number or null), drop_frac, outlier_frac (number or
/// [lo, hi]), delay_s.
nlohmann::json to_json(const DegradationConfig& cfg);
DegradationConfig degradation_from_json(const nlohmann::json& j);

/// Noise, then missing points, then outliers. Delay is handled upstream
/// because it needs the underlying trajectory.
PmuWindow degrade(const PmuWindow& window, const DegradationConfig& cfg, Rng& rng);

}  // namespace gridcaps
