#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridcaps/dynamics.hpp"

namespace gridcaps {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;      // measured quantity
  double tolerance = 0.0;  // bound it is compared against
  std::string detail;
};

/// Max |x_rk4 - x_exact| over `duration` for n random stable scenarios, the
/// exact reference being the zero-order-hold discretization from the
/// matrix exponential of the augmented system [[A, b], [0, 0]].
CheckResult check_rk4_vs_expm(const GridCase& grid, int n_scenarios, std::uint64_t seed,
                              double duration = 2.0, double dt = 0.001, double tol = 1e-6);

/// Float64 finite-difference checks of Conv2D and Dense on small random
/// problems; the bound applies to the normwise relative error.
CheckResult check_layer_gradients(std::uint64_t seed, double tol = 1e-6);

/// Same for the whole capsule network on the reduced plan with r = 5.
CheckResult check_capsnet_gradients(std::uint64_t seed, double tol = 1e-4);

/// Over n random forward passes of the reduced capsule network: coupling
/// rows sum to 1, output lengths stay below 1, routing leaves W untouched.
CheckResult check_routing_invariants(int n_passes, std::uint64_t seed);

/// Squash and margin loss against plain scalar reimplementations.
CheckResult check_capsule_scalars(int n_inputs, std::uint64_t seed, double tol = 1e-9);

/// Empirical SNR of noised ieee-style windows, worst deviation from target
/// over n windows per level.
CheckResult check_snr_roundtrip(const GridCase& grid, const std::vector<double>& levels_db,
                                int n_windows, std::uint64_t seed, double tol_db = 0.5);

/// Stability screen against the free response from a random unit initial
/// state, over scenarios drawn as in generation (random load bus and
/// generator column, gain uniform over the case range): unstable scenarios
/// must grow by >= 10x over `horizon`, stable ones decay to <= 0.1x.
/// Semi-unstable scenarios are counted but not judged.
struct ScreenOracleStats {
  int unstable = 0, semi_unstable = 0, stable = 0;
  int unstable_failed = 0, stable_failed = 0;
  double min_unstable_growth = 0.0;
  double max_stable_ratio = 0.0;
};
CheckResult check_screen_vs_time_domain(const GridCase& grid, int n_scenarios, std::uint64_t seed,
                                        double horizon = 10.0, ScreenOracleStats* stats = nullptr);

}  // namespace gridcaps
