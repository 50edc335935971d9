#pragma once

#include <complex>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gridcaps/grid.hpp"

namespace gridcaps {

enum class AttackKind { single_point, multi_point };

std::string to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& s);

/// Static step `epsilon_mw` (MW, one entry per load bus) plus the dynamic
/// feedback gain matrix (pu, load bus x generator ordinal). `label_bus` is
/// the load bus hosting the dynamic attack.
struct AttackScenario {
  Vector epsilon_mw;
  Matrix gain;
  int label_bus = 0;
  AttackKind kind = AttackKind::single_point;

  static AttackScenario none(std::size_t n_load, std::size_t n_gen);
  /// Checks dimensions and the single/multi-point placement invariants.
  void validate(const BusTopology& topology) const;
};

/// Linear model x' = A x + b over x = [delta; omega] in deviation
/// coordinates, with the load-bus angles eliminated. `reduction` maps
/// [x; 1] to theta.
struct StateSpaceModel {
  Matrix a;
  Vector b;
  Matrix reduction;

  std::size_t n_gen() const { return static_cast<std::size_t>(a.rows() / 2); }
  Vector load_angles(const Vector& x) const;
};

/// Solves the algebraic load-bus block of the network equations for theta
/// and substitutes it into the generator swing rows.
StateSpaceModel assemble_dynamics(const BusTopology& topology, const SusceptancePartition& b,
                                  const DynamicParams& params, const AttackScenario& attack);

/// Residual of the algebraic load-bus equations at (x, theta) for a given attack:
/// eps + B_LG delta - K_L omega + B_LL theta (pu).
Vector algebraic_residual(const BusTopology& topology, const SusceptancePartition& b,
                          const AttackScenario& attack, const Vector& x, const Vector& theta);

/// A loaded case: topology, susceptance, parameters, and the attack
/// sampling defaults from the params file.
struct GridCase {
  std::string name;  // ieee14 | ieee39 | ieee57
  BusTopology topology;
  SusceptancePartition susceptance;
  DynamicParams params;
  double gain_min_pu = 0.0;
  double gain_max_pu = 1.0;
  double p_lv_fraction = 0.5;
  double p_lv_floor_mw = 0.0;

  StateSpaceModel model(const AttackScenario& attack) const {
    return assemble_dynamics(topology, susceptance, params, attack);
  }
  /// Vulnerable load P^LV per load bus (MW).
  Vector vulnerable_load_mw() const;
};

std::vector<std::string> supported_cases();
/// Default data directory: $GRIDCAPS_DATA_DIR, else the build-time path.
std::filesystem::path default_data_dir();
GridCase load_grid_case(const std::string& name,
                        const std::filesystem::path& data_dir = default_data_dir());

using Complex = std::complex<double>;

/// All eigenvalues of a real square matrix, sorted by descending real part.
std::vector<Complex> eigenvalues(const Matrix& a);

/// Eigenvalues with their (unit-norm) eigenvectors.
struct EigenDecomposition {
  std::vector<Complex> values;
  std::vector<Eigen::VectorXcd> vectors;
};
EigenDecomposition eigen_decompose(const Matrix& a);

enum class StabilityClass { stable, semi_unstable, unstable };
std::string to_string(StabilityClass c);

struct StabilityReport {
  std::vector<Complex> eigenvalues;
  StabilityClass cls = StabilityClass::stable;
  Complex witness{0.0, 0.0};
};

inline constexpr double kUnstableRealPart = 1e-9;
inline constexpr double kSemiUnstableDamping = 0.03;
inline constexpr double kSemiUnstableOmegaMin = 2.5;   // rad/s
inline constexpr double kSemiUnstableOmegaMax = 12.6;  // rad/s

/// Unstable when some eigenvalue has real part above 1e-9; semi-unstable
/// when an oscillatory pair has damping ratio <= 3% with natural frequency
/// in [2.5, 12.6] rad/s; stable otherwise.
StabilityReport classify_stability(std::span<const Complex> eigs);

inline StabilityReport screen(const StateSpaceModel& model) {
  const auto eigs = eigenvalues(model.a);
  return classify_stability(eigs);
}

}  // namespace gridcaps
