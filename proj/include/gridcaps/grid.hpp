#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace gridcaps {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double reactance = 0.0;  // pu
};

/// Bus/branch topology of a case. Generator buses come from the gen table;
/// every other bus is a load bus. Both lists keep case-file bus order.
struct BusTopology {
  std::string name;
  std::vector<int> bus_ids;
  std::vector<int> generator_buses;
  std::vector<int> load_buses;
  std::vector<Branch> branches;
  std::vector<double> demand_mw;  // Pd, aligned with bus_ids
  double base_mva = 100.0;

  std::size_t n_gen() const { return generator_buses.size(); }
  std::size_t n_load() const { return load_buses.size(); }

  /// Position of a bus in load_buses / generator_buses; throws RangeError.
  std::size_t load_ordinal(int bus) const;
  std::size_t generator_ordinal(int bus) const;
  double demand_at(int bus) const;
};

/// Parses a MATPOWER case body (bus, gen and branch tables plus baseMVA).
/// Out-of-service branches (status 0) are skipped.
BusTopology parse_case(std::string_view text, std::string name = {});
BusTopology load_case_file(const std::filesystem::path& path);

/// Checks the topology invariants: disjoint and covering bus partition,
/// known branch endpoints, positive reactances, connected branch graph.
void validate_topology(const BusTopology& topology);

/// DC susceptance matrix split by (generator, load) ordering.
struct SusceptancePartition {
  Matrix gg;
  Matrix gl;
  Matrix lg;
  Matrix ll;

  /// Reassembled [GG GL; LG LL] in (generator, load) order.
  Matrix full() const;
};

SusceptancePartition build_susceptance(const BusTopology& topology);

struct DynamicParams {
  Vector inertia;       // M, per generator
  Vector gen_damping;   // D_G
  Vector kp;            // K_P, multiplies omega
  Vector ki;            // K_I, multiplies delta
  Vector load_damping;  // D_L, per load bus

  void validate(std::size_t n_gen, std::size_t n_load) const;
};

/// Reads per-case dynamic parameters from a JSON document of the form
/// {"inertia": [...], "gen_damping": [...], "kp": [...], "ki": [...],
///  "load_damping": 0.01}. Scalars broadcast to the required length.
DynamicParams parse_params(std::string_view json_text, std::size_t n_gen, std::size_t n_load);
DynamicParams load_params_file(const std::filesystem::path& path, std::size_t n_gen,
                               std::size_t n_load);

}  // namespace gridcaps
