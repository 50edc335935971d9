#include "gridcaps/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gridcaps/errors.hpp"

#ifndef GRIDCAPS_DEFAULT_DATA_DIR
#define GRIDCAPS_DEFAULT_DATA_DIR "data"
#endif

namespace gridcaps {

std::string to_string(AttackKind kind) {
  return kind == AttackKind::single_point ? "single_point" : "multi_point";
}

AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "single_point" || s == "single") return AttackKind::single_point;
  if (s == "multi_point" || s == "multi") return AttackKind::multi_point;
  throw ConfigError("unknown attack kind '" + s + "'");
}

AttackScenario AttackScenario::none(std::size_t n_load, std::size_t n_gen) {
  AttackScenario s;
  s.epsilon_mw = Vector::Zero(static_cast<Eigen::Index>(n_load));
  s.gain = Matrix::Zero(static_cast<Eigen::Index>(n_load), static_cast<Eigen::Index>(n_gen));
  return s;
}

void AttackScenario::validate(const BusTopology& topo) const {
  const auto nl = static_cast<Eigen::Index>(topo.n_load());
  const auto ng = static_cast<Eigen::Index>(topo.n_gen());
  if (epsilon_mw.size() != nl || gain.rows() != nl || gain.cols() != ng) {
    throw StructuralError("attack dimensions do not match case " + topo.name);
  }
  if (!epsilon_mw.allFinite() || !gain.allFinite()) throw NumericError("attack has non-finite entries");
  if (label_bus == 0) return;  // unlabeled (e.g. the attack-free scenario)
  const auto row = static_cast<Eigen::Index>(topo.load_ordinal(label_bus));
  for (Eigen::Index v = 0; v < nl; ++v) {
    if (v == row) continue;
    if ((gain.row(v).array() != 0.0).any()) {
      throw StructuralError("dynamic gain outside the label row " + std::to_string(label_bus));
    }
    if (kind == AttackKind::single_point && epsilon_mw[v] != 0.0) {
      throw StructuralError("single-point attack has a static step away from bus " +
                            std::to_string(label_bus));
    }
  }
}

Vector StateSpaceModel::load_angles(const Vector& x) const {
  Vector xa(x.size() + 1);
  xa << x, 1.0;
  return reduction * xa;
}

StateSpaceModel assemble_dynamics(const BusTopology& topo, const SusceptancePartition& bp,
                                  const DynamicParams& params, const AttackScenario& attack) {
  const auto ng = static_cast<Eigen::Index>(topo.n_gen());
  const auto nl = static_cast<Eigen::Index>(topo.n_load());
  if (attack.gain.rows() != nl || attack.gain.cols() != ng || attack.epsilon_mw.size() != nl) {
    throw StructuralError("attack dimensions do not match case " + topo.name);
  }
  params.validate(topo.n_gen(), topo.n_load());

  Eigen::FullPivLU<Matrix> lu(bp.ll);
  if (!lu.isInvertible()) throw NumericError("B_LL is singular for case " + topo.name);

  const Vector eps_pu = attack.epsilon_mw / topo.base_mva;
  // theta = -B_LL^-1 (B_LG delta - K_L omega + eps)
  const Matrix ll_lg = lu.solve(bp.lg);
  const Matrix ll_k = lu.solve(attack.gain);
  const Vector ll_eps = lu.solve(eps_pu);

  StateSpaceModel m;
  m.reduction.resize(nl, 2 * ng + 1);
  m.reduction << -ll_lg, ll_k, -ll_eps;

  // -M w' = (K_I + B_GG) delta + (K_P + D_G) w + B_GL theta
  const Matrix stiffness = Matrix(params.ki.asDiagonal()) + bp.gg - bp.gl * ll_lg;
  const Matrix damping =
      Matrix((params.kp + params.gen_damping).asDiagonal()) + bp.gl * ll_k;
  const Vector inv_m = params.inertia.cwiseInverse();

  m.a = Matrix::Zero(2 * ng, 2 * ng);
  m.a.topRightCorner(ng, ng).setIdentity();
  m.a.bottomLeftCorner(ng, ng) = -(inv_m.asDiagonal() * stiffness);
  m.a.bottomRightCorner(ng, ng) = -(inv_m.asDiagonal() * damping);
  m.b = Vector::Zero(2 * ng);
  m.b.tail(ng) = inv_m.asDiagonal() * (bp.gl * ll_eps);
  return m;
}

Vector algebraic_residual(const BusTopology& topo, const SusceptancePartition& bp,
                          const AttackScenario& attack, const Vector& x, const Vector& theta) {
  const auto ng = static_cast<Eigen::Index>(topo.n_gen());
  return attack.epsilon_mw / topo.base_mva + bp.lg * x.head(ng) - attack.gain * x.tail(ng) +
         bp.ll * theta;
}

Vector GridCase::vulnerable_load_mw() const {
  Vector out(static_cast<Eigen::Index>(topology.n_load()));
  for (std::size_t i = 0; i < topology.n_load(); ++i) {
    const double pd = topology.demand_at(topology.load_buses[i]);
    out[static_cast<Eigen::Index>(i)] = std::max(p_lv_fraction * std::max(pd, 0.0), p_lv_floor_mw);
  }
  return out;
}

std::vector<std::string> supported_cases() { return {"ieee14", "ieee39", "ieee57"}; }

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("GRIDCAPS_DATA_DIR"); env && *env) return env;
  return GRIDCAPS_DEFAULT_DATA_DIR;
}

GridCase load_grid_case(const std::string& name, const std::filesystem::path& data_dir) {
  const auto cases = supported_cases();
  if (std::find(cases.begin(), cases.end(), name) == cases.end()) {
    throw ConfigError("unsupported case '" + name + "' (expected ieee14, ieee39 or ieee57)");
  }
  const auto params_path = data_dir / "params" / (name + ".json");
  std::ifstream in(params_path);
  if (!in) throw ConfigError("cannot open params file " + params_path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const auto text = ss.str();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(params_path.string() + ": " + e.what());
  }

  GridCase gc;
  gc.name = name;
  gc.topology = load_case_file(data_dir / "cases" / doc.at("case_file").get<std::string>());
  gc.topology.name = name;
  gc.susceptance = build_susceptance(gc.topology);
  gc.params = parse_params(text, gc.topology.n_gen(), gc.topology.n_load());
  if (doc.contains("attack")) {
    const auto& a = doc.at("attack");
    const auto range = a.value("gain_range_pu", std::vector<double>{0.0, 1.0});
    if (range.size() != 2 || !(range[0] >= 0) || !(range[1] > range[0])) {
      throw ConfigError(params_path.string() + ": bad gain_range_pu");
    }
    gc.gain_min_pu = range[0];
    gc.gain_max_pu = range[1];
    gc.p_lv_fraction = a.value("p_lv_fraction", 0.5);
    gc.p_lv_floor_mw = a.value("p_lv_floor_mw", 0.0);
  }
  return gc;
}

namespace {

bool eig_order(const Complex& x, const Complex& y) {
  if (x.real() != y.real()) return x.real() > y.real();
  return x.imag() > y.imag();
}

}  // namespace

EigenDecomposition eigen_decompose(const Matrix& a) {
  if (a.rows() != a.cols()) throw NumericError("eigenvalues: matrix is not square");
  if (!a.allFinite()) throw NumericError("eigenvalues: matrix has non-finite entries");
  EigenDecomposition out;
  if (a.rows() == 0) return out;
  Eigen::EigenSolver<Matrix> solver(a, /*computeEigenvectors=*/true);
  if (solver.info() != Eigen::Success) {
    throw NumericError("eigenvalues: QR iteration did not converge");
  }
  const auto& vals = solver.eigenvalues();
  const auto& vecs = solver.eigenvectors();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(vals.size()));
  for (Eigen::Index i = 0; i < vals.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return eig_order(vals[i], vals[j]); });
  for (auto i : order) {
    out.values.push_back(vals[i]);
    Eigen::VectorXcd v = vecs.col(i);
    const double n = v.norm();
    if (n > 0) v /= n;
    out.vectors.push_back(std::move(v));
  }
  return out;
}

std::vector<Complex> eigenvalues(const Matrix& a) {
  if (a.rows() != a.cols()) throw NumericError("eigenvalues: matrix is not square");
  if (!a.allFinite()) throw NumericError("eigenvalues: matrix has non-finite entries");
  if (a.rows() == 0) return {};
  Eigen::EigenSolver<Matrix> solver(a, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw NumericError("eigenvalues: QR iteration did not converge");
  }
  std::vector<Complex> vals(solver.eigenvalues().begin(), solver.eigenvalues().end());
  std::stable_sort(vals.begin(), vals.end(), eig_order);
  return vals;
}

std::string to_string(StabilityClass c) {
  switch (c) {
    case StabilityClass::stable:
      return "stable";
    case StabilityClass::semi_unstable:
      return "semi_unstable";
    case StabilityClass::unstable:
      return "unstable";
  }
  return "?";
}

StabilityReport classify_stability(std::span<const Complex> eigs) {
  StabilityReport rep;
  rep.eigenvalues.assign(eigs.begin(), eigs.end());
  if (eigs.empty()) return rep;

  const auto top = std::min_element(eigs.begin(), eigs.end(), eig_order);
  if (top->real() > kUnstableRealPart) {
    rep.cls = StabilityClass::unstable;
    rep.witness = *top;
    return rep;
  }
  double best_zeta = std::numeric_limits<double>::infinity();
  for (const auto& e : eigs) {
    // One representative per conjugate pair.
    if (!(e.imag() > 1e-9)) continue;
    const double wn = std::abs(e);
    const double zeta = -e.real() / wn;
    if (zeta <= kSemiUnstableDamping && wn >= kSemiUnstableOmegaMin &&
        wn <= kSemiUnstableOmegaMax && zeta < best_zeta) {
      best_zeta = zeta;
      rep.cls = StabilityClass::semi_unstable;
      rep.witness = e;
    }
  }
  if (rep.cls == StabilityClass::stable) rep.witness = *top;
  return rep;
}

}  // namespace gridcaps
