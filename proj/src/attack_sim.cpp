#include "gridcaps/attack_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "gridcaps/errors.hpp"

namespace gridcaps {

AttackScenario sample_scenario(Rng& rng, const GridCase& grid, const ScenarioConfig& config) {
  const auto& topo = grid.topology;
  const auto nl = topo.n_load();
  const auto ng = topo.n_gen();
  if (!(config.eps_min_mw > 0) || config.eps_max_mw < config.eps_min_mw) {
    throw ConfigError("scenario: invalid static attack range");
  }
  const double gmin = config.gain_min_pu >= 0 ? config.gain_min_pu : grid.gain_min_pu;
  const double gmax = config.gain_max_pu >= 0 ? config.gain_max_pu : grid.gain_max_pu;
  if (gmax < gmin) throw ConfigError("scenario: invalid gain range");

  AttackScenario s = AttackScenario::none(nl, ng);
  s.kind = config.kind;
  if (config.label_bus) {
    s.label_bus = *config.label_bus;
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, nl - 1);
    s.label_bus = topo.load_buses[pick(rng)];
  }
  const auto row = static_cast<Eigen::Index>(topo.load_ordinal(s.label_bus));

  std::uniform_real_distribution<double> eps_dist(config.eps_min_mw, config.eps_max_mw);
  if (config.kind == AttackKind::single_point) {
    s.epsilon_mw[row] = eps_dist(rng);
  } else {
    if (nl < 2) throw ConfigError("multi-point attacks need at least two load buses");
    const int lo = std::max(1, config.multi_min_static);
    const int hi = std::clamp(config.multi_max_static, lo, static_cast<int>(nl) - 1);
    std::uniform_int_distribution<int> count_dist(lo, hi);
    const int count = count_dist(rng);
    std::vector<Eigen::Index> others;
    for (Eigen::Index v = 0; v < static_cast<Eigen::Index>(nl); ++v) {
      if (v != row) others.push_back(v);
    }
    std::shuffle(others.begin(), others.end(), rng);
    for (int i = 0; i < count; ++i) s.epsilon_mw[others[static_cast<std::size_t>(i)]] = eps_dist(rng);
  }

  std::uniform_int_distribution<Eigen::Index> gen_dist(0, static_cast<Eigen::Index>(ng) - 1);
  std::uniform_real_distribution<double> gain_dist(gmin, gmax);
  for (int attempt = 0; attempt < config.max_rejections; ++attempt) {
    const auto col = gen_dist(rng);
    const double k = gain_dist(rng);
    s.gain.setZero();
    s.gain(row, col) = k;
    const auto rep = screen(grid.model(s));
    if (rep.cls != StabilityClass::stable) return s;
  }
  throw SamplingError("no destabilizing gain found for load bus " + std::to_string(s.label_bus) +
                      " after " + std::to_string(config.max_rejections) + " draws");
}

namespace {

bool finite(const Vector& x) { return x.allFinite(); }

}  // namespace

Trajectory simulate(const StateSpaceModel& model, double duration, double dt) {
  if (!(dt > 0) || dt > 0.005 + 1e-12) throw RangeError("simulate: dt must be in (0, 0.005] s");
  if (!(duration > 0)) throw RangeError("simulate: duration must be positive");
  const auto n = static_cast<Eigen::Index>(model.a.rows());
  const auto ng = n / 2;
  const auto steps = static_cast<std::size_t>(std::llround(duration / dt));

  Trajectory traj;
  traj.dt = dt;
  traj.n_gen = static_cast<std::size_t>(ng);
  traj.delta.resize(ng, static_cast<Eigen::Index>(steps + 1));
  traj.omega.resize(ng, static_cast<Eigen::Index>(steps + 1));
  traj.times.reserve(steps + 1);

  const Matrix& a = model.a;
  const Vector& b = model.b;
  Vector x = Vector::Zero(n);
  Vector k1(n), k2(n), k3(n), k4(n);
  std::size_t kept = 0;
  for (std::size_t i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) * dt;
    if (!finite(x)) {
      traj.diverged = true;
      traj.divergence_time = t;
      break;
    }
    traj.times.push_back(t);
    traj.delta.col(static_cast<Eigen::Index>(i)) = x.head(ng);
    traj.omega.col(static_cast<Eigen::Index>(i)) = x.tail(ng);
    ++kept;
    if (i == steps) break;
    k1.noalias() = a * x + b;
    k2.noalias() = a * (x + 0.5 * dt * k1) + b;
    k3.noalias() = a * (x + 0.5 * dt * k2) + b;
    k4.noalias() = a * (x + dt * k3) + b;
    x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  if (kept < steps + 1) {
    traj.delta.conservativeResize(ng, static_cast<Eigen::Index>(kept));
    traj.omega.conservativeResize(ng, static_cast<Eigen::Index>(kept));
  }
  return traj;
}

std::vector<double> simulate_free_norms(const Matrix& a, const Vector& x0, double duration,
                                        double dt) {
  const auto steps = static_cast<std::size_t>(std::llround(duration / dt));
  std::vector<double> norms;
  norms.reserve(steps + 1);
  Vector x = x0;
  const auto n = x.size();
  Vector k1(n), k2(n), k3(n), k4(n);
  for (std::size_t i = 0; i <= steps; ++i) {
    norms.push_back(x.norm());
    if (!std::isfinite(norms.back())) break;
    k1.noalias() = a * x;
    k2.noalias() = a * (x + 0.5 * dt * k1);
    k3.noalias() = a * (x + 0.5 * dt * k2);
    k4.noalias() = a * (x + dt * k3);
    x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return norms;
}

LimitCheck check_limit(const AttackScenario& scenario, const Trajectory& traj,
                       const Vector& p_lv_mw, double base_mva) {
  const auto nl = scenario.gain.rows();
  if (p_lv_mw.size() != nl) throw StructuralError("check_limit: P^LV length mismatch");
  LimitCheck out;
  out.margin_mw = std::numeric_limits<double>::infinity();
  for (Eigen::Index v = 0; v < nl; ++v) {
    const double eps = scenario.epsilon_mw[v];
    if (eps > p_lv_mw[v]) {
      throw RangeError("static attack " + std::to_string(eps) + " MW exceeds vulnerable load " +
                       std::to_string(p_lv_mw[v]) + " MW on load row " + std::to_string(v));
    }
    const bool has_gain = (scenario.gain.row(v).array() != 0.0).any();
    if (!has_gain && eps == 0.0) continue;
    const double rhs = (p_lv_mw[v] - eps) / 2.0;
    double lhs_max = 0.0;
    if (has_gain) {
      const Eigen::RowVectorXd kv = scenario.gain.row(v) * base_mva;
      for (Eigen::Index t = 0; t < traj.omega.cols(); ++t) {
        lhs_max = std::max(lhs_max, std::abs(kv.dot(traj.omega.col(t))));
      }
    }
    out.margin_mw = std::min(out.margin_mw, rhs - lhs_max);
  }
  if (traj.diverged) out.margin_mw = -std::numeric_limits<double>::infinity();
  out.ok = out.margin_mw >= 0.0;
  return out;
}

PmuWindow to_pmu_window(const Trajectory& traj, double t_start, std::size_t t_len, double period) {
  if (t_start < 0 || !(period > 0) || t_len == 0) throw RangeError("pmu window: bad geometry");
  const double end = t_start + static_cast<double>(t_len) * period;
  if (traj.steps() == 0 || end > traj.duration() + 1e-9) {
    throw RangeError("pmu window [" + std::to_string(t_start) + ", " + std::to_string(end) +
                     "] s exceeds the " + std::to_string(traj.duration()) + " s trajectory");
  }
  PmuWindow w(traj.n_gen, t_len, t_start, period);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t k = 0; k < t_len; ++k) {
    const double t = t_start + static_cast<double>(k) * period;
    const auto idx = static_cast<Eigen::Index>(std::llround(t / traj.dt));
    for (std::size_t g = 0; g < traj.n_gen; ++g) {
      const auto gi = static_cast<Eigen::Index>(g);
      w.at(g, k, 0) = static_cast<float>(kNominalHz + traj.omega(gi, idx) / two_pi);
      w.at(g, k, 1) = static_cast<float>(traj.delta(gi, idx));
    }
  }
  return w;
}

}  // namespace gridcaps
