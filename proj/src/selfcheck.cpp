#include "gridcaps/selfcheck.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "gridcaps/attack_sim.hpp"
#include "gridcaps/capsnet.hpp"
#include "gridcaps/dataset.hpp"
#include "gridcaps/gradcheck.hpp"
#include "gridcaps/layers.hpp"
#include "gridcaps/pmu.hpp"
#include "gridcaps/rng.hpp"

namespace gridcaps {

namespace {

AttackScenario random_scenario(Rng& rng, const GridCase& grid, double gain_lo, double gain_hi) {
  const auto& topo = grid.topology;
  AttackScenario s = AttackScenario::none(topo.n_load(), topo.n_gen());
  std::uniform_int_distribution<std::size_t> load(0, topo.n_load() - 1);
  std::uniform_int_distribution<Eigen::Index> gen(0, static_cast<Eigen::Index>(topo.n_gen()) - 1);
  std::uniform_real_distribution<double> eps(0.1, 2.5), gain(gain_lo, gain_hi);
  const auto row = load(rng);
  s.label_bus = topo.load_buses[row];
  s.epsilon_mw[static_cast<Eigen::Index>(row)] = eps(rng);
  s.gain(static_cast<Eigen::Index>(row), gen(rng)) = gain(rng);
  return s;
}

template <class T>
void fill_normal(Tensor<T>& t, Rng& rng, double std = 1.0) {
  std::normal_distribution<double> d(0.0, std);
  for (auto& v : t.data) v = static_cast<T>(d(rng));
}

// Quadratic read-out 0.5 * sum((y * r)^2), so central differences are exact
// up to rounding.
double quad_loss(const Tensor<double>& y, const Tensor<double>& r, Tensor<double>* gy) {
  double l = 0.0;
  if (gy) *gy = Tensor<double>(y.shape);
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    const double a = y.data[i] * r.data[i];
    l += 0.5 * a * a;
    if (gy) gy->data[i] = a * r.data[i];
  }
  return l;
}

// Checks parameter and input gradients of one layer.
GradCheckReport check_layer(Layer<double>& layer, const std::vector<int>& in_shape, Rng& rng) {
  Param<double> input("input", in_shape);
  fill_normal(input.value, rng);
  const ForwardContext ctx{false, nullptr};
  Tensor<double> r = layer.forward(input.value, ctx);
  fill_normal(r, rng);
  auto params = layer.params();
  params.push_back(&input);
  auto loss = [&](bool with_grad) {
    const auto y = layer.forward(input.value, ctx);
    if (!with_grad) return quad_loss(y, r, nullptr);
    for (auto* p : layer.params()) p->zero_grad();
    Tensor<double> gy;
    const double l = quad_loss(y, r, &gy);
    input.grad = layer.backward(gy);
    return l;
  };
  return grad_check(params, loss, 1e-5);
}

std::string describe(const GradCheckReport& rep) {
  std::ostringstream os;
  for (const auto& b : rep.blocks) os << b.name << "=" << b.rel_err << " ";
  return os.str();
}

}  // namespace

CheckResult check_rk4_vs_expm(const GridCase& grid, int n_scenarios, std::uint64_t seed, double duration,
                              double dt, double tol) {
  CheckResult res{"rk4_vs_expm", true, 0.0, tol, ""};
  Rng rng = make_rng(seed, streams::eval, 1);
  int found = 0, draws = 0;
  while (found < n_scenarios) {
    if (++draws > 200 * n_scenarios) {
      res.passed = false;
      res.detail = "could not draw enough stable scenarios";
      return res;
    }
    const auto scenario = random_scenario(rng, grid, 0.0, grid.gain_max_pu);
    const auto model = grid.model(scenario);
    if (screen(model).cls != StabilityClass::stable) continue;
    ++found;
    const auto n = model.a.rows();
    Matrix aug = Matrix::Zero(n + 1, n + 1);
    aug.topLeftCorner(n, n) = model.a;
    aug.topRightCorner(n, 1) = model.b;
    const Matrix phi = (aug * dt).exp();
    const auto traj = simulate(model, duration, dt);
    Vector x = Vector::Zero(n);
    for (std::size_t k = 1; k < traj.steps(); ++k) {
      x = phi.topLeftCorner(n, n) * x + phi.topRightCorner(n, 1);
      const auto kk = static_cast<Eigen::Index>(k);
      const double err = std::max((traj.delta.col(kk) - x.head(n / 2)).cwiseAbs().maxCoeff(),
                                  (traj.omega.col(kk) - x.tail(n / 2)).cwiseAbs().maxCoeff());
      res.value = std::max(res.value, err);
    }
  }
  res.passed = res.value <= tol;
  res.detail = std::to_string(found) + " stable scenarios";
  return res;
}

CheckResult check_layer_gradients(std::uint64_t seed, double tol) {
  CheckResult res{"layer_gradients", true, 0.0, tol, ""};
  Rng rng = make_rng(seed, streams::init, 0x300);
  Conv2D<double> conv("conv", 3, 4, 2, 3, 1, 2, rng);
  Dense<double> dense("dense", 12, 5, rng);
  const auto a = check_layer(conv, {2, 4, 9, 3}, rng);
  const auto b = check_layer(dense, {3, 12}, rng);
  res.value = std::max(a.max_rel_err(), b.max_rel_err());
  res.passed = res.value <= tol;
  res.detail = describe(a) + describe(b);
  return res;
}

CheckResult check_capsnet_gradients(std::uint64_t seed, double tol) {
  CheckResult res{"capsnet_gradients", true, 0.0, tol, ""};
  const CapsPlan plan = reduced_plan();
  CapsNet<double> net(plan, seed);
  Rng rng = make_rng(seed, streams::eval, 2);
  Tensor<double> x({2, plan.n_gen, plan.t_len, plan.channels});
  fill_normal(x, rng);
  const std::vector<int> labels{0, 2};
  const ForwardContext ctx{false, nullptr};
  auto loss = [&](bool with_grad) {
    const auto out = net.forward(x, ctx);
    if (!with_grad) return net.loss(out, labels, nullptr);
    for (auto* p : net.params()) p->zero_grad();
    Tensor<double> g;
    const double l = net.loss(out, labels, &g);
    net.backward(g);
    return l;
  };
  const auto rep = grad_check(net.params(), loss, 1e-5);
  res.value = rep.max_rel_err();
  res.passed = res.value <= tol;
  res.detail = describe(rep);
  return res;
}

CheckResult check_routing_invariants(int n_passes, std::uint64_t seed) {
  CheckResult res{"routing_invariants", true, 0.0, 1e-6, ""};
  const CapsPlan plan = reduced_plan();
  CapsNet<double> net(plan, seed);
  Rng rng = make_rng(seed, streams::eval, 3);
  auto& w = net.capsules().weight().value.data;
  const double checksum = std::accumulate(w.begin(), w.end(), 0.0);
  const std::vector<double> w0 = w;
  double max_len = 0.0;
  const ForwardContext ctx{false, nullptr};
  for (int pass = 0; pass < n_passes; ++pass) {
    Tensor<double> x({1, plan.n_gen, plan.t_len, plan.channels});
    std::uniform_real_distribution<double> scale(0.01, 100.0);
    fill_normal(x, rng, scale(rng));
    const auto out = net.forward(x, ctx);
    const auto& tr = net.capsules().traces().front();
    for (int it = 0; it < tr.r; ++it) {
      const double* c = tr.coupling(it);
      for (int p = 0; p < tr.P; ++p) {
        double s = 0.0;
        for (int q = 0; q < tr.Q; ++q) s += c[p * tr.Q + q];
        res.value = std::max(res.value, std::abs(s - 1.0));
      }
    }
    const auto lengths = net.class_scores(out);
    for (double l : lengths.data) max_len = std::max(max_len, l);
  }
  const bool w_same = w == w0 && std::accumulate(w.begin(), w.end(), 0.0) == checksum;
  res.passed = res.value <= res.tolerance && max_len < 1.0 && w_same;
  std::ostringstream os;
  os << "max |sum c - 1| = " << res.value << ", max |v| = " << max_len << ", W unchanged = " << w_same;
  res.detail = os.str();
  return res;
}

CheckResult check_capsule_scalars(int n_inputs, std::uint64_t seed, double tol) {
  CheckResult res{"squash_margin_scalars", true, 0.0, tol, ""};
  Rng rng = make_rng(seed, streams::eval, 4);
  std::uniform_int_distribution<int> dim(1, 32), label(0, 9);
  std::uniform_real_distribution<double> mag(-3.0, 2.0), len(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < n_inputs; ++k) {
    const int n = dim(rng);
    const double s = std::pow(10.0, mag(rng));
    std::vector<double> d(static_cast<std::size_t>(n)), v(static_cast<std::size_t>(n));
    for (auto& e : d) e = s * normal(rng);
    squash(d.data(), v.data(), n);
    double sq = 0.0;
    for (double e : d) sq += e * e;
    const double norm = std::sqrt(sq);
    for (int i = 0; i < n; ++i) {
      const double ref = norm > kSquashEps ? sq / (1.0 + sq) * d[static_cast<std::size_t>(i)] / norm : 0.0;
      res.value = std::max(res.value, std::abs(ref - v[static_cast<std::size_t>(i)]));
    }
    std::vector<double> lengths(10);
    for (auto& l : lengths) l = len(rng);
    const int y = label(rng);
    double ref = 0.0;
    for (int q = 0; q < 10; ++q) {
      const double l = lengths[static_cast<std::size_t>(q)];
      ref += q == y ? std::pow(std::max(0.0, 0.9 - l), 2) : 0.5 * std::pow(std::max(0.0, l - 0.1), 2);
    }
    res.value = std::max(res.value, std::abs(ref - margin_loss(lengths, y)));
  }
  res.passed = res.value <= tol;
  return res;
}

CheckResult check_snr_roundtrip(const GridCase& grid, const std::vector<double>& levels_db, int n_windows,
                                std::uint64_t seed, double tol_db) {
  CheckResult res{"snr_roundtrip", true, 0.0, tol_db, ""};
  GenerationConfig gc;
  gc.n_samples = static_cast<std::size_t>(n_windows);
  gc.seed = seed;
  const auto ds = generate_samples(grid, gc);
  std::ostringstream os;
  for (double level : levels_db) {
    for (int ch = 0; ch < 2; ++ch) {
      // Pooled over windows: signal and noise energies are summed first.
      double sig = 0.0, err = 0.0;
      for (const auto& s : ds.samples) {
        Rng rng = make_rng(seed, streams::degrade, s.id);
        const auto noisy = add_gaussian_noise(s.window, level, rng);
        const double snr = empirical_snr_db(s.window, noisy, ch);
        const double e = static_cast<double>(noisy.data.size()) / 2.0;
        sig += std::pow(10.0, snr / 10.0) * e;
        err += e;
      }
      const double pooled = 10.0 * std::log10(sig / err);
      res.value = std::max(res.value, std::abs(pooled - level));
      os << level << "dB ch" << ch << " -> " << pooled << "; ";
    }
  }
  res.passed = res.value <= tol_db;
  res.detail = os.str();
  return res;
}

CheckResult check_screen_vs_time_domain(const GridCase& grid, int n_scenarios, std::uint64_t seed,
                                        double horizon, ScreenOracleStats* stats) {
  CheckResult res{"screen_vs_time_domain", true, 0.0, 10.0, ""};
  ScreenOracleStats st;
  st.min_unstable_growth = std::numeric_limits<double>::infinity();
  Rng rng = make_rng(seed, streams::eval, 5);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < n_scenarios; ++k) {
    const auto scenario = random_scenario(rng, grid, grid.gain_min_pu, grid.gain_max_pu);
    const auto model = grid.model(scenario);
    const auto cls = screen(model).cls;
    Vector x0(model.a.rows());
    for (auto& v : x0) v = normal(rng);
    x0 /= x0.norm();
    const auto norms = simulate_free_norms(model.a, x0, horizon, 0.005);
    const double ratio = norms.back() / norms.front();
    if (cls == StabilityClass::unstable) {
      ++st.unstable;
      st.min_unstable_growth = std::min(st.min_unstable_growth, ratio);
      if (!(ratio >= 10.0)) ++st.unstable_failed;
    } else if (cls == StabilityClass::stable) {
      ++st.stable;
      st.max_stable_ratio = std::max(st.max_stable_ratio, ratio);
      if (!(ratio <= 0.1)) ++st.stable_failed;
    } else {
      ++st.semi_unstable;
    }
  }
  res.passed = st.unstable_failed == 0 && st.stable_failed == 0;
  res.value = st.unstable ? st.min_unstable_growth : 0.0;
  std::ostringstream os;
  os << st.unstable << " unstable (min growth " << res.value << "x, " << st.unstable_failed << " below 10x), "
     << st.stable << " stable (max ratio " << st.max_stable_ratio << ", " << st.stable_failed << " above 0.1), "
     << st.semi_unstable << " semi-unstable";
  res.detail = os.str();
  if (stats) *stats = st;
  return res;
}

}  // namespace gridcaps
