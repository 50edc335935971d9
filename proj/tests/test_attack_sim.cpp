#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "gridcaps/attack_sim.hpp"
#include "gridcaps/errors.hpp"
#include "gridcaps/selfcheck.hpp"

using namespace gridcaps;

namespace {

StateSpaceModel diagonal_model(double a, double b) {
  StateSpaceModel m;
  m.a = Matrix::Identity(2, 2) * a;
  m.b = Vector::Constant(2, b);
  m.reduction = Matrix::Zero(1, 3);
  return m;
}

Trajectory shifted(const Trajectory& t, std::size_t k) {
  Trajectory s = t;
  const auto n = static_cast<Eigen::Index>(t.steps() - k);
  s.times.assign(t.times.begin(), t.times.begin() + n);
  s.delta = t.delta.rightCols(n);
  s.omega = t.omega.rightCols(n);
  return s;
}

}  // namespace

TEST_SUITE("attack-sim") {

TEST_CASE("forced 57-bus scenario screens non-stable") {
  const auto grid = load_grid_case("ieee57");
  const auto& t = grid.topology;
  auto s = AttackScenario::none(t.n_load(), t.n_gen());
  s.label_bus = 39;
  s.gain(static_cast<Eigen::Index>(t.load_ordinal(39)), 5) = 92.6;  // generator ordinal 6
  s.epsilon_mw[static_cast<Eigen::Index>(t.load_ordinal(24))] = 0.4;
  s.kind = AttackKind::multi_point;
  s.validate(t);
  CHECK(screen(grid.model(s)).cls != StabilityClass::stable);

  const auto traj = simulate(grid.model(s), 3.0);
  // the oscillation grows over the run
  const auto n = static_cast<Eigen::Index>(traj.steps());
  const double early = traj.omega.leftCols(n / 3).cwiseAbs().maxCoeff();
  const double late = traj.omega.rightCols(n / 3).cwiseAbs().maxCoeff();
  CHECK(late > early);
}

TEST_CASE("zero gain cannot destabilize") {
  const auto grid = load_grid_case("ieee14");
  ScenarioConfig cfg;
  cfg.gain_min_pu = 0.0;
  cfg.gain_max_pu = 0.0;
  cfg.max_rejections = 20;
  Rng rng(1);
  CHECK_THROWS_AS(sample_scenario(rng, grid, cfg), SamplingError);
}

TEST_CASE("sampled scenarios respect the placement invariants") {
  const auto grid = load_grid_case("ieee14");
  const auto& t = grid.topology;
  for (auto kind : {AttackKind::single_point, AttackKind::multi_point}) {
    ScenarioConfig cfg;
    cfg.kind = kind;
    for (std::uint64_t i = 0; i < 30; ++i) {
      auto rng = make_rng(3, streams::scenario, i);
      const auto s = sample_scenario(rng, grid, cfg);
      CHECK_NOTHROW(s.validate(t));
      CHECK(screen(grid.model(s)).cls != StabilityClass::stable);
      const auto row = static_cast<Eigen::Index>(t.load_ordinal(s.label_bus));
      CHECK((s.gain.array() != 0.0).count() == 1);
      const double g = s.gain.row(row).cwiseAbs().maxCoeff();
      CHECK(g >= grid.gain_min_pu);
      CHECK(g <= grid.gain_max_pu);
      for (Eigen::Index v = 0; v < s.epsilon_mw.size(); ++v) {
        if (s.epsilon_mw[v] != 0.0) {
          CHECK(s.epsilon_mw[v] >= cfg.eps_min_mw);
          CHECK(s.epsilon_mw[v] <= cfg.eps_max_mw);
        }
      }
      if (kind == AttackKind::multi_point) {
        CHECK(s.epsilon_mw[row] == 0.0);
        const auto n_static = (s.epsilon_mw.array() != 0.0).count();
        CHECK(n_static >= 1);
        CHECK(n_static <= 3);
      }
    }
  }
}

TEST_CASE("accepted gains form an up-closed set on ieee14") {
  const auto grid = load_grid_case("ieee14");
  const auto& t = grid.topology;
  const int steps = 120;
  const double gmax = 2.0 * grid.gain_max_pu;
  int pairs_with_threshold = 0;
  for (std::size_t v = 0; v < t.n_load(); ++v) {
    for (std::size_t g = 0; g < t.n_gen(); ++g) {
      auto s = AttackScenario::none(t.n_load(), t.n_gen());
      bool seen_accept = false;
      bool up_closed = true;
      for (int k = 0; k <= steps; ++k) {
        s.gain(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(g)) = gmax * k / steps;
        const bool accept = screen(grid.model(s)).cls != StabilityClass::stable;
        if (seen_accept && !accept) up_closed = false;
        seen_accept = seen_accept || accept;
      }
      CAPTURE(v);
      CAPTURE(g);
      CHECK(up_closed);
      pairs_with_threshold += seen_accept;
    }
  }
  CHECK(pairs_with_threshold > 0);
}

TEST_CASE("attack limit") {
  const auto grid = load_grid_case("ieee14");
  const auto& t = grid.topology;
  const auto plv = grid.vulnerable_load_mw();

  SUBCASE("no gain always satisfies it") {
    auto s = AttackScenario::none(t.n_load(), t.n_gen());
    s.epsilon_mw[0] = 2.0;
    const auto traj = simulate(grid.model(s));
    CHECK(validate_limit(s, traj, plv, t.base_mva));
  }
  SUBCASE("static step equal to the vulnerable load leaves no headroom") {
    auto s = AttackScenario::none(t.n_load(), t.n_gen());
    s.epsilon_mw[3] = plv[3];
    s.gain(3, 0) = 0.01;
    const auto traj = simulate(grid.model(s));
    CHECK_FALSE(validate_limit(s, traj, plv, t.base_mva));
  }
  SUBCASE("static step above the vulnerable load is a range error") {
    auto s = AttackScenario::none(t.n_load(), t.n_gen());
    s.epsilon_mw[3] = plv[3] + 1.0;
    const auto traj = simulate(grid.model(s), 0.1);
    CHECK_THROWS_AS(check_limit(s, traj, plv, t.base_mva), RangeError);
  }
  SUBCASE("margin matches a pointwise recomputation") {
    auto rng = make_rng(9, streams::scenario, 0);
    const auto s = sample_scenario(rng, grid, {});
    const auto traj = simulate(grid.model(s));
    double margin = 1e300;
    for (Eigen::Index v = 0; v < s.gain.rows(); ++v) {
      const bool gain = (s.gain.row(v).array() != 0.0).any();
      if (!gain && s.epsilon_mw[v] == 0.0) continue;
      double worst = 0.0;
      for (std::size_t k = 0; k < traj.steps(); ++k) {
        double acc = 0.0;
        for (Eigen::Index g = 0; g < s.gain.cols(); ++g) {
          acc += s.gain(v, g) * t.base_mva * traj.omega(g, static_cast<Eigen::Index>(k));
        }
        worst = std::max(worst, std::abs(acc));
      }
      margin = std::min(margin, (plv[v] - s.epsilon_mw[v]) / 2.0 - worst);
    }
    const auto lc = check_limit(s, traj, plv, t.base_mva);
    CHECK(lc.margin_mw == doctest::Approx(margin).epsilon(1e-12));
    CHECK(lc.ok == (margin >= 0));
  }
}

TEST_CASE("RK4 on closed-form systems") {
  SUBCASE("Hurwitz with no input stays at rest") {
    const auto traj = simulate(diagonal_model(-1.0, 0.0), 2.0);
    CHECK(traj.delta.cwiseAbs().maxCoeff() == 0.0);
    CHECK(traj.omega.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("x' = -x + 1") {
    const auto traj = simulate(diagonal_model(-1.0, 1.0), 2.0);
    REQUIRE(traj.steps() == 2001);
    CHECK(std::abs(traj.delta(0, 2000) - (1.0 - std::exp(-2.0))) < 1e-9);
    CHECK(std::abs(traj.omega(0, 2000) - (1.0 - std::exp(-2.0))) < 1e-9);
  }
  SUBCASE("a growing mode is flagged once it overflows") {
    const auto traj = simulate(diagonal_model(400.0, 1.0), 3.0);
    CHECK(traj.diverged);
    CHECK(traj.divergence_time > 0.0);
  }
}

TEST_CASE("RK4 matches the exact discretization on ieee14") {
  const auto grid = load_grid_case("ieee14");
  const auto r = check_rk4_vs_expm(grid, 5, 2);
  CAPTURE(r.detail);
  CHECK(r.passed);
  CHECK(r.value <= 1e-6);
}

TEST_CASE("screen agrees with the free response away from the stability boundary") {
  const auto grid = load_grid_case("ieee14");
  const auto& t = grid.topology;
  Rng rng(44);
  std::normal_distribution<double> n01;
  int judged = 0;
  for (int k = 0; k < 400 && judged < 40; ++k) {
    auto s = AttackScenario::none(t.n_load(), t.n_gen());
    s.gain(static_cast<Eigen::Index>(rng() % t.n_load()), static_cast<Eigen::Index>(rng() % t.n_gen())) =
        std::uniform_real_distribution<double>(0.0, 2.0 * grid.gain_max_pu)(rng);
    const auto model = grid.model(s);
    double abscissa = -1e300;
    for (const auto& e : eigenvalues(model.a)) abscissa = std::max(abscissa, e.real());
    if (std::abs(abscissa) < 0.5) continue;
    ++judged;
    Vector x0(model.a.rows());
    for (auto& v : x0) v = n01(rng);
    const auto norms = simulate_free_norms(model.a, x0 / x0.norm(), 10.0, 0.005);
    const double ratio = norms.back() / norms.front();
    const auto cls = screen(model).cls;
    CAPTURE(abscissa);
    CAPTURE(ratio);
    if (abscissa > 0) {
      CHECK(cls == StabilityClass::unstable);
      CHECK(ratio >= 10.0);
    } else {
      CHECK(cls != StabilityClass::unstable);
      CHECK(ratio <= 0.1);
    }
  }
  CHECK(judged >= 20);
}

TEST_CASE("screen oracle reports its counts") {
  const auto grid = load_grid_case("ieee14");
  ScreenOracleStats st;
  const auto r = check_screen_vs_time_domain(grid, 20, 4, 10.0, &st);
  CHECK(st.unstable + st.stable + st.semi_unstable == 20);
  CHECK(r.passed == (st.unstable_failed == 0 && st.stable_failed == 0));
}

TEST_CASE("PMU windows") {
  SUBCASE("zero trajectory reads nominal") {
    const auto traj = simulate(diagonal_model(-1.0, 0.0), 3.0);
    const auto w = to_pmu_window(traj, 0.0);
    CHECK(w.t_len == 100);
    CHECK(w.n_gen == 1);
    for (std::size_t k = 0; k < w.t_len; ++k) {
      CHECK(w.frequency(0, k) == 50.0f);
      CHECK(w.angle(0, k) == 0.0f);
    }
  }
  SUBCASE("frequency is nominal plus omega over 2 pi") {
    const auto traj = simulate(diagonal_model(-1.0, 1.0), 3.0);
    const auto w = to_pmu_window(traj, 0.0);
    CHECK(w.frequency(0, 50) == doctest::Approx(50.0 + traj.omega(0, 1000) / (2 * M_PI)));
    CHECK(w.angle(0, 50) == doctest::Approx(traj.delta(0, 1000)));
  }
  SUBCASE("a start offset equals slicing a shifted trajectory") {
    const auto grid = load_grid_case("ieee14");
    auto rng = make_rng(5, streams::scenario, 0);
    const auto traj = simulate(grid.model(sample_scenario(rng, grid, {})));
    const auto a = to_pmu_window(traj, 0.5);
    const auto b = to_pmu_window(shifted(traj, 500), 0.0);
    CHECK(a.data == b.data);
  }
  SUBCASE("a window past the end is a range error") {
    const auto traj = simulate(diagonal_model(-1.0, 0.0), 2.0);
    CHECK_THROWS_AS(to_pmu_window(traj, 0.5), RangeError);
  }
}

}  // TEST_SUITE
