#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "gridcaps/capsnet.hpp"
#include "gridcaps/errors.hpp"
#include "gridcaps/selfcheck.hpp"

using namespace gridcaps;

namespace {

double norm(const double* v, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += v[i] * v[i];
  return std::sqrt(s);
}

Tensor<double> random_input(const CapsPlan& p, int n, std::uint64_t seed) {
  Tensor<double> x({n, p.n_gen, p.t_len, p.channels});
  Rng rng(seed);
  std::normal_distribution<double> d;
  for (auto& v : x.data) v = d(rng);
  return x;
}

}  // namespace

TEST_SUITE("capsnet") {

TEST_CASE("per-case plans") {
  const auto p14 = plan_for_case("ieee14");
  CHECK(p14.n_gen == 5);
  CHECK(p14.digit_count == 9);
  CHECK(p14.digit_dim == 16);
  const auto p39 = plan_for_case("ieee39");
  CHECK(p39.primary_count == 800);
  CHECK(p39.primary_dim == 8);
  CHECK(p39.digit_count == 29);
  CHECK(p39.digit_dim == 16);
  CHECK(p39.conv1_out() == std::array<int, 3>{10, 10, 512});
  const auto p57 = plan_for_case("ieee57");
  CHECK(p57.primary_count == 576);
  CHECK(p57.primary_dim == 16);
  CHECK(p57.digit_count == 50);
  CHECK(p57.digit_dim == 32);
  CHECK_THROWS_AS(plan_for_case("ieee118"), ConfigError);

  auto bad = p39;
  bad.primary_count = 801;
  CHECK_THROWS_AS(bad.validate(), StructuralError);
  CHECK(to_json(caps_plan_from_json(to_json(p57))) == to_json(p57));
}

TEST_CASE("ieee39 forward shape") {
  CapsNet<float> net(plan_for_case("ieee39"), 1);
  Tensor<float> x({1, 10, 100, 2});
  const auto out = net.forward(x, {});
  CHECK(out.shape == std::vector<int>{1, 29, 16});
  const auto scores = net.class_scores(out);
  CHECK(scores.shape == std::vector<int>{1, 29});
  for (float s : scores.data) {
    CHECK(s >= 0.0f);
    CHECK(s < 1.0f);
  }
  CHECK_THROWS_AS(net.forward(Tensor<float>({1, 7, 100, 2}), {}), StructuralError);
}

TEST_CASE("squash scalars") {
  double z[3] = {0, 0, 0}, v[3];
  squash(z, v, 3);
  CHECK(norm(v, 3) == 0.0);

  double unit[2] = {0.6, 0.8};
  squash(unit, v, 2);
  CHECK(norm(v, 2) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(v[0] / v[1] == doctest::Approx(0.75));

  double big[2] = {600.0, -800.0};
  squash(big, v, 2);
  CHECK(norm(v, 2) == doctest::Approx(1e6 / (1.0 + 1e6)).epsilon(1e-12));
  CHECK(norm(v, 2) < 1.0);
  CHECK(v[0] / v[1] == doctest::Approx(-0.75));

  const auto r = check_capsule_scalars(2000, 3);
  CAPTURE(r.detail);
  CHECK(r.passed);
}

TEST_CASE("one routing pass couples uniformly") {
  const int P = 6, Q = 4, dq = 3;
  std::vector<double> u(P * Q * dq);
  Rng rng(2);
  std::normal_distribution<double> d;
  for (auto& x : u) x = d(rng);
  RoutingTrace<double> tr;
  dynamic_routing(u.data(), P, Q, dq, 1, tr);
  for (int i = 0; i < P * Q; ++i) CHECK(tr.final_coupling()[i] == doctest::Approx(1.0 / Q));
  for (int q = 0; q < Q; ++q) {
    std::vector<double> s(dq, 0.0), v(dq);
    for (int p = 0; p < P; ++p)
      for (int k = 0; k < dq; ++k) s[static_cast<std::size_t>(k)] += u[static_cast<std::size_t>((p * Q + q) * dq + k)] / Q;
    squash(s.data(), v.data(), dq);
    for (int k = 0; k < dq; ++k) CHECK(tr.final_output()[q * dq + k] == doctest::Approx(v[static_cast<std::size_t>(k)]));
  }
}

TEST_CASE("routing favours the agreeing capsule") {
  const int P = 4, Q = 3, dq = 2;
  std::vector<double> u(P * Q * dq, 0.0);
  for (int p = 0; p < P; ++p) {
    auto at = [&](int q, int k) -> double& { return u[static_cast<std::size_t>((p * Q + q) * dq + k)]; };
    at(0, 0) = 1.0;  // all agree on class 0
    const double sgn = p % 2 ? 1.0 : -1.0;
    at(1, 1) = sgn;  // these cancel
    at(2, 0) = sgn;
  }
  RoutingTrace<double> tr;
  dynamic_routing(u.data(), P, Q, dq, 5, tr);
  for (int p = 0; p < P; ++p) {
    const double* c = tr.final_coupling() + p * Q;
    CHECK(c[0] > 1.0 / Q);
    CHECK(c[0] + c[1] + c[2] == doctest::Approx(1.0));
  }
  CHECK(norm(tr.final_output(), dq) > norm(tr.final_output() + dq, dq));

  const auto r = check_routing_invariants(200, 5);
  CAPTURE(r.detail);
  CHECK(r.passed);
}

TEST_CASE("margin loss") {
  CHECK(margin_loss({0.9, 0.1, 0.1}, 0) == 0.0);
  CHECK(margin_loss({0.0, 0.0, 0.0}, 0) == doctest::Approx(0.81));
  CHECK(margin_loss({1.0, 1.0}, 1) == doctest::Approx(0.5 * 0.81));
  Rng rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> len(9);
    for (auto& l : len) l = u(rng);
    const int label = static_cast<int>(rng() % 9);
    double ref = 0.0;
    for (int q = 0; q < 9; ++q) {
      const double l = len[static_cast<std::size_t>(q)];
      ref += q == label ? std::pow(std::max(0.0, 0.9 - l), 2) : 0.5 * std::pow(std::max(0.0, l - 0.1), 2);
    }
    CHECK(margin_loss(len, label) == doctest::Approx(ref).epsilon(1e-12));
  }
  CHECK_THROWS_AS(margin_loss({0.5}, 3), RangeError);
}

TEST_CASE("capsule network gradients") {
  const auto r = check_capsnet_gradients(11);
  CAPTURE(r.detail);
  CHECK(r.passed);
  CHECK(r.value <= 1e-4);
}

TEST_CASE("permuting the class order permutes the outputs") {
  const auto plan = reduced_plan();
  const std::vector<int> order{2, 0, 1};
  CapsNet<double> base(plan, 3);
  CapsNet<double> perm(plan, 3, order);
  const auto x = random_input(plan, 4, 8);
  const auto a = base.class_scores(base.forward(x, {}));
  const auto b = perm.class_scores(perm.forward(x, {}));
  for (int i = 0; i < 4; ++i)
    for (int q = 0; q < 3; ++q)
      CHECK(b[static_cast<std::size_t>(i * 3 + q)] ==
            doctest::Approx(a[static_cast<std::size_t>(i * 3 + order[static_cast<std::size_t>(q)])]).epsilon(1e-12));
  CHECK_THROWS_AS(CapsNet<double>(plan, 3, {0, 1}), StructuralError);
}

TEST_CASE("inference is deterministic and bounded") {
  const auto plan = reduced_plan();
  CapsNet<float> net(plan, 4);
  Tensor<float> x({5, plan.n_gen, plan.t_len, plan.channels});
  Rng rng(9);
  std::normal_distribution<float> d(0.0f, 3.0f);
  for (auto& v : x.data) v = d(rng);
  const auto a = net.forward(x, {});
  const auto b = net.forward(x, {});
  CHECK(a.data == b.data);
  for (float s : net.class_scores(a).data) CHECK(s < 1.0f);
  CapsNet<float> twin(plan, 4);
  CHECK(twin.forward(x, {}).data == a.data);
}

TEST_CASE("ties go to the lower class index") {
  const double s[4] = {0.2, 0.7, 0.7, 0.1};
  CHECK(argmax_lowest(s, 4) == 1);
  const double flat[3] = {0.5, 0.5, 0.5};
  CHECK(argmax_lowest(flat, 3) == 0);
}

}  // TEST_SUITE
