#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "gridcaps/dataset.hpp"
#include "gridcaps/errors.hpp"
#include "gridcaps/eval.hpp"

using namespace gridcaps;

namespace {

const GridCase& ieee14() {
  static const GridCase grid = load_grid_case("ieee14");
  return grid;
}

const Dataset& test_set() {
  static const Dataset ds = [] {
    GenerationConfig gc;
    gc.n_samples = 45;
    gc.seed = 21;
    auto d = generate_samples(ieee14(), gc);
    d.split = Split::test;
    return d;
  }();
  return ds;
}

std::unique_ptr<Classifier<float>> untrained(const std::string& kind, std::uint64_t seed) {
  return make_model<float>(default_architecture(kind, "ieee14", 5, 100, 9), seed);
}

}  // namespace

TEST_SUITE("eval-harness") {

TEST_CASE("episode accuracy") {
  const std::vector<int> labels(100, 1);
  CHECK(episode_accuracy(labels, labels, 5) == 1.0);

  std::vector<int> preds(100, 0);
  for (int i = 0; i < 37; ++i) preds[static_cast<std::size_t>(i * 2)] = 1;
  CHECK(episode_accuracy(preds, labels, 1) == doctest::Approx(0.37));

  std::vector<int> half(100, 0);
  for (int i = 0; i < 50; ++i) half[static_cast<std::size_t>(i)] = 1;
  CHECK(episode_accuracy(half, labels, 2) == doctest::Approx(0.5));

  // episodes of 3, 3 and 4; only the first is right
  const std::vector<int> l10(10, 2);
  std::vector<int> p10(10, 0);
  p10[0] = p10[1] = p10[2] = 2;
  CHECK(episode_accuracy(p10, l10, 3) == doctest::Approx(1.0 / 3.0));
  CHECK(episode_accuracy(p10, l10, 1) == doctest::Approx(0.3));

  CHECK(default_episodes(200) == 10);
  CHECK(default_episodes(7) == 1);
  CHECK_THROWS(episode_accuracy(p10, l10, 0));
  CHECK_THROWS(episode_accuracy(p10, labels, 1));
}

TEST_CASE("suites produce one row per model and condition") {
  auto mlp = untrained("mlp", 1);
  auto cnn = untrained("cnn1d", 1);
  const std::vector<NamedModel> models{{"mlp", mlp.get()}, {"cnn1d", cnn.get()}};
  SuiteData data{&test_set(), nullptr, &ieee14()};
  SuiteConfig cfg;
  cfg.seeds = {3};

  const auto delay = run_suite("delay", models, data, cfg);
  REQUIRE(delay.rows.size() == 22);
  CHECK(delay.rows[0].condition == "delay=0.0s");
  CHECK(delay.rows[3].condition == "delay=0.3s");
  CHECK(delay.rows[10].condition == "delay=1.0s");
  CHECK(delay.rows[11].model == "cnn1d");
  for (const auto& r : delay.rows) {
    CHECK(r.n_test == 45);
    CHECK(r.episodes == 2);
    CHECK(r.seed == 3);
    CHECK_FALSE(r.mean);
    CHECK(r.dataset_sha256.size() == 64);
  }

  const auto noise = run_suite("noise", models, data, cfg);
  REQUIRE(noise.rows.size() == 6);
  CHECK(noise.rows[0].condition == "snr=26dB");
  CHECK(noise.rows[2].condition == "snr=16.5dB");

  const auto mo = run_suite("missing_outlier", models, data, cfg);
  REQUIRE(mo.rows.size() == 4);
  CHECK(mo.rows[0].condition == "missing=0.03-0.05");
  CHECK(mo.rows[1].condition == "outlier=0.03-0.08");

  const auto clean = run_suite("clean", models, data, cfg);
  REQUIRE(clean.rows.size() == 2);
  CHECK(clean.rows[0].condition == "single_point");

  CHECK_THROWS_AS(run_suite("weather", models, data, cfg), ConfigError);
  CHECK_THROWS_AS(run_suite("delay", models, {&test_set(), nullptr, nullptr}, cfg), ConfigError);
  CHECK_THROWS_AS(run_suite("clean", models, {}, cfg), ConfigError);
}

TEST_CASE("rows do not depend on each other") {
  auto mlp = untrained("mlp", 2);
  SuiteData data{&test_set(), nullptr, &ieee14()};
  SuiteConfig all;
  all.seeds = {5};
  SuiteConfig one = all;
  one.snr_db = {20.0};
  const auto a = run_suite("noise", {{"mlp", mlp.get()}}, data, all);
  const auto b = run_suite("noise", {{"mlp", mlp.get()}}, data, one);
  CHECK(b.rows[0].accuracy == a.rows[1].accuracy);
  CHECK(b.rows[0].dataset_sha256 == a.rows[1].dataset_sha256);
}

TEST_CASE("several seeds add a mean row") {
  auto mlp = untrained("mlp", 3);
  SuiteConfig cfg;
  cfg.seeds = {1, 2, 3};
  cfg.snr_db = {16.5};
  const auto rep = run_suite("noise", {{"mlp", mlp.get()}}, {&test_set(), nullptr, nullptr}, cfg);
  REQUIRE(rep.rows.size() == 4);
  CHECK(rep.rows[3].mean);
  CHECK(rep.rows[3].accuracy ==
        doctest::Approx((rep.rows[0].accuracy + rep.rows[1].accuracy + rep.rows[2].accuracy) / 3.0));

  std::istringstream csv(rep.to_csv());
  std::string line;
  std::getline(csv, line);
  CHECK(line[0] == '#');
  std::getline(csv, line);
  CHECK(line.rfind("# config: ", 0) == 0);
  std::getline(csv, line);
  CHECK(line == EvalReport::header());
  std::vector<std::string> rows;
  while (std::getline(csv, line)) rows.push_back(line);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].rfind("mlp,ieee14,noise,snr=16.5dB,", 0) == 0);
  CHECK(rows[3].find(",mean,") != std::string::npos);
  for (const auto& r : rows) CHECK(std::count(r.begin(), r.end(), ',') == 9);
}

TEST_CASE("an untrained model sits near chance") {
  auto caps = untrained("capsnet", 4);
  const auto rep = run_suite("clean", {{"capsnet", caps.get()}}, {&test_set(), nullptr, nullptr}, {});
  CHECK(rep.rows[0].accuracy <= 0.4);
  std::set<int> labels;
  for (const auto& s : test_set().samples) labels.insert(s.class_index);
  CHECK(labels.size() > 3);
}

TEST_CASE("latency") {
  auto mlp = untrained("mlp", 5);
  const double ms = measure_latency(*mlp, test_set(), 5);
  CHECK(ms > 0.0);
  CHECK(ms < 100.0);
  SuiteConfig cfg;
  cfg.latency_repeats = 3;
  const auto rep = run_suite("clean", {{"mlp", mlp.get()}}, {&test_set(), nullptr, nullptr}, cfg);
  CHECK(rep.rows[0].latency_ms > 0.0);
  const auto plain = run_suite("clean", {{"mlp", mlp.get()}}, {&test_set(), nullptr, nullptr}, {});
  CHECK(plain.rows[0].latency_ms < 0.0);
}

}  // TEST_SUITE
