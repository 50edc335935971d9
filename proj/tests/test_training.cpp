#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "gridcaps/capsnet.hpp"
#include "gridcaps/errors.hpp"
#include "gridcaps/training.hpp"

using namespace gridcaps;

namespace {

// Two generators, 20 steps, three shapes on generator 0: +sin, -sin, cos at
// three times the frequency. Easy to separate once noise is small.
Dataset toy(std::size_t n, std::uint64_t seed) {
  Dataset ds;
  ds.case_name = "toy";
  ds.n_gen = 2;
  ds.t_len = 20;
  ds.class_map = {1, 2, 3};
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 0.003);
  std::uniform_real_distribution<double> phase(-0.3, 0.3);
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.id = i;
    s.class_index = static_cast<int>(i % 3);
    s.label_bus = ds.class_map[static_cast<std::size_t>(s.class_index)];
    s.window = PmuWindow(2, 20);
    const double ph = phase(rng);
    for (std::size_t t = 0; t < 20; ++t) {
      const double x = 2 * M_PI * t / 20.0 + ph;
      const double sig = s.class_index == 0 ? std::sin(x) : s.class_index == 1 ? -std::sin(x) : std::cos(3 * x);
      for (std::size_t g = 0; g < 2; ++g) {
        const double dev = (g == 0 ? 0.05 * sig : 0.0) + noise(rng);
        s.window.at(g, t, 0) = static_cast<float>(kNominalHz + dev);
        s.window.at(g, t, 1) = static_cast<float>(2.0 * dev + noise(rng));
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

nlohmann::json toy_mlp() { return {{"kind", "mlp"}, {"input", {2, 20, 2}}, {"classes", 3}, {"dropout", 0.1}}; }

nlohmann::json toy_caps() { return {{"kind", "capsnet"}, {"plan", to_json(reduced_plan())}}; }

TrainConfig quick(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 8;
  c.optim.lr = 1e-2;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("normalized windows") {
  const auto ds = toy(3, 1);
  std::vector<double> out(2 * 20 * 2);
  normalize_window(ds.samples[0].window, out.data());
  for (int ch = 0; ch < 2; ++ch) {
    double ss = 0.0;
    for (std::size_t t = 0; t < 20; ++t) {
      const double a = out[t * 2 + ch], b = out[(20 + t) * 2 + ch];
      CHECK(std::abs(a + b) < 1e-12);
      ss += a * a + b * b;
    }
    CHECK(std::sqrt(ss / 40) == doctest::Approx(1.0));
  }

  // common-mode motion and overall scale drop out
  auto shifted = ds.samples[0].window;
  for (std::size_t t = 0; t < 20; ++t) {
    for (std::size_t g = 0; g < 2; ++g) {
      shifted.at(g, t, 0) = static_cast<float>(kNominalHz + 3.0 * (shifted.at(g, t, 0) - kNominalHz) + 0.01 * t);
      shifted.at(g, t, 1) = 3.0f * shifted.at(g, t, 1) - 0.2f;
    }
  }
  std::vector<double> again(out.size());
  normalize_window(shifted, again.data());
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(again[i] == doctest::Approx(out[i]).epsilon(1e-4));

  PmuWindow flat(2, 20);
  for (std::size_t i = 0; i < flat.data.size(); i += 2) flat.data[i] = static_cast<float>(kNominalHz);
  normalize_window(flat, out.data());
  for (double v : out) CHECK(v == 0.0);

  const auto batch = make_batch<float>(ds, {2, 0});
  CHECK(batch.shape == std::vector<int>{2, 2, 20, 2});
  normalize_window(ds.samples[2].window, out.data());
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(batch[i] == doctest::Approx(out[i]).epsilon(1e-6));
}

TEST_CASE("separable toy is learned within five epochs") {
  const auto train = toy(60, 2), val = toy(30, 3);
  for (const auto& arch : {toy_mlp(), toy_caps()}) {
    CAPTURE(arch.at("kind"));
    auto model = make_model<float>(arch, 5);
    const auto hist = train_model(*model, train, val, quick(5));
    CHECK(hist.best_val_acc == 1.0);
    CHECK(evaluate(*model, val).accuracy == 1.0);
    CHECK(predict(*model, val.samples[4].window) == val.samples[4].class_index);
  }
}

TEST_CASE("the same seed gives the same checkpoint bytes") {
  const auto train = toy(30, 4), val = toy(9, 5);
  auto run = [&](std::uint64_t seed) {
    auto model = make_model<float>(toy_caps(), seed);
    auto cfg = quick(2);
    cfg.seed = seed;
    train_model(*model, train, val, cfg);
    return serialize(make_checkpoint(*model, {{"seed", seed}}));
  };
  const auto a = run(1);
  CHECK(a == run(1));
  CHECK(a != run(2));

  const auto ck = parse_checkpoint(a);
  auto back = model_from_checkpoint(ck);
  auto again = make_model<float>(toy_caps(), 1);
  train_model(*again, train, val, [] {
    auto c = quick(2);
    c.seed = 1;
    return c;
  }());
  CHECK(predict(*back, val) == predict(*again, val));
}

TEST_CASE("early stopping and history") {
  const auto train = toy(30, 6), val = toy(9, 7);
  auto model = make_model<float>(toy_mlp(), 2);
  auto cfg = quick(60);
  cfg.patience = 3;
  const auto hist = train_model(*model, train, val, cfg);
  CHECK(hist.epochs.size() < 60);
  CHECK(static_cast<int>(hist.epochs.size()) == hist.best_epoch + cfg.patience);
  double best = 0.0;
  for (const auto& e : hist.epochs) best = std::max(best, e.val_acc);
  CHECK(hist.best_val_acc == best);
  CHECK(evaluate(*model, val).accuracy == hist.best_val_acc);

  std::istringstream csv(hist.to_csv());
  std::string line;
  std::getline(csv, line);
  CHECK(line == "epoch,train_loss,train_acc,val_loss,val_acc");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 4);
  }
  CHECK(rows == hist.epochs.size());
}

TEST_CASE("training rejects bad inputs") {
  const auto train = toy(9, 8);
  auto model = make_model<float>(toy_mlp(), 1);
  Dataset empty = train;
  empty.samples.clear();
  CHECK_THROWS_AS(train_model(*model, empty, train, quick(1)), ConfigError);
  auto wrong = make_model<float>({{"kind", "mlp"}, {"input", {2, 20, 2}}, {"classes", 4}}, 1);
  CHECK_THROWS_AS(train_model(*wrong, train, train, quick(1)), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"epochs", 0}}), ConfigError);
  const auto c = train_config_from_json(to_json(quick(7)));
  CHECK(c.epochs == 7);
  CHECK(c.optim.lr == doctest::Approx(1e-2));

  auto diverge = quick(3);
  diverge.optim.lr = 1e30;
  auto m = make_model<float>(toy_mlp(), 1);
  CHECK_THROWS_AS(train_model(*m, train, train, diverge), TrainingError);
}

}  // TEST_SUITE
