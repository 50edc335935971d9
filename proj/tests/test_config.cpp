#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gridcaps/config.hpp"
#include "gridcaps/errors.hpp"

using namespace gridcaps;

TEST_SUITE("config") {

TEST_CASE("defaults round trip") {
  const RunConfig c;
  CHECK_NOTHROW(c.validate());
  const auto j = to_json(c);
  CHECK(to_json(run_config_from_json(j)) == j);
  CHECK(c.n_samples == 2000);
  CHECK(c.train.epochs == 100);
  CHECK(c.train.batch_size == 32);
  CHECK(c.train.patience == 10);
  CHECK(c.suite_grid.delays_s.size() == 11);
}

TEST_CASE("edited values survive a round trip") {
  auto j = to_json(RunConfig{});
  j["case"] = "ieee39";
  j["seed"] = 42;
  j["gen"]["n"] = 500;
  j["gen"]["gain_range_pu"] = {0.5, 3.0};
  j["degradation"]["snr_db"] = 20.0;
  j["eval"]["seeds"] = {1, 2};
  j["eval"]["delays_s"] = {0.0, 0.5};
  const auto c = run_config_from_json(j);
  CHECK(c.case_name == "ieee39");
  CHECK(c.n_samples == 500);
  CHECK(c.scenario.gain_min_pu == 0.5);
  CHECK(c.degradation.snr_db == 20.0);
  CHECK(c.suite_config().seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(c.suite_config().delays_s == std::vector<double>{0.0, 0.5});
  CHECK(to_json(run_config_from_json(to_json(c))) == to_json(c));
  CHECK(c.generation().seed == 42);
}

TEST_CASE("the train seed follows the run seed unless given") {
  CHECK(run_config_from_json({{"seed", 9}}).train.seed == 9);
  CHECK(run_config_from_json({{"seed", 9}, {"train", {{"seed", 2}}}}).train.seed == 2);
  CHECK(run_config_from_json({{"seed", 9}}).suite_config().seeds == std::vector<std::uint64_t>{9});
}

TEST_CASE("unknown keys and bad values are config errors") {
  CHECK_THROWS_AS(run_config_from_json({{"sed", 1}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"gen", {{"samples", 10}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"train", {{"lr", 0.1}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"eval", {{"suites", "noise"}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"seed", "seven"}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"gen", {{"split", {0.5, 0.5}}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json::array()), ConfigError);

  auto bad = [](auto edit) {
    RunConfig c;
    edit(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  bad([](RunConfig& c) { c.n_samples = 0; });
  bad([](RunConfig& c) { c.model = "rnn"; });
  bad([](RunConfig& c) { c.eval_models = {"mlp", "svm"}; });
  bad([](RunConfig& c) { c.suite = "weather"; });
  bad([](RunConfig& c) { c.split = {0.8, 0.1, 0.2}; });
  bad([](RunConfig& c) { c.dt_s = 0.01; });
  bad([](RunConfig& c) { c.duration_s = 1.0; });
  bad([](RunConfig& c) { c.suite_grid.delays_s = {1.5}; });
  bad([](RunConfig& c) { c.latency_repeats = -1; });
}

TEST_CASE("artifact paths") {
  RunConfig c;
  c.out = "o";
  CHECK(c.dataset_path("single_point", Split::test) == std::filesystem::path("o/ieee14_single_point_test.gcap"));
  CHECK(c.checkpoint_path("mlp") == std::filesystem::path("o/ieee14_mlp.gckp"));
  CHECK(c.history_path("capsnet") == std::filesystem::path("o/ieee14_capsnet_history.csv"));
  CHECK(c.report_path("delay") == std::filesystem::path("o/ieee14_delay_report.csv"));
}

TEST_CASE("config files") {
  const auto dir = std::filesystem::temp_directory_path() / "gridcaps_test_config";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "ok.json") << R"({"case": "ieee57", "train": {"epochs": 3}})";
    std::ofstream(dir / "broken.json") << R"({"case": )";
  }
  const auto c = load_run_config(dir / "ok.json");
  CHECK(c.case_name == "ieee57");
  CHECK(c.train.epochs == 3);
  CHECK_THROWS_AS(load_run_config(dir / "broken.json"), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir / "absent.json"), ConfigError);
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
