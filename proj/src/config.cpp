#include "gridcaps/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "gridcaps/errors.hpp"

namespace gridcaps {

namespace {

void check_keys(const nlohmann::json& j, const char* where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) throw ConfigError(std::string(where) + ": unknown key '" + item.key() + "'");
  }
}

std::pair<double, double> read_pair(const nlohmann::json& v, const char* key) {
  if (!v.is_array() || v.size() != 2) throw ConfigError(std::string(key) + " must be [lo, hi]");
  return {v[0].get<double>(), v[1].get<double>()};
}

}  // namespace

void RunConfig::validate() const {
  if (case_name.empty()) throw ConfigError("case is empty");
  if (n_samples == 0) throw ConfigError("gen.n must be positive");
  if (!(scenario.eps_min_mw > 0 && scenario.eps_max_mw >= scenario.eps_min_mw)) {
    throw ConfigError("gen.eps_range_mw must satisfy 0 < lo <= hi");
  }
  if ((scenario.gain_min_pu >= 0) != (scenario.gain_max_pu >= 0) ||
      (scenario.gain_min_pu >= 0 && scenario.gain_max_pu < scenario.gain_min_pu)) {
    throw ConfigError("gen.gain_range_pu must be null or [lo, hi] with 0 <= lo <= hi");
  }
  if (scenario.max_rejections < 1 || max_limit_retries < 1) throw ConfigError("gen retry budgets must be >= 1");
  if (!(normal_fraction >= 0 && normal_fraction <= 1)) throw ConfigError("gen.normal_fraction outside [0, 1]");
  const double fsum = split.train + split.val + split.test;
  if (split.train < 0 || split.val < 0 || split.test < 0 || std::abs(fsum - 1.0) > 1e-9) {
    throw ConfigError("gen.split fractions must be non-negative and sum to 1");
  }
  if (!(dt_s > 0 && dt_s <= 0.005)) throw ConfigError("gen.dt_s must be in (0, 0.005]");
  if (duration_s < kWindowSeconds) throw ConfigError("gen.duration_s shorter than the 2 s window");
  const auto kinds = model_kinds();
  auto known = [&](const std::string& m) { return std::find(kinds.begin(), kinds.end(), m) != kinds.end(); };
  if (!known(model)) throw ConfigError("unknown model kind '" + model + "'");
  for (const auto& m : eval_models) {
    if (!known(m)) throw ConfigError("unknown model kind '" + m + "'");
  }
  const auto suites = suite_names();
  if (std::find(suites.begin(), suites.end(), suite) == suites.end()) {
    throw ConfigError("unknown suite '" + suite + "'");
  }
  if (latency_repeats < 0) throw ConfigError("eval.latency_repeats must be >= 0");
  for (double d : suite_grid.delays_s) {
    if (d < 0 || d > 1.0 + 1e-9) throw ConfigError("eval.delays_s entries must lie in [0, 1]");
  }
}

std::filesystem::path RunConfig::dataset_path(const std::string& kind, Split s) const {
  return std::filesystem::path(out) / (case_name + "_" + kind + "_" + to_string(s) + ".gcap");
}

std::filesystem::path RunConfig::checkpoint_path(const std::string& model_kind) const {
  return std::filesystem::path(out) / (case_name + "_" + model_kind + ".gckp");
}

std::filesystem::path RunConfig::history_path(const std::string& model_kind) const {
  return std::filesystem::path(out) / (case_name + "_" + model_kind + "_history.csv");
}

std::filesystem::path RunConfig::report_path(const std::string& suite_name) const {
  return std::filesystem::path(out) / (case_name + "_" + suite_name + "_report.csv");
}

GenerationConfig RunConfig::generation() const {
  GenerationConfig g;
  g.n_samples = n_samples;
  g.seed = seed;
  g.scenario = scenario;
  g.duration_s = duration_s;
  g.dt_s = dt_s;
  g.max_limit_retries = max_limit_retries;
  g.normal_fraction = normal_fraction;
  return g;
}

SuiteConfig RunConfig::suite_config() const {
  SuiteConfig s = suite_grid;
  s.seeds = eval_seeds.empty() ? std::vector<std::uint64_t>{seed} : eval_seeds;
  s.latency_repeats = latency_repeats;
  return s;
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json gen = {
      {"n", c.n_samples},
      {"kind", to_string(c.scenario.kind)},
      {"eps_range_mw", {c.scenario.eps_min_mw, c.scenario.eps_max_mw}},
      {"gain_range_pu", nullptr},
      {"label_bus", nullptr},
      {"max_rejections", c.scenario.max_rejections},
      {"max_limit_retries", c.max_limit_retries},
      {"normal_fraction", c.normal_fraction},
      {"split", {c.split.train, c.split.val, c.split.test}},
      {"duration_s", c.duration_s},
      {"dt_s", c.dt_s},
      {"train_degraded", c.train_degraded},
  };
  if (c.scenario.gain_min_pu >= 0) gen["gain_range_pu"] = {c.scenario.gain_min_pu, c.scenario.gain_max_pu};
  if (c.scenario.label_bus) gen["label_bus"] = *c.scenario.label_bus;
  nlohmann::json train = to_json(c.train);
  train["verbose"] = c.train.verbose;
  const auto& g = c.suite_grid;
  return {{"case", c.case_name},
          {"seed", c.seed},
          {"data_dir", c.data_dir},
          {"out", c.out},
          {"gen", gen},
          {"degradation", to_json(c.degradation)},
          {"model", c.model},
          {"train", train},
          {"eval",
           {{"suite", c.suite},
            {"models", c.eval_models},
            {"seeds", c.eval_seeds},
            {"latency_repeats", c.latency_repeats},
            {"snr_db", g.snr_db},
            {"drop_frac", {g.drop_lo, g.drop_hi}},
            {"outlier_frac", {g.outlier_lo, g.outlier_hi}},
            {"delays_s", g.delays_s}}}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    check_keys(j, "config", {"case", "seed", "data_dir", "out", "gen", "degradation", "model", "train", "eval"});
    c.case_name = j.value("case", c.case_name);
    c.seed = j.value("seed", c.seed);
    c.data_dir = j.value("data_dir", c.data_dir);
    c.out = j.value("out", c.out);
    if (j.contains("gen")) {
      const auto& g = j.at("gen");
      check_keys(g, "gen",
                 {"n", "kind", "eps_range_mw", "gain_range_pu", "label_bus", "max_rejections", "max_limit_retries",
                  "normal_fraction", "split", "duration_s", "dt_s", "train_degraded"});
      c.n_samples = g.value("n", c.n_samples);
      if (g.contains("kind")) c.scenario.kind = attack_kind_from_string(g.at("kind").get<std::string>());
      if (g.contains("eps_range_mw")) {
        std::tie(c.scenario.eps_min_mw, c.scenario.eps_max_mw) = read_pair(g.at("eps_range_mw"), "gen.eps_range_mw");
      }
      if (g.contains("gain_range_pu") && !g.at("gain_range_pu").is_null()) {
        std::tie(c.scenario.gain_min_pu, c.scenario.gain_max_pu) =
            read_pair(g.at("gain_range_pu"), "gen.gain_range_pu");
        if (c.scenario.gain_min_pu < 0) throw ConfigError("gen.gain_range_pu must be non-negative");
      }
      if (g.contains("label_bus") && !g.at("label_bus").is_null()) c.scenario.label_bus = g.at("label_bus").get<int>();
      c.scenario.max_rejections = g.value("max_rejections", c.scenario.max_rejections);
      c.max_limit_retries = g.value("max_limit_retries", c.max_limit_retries);
      c.normal_fraction = g.value("normal_fraction", c.normal_fraction);
      if (g.contains("split")) {
        const auto& s = g.at("split");
        if (!s.is_array() || s.size() != 3) throw ConfigError("gen.split must be [train, val, test]");
        c.split = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
      }
      c.duration_s = g.value("duration_s", c.duration_s);
      c.dt_s = g.value("dt_s", c.dt_s);
      c.train_degraded = g.value("train_degraded", c.train_degraded);
    }
    if (j.contains("degradation")) c.degradation = degradation_from_json(j.at("degradation"));
    c.model = j.value("model", c.model);
    if (j.contains("train")) {
      auto t = j.at("train");
      check_keys(t, "train", {"epochs", "batch_size", "patience", "optimizer", "seed", "verbose"});
      const bool verbose = t.value("verbose", false);
      t.erase("verbose");
      c.train = train_config_from_json(t);
      c.train.verbose = verbose;
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      check_keys(e, "eval",
                 {"suite", "models", "seeds", "latency_repeats", "snr_db", "drop_frac", "outlier_frac", "delays_s"});
      c.suite = e.value("suite", c.suite);
      if (e.contains("models")) c.eval_models = e.at("models").get<std::vector<std::string>>();
      if (e.contains("seeds")) c.eval_seeds = e.at("seeds").get<std::vector<std::uint64_t>>();
      c.latency_repeats = e.value("latency_repeats", c.latency_repeats);
      auto& g = c.suite_grid;
      if (e.contains("snr_db")) g.snr_db = e.at("snr_db").get<std::vector<double>>();
      if (e.contains("drop_frac")) std::tie(g.drop_lo, g.drop_hi) = read_pair(e.at("drop_frac"), "eval.drop_frac");
      if (e.contains("outlier_frac")) {
        std::tie(g.outlier_lo, g.outlier_hi) = read_pair(e.at("outlier_frac"), "eval.outlier_frac");
      }
      if (e.contains("delays_s")) g.delays_s = e.at("delays_s").get<std::vector<double>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  // The train seed follows the run seed unless set explicitly.
  if (!(j.contains("train") && j.at("train").contains("seed"))) c.train.seed = c.seed;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace gridcaps
