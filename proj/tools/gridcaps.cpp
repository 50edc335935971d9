// gridcaps: case inspection, dataset generation, training, evaluation and
// self-checks for D-LAA localization from PMU windows.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridcaps/config.hpp"
#include "gridcaps/errors.hpp"
#include "gridcaps/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace gridcaps;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumeric = 4 };

struct Flags {
  std::string config_path;
  bool dump_config = false;
  std::optional<std::string> case_name, data_dir, out, kind, suite, model;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n;
  std::optional<int> epochs;
  std::optional<double> snr, delay;
  std::vector<double> drop_frac, outlier_frac;
  std::vector<std::string> models;
  bool verbose = false;
  bool train_degraded = false;
  int latency = -1;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_path, "JSON run config; flags override its values");
  cmd->add_flag("--dump-config", f.dump_config, "Print the effective config and exit");
  cmd->add_option("--case", f.case_name, "ieee14 | ieee39 | ieee57");
  cmd->add_option("--seed", f.seed, "Run seed");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--data-dir", f.data_dir, "Directory with cases/ and params/");
}

void add_degradation(CLI::App* cmd, Flags& f) {
  cmd->add_option("--snr", f.snr, "Gaussian noise SNR (dB)");
  cmd->add_option("--drop-frac", f.drop_frac, "Missing-point fraction, or lo hi")->expected(1, 2);
  cmd->add_option("--outlier-frac", f.outlier_frac, "Outlier fraction, or lo hi")->expected(1, 2);
  cmd->add_option("--delay", f.delay, "Window delay (s)");
}

std::pair<double, double> as_range(const std::vector<double>& v) {
  return v.size() == 1 ? std::make_pair(v[0], v[0]) : std::make_pair(v[0], v[1]);
}

RunConfig resolve(const Flags& f, const std::string& command) {
  RunConfig c = f.config_path.empty() ? run_config_from_json(nlohmann::json::object())
                                      : load_run_config(f.config_path);
  if (f.case_name) c.case_name = *f.case_name;
  if (f.seed) {
    c.seed = *f.seed;
    c.train.seed = *f.seed;
  }
  if (f.out) c.out = *f.out;
  if (f.data_dir) c.data_dir = *f.data_dir;
  if (f.kind) c.scenario.kind = attack_kind_from_string(*f.kind);
  if (f.n) c.n_samples = *f.n;
  if (f.epochs) c.train.epochs = *f.epochs;
  if (f.model) c.model = *f.model;
  if (f.suite) c.suite = *f.suite;
  if (!f.models.empty()) c.eval_models = f.models;
  if (f.verbose) c.train.verbose = true;
  if (f.train_degraded) c.train_degraded = true;
  if (f.latency >= 0) c.latency_repeats = f.latency;
  if (command == "eval") {
    // Degradation flags narrow the suite grid to the given level.
    if (f.snr) c.suite_grid.snr_db = {*f.snr};
    if (!f.drop_frac.empty()) std::tie(c.suite_grid.drop_lo, c.suite_grid.drop_hi) = as_range(f.drop_frac);
    if (!f.outlier_frac.empty()) {
      std::tie(c.suite_grid.outlier_lo, c.suite_grid.outlier_hi) = as_range(f.outlier_frac);
    }
    if (f.delay) c.suite_grid.delays_s = {*f.delay};
  } else {
    nlohmann::json d = to_json(c.degradation);
    if (f.snr) d["snr_db"] = *f.snr;
    if (!f.drop_frac.empty()) d["drop_frac"] = f.drop_frac.size() == 1 ? nlohmann::json(f.drop_frac[0]) : nlohmann::json(f.drop_frac);
    if (!f.outlier_frac.empty()) {
      d["outlier_frac"] = f.outlier_frac.size() == 1 ? nlohmann::json(f.outlier_frac[0]) : nlohmann::json(f.outlier_frac);
    }
    if (f.delay) d["delay_s"] = *f.delay;
    c.degradation = degradation_from_json(d);
  }
  c.validate();
  return c;
}

GridCase grid_for(const RunConfig& c) {
  return load_grid_case(c.case_name, c.data_dir.empty() ? default_data_dir() : fs::path(c.data_dir));
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("write failed: " + path.string());
}

int cmd_inspect(const RunConfig& c) {
  const auto grid = grid_for(c);
  const auto& t = grid.topology;
  const auto model = grid.model(AttackScenario::none(t.n_load(), t.n_gen()));
  const auto rep = screen(model);
  std::cout << "case " << grid.name << "\n";
  std::cout << "N_G " << t.n_gen() << "  generator buses:";
  for (int b : t.generator_buses) std::cout << ' ' << b;
  std::cout << "\nN_L " << t.n_load() << "  load buses:";
  for (int b : t.load_buses) std::cout << ' ' << b;
  std::cout << "\ngain search range (pu) [" << grid.gain_min_pu << ", " << grid.gain_max_pu << "]\n";
  std::cout << "attack-free eigenvalues:\n";
  for (const auto& e : rep.eigenvalues) {
    std::printf("  %+.6f %+.6fj\n", e.real(), e.imag());
  }
  std::cout << "stability " << to_string(rep.cls) << "\n";
  return kOk;
}

int cmd_gen(const RunConfig& c) {
  const auto grid = grid_for(c);
  const auto all = generate_samples(grid, c.generation());
  SplitDegradation deg;
  deg.test = c.degradation;
  if (c.train_degraded) deg.train = deg.val = c.degradation;
  auto parts = build_dataset(all, c.split, c.seed, deg, &grid);
  const auto kind = to_string(c.scenario.kind);
  const nlohmann::json run = to_json(c);
  for (auto* ds : {&parts.train, &parts.val, &parts.test}) {
    ds->provenance["run_config"] = run;
    const auto path = c.dataset_path(kind, ds->split);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    save_dataset(*ds, path);
    std::cout << to_string(ds->split) << ' ' << ds->size() << ' ' << path.string() << ' ' << sha256_file(path)
              << '\n';
  }
  return kOk;
}

int cmd_train(const RunConfig& c) {
  const auto kind = to_string(c.scenario.kind);
  const auto train_path = c.dataset_path(kind, Split::train);
  const auto val_path = c.dataset_path(kind, Split::val);
  const auto train = load_dataset(train_path);
  const auto val = load_dataset(val_path);
  const auto arch = default_architecture(c.model, train.case_name, static_cast<int>(train.n_gen),
                                         static_cast<int>(train.t_len), static_cast<int>(train.n_classes()));
  auto model = make_model<float>(arch, c.seed);
  const auto hist = train_model(*model, train, val, c.train);
  nlohmann::json run = to_json(c);
  run["train_sha256"] = sha256_file(train_path);
  run["val_sha256"] = sha256_file(val_path);
  run["class_map"] = train.class_map;
  run["best_epoch"] = hist.best_epoch;
  const auto ckpt_path = c.checkpoint_path(c.model);
  if (ckpt_path.has_parent_path()) fs::create_directories(ckpt_path.parent_path());
  save_checkpoint(make_checkpoint(*model, run), ckpt_path);
  write_text(c.history_path(c.model), hist.to_csv());
  std::cout << c.model << " best epoch " << hist.best_epoch << " val acc " << hist.best_val_acc << " -> "
            << ckpt_path.string() << '\n';
  return kOk;
}

int cmd_eval(const RunConfig& c) {
  std::vector<std::unique_ptr<Classifier<float>>> owned;
  std::vector<NamedModel> models;
  for (const auto& name : c.eval_models) {
    const auto path = c.checkpoint_path(name);
    if (!fs::exists(path)) throw ConfigError("no checkpoint for model '" + name + "' at " + path.string());
    owned.push_back(model_from_checkpoint(load_checkpoint(path)));
    models.push_back({name, owned.back().get()});
  }
  std::optional<Dataset> single, multi;
  const auto single_path = c.dataset_path("single_point", Split::test);
  const auto multi_path = c.dataset_path("multi_point", Split::test);
  if (fs::exists(single_path)) single = load_dataset(single_path);
  if (fs::exists(multi_path)) multi = load_dataset(multi_path);
  std::optional<GridCase> grid;
  if (c.suite == "delay") grid = grid_for(c);

  SuiteData data;
  data.single_test = single ? &*single : nullptr;
  data.multi_test = multi && c.suite == "clean" ? &*multi : nullptr;
  data.grid = grid ? &*grid : nullptr;
  auto report = run_suite(c.suite, models, data, c.suite_config());
  report.config = to_json(c);
  const auto path = c.report_path(c.suite);
  write_text(path, report.to_csv());
  for (const auto& r : report.rows) {
    std::printf("%-8s %-22s %.4f\n", r.model.c_str(), r.condition.c_str(), r.accuracy);
  }
  std::cout << "report " << path.string() << '\n';
  return kOk;
}

int cmd_selfcheck(const RunConfig& c) {
  const auto grid = grid_for(c);
  const std::vector<CheckResult> results = {
      check_rk4_vs_expm(grid, 20, c.seed),
      check_layer_gradients(c.seed),
      check_capsnet_gradients(c.seed),
      check_routing_invariants(1000, c.seed),
      check_capsule_scalars(10000, c.seed),
      check_snr_roundtrip(grid, {26.0, 20.0, 16.5}, 100, c.seed),
      check_screen_vs_time_domain(grid, 50, c.seed),
  };
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  value " << r.value << "  bound " << r.tolerance;
    if (!r.detail.empty()) std::cout << "  (" << r.detail << ")";
    std::cout << '\n';
    ok = ok && r.passed;
  }
  return ok ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gridcaps: capsule-network localization of load-altering attacks from PMU data"};
  app.require_subcommand(1);
  Flags f;

  auto* inspect = app.add_subcommand("inspect", "Print case dimensions, attack-free eigenvalues and stability");
  add_common(inspect, f);

  auto* gen = app.add_subcommand("gen", "Generate and split a labeled dataset");
  add_common(gen, f);
  gen->add_option("--n", f.n, "Number of samples");
  gen->add_option("--kind", f.kind, "single_point | multi_point");
  gen->add_flag("--train-degraded", f.train_degraded, "Apply the degradation to train/val as well");
  add_degradation(gen, f);

  auto* train = app.add_subcommand("train", "Train a model on a generated split");
  add_common(train, f);
  train->add_option("--model", f.model, "capsnet | mlp | cnn1d | cnn2d");
  train->add_option("--kind", f.kind, "Dataset kind to train on");
  train->add_option("--epochs", f.epochs, "Maximum epochs");
  train->add_flag("--verbose", f.verbose, "Per-epoch progress on stderr");

  auto* eval = app.add_subcommand("eval", "Run an evaluation suite and write a report CSV");
  add_common(eval, f);
  eval->add_option("--suite", f.suite, "clean | noise | missing_outlier | delay");
  eval->add_option("--model", f.models, "Models to evaluate (repeatable)");
  eval->add_option("--latency", f.latency, "Also time this many single-window passes");
  add_degradation(eval, f);

  auto* selfcheck = app.add_subcommand("selfcheck", "Gradient, routing, simulator and SNR oracles");
  add_common(selfcheck, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const RunConfig c = resolve(f, command);
    if (f.dump_config) {
      std::cout << to_json(c).dump(2) << '\n';
      return kOk;
    }
    if (command == "inspect") return cmd_inspect(c);
    if (command == "gen") return cmd_gen(c);
    if (command == "train") return cmd_train(c);
    if (command == "eval") return cmd_eval(c);
    return cmd_selfcheck(c);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
