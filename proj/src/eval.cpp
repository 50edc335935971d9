#include "gridcaps/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>

#include "gridcaps/errors.hpp"
#include "gridcaps/training.hpp"

namespace gridcaps {

double episode_accuracy(const std::vector<int>& preds, const std::vector<int>& labels, std::size_t episodes) {
  if (preds.size() != labels.size()) throw StructuralError("accuracy: prediction/label length mismatch");
  const std::size_t n = preds.size();
  if (episodes == 0 || episodes > n) {
    throw RangeError("accuracy: " + std::to_string(episodes) + " episodes over " + std::to_string(n) +
                     " samples leaves an empty episode");
  }
  double sum = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    const std::size_t lo = e * n / episodes, hi = (e + 1) * n / episodes;
    std::size_t correct = 0;
    for (std::size_t i = lo; i < hi; ++i) correct += preds[i] == labels[i];
    sum += static_cast<double>(correct) / static_cast<double>(hi - lo);
  }
  return sum / static_cast<double>(episodes);
}

std::size_t default_episodes(std::size_t n_test) { return std::max<std::size_t>(1, n_test / 20); }

const char* EvalReport::header() {
  return "model,case,suite,condition,accuracy,n_test,T_n,seed,dataset_sha256,latency_ms";
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "# gridcaps eval report\n";
  os << "# config: " << config.dump() << "\n";
  os << header() << "\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f", r.accuracy);
    os << r.model << ',' << r.case_name << ',' << r.suite << ',' << r.condition << ',' << buf << ',' << r.n_test
       << ',' << r.episodes << ',';
    if (r.mean) {
      os << "mean";
    } else {
      os << r.seed;
    }
    os << ',' << r.dataset_sha256 << ',';
    if (r.latency_ms >= 0) {
      std::snprintf(buf, sizeof buf, "%.3f", r.latency_ms);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

std::vector<std::string> suite_names() { return {"clean", "noise", "missing_outlier", "delay"}; }

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string fmt(double v, int prec) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string fmt_g(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

struct Condition {
  std::string label;
  const Dataset* source = nullptr;
  DegradationConfig degradation;
};

std::vector<int> labels_of(const Dataset& ds) {
  std::vector<int> y;
  for (const auto& s : ds.samples) y.push_back(s.class_index);
  return y;
}

}  // namespace

double measure_latency(Classifier<float>& model, const Dataset& ds, int n_repeat) {
  if (ds.size() == 0 || n_repeat <= 0) return -1.0;
  for (int i = 0; i < 3; ++i) predict(model, ds.samples[static_cast<std::size_t>(i) % ds.size()].window);
  std::vector<double> ms;
  ms.reserve(static_cast<std::size_t>(n_repeat));
  for (int i = 0; i < n_repeat; ++i) {
    const auto& w = ds.samples[static_cast<std::size_t>(i) % ds.size()].window;
    const auto t0 = std::chrono::steady_clock::now();
    predict(model, w);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  std::nth_element(ms.begin(), ms.begin() + static_cast<std::ptrdiff_t>(ms.size() / 2), ms.end());
  return ms[ms.size() / 2];
}

EvalReport run_suite(const std::string& suite, const std::vector<NamedModel>& models, const SuiteData& data,
                     const SuiteConfig& cfg) {
  if (models.empty()) throw ConfigError("eval: no models given");
  for (const auto& m : models) {
    if (!m.model) throw ConfigError("eval: model '" + m.name + "' is missing");
  }
  std::vector<Condition> conds;
  if (suite == "clean") {
    if (data.single_test) conds.push_back({"single_point", data.single_test, {}});
    if (data.multi_test) conds.push_back({"multi_point", data.multi_test, {}});
    if (conds.empty()) throw ConfigError("eval clean: no test set available");
  } else {
    if (!data.single_test) throw ConfigError("eval " + suite + ": single-point test set is missing");
    if (suite == "noise") {
      for (double snr : cfg.snr_db) {
        DegradationConfig d;
        d.snr_db = snr;
        conds.push_back({"snr=" + fmt_g(snr) + "dB", data.single_test, d});
      }
    } else if (suite == "missing_outlier") {
      DegradationConfig drop;
      drop.drop_frac_lo = cfg.drop_lo;
      drop.drop_frac_hi = cfg.drop_hi;
      conds.push_back({"missing=" + fmt_g(cfg.drop_lo) + "-" + fmt_g(cfg.drop_hi), data.single_test, drop});
      DegradationConfig out;
      out.outlier_frac_lo = cfg.outlier_lo;
      out.outlier_frac_hi = cfg.outlier_hi;
      conds.push_back(
          {"outlier=" + fmt_g(cfg.outlier_lo) + "-" + fmt_g(cfg.outlier_hi), data.single_test, out});
    } else if (suite == "delay") {
      if (!data.grid) throw ConfigError("eval delay: grid case is required to re-simulate windows");
      for (double d : cfg.delays_s) {
        DegradationConfig dc;
        dc.delay_s = d;
        conds.push_back({"delay=" + fmt(d, 1) + "s", data.single_test, dc});
      }
    } else {
      throw ConfigError("unknown suite '" + suite + "' (clean, noise, missing_outlier, delay)");
    }
  }

  if (cfg.seeds.empty()) throw ConfigError("eval: no seeds given");

  // Degraded test sets are shared across models: sets[k][j] is condition k
  // under seed j.
  std::vector<std::vector<Dataset>> sets(conds.size());
  std::vector<std::string> shas;
  for (std::size_t k = 0; k < conds.size(); ++k) {
    const auto& c = conds[k];
    for (auto seed : cfg.seeds) {
      sets[k].push_back(degrade_dataset(*c.source, c.degradation, seed, fnv1a(suite + "/" + c.label), data.grid));
    }
    shas.push_back(sha256_hex(serialize(*c.source)));
  }

  EvalReport rep;
  rep.config = {{"suite", suite}, {"seeds", cfg.seeds}};
  for (const auto& m : models) {
    for (std::size_t k = 0; k < conds.size(); ++k) {
      double sum = 0.0;
      double latency_sum = 0.0;
      for (std::size_t j = 0; j < cfg.seeds.size(); ++j) {
        const auto& ds = sets[k][j];
        const auto preds = predict(*m.model, ds);
        EvalRow row;
        row.model = m.name;
        row.case_name = ds.case_name;
        row.suite = suite;
        row.condition = conds[k].label;
        row.n_test = ds.size();
        row.episodes = default_episodes(ds.size());
        row.accuracy = episode_accuracy(preds, labels_of(ds), row.episodes);
        row.seed = cfg.seeds[j];
        row.dataset_sha256 = shas[k];
        if (cfg.latency_repeats > 0) row.latency_ms = measure_latency(*m.model, ds, cfg.latency_repeats);
        sum += row.accuracy;
        latency_sum += row.latency_ms;
        rep.rows.push_back(row);
      }
      if (cfg.seeds.size() > 1) {
        EvalRow row = rep.rows.back();
        const auto n = static_cast<double>(cfg.seeds.size());
        row.mean = true;
        row.accuracy = sum / n;
        row.latency_ms = cfg.latency_repeats > 0 ? latency_sum / n : -1.0;
        rep.rows.push_back(row);
      }
    }
  }
  return rep;
}

}  // namespace gridcaps
