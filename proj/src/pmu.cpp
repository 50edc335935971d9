#include "gridcaps/pmu.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gridcaps/errors.hpp"

namespace gridcaps {

namespace {

double nominal(int channel) { return channel == 0 ? kNominalHz : 0.0; }

double channel_rms(const PmuWindow& w, int channel) {
  double acc = 0.0;
  const std::size_t n = w.n_gen * w.t_len;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(w.data[i * 2 + channel]) - nominal(channel);
    acc += d * d;
  }
  return n ? std::sqrt(acc / static_cast<double>(n)) : 0.0;
}

void check_fraction(double fraction, const char* what) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw RangeError(std::string(what) + " fraction " + std::to_string(fraction) +
                     " outside [0, 1]");
  }
}

// floor(fraction * n) distinct point indices, partial Fisher-Yates.
std::vector<std::size_t> pick_points(std::size_t n, double fraction, Rng& rng) {
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> d(i, n - 1);
    std::swap(idx[i], idx[d(rng)]);
  }
  idx.resize(k);
  return idx;
}

double draw_fraction(double lo, double hi, Rng& rng) {
  if (hi <= lo) return lo;
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng);
}

}  // namespace

PmuWindow add_gaussian_noise(const PmuWindow& window, double snr_db, Rng& rng) {
  if (snr_db == kNoNoise) return window;
  if (!std::isfinite(snr_db)) throw RangeError("snr_db must be finite or +inf");
  PmuWindow out = window;
  const std::size_t n = window.n_gen * window.t_len;
  for (int ch = 0; ch < 2; ++ch) {
    const double rms = channel_rms(window, ch);
    if (!(rms > 0.0)) {
      throw NumericError("degenerate signal: channel " + std::to_string(ch) +
                         " has no deviation from nominal");
    }
    std::normal_distribution<double> noise(0.0, rms / std::pow(10.0, snr_db / 20.0));
    for (std::size_t i = 0; i < n; ++i) {
      auto& v = out.data[i * 2 + static_cast<std::size_t>(ch)];
      v = static_cast<float>(static_cast<double>(v) + noise(rng));
    }
  }
  return out;
}

PmuWindow drop_points(const PmuWindow& window, double fraction, Rng& rng) {
  check_fraction(fraction, "drop");
  PmuWindow out = window;
  for (auto i : pick_points(window.n_gen * window.t_len, fraction, rng)) {
    out.data[i * 2] = static_cast<float>(kNominalHz);
    out.data[i * 2 + 1] = 0.0f;
  }
  return out;
}

PmuWindow inject_outliers(const PmuWindow& window, double fraction, Rng& rng) {
  check_fraction(fraction, "outlier");
  PmuWindow out = window;
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (auto i : pick_points(window.n_gen * window.t_len, fraction, rng)) {
    for (int ch = 0; ch < 2; ++ch) {
      auto& v = out.data[i * 2 + static_cast<std::size_t>(ch)];
      const double base = nominal(ch);
      const double dev = static_cast<double>(v) - base;
      v = static_cast<float>(base + dev * (1.0 + u(rng)));
    }
  }
  return out;
}

PmuWindow delayed_window(const Trajectory& traj, double delay_s) {
  if (delay_s < 0) throw RangeError("delay must be non-negative");
  return to_pmu_window(traj, delay_s, kWindowSamples, kSamplePeriod);
}

double empirical_snr_db(const PmuWindow& clean, const PmuWindow& noisy, int channel) {
  if (clean.data.size() != noisy.data.size()) throw StructuralError("snr: window shape mismatch");
  double sig = 0.0, err = 0.0;
  const std::size_t n = clean.n_gen * clean.t_len;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = static_cast<double>(clean.data[i * 2 + channel]);
    const double d = c - nominal(channel);
    const double e = static_cast<double>(noisy.data[i * 2 + channel]) - c;
    sig += d * d;
    err += e * e;
  }
  return 10.0 * std::log10(sig / err);
}

std::string DegradationConfig::label() const {
  std::ostringstream os;
  auto range = [&](double lo, double hi) {
    os << lo;
    if (hi != lo) os << "-" << hi;
  };
  bool any = false;
  if (snr_db != kNoNoise) {
    os << "snr=" << snr_db << "dB";
    any = true;
  }
  if (drop_frac_hi > 0) {
    if (any) os << ";";
    os << "drop=";
    range(drop_frac_lo, drop_frac_hi);
    any = true;
  }
  if (outlier_frac_hi > 0) {
    if (any) os << ";";
    os << "outlier=";
    range(outlier_frac_lo, outlier_frac_hi);
    any = true;
  }
  if (delay_s > 0) {
    if (any) os << ";";
    os << "delay=" << delay_s << "s";
    any = true;
  }
  return any ? os.str() : "clean";
}

nlohmann::json to_json(const DegradationConfig& c) {
  nlohmann::json j;
  j["snr_db"] = c.snr_db == kNoNoise ? nlohmann::json(nullptr) : nlohmann::json(c.snr_db);
  auto range = [](double lo, double hi) {
    return lo == hi ? nlohmann::json(lo) : nlohmann::json::array({lo, hi});
  };
  j["drop_frac"] = range(c.drop_frac_lo, c.drop_frac_hi);
  j["outlier_frac"] = range(c.outlier_frac_lo, c.outlier_frac_hi);
  j["delay_s"] = c.delay_s;
  return j;
}

DegradationConfig degradation_from_json(const nlohmann::json& j) {
  DegradationConfig c;
  if (!j.is_object()) throw ConfigError("degradation config must be an object");
  for (const auto& item : j.items()) {
    const auto& k = item.key();
    if (k != "snr_db" && k != "drop_frac" && k != "outlier_frac" && k != "delay_s") {
      throw ConfigError("degradation: unknown key '" + k + "'");
    }
  }
  auto read_range = [&](const char* key, double& lo, double& hi) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (v.is_number()) {
      lo = hi = v.get<double>();
    } else if (v.is_array() && v.size() == 2) {
      lo = v[0].get<double>();
      hi = v[1].get<double>();
    } else {
      throw ConfigError(std::string("degradation.") + key + " must be a number or [lo, hi]");
    }
    if (!(lo >= 0 && hi >= lo && hi <= 1)) {
      throw ConfigError(std::string("degradation.") + key + " outside [0, 1]");
    }
  };
  try {
    if (j.contains("snr_db") && !j.at("snr_db").is_null()) c.snr_db = j.at("snr_db").get<double>();
    read_range("drop_frac", c.drop_frac_lo, c.drop_frac_hi);
    read_range("outlier_frac", c.outlier_frac_lo, c.outlier_frac_hi);
    c.delay_s = j.value("delay_s", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("degradation config: ") + e.what());
  }
  if (c.delay_s < 0 || c.delay_s > 1.0 + 1e-9) throw ConfigError("delay_s outside [0, 1]");
  return c;
}

PmuWindow degrade(const PmuWindow& window, const DegradationConfig& cfg, Rng& rng) {
  PmuWindow w = add_gaussian_noise(window, cfg.snr_db, rng);
  if (cfg.drop_frac_hi > 0) w = drop_points(w, draw_fraction(cfg.drop_frac_lo, cfg.drop_frac_hi, rng), rng);
  if (cfg.outlier_frac_hi > 0) {
    w = inject_outliers(w, draw_fraction(cfg.outlier_frac_lo, cfg.outlier_frac_hi, rng), rng);
  }
  return w;
}

}  // namespace gridcaps
