#include "gridcaps/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include <openssl/evp.h>

#include "gridcaps/bytes.hpp"
#include "gridcaps/errors.hpp"
#include "gridcaps/parallel.hpp"

namespace gridcaps {

namespace {

constexpr char kMagic[4] = {'G', 'C', 'A', 'P'};
constexpr std::uint16_t kVersion = 1;

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
    case Split::all:
      return "all";
  }
  return "?";
}

AttackScenario Sample::scenario(const BusTopology& topo) const {
  auto s = AttackScenario::none(topo.n_load(), topo.n_gen());
  if (epsilon_mw.size() != topo.n_load()) throw StructuralError("sample: epsilon length mismatch");
  for (std::size_t v = 0; v < epsilon_mw.size(); ++v) s.epsilon_mw[static_cast<Eigen::Index>(v)] = epsilon_mw[v];
  s.kind = kind;
  s.label_bus = label_bus;
  if (attacked) {
    s.gain(static_cast<Eigen::Index>(topo.load_ordinal(label_bus)), gain_col) = gain;
  }
  return s;
}

int Dataset::class_of_bus(int bus) const {
  const auto it = std::find(class_map.begin(), class_map.end(), bus);
  if (it == class_map.end()) throw RangeError("bus " + std::to_string(bus) + " is not a class");
  return static_cast<int>(it - class_map.begin());
}

void Dataset::validate() const {
  for (const auto& s : samples) {
    if (s.window.n_gen != n_gen || s.window.t_len != t_len || s.window.data.size() != n_gen * t_len * 2) {
      throw StructuralError("sample " + std::to_string(s.id) + " has the wrong window shape");
    }
    if (s.class_index < 0 || static_cast<std::size_t>(s.class_index) >= class_map.size() ||
        class_map[static_cast<std::size_t>(s.class_index)] != s.label_bus) {
      throw StructuralError("sample " + std::to_string(s.id) + " has an inconsistent label");
    }
    if (s.epsilon_mw.size() != class_map.size()) {
      throw StructuralError("sample " + std::to_string(s.id) + " has the wrong epsilon length");
    }
  }
}

Dataset Dataset::attacked_only() const {
  Dataset out = *this;
  out.samples.clear();
  for (const auto& s : samples) {
    if (s.attacked) out.samples.push_back(s);
  }
  return out;
}

unsigned worker_count() {
  if (const char* env = std::getenv("GRIDCAPS_THREADS"); env && *env) {
    const int n = std::atoi(env);
    if (n >= 1) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

Dataset generate_samples(const GridCase& grid, const GenerationConfig& cfg) {
  const auto& topo = grid.topology;
  if (!(cfg.normal_fraction >= 0 && cfg.normal_fraction <= 1)) {
    throw ConfigError("normal_fraction outside [0, 1]");
  }
  Dataset ds;
  ds.case_name = grid.name;
  ds.n_gen = topo.n_gen();
  ds.class_map = topo.load_buses;
  ds.seed = cfg.seed;
  ds.samples.resize(cfg.n_samples);

  const Vector p_lv = grid.vulnerable_load_mw();
  const std::size_t nl = topo.n_load();

  parallel_for(cfg.n_samples, cfg.threads ? cfg.threads : worker_count(), [&](std::size_t i) {
    Rng rng = make_rng(cfg.seed, streams::scenario, i);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const bool normal = cfg.normal_fraction > 0 && unit(rng) < cfg.normal_fraction;
    std::uniform_int_distribution<std::size_t> pick(0, nl - 1);
    ScenarioConfig sc = cfg.scenario;
    if (!sc.label_bus) sc.label_bus = topo.load_buses[pick(rng)];

    Sample& out = ds.samples[i];
    out.id = i;
    out.label_bus = *sc.label_bus;
    out.class_index = static_cast<int>(topo.load_ordinal(out.label_bus));
    out.kind = sc.kind;

    AttackScenario scenario;
    Trajectory traj;
    if (normal) {
      scenario = AttackScenario::none(nl, topo.n_gen());
      scenario.label_bus = out.label_bus;
      std::uniform_real_distribution<double> eps(sc.eps_min_mw, sc.eps_max_mw);
      scenario.epsilon_mw[static_cast<Eigen::Index>(out.class_index)] = eps(rng);
      traj = simulate(grid.model(scenario), cfg.duration_s, cfg.dt_s);
      out.attacked = false;
    } else {
      bool accepted = false;
      for (int attempt = 0; attempt < cfg.max_limit_retries && !accepted; ++attempt) {
        scenario = sample_scenario(rng, grid, sc);
        traj = simulate(grid.model(scenario), cfg.duration_s, cfg.dt_s);
        accepted = !traj.diverged && check_limit(scenario, traj, p_lv, topo.base_mva).ok;
      }
      if (!accepted) {
        throw SamplingError("attack limit rejected every draw for load bus " +
                            std::to_string(out.label_bus) + " (sample " + std::to_string(i) + ")");
      }
      const auto row = static_cast<Eigen::Index>(out.class_index);
      Eigen::Index col = 0;
      scenario.gain.row(row).cwiseAbs().maxCoeff(&col);
      out.gain_col = static_cast<std::uint32_t>(col);
      out.gain = scenario.gain(row, col);
    }
    out.epsilon_mw.assign(scenario.epsilon_mw.data(), scenario.epsilon_mw.data() + nl);
    out.window = to_pmu_window(traj, 0.0);
  });

  nlohmann::json prov;
  prov["case"] = grid.name;
  prov["seed"] = cfg.seed;
  prov["n_samples"] = cfg.n_samples;
  prov["kind"] = to_string(cfg.scenario.kind);
  prov["eps_range_mw"] = {cfg.scenario.eps_min_mw, cfg.scenario.eps_max_mw};
  prov["gain_range_pu"] = {cfg.scenario.gain_min_pu >= 0 ? cfg.scenario.gain_min_pu : grid.gain_min_pu,
                           cfg.scenario.gain_max_pu >= 0 ? cfg.scenario.gain_max_pu : grid.gain_max_pu};
  prov["p_lv"] = {{"fraction", grid.p_lv_fraction}, {"floor_mw", grid.p_lv_floor_mw}};
  prov["normal_fraction"] = cfg.normal_fraction;
  prov["duration_s"] = cfg.duration_s;
  prov["dt_s"] = cfg.dt_s;
  ds.provenance["generation"] = prov;
  return ds;
}

Trajectory resimulate(const GridCase& grid, const Sample& sample, double duration_s, double dt_s) {
  return simulate(grid.model(sample.scenario(grid.topology)), duration_s, dt_s);
}

Dataset degrade_dataset(const Dataset& ds, const DegradationConfig& cfg, std::uint64_t seed,
                        std::uint64_t salt, const GridCase* grid) {
  Dataset out = ds;
  if (cfg.is_clean()) return out;
  if (cfg.delay_s > 0 && !grid) throw ConfigError("delay degradation needs the grid case");
  parallel_for(out.samples.size(), worker_count(), [&](std::size_t i) {
    Sample& s = out.samples[i];
    Rng rng = make_rng(seed, streams::degrade, s.id ^ mix64(salt));
    if (cfg.delay_s > 0) {
      const double needed = cfg.delay_s + static_cast<double>(ds.t_len) * ds.sample_period;
      s.window = delayed_window(resimulate(*grid, s, std::max(kDefaultDuration, needed)), cfg.delay_s);
    }
    s.window = degrade(s.window, cfg, rng);
  });
  out.provenance["degradation"] = to_json(cfg);
  return out;
}

SplitSet build_dataset(const Dataset& all, const SplitFractions& fracs, std::uint64_t seed,
                       const SplitDegradation& degradation, const GridCase* grid) {
  const double sum = fracs.train + fracs.val + fracs.test;
  if (std::abs(sum - 1.0) > 1e-9 || fracs.train < 0 || fracs.val < 0 || fracs.test < 0) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  const std::size_t n = all.size();
  const auto n_train = static_cast<std::size_t>(std::llround(fracs.train * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train,
                              static_cast<std::size_t>(std::llround(fracs.val * static_cast<double>(n))));
  const std::size_t totals[3] = {n_train, n_val, n - n_train - n_val};

  Rng rng = make_rng(seed, streams::split);
  std::vector<std::vector<std::size_t>> by_class(all.n_classes());
  for (std::size_t i = 0; i < n; ++i) {
    by_class.at(static_cast<std::size_t>(all.samples[i].class_index)).push_back(i);
  }
  bool stratify = true;
  for (const auto& c : by_class) {
    if (!c.empty() && c.size() < 3) stratify = false;
  }

  std::vector<std::size_t> assign[3];
  if (!stratify) {
    std::cerr << "warning: some class has fewer than 3 samples; using an unstratified split\n";
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    assign[0].assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(totals[0]));
    assign[1].assign(idx.begin() + static_cast<std::ptrdiff_t>(totals[0]),
                     idx.begin() + static_cast<std::ptrdiff_t>(totals[0] + totals[1]));
    assign[2].assign(idx.begin() + static_cast<std::ptrdiff_t>(totals[0] + totals[1]), idx.end());
  } else {
    // Per-class quotas: floors, then largest remainders subject to the exact totals.
    const double f[3] = {fracs.train, fracs.val, fracs.test};
    const std::size_t nc = by_class.size();
    std::vector<std::array<std::size_t, 3>> quota(nc, {0, 0, 0});
    std::size_t left_split[3] = {totals[0], totals[1], totals[2]};
    std::vector<std::size_t> left_class(nc);
    struct Rem {
      double r;
      std::size_t c, s;
    };
    std::vector<Rem> rems;
    for (std::size_t c = 0; c < nc; ++c) {
      const double nc_d = static_cast<double>(by_class[c].size());
      std::size_t used = 0;
      for (std::size_t s = 0; s < 3; ++s) {
        const double want = nc_d * f[s];
        auto q = static_cast<std::size_t>(std::floor(want));
        q = std::min(q, left_split[s]);
        quota[c][s] = q;
        left_split[s] -= q;
        used += q;
        rems.push_back({want - static_cast<double>(q), c, s});
      }
      left_class[c] = by_class[c].size() - used;
    }
    std::stable_sort(rems.begin(), rems.end(), [](const Rem& a, const Rem& b) { return a.r > b.r; });
    for (const auto& r : rems) {
      if (left_class[r.c] > 0 && left_split[r.s] > 0) {
        ++quota[r.c][r.s];
        --left_class[r.c];
        --left_split[r.s];
      }
    }
    for (std::size_t c = 0; c < nc; ++c) {
      for (std::size_t s = 0; s < 3 && left_class[c] > 0; ++s) {
        const auto k = std::min(left_class[c], left_split[s]);
        quota[c][s] += k;
        left_class[c] -= k;
        left_split[s] -= k;
      }
    }
    for (std::size_t c = 0; c < nc; ++c) {
      auto members = by_class[c];
      std::shuffle(members.begin(), members.end(), rng);
      std::size_t pos = 0;
      for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t k = 0; k < quota[c][s]; ++k) assign[s].push_back(members[pos++]);
      }
    }
    for (auto& a : assign) std::shuffle(a.begin(), a.end(), rng);
  }

  const DegradationConfig* degs[3] = {&degradation.train, &degradation.val, &degradation.test};
  Dataset parts[3];
  for (std::size_t s = 0; s < 3; ++s) {
    Dataset d = all;
    d.samples.clear();
    d.split = static_cast<Split>(s);
    for (auto i : assign[s]) d.samples.push_back(all.samples[i]);
    d.provenance["split"] = {{"fractions", {fracs.train, fracs.val, fracs.test}},
                             {"seed", seed},
                             {"stratified", stratify}};
    parts[s] = degrade_dataset(d, *degs[s], seed, s + 1, grid);
    parts[s].provenance["degradation"] = to_json(*degs[s]);
  }
  return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

std::string serialize(const Dataset& ds) {
  ds.validate();
  ByteWriter w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(ds.split));
  w.put_string(ds.case_name);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.n_gen));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.t_len));
  w.put<double>(ds.sample_period);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.class_map.size()));
  for (int b : ds.class_map) w.put<std::int32_t>(b);
  w.put<std::uint64_t>(ds.seed);
  w.put_string(ds.provenance.dump());
  w.put<std::uint64_t>(ds.samples.size());
  for (const auto& s : ds.samples) {
    w.put<std::uint64_t>(s.id);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.class_index));
    w.put<std::int32_t>(s.label_bus);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(s.kind));
    w.put<std::uint8_t>(s.attacked ? 1 : 0);
    w.put<std::uint32_t>(s.gain_col);
    w.put<double>(s.gain);
    w.put<double>(s.window.t_start);
    for (double e : s.epsilon_mw) w.put<double>(e);
    w.put_bytes(s.window.data.data(), s.window.data.size() * sizeof(float));
  }
  return std::move(w.str());
}

Dataset deserialize(const std::string& bytes) {
  ByteReader r(bytes, "dataset");
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("dataset: bad magic (not a GCAP file)");
  const auto version = r.get<std::uint16_t>();
  if (version != kVersion) throw FormatError("dataset: unsupported version " + std::to_string(version));
  Dataset ds;
  const auto split = r.get<std::uint8_t>();
  if (split > 3) throw FormatError("dataset: bad split tag");
  ds.split = static_cast<Split>(split);
  ds.case_name = r.get_string(256);
  ds.n_gen = r.get<std::uint32_t>();
  ds.t_len = r.get<std::uint32_t>();
  ds.sample_period = r.get<double>();
  const auto nc = r.get<std::uint32_t>();
  if (ds.n_gen == 0 || ds.n_gen > 4096 || ds.t_len == 0 || ds.t_len > 1u << 20 || nc > 4096) {
    throw FormatError("dataset: implausible header dimensions");
  }
  ds.class_map.resize(nc);
  for (auto& b : ds.class_map) b = r.get<std::int32_t>();
  ds.seed = r.get<std::uint64_t>();
  try {
    ds.provenance = nlohmann::json::parse(r.get_string());
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("dataset: bad provenance block: ") + e.what());
  }
  const auto n = r.get<std::uint64_t>();
  const std::size_t window_floats = ds.n_gen * ds.t_len * 2;
  const std::size_t record = 8 + 4 + 4 + 1 + 1 + 4 + 8 + 8 + 8 * nc + 4 * window_floats;
  if (n > r.remaining() / record || n * record != r.remaining()) {
    throw FormatError("dataset: record count " + std::to_string(n) + " does not match " +
                      std::to_string(r.remaining()) + " payload bytes");
  }
  ds.samples.resize(n);
  for (auto& s : ds.samples) {
    s.id = r.get<std::uint64_t>();
    s.class_index = static_cast<int>(r.get<std::uint32_t>());
    s.label_bus = r.get<std::int32_t>();
    const auto kind = r.get<std::uint8_t>();
    if (kind > 1) throw FormatError("dataset: bad attack kind tag");
    s.kind = static_cast<AttackKind>(kind);
    s.attacked = r.get<std::uint8_t>() != 0;
    s.gain_col = r.get<std::uint32_t>();
    s.gain = r.get<double>();
    const double t_start = r.get<double>();
    s.epsilon_mw.resize(nc);
    for (auto& e : s.epsilon_mw) e = r.get<double>();
    s.window = PmuWindow(ds.n_gen, ds.t_len, t_start, ds.sample_period);
    r.get_bytes(s.window.data.data(), window_floats * sizeof(float));
  }
  try {
    ds.validate();
  } catch (const StructuralError& e) {
    throw FormatError(std::string("dataset: ") + e.what());
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  const auto bytes = serialize(ds);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("write failed for " + path.string());
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path) {
  try {
    return deserialize(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

}  // namespace gridcaps
