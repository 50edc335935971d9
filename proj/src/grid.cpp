#include "gridcaps/grid.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gridcaps/errors.hpp"

namespace gridcaps {

namespace {

struct Table {
  std::vector<std::vector<double>> rows;
  std::vector<int> row_lines;
};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

std::string_view strip_comment(std::string_view line) {
  const auto pct = line.find('%');
  return pct == std::string_view::npos ? line : line.substr(0, pct);
}

double parse_number(std::string_view token, int line) {
  double value = 0.0;
  const auto* begin = token.data();
  const auto* end = token.data() + token.size();
  if (!token.empty() && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    if (token == "Inf" || token == "inf") return std::numeric_limits<double>::infinity();
    if (token == "-Inf" || token == "-inf") return -std::numeric_limits<double>::infinity();
    throw ParseError("invalid number '" + std::string(token) + "'", line);
  }
  return value;
}

/// Finds `mpc.<name> = [` and reads rows up to the closing `]`.
std::optional<Table> read_table(const std::vector<std::string_view>& lines, std::string_view name) {
  const std::string key = "mpc." + std::string(name);
  std::size_t open = lines.size();
  std::string_view first_chunk;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto code = trim(strip_comment(lines[i]));
    if (code.substr(0, key.size()) != key) continue;
    auto after = trim(code.substr(key.size()));
    if (after.empty() || after.front() != '=') continue;
    after = trim(after.substr(1));
    if (after.empty() || after.front() != '[') {
      throw ParseError("expected '[' after " + key, static_cast<int>(i + 1));
    }
    open = i;
    first_chunk = after.substr(1);
    break;
  }
  if (open == lines.size()) return std::nullopt;

  Table table;
  std::size_t width = 0;
  for (std::size_t i = open;; ++i) {
    if (i >= lines.size()) throw ParseError("unterminated table " + key, static_cast<int>(i));
    std::string_view code = i == open ? first_chunk : trim(strip_comment(lines[i]));
    const int line_no = static_cast<int>(i + 1);
    const auto close = code.find(']');
    if (close != std::string_view::npos) code = code.substr(0, close);
    // A physical line may hold several rows separated by ';'.
    std::size_t start = 0;
    while (start <= code.size()) {
      auto semi = code.find(';', start);
      if (semi == std::string_view::npos) semi = code.size();
      const auto row_text = trim(code.substr(start, semi - start));
      start = semi + 1;
      if (row_text.empty()) continue;
      std::vector<double> row;
      std::size_t pos = 0;
      while (pos < row_text.size()) {
        pos = row_text.find_first_not_of(" \t,", pos);
        if (pos == std::string_view::npos) break;
        auto tok_end = row_text.find_first_of(" \t,", pos);
        if (tok_end == std::string_view::npos) tok_end = row_text.size();
        row.push_back(parse_number(row_text.substr(pos, tok_end - pos), line_no));
        pos = tok_end;
      }
      if (width == 0) width = row.size();
      if (row.size() != width) {
        throw ParseError(key + " row has " + std::to_string(row.size()) + " columns, expected " +
                             std::to_string(width),
                         line_no);
      }
      table.rows.push_back(std::move(row));
      table.row_lines.push_back(line_no);
    }
    if (close != std::string_view::npos) break;
  }
  return table;
}

double read_scalar(const std::vector<std::string_view>& lines, std::string_view name) {
  const std::string key = "mpc." + std::string(name);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto code = trim(strip_comment(lines[i]));
    if (code.substr(0, key.size()) != key) continue;
    auto after = trim(code.substr(key.size()));
    if (after.empty() || after.front() != '=') continue;
    after = trim(after.substr(1));
    if (!after.empty() && after.back() == ';') after = trim(after.substr(0, after.size() - 1));
    return parse_number(after, static_cast<int>(i + 1));
  }
  throw ParseError("missing " + key, 0);
}

void require_columns(const Table& t, std::size_t n, std::string_view name) {
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r].size() < n) {
      throw ParseError(std::string(name) + " table needs at least " + std::to_string(n) +
                           " columns",
                       t.row_lines[r]);
    }
  }
}

int as_bus_id(double v, int line) {
  if (v != static_cast<double>(static_cast<int>(v)) || v <= 0) {
    throw ParseError("bus id must be a positive integer", line);
  }
  return static_cast<int>(v);
}

}  // namespace

std::size_t BusTopology::load_ordinal(int bus) const {
  const auto it = std::find(load_buses.begin(), load_buses.end(), bus);
  if (it == load_buses.end()) throw RangeError("bus " + std::to_string(bus) + " is not a load bus");
  return static_cast<std::size_t>(it - load_buses.begin());
}

std::size_t BusTopology::generator_ordinal(int bus) const {
  const auto it = std::find(generator_buses.begin(), generator_buses.end(), bus);
  if (it == generator_buses.end()) {
    throw RangeError("bus " + std::to_string(bus) + " is not a generator bus");
  }
  return static_cast<std::size_t>(it - generator_buses.begin());
}

double BusTopology::demand_at(int bus) const {
  const auto it = std::find(bus_ids.begin(), bus_ids.end(), bus);
  if (it == bus_ids.end()) throw RangeError("unknown bus " + std::to_string(bus));
  return demand_mw[static_cast<std::size_t>(it - bus_ids.begin())];
}

BusTopology parse_case(std::string_view text, std::string name) {
  const auto lines = split_lines(text);
  BusTopology topo;
  topo.name = std::move(name);
  topo.base_mva = read_scalar(lines, "baseMVA");
  if (!(topo.base_mva > 0)) throw ParseError("baseMVA must be positive", 0);

  const auto bus = read_table(lines, "bus");
  const auto gen = read_table(lines, "gen");
  const auto branch = read_table(lines, "branch");
  if (!bus) throw ParseError("missing mpc.bus table", 0);
  if (!gen) throw ParseError("missing mpc.gen table", 0);
  if (!branch) throw ParseError("missing mpc.branch table", 0);
  require_columns(*bus, 3, "bus");
  require_columns(*gen, 1, "gen");
  require_columns(*branch, 4, "branch");

  std::set<int> seen;
  for (std::size_t r = 0; r < bus->rows.size(); ++r) {
    const int id = as_bus_id(bus->rows[r][0], bus->row_lines[r]);
    if (!seen.insert(id).second) throw StructuralError("duplicate bus id " + std::to_string(id));
    topo.bus_ids.push_back(id);
    topo.demand_mw.push_back(bus->rows[r][2]);
  }

  std::set<int> gen_set;
  for (std::size_t r = 0; r < gen->rows.size(); ++r) {
    const auto& row = gen->rows[r];
    const int id = as_bus_id(row[0], gen->row_lines[r]);
    if (row.size() > 7 && row[7] <= 0) continue;  // out of service
    if (!seen.count(id)) {
      throw StructuralError("generator at unknown bus " + std::to_string(id));
    }
    gen_set.insert(id);
  }
  for (int id : topo.bus_ids) {
    (gen_set.count(id) ? topo.generator_buses : topo.load_buses).push_back(id);
  }

  for (std::size_t r = 0; r < branch->rows.size(); ++r) {
    const auto& row = branch->rows[r];
    if (row.size() > 10 && row[10] <= 0) continue;
    const int line = branch->row_lines[r];
    topo.branches.push_back({as_bus_id(row[0], line), as_bus_id(row[1], line), row[3]});
  }

  validate_topology(topo);
  return topo;
}

BusTopology load_case_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open case file " + path.string(), 0);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_case(ss.str(), path.stem().string());
}

void validate_topology(const BusTopology& topo) {
  std::map<int, std::size_t> index;
  for (std::size_t i = 0; i < topo.bus_ids.size(); ++i) {
    if (!index.emplace(topo.bus_ids[i], i).second) {
      throw StructuralError("duplicate bus id " + std::to_string(topo.bus_ids[i]));
    }
  }
  if (topo.generator_buses.empty()) throw StructuralError("case has no generator buses");
  if (topo.load_buses.empty()) throw StructuralError("case has no load buses");
  std::set<int> parts;
  for (int b : topo.generator_buses) parts.insert(b);
  for (int b : topo.load_buses) {
    if (!parts.insert(b).second) {
      throw StructuralError("bus " + std::to_string(b) + " is both generator and load");
    }
  }
  if (parts.size() != topo.bus_ids.size()) {
    throw StructuralError("generator and load buses do not cover all buses");
  }

  // Union-find over branch endpoints.
  std::vector<std::size_t> parent(topo.bus_ids.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& br : topo.branches) {
    const auto f = index.find(br.from_bus);
    const auto t = index.find(br.to_bus);
    if (f == index.end() || t == index.end()) {
      throw StructuralError("branch " + std::to_string(br.from_bus) + "-" +
                            std::to_string(br.to_bus) + " references an unknown bus");
    }
    if (!(br.reactance > 0)) {
      throw NumericError("branch " + std::to_string(br.from_bus) + "-" +
                         std::to_string(br.to_bus) + " has non-positive reactance");
    }
    parent[find(f->second)] = find(t->second);
  }
  const auto root = find(0);
  for (std::size_t i = 1; i < parent.size(); ++i) {
    if (find(i) != root) {
      throw StructuralError("branch graph is disconnected at bus " +
                            std::to_string(topo.bus_ids[i]));
    }
  }
}

Matrix SusceptancePartition::full() const {
  const auto ng = gg.rows();
  const auto nl = ll.rows();
  Matrix b(ng + nl, ng + nl);
  b << gg, gl, lg, ll;
  return b;
}

SusceptancePartition build_susceptance(const BusTopology& topo) {
  const auto ng = static_cast<Eigen::Index>(topo.n_gen());
  const auto nl = static_cast<Eigen::Index>(topo.n_load());
  // Position in (generator, load) ordering.
  std::map<int, Eigen::Index> pos;
  for (Eigen::Index i = 0; i < ng; ++i) pos[topo.generator_buses[static_cast<std::size_t>(i)]] = i;
  for (Eigen::Index i = 0; i < nl; ++i) {
    pos[topo.load_buses[static_cast<std::size_t>(i)]] = ng + i;
  }

  Matrix b = Matrix::Zero(ng + nl, ng + nl);
  for (const auto& br : topo.branches) {
    if (!(br.reactance > 0) || !std::isfinite(br.reactance)) {
      throw NumericError("zero or invalid reactance on branch " + std::to_string(br.from_bus) +
                         "-" + std::to_string(br.to_bus));
    }
    const auto i = pos.at(br.from_bus);
    const auto j = pos.at(br.to_bus);
    const double y = 1.0 / br.reactance;
    b(i, i) += y;
    b(j, j) += y;
    b(i, j) -= y;
    b(j, i) -= y;
  }
  return {b.topLeftCorner(ng, ng), b.topRightCorner(ng, nl), b.bottomLeftCorner(nl, ng),
          b.bottomRightCorner(nl, nl)};
}

void DynamicParams::validate(std::size_t n_gen, std::size_t n_load) const {
  auto len = [](const Vector& v) { return static_cast<std::size_t>(v.size()); };
  if (len(inertia) != n_gen || len(gen_damping) != n_gen || len(kp) != n_gen ||
      len(ki) != n_gen) {
    throw ConfigError("generator parameter vectors must have length " + std::to_string(n_gen));
  }
  if (len(load_damping) != n_load) {
    throw ConfigError("load damping must have length " + std::to_string(n_load));
  }
  if ((inertia.array() <= 0).any()) throw ConfigError("inertia must be positive");
  if ((ki.array() < 0).any()) throw ConfigError("integral gains must be non-negative");
  if ((load_damping.array() < 0).any()) throw ConfigError("load damping must be non-negative");
}

DynamicParams parse_params(std::string_view json_text, std::size_t n_gen, std::size_t n_load) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("params: ") + e.what());
  }
  const auto& dyn = doc.contains("dynamics") ? doc.at("dynamics") : doc;
  auto read = [&](const char* key, std::size_t n) {
    if (!dyn.contains(key)) throw ConfigError(std::string("params: missing '") + key + "'");
    const auto& node = dyn.at(key);
    Vector v(static_cast<Eigen::Index>(n));
    if (node.is_number()) {
      v.setConstant(node.get<double>());
    } else if (node.is_array()) {
      if (node.size() != n) {
        throw ConfigError(std::string("params: '") + key + "' has " +
                          std::to_string(node.size()) + " entries, expected " + std::to_string(n));
      }
      for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = node[i].get<double>();
    } else {
      throw ConfigError(std::string("params: '") + key + "' must be a number or array");
    }
    return v;
  };
  DynamicParams p{read("inertia", n_gen), read("gen_damping", n_gen), read("kp", n_gen),
                  read("ki", n_gen), read("load_damping", n_load)};
  p.validate(n_gen, n_load);
  return p;
}

DynamicParams load_params_file(const std::filesystem::path& path, std::size_t n_gen,
                               std::size_t n_load) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open params file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_params(ss.str(), n_gen, n_load);
}

}  // namespace gridcaps
