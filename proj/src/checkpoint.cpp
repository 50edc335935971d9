#include "gridcaps/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "gridcaps/bytes.hpp"

namespace gridcaps {

namespace {
constexpr char kMagic[4] = {'G', 'C', 'K', 'P'};
constexpr std::uint16_t kVersion = 1;
}  // namespace

std::string serialize(const Checkpoint& ckpt) {
  ByteWriter w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint16_t>(kVersion);
  w.put_string(ckpt.model_kind);
  w.put_string(ckpt.meta.dump());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.blocks.size()));
  for (const auto& b : ckpt.blocks) {
    if (Tensor<float>::count(b.shape) != b.values.size()) {
      throw StructuralError("checkpoint block " + b.name + " has inconsistent shape");
    }
    w.put_string(b.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(b.shape.size()));
    for (int d : b.shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.put_bytes(b.values.data(), b.values.size() * sizeof(float));
  }
  return std::move(w.str());
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  ByteReader r(bytes, "checkpoint");
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("checkpoint: bad magic (not a GCKP file)");
  const auto version = r.get<std::uint16_t>();
  if (version != kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint c;
  c.model_kind = r.get_string(64);
  try {
    c.meta = nlohmann::json::parse(r.get_string());
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint: bad metadata: ") + e.what());
  }
  const auto n = r.get<std::uint32_t>();
  if (n > 4096) throw FormatError("checkpoint: implausible block count");
  for (std::uint32_t i = 0; i < n; ++i) {
    ParamBlock b;
    b.name = r.get_string(256);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw FormatError("checkpoint: implausible rank in " + b.name);
    std::size_t count = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto d = r.get<std::uint32_t>();
      b.shape.push_back(static_cast<int>(d));
      count *= d;
    }
    if (count * sizeof(float) > r.remaining()) throw FormatError("checkpoint: truncated block " + b.name);
    b.values.resize(count);
    r.get_bytes(b.values.data(), count * sizeof(float));
    c.blocks.push_back(std::move(b));
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_checkpoint(ss.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<ParamBlock> snapshot(const std::vector<Param<float>*>& params) {
  std::vector<ParamBlock> out;
  for (const auto* p : params) out.push_back({p->name, p->value.shape, p->value.data});
  return out;
}

void restore(const std::vector<ParamBlock>& blocks, const std::vector<Param<float>*>& params) {
  if (blocks.size() != params.size()) {
    throw FormatError("checkpoint has " + std::to_string(blocks.size()) + " blocks, model expects " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    const auto& b = blocks[i];
    if (b.name != p->name || b.shape != p->value.shape) {
      throw FormatError("checkpoint block " + b.name + shape_string(b.shape) + " does not match " +
                        p->name + shape_string(p->value.shape));
    }
    p->value.data = b.values;
  }
}

}  // namespace gridcaps
