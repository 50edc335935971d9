#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcaps/tensor.hpp"

namespace gridcaps {

struct ParamBlock {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
};

/// "GCKP" container: model kind, a JSON metadata block (architecture, run
/// config, class map), then named float32 parameter blocks.
struct Checkpoint {
  std::string model_kind;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<ParamBlock> blocks;
};

std::string serialize(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<ParamBlock> snapshot(const std::vector<Param<float>*>& params);
/// Copies blocks into params by name; shape or name mismatch is a FormatError.
void restore(const std::vector<ParamBlock>& blocks, const std::vector<Param<float>*>& params);

}  // namespace gridcaps
