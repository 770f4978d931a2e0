#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "radcls/model.hpp"

namespace radcls {

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

// Layout:
//   RADCLS-CHECKPOINT 1\n
//   <model.key>=<value>\n ...   (ModelConfig, fixed key order)
//   arrays <count>\n
//   then per array: "<param|buffer> <path> <rank> <d0> ... <dn>\n"
//   followed by the row-major values as little-endian IEEE-754 doubles.
// Serialization is canonical, so load followed by save reproduces the bytes.
std::string serialize_checkpoint(const Checkpoint& ck);
Checkpoint deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct ImportReport {
  std::vector<std::string> loaded;
  std::vector<std::string> skipped;  // missing in the model or shape mismatch
};

// Copies every array of the weight file whose path and shape match the
// model; used to start from externally trained weights.
ImportReport import_weights(ModelParams& target, const std::filesystem::path& weights);

}  // namespace radcls
