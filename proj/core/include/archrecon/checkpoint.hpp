#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "archrecon/nn.hpp"

namespace archrecon {

// Container layout (little-endian):
//
//   offset 0   8 bytes   magic "ARCCKPT1"
//   offset 8   u32       header byte length H
//   offset 12  H bytes   JSON header
//   then       f32 blob  tensors back to back, column-major
//
// Header keys: format_version, kind, config, metadata, tensors (name, rows,
// cols, offset in floats).
inline constexpr char kCheckpointMagic[8] = {'A', 'R', 'C', 'C', 'K', 'P', 'T', '1'};
inline constexpr int kCheckpointFormatVersion = 1;

struct NamedTensor {
  std::string name;
  nn::Mat value;
};

struct Checkpoint {
  std::string kind;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws MalformedFile on a bad magic, version or payload size.
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Parameter values, plus optimiser velocities under "<name>@v" when asked.
void store_params(Checkpoint& ckpt, const nn::ParamList& params, bool with_velocity);
// Throws MalformedFile when a tensor is missing or has the wrong shape.
void load_params(const Checkpoint& ckpt, const nn::ParamList& params, bool with_velocity);

}  // namespace archrecon
