#pragma once

#include <cstdint>

#include "archrecon/archspec.hpp"

namespace archrecon {

struct DepthRange {
  int lo = 2;
  int hi = 152;
};

inline constexpr int kMinDepth = 2;
inline constexpr int kMaxDepth = 152;

// Knobs for the random-net generator. None of these are fixed by domain
// knowledge; they shape the corpus distribution only.
struct RandomNetConfig {
  double mlp_probability = 0.2;
  double batchnorm_probability = 0.5;
  double relu_probability = 0.85;
  double maxpool_probability = 0.3;
  double avgpool_probability = 0.7;
  double stride2_probability = 0.25;
  int max_linear_layers = 3;
  int min_log2_channels = 4;
  int max_log2_channels = 9;
  int max_log2_hidden = 12;
};

struct GeneratorConfig {
  int class_count = 1000;
  RandomNetConfig random;
};

// Pure function of its arguments. The returned spec passes validate().
// Throws GenerationError when no spec of the family fits the depth range and
// input shape.
ArchSpec generate_family(Family family, DepthRange depth_range, const InputShape& input,
                         std::uint64_t seed, const GeneratorConfig& cfg = {});

// ResNet-style skip edges for a kind sequence: each Add gets the input of its
// residual block; a [BN, Conv, BN, Add] tail is read as a projection shortcut.
// Adds whose block input cannot be located are left without edges.
std::vector<SkipEdge> infer_residual_edges(const std::vector<LayerKind>& kinds);

}  // namespace archrecon
