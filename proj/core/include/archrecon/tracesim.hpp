#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "archrecon/archspec.hpp"
#include "archrecon/trace.hpp"

namespace archrecon {

// Mean level per channel plus a trapezoid envelope over the layer's relative
// time: ramps from `floor` to 1 over `rise`, holds, falls back over `fall`.
struct KindSignature {
  std::vector<double> level;
  double rise = 0.1;
  double fall = 0.1;
  double floor = 0.9;
};

struct SimConfig {
  double sample_rate_hz = kDefaultSampleRateHz;
  std::vector<std::string> channels{"pp0", "dram"};

  // duration = offset + scale * ln(overhead), for Conv, Linear and MaxPool.
  double overhead_to_samples_scale = 2.0;
  double conv_offset = -20.0;
  double linear_offset = -18.0;
  double maxpool_offset = -24.0;
  // Fixed durations for layers without a learned overhead law.
  int batchnorm_samples = 3;
  int relu_samples = 2;
  int avgpool_samples = 3;
  int add_samples = 2;

  std::array<KindSignature, kLayerKindCount> signatures = default_signatures();

  // Relative amplitude of the hyperparameter-dependent shape terms.
  double hyper_modulation = 0.15;
  // Gaussian noise std as a fraction of each channel's mean signature level.
  double noise_std = 0.05;
  int min_layer_samples = 1;
  int gap_samples = 0;   // background samples between layers
  int idle_samples = 0;  // background samples before the first and after the last layer
  std::uint64_t rng_seed = 0;

  static std::array<KindSignature, kLayerKindCount> default_signatures();
  // Throws ConfigError when an invariant does not hold.
  void check() const;
};

nlohmann::json to_json(const SimConfig& cfg);
SimConfig sim_config_from_json(const nlohmann::json& j);

// Compute overhead driving the duration law; 0 for kinds without one.
double layer_overhead(const LayerSpec& layer, const LayerContext& ctx);
int layer_duration(const LayerSpec& layer, const LayerContext& ctx, const SimConfig& cfg);

// Per-layer contexts (batch size, input/output shapes) for a shape-valid spec.
std::vector<LayerContext> layer_contexts(const ArchSpec& spec);

// One contiguous segment per layer in spec order. Pure in (spec, input, cfg).
std::pair<Trace, Annotation> simulate(const ArchSpec& spec, const InputShape& input, const SimConfig& cfg);

}  // namespace archrecon
