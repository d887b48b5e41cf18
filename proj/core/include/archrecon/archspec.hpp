#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "archrecon/errors.hpp"

namespace archrecon {

enum class LayerKind : std::uint8_t { Conv, BatchNorm, ReLU, MaxPool, AvgPool, Linear, Add };

inline constexpr int kLayerKindCount = 7;

inline constexpr std::array<LayerKind, kLayerKindCount> kAllLayerKinds = {
    LayerKind::Conv,    LayerKind::BatchNorm, LayerKind::ReLU, LayerKind::MaxPool,
    LayerKind::AvgPool, LayerKind::Linear,    LayerKind::Add};

std::string_view to_string(LayerKind kind);
// Accepts the canonical lower-case names ("conv", "batchnorm", ...).
LayerKind layer_kind_from_string(std::string_view name);

inline constexpr int kind_index(LayerKind kind) { return static_cast<int>(kind); }
LayerKind kind_from_index(int index);

struct ConvParams {
  int c_in = 0;
  int c_out = 0;
  int k = 3;
  int s = 1;
  int p = 1;
  int d = 1;
  int g = 1;

  friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

struct MaxPoolParams {
  int k = 2;
  int s = 2;
  int p = 0;
  int d = 1;

  friend bool operator==(const MaxPoolParams&, const MaxPoolParams&) = default;
};

struct LinearParams {
  int f_in = 0;
  int f_out = 0;

  friend bool operator==(const LinearParams&, const LinearParams&) = default;
};

using LayerParams = std::variant<std::monostate, ConvParams, MaxPoolParams, LinearParams>;

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  LayerParams params;

  static LayerSpec conv(ConvParams p) { return {LayerKind::Conv, p}; }
  static LayerSpec max_pool(MaxPoolParams p) { return {LayerKind::MaxPool, p}; }
  static LayerSpec linear(LinearParams p) { return {LayerKind::Linear, p}; }
  static LayerSpec plain(LayerKind k) { return {k, std::monostate{}}; }

  const ConvParams& conv() const { return std::get<ConvParams>(params); }
  ConvParams& conv() { return std::get<ConvParams>(params); }
  const MaxPoolParams& max_pool() const { return std::get<MaxPoolParams>(params); }
  MaxPoolParams& max_pool() { return std::get<MaxPoolParams>(params); }
  const LinearParams& linear() const { return std::get<LinearParams>(params); }
  LinearParams& linear() { return std::get<LinearParams>(params); }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct InputShape {
  int bs = 1;
  int c = 3;
  int h = 224;
  int w = 224;

  friend bool operator==(const InputShape&, const InputShape&) = default;
};

struct SpatialShape {
  int h = 0;
  int w = 0;

  friend bool operator==(const SpatialShape&, const SpatialShape&) = default;
};

// Per-sample activation shape. Linear outputs are flat vectors (h = w = 1).
struct FeatureShape {
  int c = 0;
  int h = 0;
  int w = 0;
  bool flat = false;

  std::int64_t elements() const { return std::int64_t{c} * h * w; }
  SpatialShape spatial() const { return {h, w}; }
  friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

enum class Family : std::uint8_t { VGG, ResNet, Random };

std::string_view to_string(Family family);
Family family_from_string(std::string_view name);

// A skip edge either feeds the second operand of an Add, or (when the target is
// a Conv) restarts a branch from an earlier layer, as in projection shortcuts.
struct SkipEdge {
  int source = 0;
  int target = 0;

  friend bool operator==(const SkipEdge&, const SkipEdge&) = default;
};

struct ArchSpec {
  Family family = Family::Random;
  InputShape input;
  int class_count = 1000;
  std::vector<LayerSpec> layers;
  std::vector<SkipEdge> skip_edges;

  std::vector<LayerKind> kinds() const;
  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

inline constexpr int kNetworkInput = -1;

// Eqs. for pooled / strided output size. Conv and MaxPool only.
SpatialShape derive_output_shape(const LayerSpec& layer, SpatialShape in);

std::int64_t conv_overhead(const ConvParams& params, SpatialShape out, int bs);
std::int64_t linear_overhead(const LinearParams& params, int bs);
// Comparison work of a max-pool window sweep; used by the trace simulator.
std::int64_t maxpool_overhead(const MaxPoolParams& params, const FeatureShape& out, int bs);

inline int same_padding(int k, int d = 1) { return (k - 1) / 2 * d; }
bool is_power_of_two(std::int64_t v);
// 2^n with n >= 4.
bool is_wide_power_of_two(std::int64_t v);

// Indices of the layers whose outputs feed layer `index` (kNetworkInput for the
// network input). Adds list their primary operand first.
std::vector<int> layer_inputs(const ArchSpec& spec, int index);

// Output shape of every layer. Throws InvalidArchitecture on the first
// non-positive dimension, chaining mismatch or malformed edge.
std::vector<FeatureShape> propagate_shapes(const ArchSpec& spec);

// Empty iff every type invariant and chaining rule holds.
std::vector<std::string> validate(const ArchSpec& spec);

// Re-derive the shape-dependent fields (c_in, f_in) for a new input shape.
ArchSpec rebind_input(const ArchSpec& spec, const InputShape& input);

// Number of Conv + Linear layers on the main path (projection convs excluded).
int depth(const ArchSpec& spec);

bool is_branch_start(const ArchSpec& spec, int index);

}  // namespace archrecon
