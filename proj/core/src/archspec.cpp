#include "archrecon/archspec.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace archrecon {

namespace {

constexpr std::array<std::string_view, kLayerKindCount> kKindNames = {
    "conv", "batchnorm", "relu", "maxpool", "avgpool", "linear", "add"};

std::string describe(int index, LayerKind kind) {
  std::ostringstream os;
  os << "layer " << index << " (" << to_string(kind) << ")";
  return os.str();
}

int pooled_size(int in, int k, int s, int p, int d) {
  // Floor division that stays correct for negative numerators.
  const int num = in + 2 * p - d * (k - 1) - 1;
  const int q = num >= 0 ? num / s : -((-num + s - 1) / s);
  return q + 1;
}

}  // namespace

std::string_view to_string(LayerKind kind) { return kKindNames.at(kind_index(kind)); }

LayerKind layer_kind_from_string(std::string_view name) {
  for (int i = 0; i < kLayerKindCount; ++i) {
    if (kKindNames[i] == name) return static_cast<LayerKind>(i);
  }
  throw MalformedFile("unknown layer kind '" + std::string(name) + "'");
}

LayerKind kind_from_index(int index) {
  if (index < 0 || index >= kLayerKindCount) {
    throw Error("layer kind index out of range: " + std::to_string(index));
  }
  return static_cast<LayerKind>(index);
}

std::string_view to_string(Family family) {
  switch (family) {
    case Family::VGG: return "vgg";
    case Family::ResNet: return "resnet";
    case Family::Random: return "random";
  }
  return "random";
}

Family family_from_string(std::string_view name) {
  if (name == "vgg") return Family::VGG;
  if (name == "resnet") return Family::ResNet;
  if (name == "random") return Family::Random;
  throw ConfigError("unknown family '" + std::string(name) + "'");
}

std::vector<LayerKind> ArchSpec::kinds() const {
  std::vector<LayerKind> out;
  out.reserve(layers.size());
  for (const auto& l : layers) out.push_back(l.kind);
  return out;
}

SpatialShape derive_output_shape(const LayerSpec& layer, SpatialShape in) {
  int k = 0, s = 0, p = 0, d = 0;
  if (layer.kind == LayerKind::Conv) {
    const auto& c = layer.conv();
    k = c.k, s = c.s, p = c.p, d = c.d;
  } else if (layer.kind == LayerKind::MaxPool) {
    const auto& m = layer.max_pool();
    k = m.k, s = m.s, p = m.p, d = m.d;
  } else {
    throw InvalidArchitecture("derive_output_shape: only conv and maxpool change spatial shape");
  }
  if (s <= 0 || k <= 0 || d <= 0 || p < 0) {
    throw InvalidArchitecture("derive_output_shape: invalid window parameters");
  }
  if (in.h <= 0 || in.w <= 0) throw InvalidArchitecture("derive_output_shape: non-positive input");
  SpatialShape out{pooled_size(in.h, k, s, p, d), pooled_size(in.w, k, s, p, d)};
  if (out.h <= 0 || out.w <= 0) {
    throw InvalidArchitecture("derive_output_shape: non-positive output " + std::to_string(out.h) +
                              "x" + std::to_string(out.w));
  }
  return out;
}

std::int64_t conv_overhead(const ConvParams& params, SpatialShape out, int bs) {
  const std::int64_t kernel = std::int64_t{params.c_in} * params.k * params.k;
  const std::int64_t sweeps = std::int64_t{params.c_out} * out.h * out.w;
  return kernel * sweeps * bs;
}

std::int64_t linear_overhead(const LinearParams& params, int bs) {
  return std::int64_t{params.f_in} * params.f_out * bs;
}

std::int64_t maxpool_overhead(const MaxPoolParams& params, const FeatureShape& out, int bs) {
  return out.elements() * params.k * params.k * bs;
}

bool is_power_of_two(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

bool is_wide_power_of_two(std::int64_t v) { return is_power_of_two(v) && v >= 16; }

bool is_branch_start(const ArchSpec& spec, int index) {
  if (spec.layers.at(index).kind == LayerKind::Add) return false;
  return std::any_of(spec.skip_edges.begin(), spec.skip_edges.end(),
                     [&](const SkipEdge& e) { return e.target == index; });
}

std::vector<int> layer_inputs(const ArchSpec& spec, int index) {
  const int n = static_cast<int>(spec.layers.size());
  if (index < 0 || index >= n) throw InvalidArchitecture("layer_inputs: index out of range");
  std::vector<int> inputs{index - 1};  // index 0 reads the network input (-1)
  const bool is_add = spec.layers[index].kind == LayerKind::Add;
  for (const auto& e : spec.skip_edges) {
    if (e.target != index) continue;
    if (is_add) {
      inputs.push_back(e.source);
    } else {
      inputs[0] = e.source;
    }
  }
  return inputs;
}

std::vector<FeatureShape> propagate_shapes(const ArchSpec& spec) {
  const int n = static_cast<int>(spec.layers.size());
  for (const auto& e : spec.skip_edges) {
    if (e.target < 0 || e.target >= n || e.source < 0 || e.source >= e.target) {
      throw InvalidArchitecture("skip edge (" + std::to_string(e.source) + " -> " +
                                std::to_string(e.target) + ") is out of order or range");
    }
    const auto k = spec.layers[e.target].kind;
    if (k != LayerKind::Add && k != LayerKind::Conv) {
      throw InvalidArchitecture("skip edge targets " + describe(e.target, k));
    }
  }
  const FeatureShape input{spec.input.c, spec.input.h, spec.input.w, false};
  if (input.c <= 0 || input.h <= 0 || input.w <= 0 || spec.input.bs <= 0) {
    throw InvalidArchitecture("input shape must be positive");
  }

  std::vector<FeatureShape> out(n);
  auto shape_of = [&](int idx) { return idx == kNetworkInput ? input : out[idx]; };

  for (int i = 0; i < n; ++i) {
    const auto& layer = spec.layers[i];
    const auto inputs = layer_inputs(spec, i);
    const FeatureShape in = shape_of(inputs[0]);
    switch (layer.kind) {
      case LayerKind::Conv: {
        const auto& c = layer.conv();
        if (in.flat) throw InvalidArchitecture(describe(i, layer.kind) + " follows a flat layer");
        if (c.c_in != in.c) {
          throw InvalidArchitecture(describe(i, layer.kind) + ": c_in " + std::to_string(c.c_in) +
                                    " does not match producer channels " + std::to_string(in.c));
        }
        const auto sp = derive_output_shape(layer, in.spatial());
        out[i] = {c.c_out, sp.h, sp.w, false};
        break;
      }
      case LayerKind::MaxPool: {
        if (in.flat) throw InvalidArchitecture(describe(i, layer.kind) + " follows a flat layer");
        const auto sp = derive_output_shape(layer, in.spatial());
        out[i] = {in.c, sp.h, sp.w, false};
        break;
      }
      case LayerKind::AvgPool:
        if (in.flat) throw InvalidArchitecture(describe(i, layer.kind) + " follows a flat layer");
        out[i] = {in.c, 1, 1, false};
        break;
      case LayerKind::Linear: {
        const auto& l = layer.linear();
        if (l.f_in != in.elements()) {
          throw InvalidArchitecture(describe(i, layer.kind) + ": f_in " + std::to_string(l.f_in) +
                                    " does not match flattened input " +
                                    std::to_string(in.elements()));
        }
        if (l.f_out <= 0) throw InvalidArchitecture(describe(i, layer.kind) + ": f_out <= 0");
        out[i] = {l.f_out, 1, 1, true};
        break;
      }
      case LayerKind::Add: {
        if (inputs.size() != 2) {
          throw InvalidArchitecture(describe(i, layer.kind) + " has " +
                                    std::to_string(inputs.size()) + " inbound paths, expected 2");
        }
        const FeatureShape other = shape_of(inputs[1]);
        if (!(other == in)) {
          throw InvalidArchitecture(describe(i, layer.kind) + ": operand shapes differ");
        }
        out[i] = in;
        break;
      }
      case LayerKind::BatchNorm:
      case LayerKind::ReLU:
        out[i] = in;
        break;
    }
  }
  return out;
}

std::vector<std::string> validate(const ArchSpec& spec) {
  std::vector<std::string> violations;
  const int n = static_cast<int>(spec.layers.size());

  for (int i = 1; i < n; ++i) {
    if (spec.layers[i].kind == spec.layers[i - 1].kind) {
      violations.push_back(describe(i, spec.layers[i].kind) + " repeats the previous layer kind");
    }
  }

  for (int i = 0; i < n; ++i) {
    const auto& layer = spec.layers[i];
    const bool has_params = !std::holds_alternative<std::monostate>(layer.params);
    switch (layer.kind) {
      case LayerKind::Conv: {
        if (!std::holds_alternative<ConvParams>(layer.params)) {
          violations.push_back(describe(i, layer.kind) + " lacks conv parameters");
          continue;
        }
        const auto& c = layer.conv();
        if (c.k != 1 && c.k != 3 && c.k != 5 && c.k != 7)
          violations.push_back(describe(i, layer.kind) + ": k not in {1,3,5,7}");
        if (c.s != 1 && c.s != 2) violations.push_back(describe(i, layer.kind) + ": s not in {1,2}");
        if (c.d != 1) violations.push_back(describe(i, layer.kind) + ": d must be 1");
        if (c.g != 1) violations.push_back(describe(i, layer.kind) + ": g must be 1");
        if (c.p != same_padding(c.k, c.d))
          violations.push_back(describe(i, layer.kind) + ": p must be floor((k-1)/2)*d");
        if (!is_wide_power_of_two(c.c_out))
          violations.push_back(describe(i, layer.kind) + ": c_out " + std::to_string(c.c_out) +
                               " is not 2^n with n >= 4");
        if (c.c_in <= 0) violations.push_back(describe(i, layer.kind) + ": c_in must be positive");
        break;
      }
      case LayerKind::MaxPool: {
        if (!std::holds_alternative<MaxPoolParams>(layer.params)) {
          violations.push_back(describe(i, layer.kind) + " lacks maxpool parameters");
          continue;
        }
        const auto& m = layer.max_pool();
        if (m.k != 2 && m.k != 3) violations.push_back(describe(i, layer.kind) + ": k not in {2,3}");
        if (m.s != 1 && m.s != 2) violations.push_back(describe(i, layer.kind) + ": s not in {1,2}");
        if (m.p != 0 && m.p != 1) violations.push_back(describe(i, layer.kind) + ": p not in {0,1}");
        if (m.d != 1) violations.push_back(describe(i, layer.kind) + ": d must be 1");
        if (2 * m.p > m.k) violations.push_back(describe(i, layer.kind) + ": p exceeds k/2");
        break;
      }
      case LayerKind::Linear: {
        if (!std::holds_alternative<LinearParams>(layer.params)) {
          violations.push_back(describe(i, layer.kind) + " lacks linear parameters");
          continue;
        }
        const auto& l = layer.linear();
        if (!is_wide_power_of_two(l.f_out) && l.f_out != spec.class_count)
          violations.push_back(describe(i, layer.kind) + ": f_out " + std::to_string(l.f_out) +
                               " is neither the class count nor 2^n with n >= 4");
        if (l.f_in <= 0) violations.push_back(describe(i, layer.kind) + ": f_in must be positive");
        break;
      }
      default:
        if (has_params) violations.push_back(describe(i, layer.kind) + " carries unexpected parameters");
        break;
    }
  }

  if (violations.empty()) {
    try {
      (void)propagate_shapes(spec);
    } catch (const InvalidArchitecture& e) {
      violations.emplace_back(e.what());
    }
  }
  return violations;
}

ArchSpec rebind_input(const ArchSpec& spec, const InputShape& input) {
  ArchSpec out = spec;
  out.input = input;
  const int n = static_cast<int>(out.layers.size());
  const FeatureShape in_shape{input.c, input.h, input.w, false};
  std::vector<FeatureShape> shapes(n);
  auto shape_of = [&](int idx) { return idx == kNetworkInput ? in_shape : shapes[idx]; };
  for (int i = 0; i < n; ++i) {
    auto& layer = out.layers[i];
    const auto inputs = layer_inputs(out, i);
    const FeatureShape in = shape_of(inputs[0]);
    switch (layer.kind) {
      case LayerKind::Conv: {
        auto& c = layer.conv();
        c.c_in = in.c;
        const auto sp = derive_output_shape(layer, in.spatial());
        shapes[i] = {c.c_out, sp.h, sp.w, false};
        break;
      }
      case LayerKind::MaxPool: {
        const auto sp = derive_output_shape(layer, in.spatial());
        shapes[i] = {in.c, sp.h, sp.w, false};
        break;
      }
      case LayerKind::AvgPool: shapes[i] = {in.c, 1, 1, false}; break;
      case LayerKind::Linear: {
        auto& l = layer.linear();
        const auto elements = in.elements();
        if (elements > std::numeric_limits<int>::max()) {
          throw InvalidArchitecture("flattened feature size overflows");
        }
        l.f_in = static_cast<int>(elements);
        shapes[i] = {l.f_out, 1, 1, true};
        break;
      }
      default: shapes[i] = in; break;
    }
  }
  return out;
}

int depth(const ArchSpec& spec) {
  int d = 0;
  for (int i = 0; i < static_cast<int>(spec.layers.size()); ++i) {
    const auto k = spec.layers[i].kind;
    if (k == LayerKind::Linear || (k == LayerKind::Conv && !is_branch_start(spec, i))) ++d;
  }
  return d;
}

}  // namespace archrecon
