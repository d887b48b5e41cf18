#include "archrecon/family.hpp"

#include <algorithm>
#include <limits>
#include <optional>
#include <random>

namespace archrecon {

namespace {

using Rng = std::mt19937_64;

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

bool coin(Rng& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& options) {
  return options[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(options.size()) - 1))];
}

// Random composition of `total` into `parts` positive integers.
std::vector<int> split_positive(Rng& rng, int total, int parts) {
  std::vector<int> out(parts, 1);
  for (int i = parts; i < total; ++i) out[uniform_int(rng, 0, parts - 1)] += 1;
  return out;
}

// Incremental builder tracking the running feature shape.
class Builder {
 public:
  Builder(Family family, const InputShape& input, int class_count) {
    spec_.family = family;
    spec_.input = input;
    spec_.class_count = class_count;
    shape_ = {input.c, input.h, input.w, false};
  }

  int last() const { return static_cast<int>(spec_.layers.size()) - 1; }
  const FeatureShape& shape() const { return shape_; }
  LayerKind last_kind() const { return spec_.layers.back().kind; }
  bool empty() const { return spec_.layers.empty(); }

  int conv(int c_out, int k, int s) {
    ConvParams p{shape_.c, c_out, k, s, same_padding(k), 1, 1};
    auto layer = LayerSpec::conv(p);
    const auto sp = derive_output_shape(layer, shape_.spatial());
    spec_.layers.push_back(layer);
    shape_ = {c_out, sp.h, sp.w, false};
    return last();
  }

  // Conv reading from an earlier layer's output; leaves the running shape at
  // the conv output.
  int branch_conv(int source, const FeatureShape& source_shape, int c_out, int k, int s) {
    shape_ = source_shape;
    const int idx = conv(c_out, k, s);
    spec_.skip_edges.push_back({source, idx});
    return idx;
  }

  int max_pool(int k, int s, int p) {
    auto layer = LayerSpec::max_pool({k, s, p, 1});
    const auto sp = derive_output_shape(layer, shape_.spatial());
    spec_.layers.push_back(layer);
    shape_ = {shape_.c, sp.h, sp.w, false};
    return last();
  }

  int avg_pool() {
    spec_.layers.push_back(LayerSpec::plain(LayerKind::AvgPool));
    shape_ = {shape_.c, 1, 1, false};
    return last();
  }

  int linear(int f_out) {
    const auto f_in = shape_.elements();
    if (f_in > std::numeric_limits<int>::max()) throw GenerationError("flattened size overflows");
    spec_.layers.push_back(LayerSpec::linear({static_cast<int>(f_in), f_out}));
    shape_ = {f_out, 1, 1, true};
    return last();
  }

  int plain(LayerKind kind) {
    spec_.layers.push_back(LayerSpec::plain(kind));
    return last();
  }

  int add(int skip_source) {
    const int idx = plain(LayerKind::Add);
    spec_.skip_edges.push_back({skip_source, idx});
    return idx;
  }

  ArchSpec take() { return std::move(spec_); }

 private:
  ArchSpec spec_;
  FeatureShape shape_;
};

int clamp_depth(int d) { return std::clamp(d, kMinDepth, kMaxDepth); }

ArchSpec make_vgg(Rng& rng, int target_depth, const InputShape& input, const GeneratorConfig& cfg) {
  int stages = 5;
  while (stages > 1 && (input.h >> stages) < 1) --stages;
  const int linears = uniform_int(rng, 1, 3);
  const int convs = target_depth - linears;
  if (convs < stages) throw GenerationError("vgg needs at least one conv per stage");

  const auto per_stage = split_positive(rng, convs, stages);
  const int base = pick(rng, std::vector<int>{32, 64, 64});
  const int cap = base * 8;
  const bool with_bn = coin(rng, 0.5);

  Builder b(Family::VGG, input, cfg.class_count);
  for (int st = 0; st < stages; ++st) {
    const int width = std::min(base << st, cap);
    for (int i = 0; i < per_stage[st]; ++i) {
      b.conv(width, 3, 1);
      if (with_bn) b.plain(LayerKind::BatchNorm);
      b.plain(LayerKind::ReLU);
    }
    b.max_pool(2, 2, 0);
  }
  b.avg_pool();
  const int hidden = pick(rng, std::vector<int>{1024, 2048, 4096});
  for (int i = 0; i + 1 < linears; ++i) {
    b.linear(hidden);
    b.plain(LayerKind::ReLU);
  }
  b.linear(cfg.class_count);
  return b.take();
}

struct ResNetPlan {
  bool bottleneck = false;
  std::vector<int> blocks;  // per stage
};

std::optional<ResNetPlan> resnet_plan(Rng& rng, int depth) {
  std::vector<ResNetPlan> options;
  if ((depth - 2) % 2 == 0 && (depth - 2) / 2 >= 4) {
    const int blocks = (depth - 2) / 2;
    ResNetPlan p{false, {}};
    if (depth == 18) p.blocks = {2, 2, 2, 2};
    else if (depth == 34) p.blocks = {3, 4, 6, 3};
    else p.blocks = split_positive(rng, blocks, 4);
    options.push_back(p);
  }
  if ((depth - 2) % 3 == 0 && (depth - 2) / 3 >= 4) {
    const int blocks = (depth - 2) / 3;
    ResNetPlan p{true, {}};
    if (depth == 50) p.blocks = {3, 4, 6, 3};
    else if (depth == 101) p.blocks = {3, 4, 23, 3};
    else if (depth == 152) p.blocks = {3, 8, 36, 3};
    else p.blocks = split_positive(rng, blocks, 4);
    options.push_back(p);
  }
  if (options.empty()) return std::nullopt;
  return pick(rng, options);
}

ArchSpec make_resnet(Rng& rng, DepthRange range, int target_depth, const InputShape& input,
                     const GeneratorConfig& cfg) {
  // Nearest representable depth to the target inside the range.
  std::optional<ResNetPlan> plan;
  for (int delta = 0; delta <= range.hi - range.lo && !plan; ++delta) {
    for (int d : {target_depth - delta, target_depth + delta}) {
      if (d < range.lo || d > range.hi) continue;
      if ((plan = resnet_plan(rng, d))) break;
    }
  }
  if (!plan) throw GenerationError("no resnet depth representable in the requested range");

  const int base = pick(rng, std::vector<int>{32, 64, 64});
  const int expansion = plan->bottleneck ? 4 : 1;

  Builder b(Family::ResNet, input, cfg.class_count);
  b.conv(base, 7, 2);
  b.plain(LayerKind::BatchNorm);
  b.plain(LayerKind::ReLU);
  int block_in = b.max_pool(3, 2, 1);

  for (int st = 0; st < 4; ++st) {
    const int width = base << st;
    for (int blk = 0; blk < plan->blocks[st]; ++blk) {
      const int stride = (st > 0 && blk == 0) ? 2 : 1;
      const FeatureShape in_shape = b.shape();
      const int out_c = width * expansion;
      if (plan->bottleneck) {
        b.conv(width, 1, 1);
        b.plain(LayerKind::BatchNorm);
        b.plain(LayerKind::ReLU);
        b.conv(width, 3, stride);
        b.plain(LayerKind::BatchNorm);
        b.plain(LayerKind::ReLU);
        b.conv(out_c, 1, 1);
      } else {
        b.conv(width, 3, stride);
        b.plain(LayerKind::BatchNorm);
        b.plain(LayerKind::ReLU);
        b.conv(width, 3, 1);
      }
      const int main_end = b.plain(LayerKind::BatchNorm);
      if (stride != 1 || in_shape.c != out_c) {
        const FeatureShape main_shape = b.shape();
        b.branch_conv(block_in, in_shape, out_c, 1, stride);
        b.plain(LayerKind::BatchNorm);
        if (!(b.shape() == main_shape)) throw GenerationError("projection shape mismatch");
        b.add(main_end);
      } else {
        b.add(block_in);
      }
      block_in = b.plain(LayerKind::ReLU);
    }
  }
  b.avg_pool();
  b.linear(cfg.class_count);
  return b.take();
}

ArchSpec make_random(Rng& rng, int target_depth, const InputShape& input, const GeneratorConfig& cfg) {
  const auto& rc = cfg.random;
  Builder b(Family::Random, input, cfg.class_count);

  auto random_channels = [&] { return 1 << uniform_int(rng, rc.min_log2_channels, rc.max_log2_channels); };
  auto random_hidden = [&] { return 1 << uniform_int(rng, 4, rc.max_log2_hidden); };

  if (target_depth == kMinDepth) {
    // Shallowest network: one conv straight into the classifier.
    b.conv(random_channels(), pick(rng, std::vector<int>{1, 3, 5, 7}), 2);
    b.linear(cfg.class_count);
    return b.take();
  }

  if (coin(rng, rc.mlp_probability)) {
    for (int i = 0; i + 1 < target_depth; ++i) {
      b.linear(random_hidden());
      b.plain(LayerKind::ReLU);
    }
    b.linear(cfg.class_count);
    return b.take();
  }

  const int linears = uniform_int(rng, 1, std::min(rc.max_linear_layers, target_depth - 1));
  const int convs = target_depth - linears;
  for (int i = 0; i < convs; ++i) {
    const int k = pick(rng, std::vector<int>{1, 3, 5, 7});
    const int s = (b.shape().h >= 16 && coin(rng, rc.stride2_probability)) ? 2 : 1;
    b.conv(random_channels(), k, s);
    if (coin(rng, rc.batchnorm_probability)) b.plain(LayerKind::BatchNorm);
    const bool more_convs = i + 1 < convs;
    const bool want_pool = b.shape().h >= 8 && coin(rng, rc.maxpool_probability);
    if (coin(rng, rc.relu_probability) || (more_convs && !want_pool && b.last_kind() == LayerKind::Conv)) {
      b.plain(LayerKind::ReLU);
    }
    if (want_pool) {
      const int pk = pick(rng, std::vector<int>{2, 3});
      const int ps = pick(rng, std::vector<int>{1, 2});
      const int pp = pick(rng, std::vector<int>{0, 1});
      b.max_pool(pk, ps, pp);
    }
  }
  const bool huge_flatten = b.shape().elements() > (1 << 22);
  if (huge_flatten || coin(rng, rc.avgpool_probability)) {
    b.avg_pool();
  }
  for (int i = 0; i + 1 < linears; ++i) {
    b.linear(random_hidden());
    b.plain(LayerKind::ReLU);
  }
  b.linear(cfg.class_count);
  return b.take();
}

}  // namespace

ArchSpec generate_family(Family family, DepthRange depth_range, const InputShape& input,
                         std::uint64_t seed, const GeneratorConfig& cfg) {
  if (depth_range.lo > depth_range.hi || depth_range.lo < kMinDepth || depth_range.hi > kMaxDepth) {
    throw GenerationError("depth range must lie within [2, 152]");
  }
  if (input.c != 1 && input.c != 3) throw GenerationError("input channels must be 1 or 3");
  if (input.bs <= 0 || input.h <= 0 || input.w <= 0) throw GenerationError("input shape must be positive");

  constexpr int kAttempts = 16;
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(attempt), static_cast<std::uint32_t>(family)};
    Rng rng(seq);
    const int target = clamp_depth(uniform_int(rng, depth_range.lo, depth_range.hi));
    try {
      ArchSpec spec;
      switch (family) {
        case Family::VGG: spec = make_vgg(rng, target, input, cfg); break;
        case Family::ResNet: spec = make_resnet(rng, depth_range, target, input, cfg); break;
        case Family::Random: spec = make_random(rng, target, input, cfg); break;
      }
      auto violations = validate(spec);
      if (violations.empty()) return spec;
      last_error = violations.front();
    } catch (const InvalidArchitecture& e) {
      last_error = e.what();
    } catch (const GenerationError& e) {
      last_error = e.what();
      if (family == Family::ResNet) break;  // depth infeasibility does not depend on the draw
    }
  }
  throw GenerationError(std::string(to_string(family)) + " generation failed: " + last_error);
}

std::vector<SkipEdge> infer_residual_edges(const std::vector<LayerKind>& kinds) {
  std::vector<SkipEdge> edges;
  const int n = static_cast<int>(kinds.size());
  std::optional<int> block_in;
  auto is_main_path = [](LayerKind k) {
    return k == LayerKind::Conv || k == LayerKind::BatchNorm || k == LayerKind::ReLU;
  };
  for (int a = 0; a < n; ++a) {
    if (kinds[a] != LayerKind::Add) continue;
    const bool projection = a >= 3 && kinds[a - 1] == LayerKind::BatchNorm &&
                            kinds[a - 2] == LayerKind::Conv && kinds[a - 3] == LayerKind::BatchNorm;
    const int main_end = projection ? a - 3 : a - 1;
    if (!block_in) {
      int j = main_end;
      while (j >= 0 && is_main_path(kinds[j])) --j;
      if (j >= 0) block_in = j;
    }
    if (block_in && *block_in < main_end) {
      if (projection) {
        edges.push_back({*block_in, a - 2});
        edges.push_back({main_end, a});
      } else {
        edges.push_back({*block_in, a});
      }
    }
    block_in = (a + 1 < n && kinds[a + 1] == LayerKind::ReLU) ? a + 1 : a;
  }
  return edges;
}

}  // namespace archrecon
