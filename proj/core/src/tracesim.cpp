#include "archrecon/tracesim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace archrecon {

using nlohmann::json;

namespace {

// Zero-mean shape terms on relative time t in [0, 1].
double ramp(double t) { return 2.0 * t - 1.0; }
double bowl(double t) { return 6.0 * (t - 0.5) * (t - 0.5) - 0.5; }

double envelope(const KindSignature& sig, double t) {
  double e = 1.0;
  if (sig.rise > 0.0 && t < sig.rise) e = t / sig.rise;
  if (sig.fall > 0.0 && t > 1.0 - sig.fall) e = std::min(e, (1.0 - t) / sig.fall);
  return sig.floor + (1.0 - sig.floor) * std::clamp(e, 0.0, 1.0);
}

double sign(bool positive) { return positive ? 1.0 : -1.0; }

// Multiplicative shape factor of channel `ch` at relative time t. Encodes the
// hyperparameters the classifiers must recover: conv k on the first channel
// (two bits: ramp and bowl sign), conv s on the second channel; maxpool k on
// the first channel, s and p on the second.
double hyper_shape(const LayerSpec& layer, int ch, double t, double amp) {
  if (amp == 0.0) return 1.0;
  if (layer.kind == LayerKind::Conv) {
    const auto& c = layer.conv();
    const int k_idx = (c.k - 1) / 2;  // 1,3,5,7 -> 0..3
    if (ch == 0) return 1.0 + amp * (sign(k_idx & 1) * ramp(t) + sign(k_idx & 2) * bowl(t));
    if (ch == 1) return 1.0 + amp * sign(c.s == 1) * ramp(t);
  } else if (layer.kind == LayerKind::MaxPool) {
    const auto& m = layer.max_pool();
    if (ch == 0) return 1.0 + amp * sign(m.k == 2) * ramp(t);
    if (ch == 1) return 1.0 + amp * (sign(m.s == 1) * ramp(t) + sign(m.p == 0) * bowl(t));
  }
  return 1.0;
}

json signature_to_json(const KindSignature& s) {
  return {{"level", s.level}, {"rise", s.rise}, {"fall", s.fall}, {"floor", s.floor}};
}

KindSignature signature_from_json(const json& j) {
  KindSignature s;
  s.level = j.at("level").get<std::vector<double>>();
  s.rise = j.at("rise").get<double>();
  s.fall = j.at("fall").get<double>();
  s.floor = j.at("floor").get<double>();
  return s;
}

}  // namespace

std::array<KindSignature, kLayerKindCount> SimConfig::default_signatures() {
  // Levels in watts (= microjoules per 1 ms sample / 1000) for pp0 and dram.
  std::array<KindSignature, kLayerKindCount> sig;
  sig[kind_index(LayerKind::Conv)] = {{20.0, 2.0}, 0.15, 0.10, 0.70};
  sig[kind_index(LayerKind::BatchNorm)] = {{13.0, 3.4}, 0.20, 0.20, 0.90};
  sig[kind_index(LayerKind::ReLU)] = {{11.0, 3.0}, 0.0, 0.0, 1.0};
  sig[kind_index(LayerKind::MaxPool)] = {{12.0, 3.8}, 0.10, 0.20, 0.80};
  sig[kind_index(LayerKind::AvgPool)] = {{9.0, 3.6}, 0.20, 0.20, 0.85};
  sig[kind_index(LayerKind::Linear)] = {{16.0, 3.9}, 0.25, 0.05, 0.75};
  sig[kind_index(LayerKind::Add)] = {{10.0, 3.3}, 0.0, 0.0, 1.0};
  return sig;
}

void SimConfig::check() const {
  if (!(sample_rate_hz > 0.0)) throw ConfigError("sample_rate_hz must be positive");
  if (channels.empty()) throw ConfigError("at least one channel is required");
  if (min_layer_samples < 1) throw ConfigError("min_layer_samples must be >= 1");
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  if (!(overhead_to_samples_scale > 0.0)) throw ConfigError("overhead_to_samples_scale must be positive");
  if (gap_samples < 0 || idle_samples < 0) throw ConfigError("gap/idle samples must be >= 0");
  for (int k = 0; k < kLayerKindCount; ++k) {
    if (signatures[k].level.size() != channels.size()) {
      throw ConfigError("signature for " + std::string(to_string(kind_from_index(k))) +
                        " does not cover every channel");
    }
  }
}

json to_json(const SimConfig& cfg) {
  json sigs = json::object();
  for (int k = 0; k < kLayerKindCount; ++k) {
    sigs[std::string(to_string(kind_from_index(k)))] = signature_to_json(cfg.signatures[k]);
  }
  return {{"sample_rate_hz", cfg.sample_rate_hz},
          {"channels", cfg.channels},
          {"overhead_to_samples_scale", cfg.overhead_to_samples_scale},
          {"conv_offset", cfg.conv_offset},
          {"linear_offset", cfg.linear_offset},
          {"maxpool_offset", cfg.maxpool_offset},
          {"batchnorm_samples", cfg.batchnorm_samples},
          {"relu_samples", cfg.relu_samples},
          {"avgpool_samples", cfg.avgpool_samples},
          {"add_samples", cfg.add_samples},
          {"signatures", std::move(sigs)},
          {"hyper_modulation", cfg.hyper_modulation},
          {"noise_std", cfg.noise_std},
          {"min_layer_samples", cfg.min_layer_samples},
          {"gap_samples", cfg.gap_samples},
          {"idle_samples", cfg.idle_samples},
          {"rng_seed", cfg.rng_seed}};
}

SimConfig sim_config_from_json(const json& j) {
  SimConfig cfg;
  try {
    cfg.sample_rate_hz = j.value("sample_rate_hz", cfg.sample_rate_hz);
    cfg.channels = j.value("channels", cfg.channels);
    cfg.overhead_to_samples_scale = j.value("overhead_to_samples_scale", cfg.overhead_to_samples_scale);
    cfg.conv_offset = j.value("conv_offset", cfg.conv_offset);
    cfg.linear_offset = j.value("linear_offset", cfg.linear_offset);
    cfg.maxpool_offset = j.value("maxpool_offset", cfg.maxpool_offset);
    cfg.batchnorm_samples = j.value("batchnorm_samples", cfg.batchnorm_samples);
    cfg.relu_samples = j.value("relu_samples", cfg.relu_samples);
    cfg.avgpool_samples = j.value("avgpool_samples", cfg.avgpool_samples);
    cfg.add_samples = j.value("add_samples", cfg.add_samples);
    if (j.contains("signatures")) {
      for (const auto& [name, sig] : j.at("signatures").items()) {
        cfg.signatures[kind_index(layer_kind_from_string(name))] = signature_from_json(sig);
      }
    }
    cfg.hyper_modulation = j.value("hyper_modulation", cfg.hyper_modulation);
    cfg.noise_std = j.value("noise_std", cfg.noise_std);
    cfg.min_layer_samples = j.value("min_layer_samples", cfg.min_layer_samples);
    cfg.gap_samples = j.value("gap_samples", cfg.gap_samples);
    cfg.idle_samples = j.value("idle_samples", cfg.idle_samples);
    cfg.rng_seed = j.value("rng_seed", cfg.rng_seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sim config: ") + e.what());
  } catch (const MalformedFile& e) {
    throw ConfigError(std::string("sim config: ") + e.what());
  }
  cfg.check();
  return cfg;
}

double layer_overhead(const LayerSpec& layer, const LayerContext& ctx) {
  switch (layer.kind) {
    case LayerKind::Conv:
      return static_cast<double>(conv_overhead(layer.conv(), ctx.out.spatial(), ctx.bs));
    case LayerKind::Linear:
      return static_cast<double>(linear_overhead(layer.linear(), ctx.bs));
    case LayerKind::MaxPool:
      return static_cast<double>(maxpool_overhead(layer.max_pool(), ctx.out, ctx.bs));
    default:
      return 0.0;
  }
}

int layer_duration(const LayerSpec& layer, const LayerContext& ctx, const SimConfig& cfg) {
  double samples = 0.0;
  switch (layer.kind) {
    case LayerKind::Conv:
    case LayerKind::Linear:
    case LayerKind::MaxPool: {
      const double offset = layer.kind == LayerKind::Conv     ? cfg.conv_offset
                            : layer.kind == LayerKind::Linear ? cfg.linear_offset
                                                              : cfg.maxpool_offset;
      samples = offset + cfg.overhead_to_samples_scale * std::log(layer_overhead(layer, ctx));
      break;
    }
    case LayerKind::BatchNorm: samples = cfg.batchnorm_samples; break;
    case LayerKind::ReLU: samples = cfg.relu_samples; break;
    case LayerKind::AvgPool: samples = cfg.avgpool_samples; break;
    case LayerKind::Add: samples = cfg.add_samples; break;
  }
  return std::max(cfg.min_layer_samples, static_cast<int>(std::lround(samples)));
}

std::vector<LayerContext> layer_contexts(const ArchSpec& spec) {
  const auto shapes = propagate_shapes(spec);
  const FeatureShape input{spec.input.c, spec.input.h, spec.input.w, false};
  const int n = static_cast<int>(spec.layers.size());
  int last_linear = -1;
  for (int i = 0; i < n; ++i) {
    if (spec.layers[i].kind == LayerKind::Linear) last_linear = i;
  }
  std::vector<LayerContext> out(n);
  for (int i = 0; i < n; ++i) {
    const int src = layer_inputs(spec, i)[0];
    out[i].bs = spec.input.bs;
    out[i].in = src == kNetworkInput ? input : shapes[src];
    out[i].out = shapes[i];
    out[i].last_linear = i == last_linear;
  }
  return out;
}

std::pair<Trace, Annotation> simulate(const ArchSpec& spec_in, const InputShape& input, const SimConfig& cfg) {
  cfg.check();
  const ArchSpec spec = spec_in.input == input ? spec_in : rebind_input(spec_in, input);
  if (auto v = validate(spec); !v.empty()) throw InvalidArchitecture("simulate: " + v.front());
  const auto contexts = layer_contexts(spec);

  const int n = static_cast<int>(spec.layers.size());
  std::vector<int> durations(n);
  int total = 2 * cfg.idle_samples + std::max(0, n - 1) * cfg.gap_samples;
  for (int i = 0; i < n; ++i) {
    durations[i] = layer_duration(spec.layers[i], contexts[i], cfg);
    total += durations[i];
  }

  const int channels = static_cast<int>(cfg.channels.size());
  std::vector<double> ref(channels, 0.0);
  for (int c = 0; c < channels; ++c) {
    for (const auto& sig : cfg.signatures) ref[c] += sig.level[c];
    ref[c] /= kLayerKindCount;
  }
  // Idle floor: a fraction of the quietest kind.
  std::vector<double> idle(channels, 0.0);
  for (int c = 0; c < channels; ++c) {
    double lo = cfg.signatures[0].level[c];
    for (const auto& sig : cfg.signatures) lo = std::min(lo, sig.level[c]);
    idle[c] = 0.5 * lo;
  }

  Trace trace;
  trace.channels = cfg.channels;
  trace.sample_rate_hz = cfg.sample_rate_hz;
  trace.input_shape = input;
  trace.samples = Signal::Zero(channels, total);
  Annotation ann;

  int cursor = 0;
  auto fill_idle = [&](int count) {
    for (int s = 0; s < count; ++s, ++cursor) {
      for (int c = 0; c < channels; ++c) trace.samples(c, cursor) = static_cast<float>(idle[c]);
    }
  };

  fill_idle(cfg.idle_samples);
  for (int i = 0; i < n; ++i) {
    if (i > 0) fill_idle(cfg.gap_samples);
    const auto& layer = spec.layers[i];
    const auto& sig = cfg.signatures[kind_index(layer.kind)];
    const int w = durations[i];
    for (int s = 0; s < w; ++s) {
      const double t = (s + 0.5) / w;
      const double env = envelope(sig, t);
      for (int c = 0; c < channels; ++c) {
        const double v = sig.level[c] * env * hyper_shape(layer, c, t, cfg.hyper_modulation);
        trace.samples(c, cursor + s) = static_cast<float>(v);
      }
    }
    LayerRecord rec;
    rec.kind = layer.kind;
    rec.start = cursor;
    rec.end = cursor + w - 1;
    rec.layer = layer;
    rec.context = contexts[i];
    ann.layers.push_back(rec);
    cursor += w;
  }
  fill_idle(cfg.idle_samples);

  if (cfg.noise_std > 0.0) {
    std::mt19937_64 rng(cfg.rng_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index s = 0; s < trace.samples.cols(); ++s) {
      for (int c = 0; c < channels; ++c) {
        const double v = trace.samples(c, s) + cfg.noise_std * ref[c] * normal(rng);
        trace.samples(c, s) = static_cast<float>(std::max(0.0, v));
      }
    }
  }
  ann.labels = labels_from_layers(ann.layers, total);
  return {std::move(trace), std::move(ann)};
}

}  // namespace archrecon
