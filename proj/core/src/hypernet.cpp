#include "archrecon/hypernet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "archrecon/preprocess.hpp"

namespace archrecon {

using nlohmann::json;
using nn::Mat;
using nn::Vec;

namespace {

constexpr std::array<std::string_view, kHyperTaskCount> kTaskNames = {
    "conv_cout", "conv_k", "conv_s", "mp_k", "mp_s", "mp_p", "linear_fout"};

constexpr std::array<int, 4> kConvK{1, 3, 5, 7};
constexpr std::array<int, 2> kConvS{1, 2};
constexpr std::array<int, 2> kMpK{2, 3};
constexpr std::array<int, 2> kMpS{1, 2};
constexpr std::array<int, 2> kMpP{0, 1};

int label_position(HyperTask task, int value) {
  const auto set = label_set(task);
  const auto it = std::find(set.begin(), set.end(), value);
  if (it == set.end()) {
    throw LabelSetError(std::string(to_string(task)) + ": label " + std::to_string(value) + " outside the label set");
  }
  return static_cast<int>(it - set.begin());
}

}  // namespace

std::string_view to_string(HyperTask task) { return kTaskNames[task_index(task)]; }

HyperTask hyper_task_from_string(std::string_view name) {
  for (int i = 0; i < kHyperTaskCount; ++i) {
    if (kTaskNames[i] == name) return kAllHyperTasks[i];
  }
  throw ConfigError("unknown hyperparameter task: " + std::string(name));
}

LayerKind task_kind(HyperTask task) {
  switch (task) {
    case HyperTask::ConvCout:
    case HyperTask::ConvK:
    case HyperTask::ConvS: return LayerKind::Conv;
    case HyperTask::MpK:
    case HyperTask::MpS:
    case HyperTask::MpP: return LayerKind::MaxPool;
    case HyperTask::LinearFout: return LayerKind::Linear;
  }
  return LayerKind::Conv;
}

bool is_regression(HyperTask task) { return task == HyperTask::ConvCout || task == HyperTask::LinearFout; }

std::span<const int> label_set(HyperTask task) {
  switch (task) {
    case HyperTask::ConvK: return kConvK;
    case HyperTask::ConvS: return kConvS;
    case HyperTask::MpK: return kMpK;
    case HyperTask::MpS: return kMpS;
    case HyperTask::MpP: return kMpP;
    default: return {};
  }
}

std::string_view to_string(RegressionMode mode) { return mode == RegressionMode::Indirect ? "indirect" : "direct"; }

RegressionMode regression_mode_from_string(std::string_view name) {
  if (name == "indirect") return RegressionMode::Indirect;
  if (name == "direct") return RegressionMode::Direct;
  throw ConfigError("regression mode must be indirect or direct, got " + std::string(name));
}

void HyperNetConfig::check() const {
  if (channels.empty()) throw ConfigError("hypernet needs at least one channel");
  for (int w : widths) {
    if (w < 1) throw ConfigError("hypernet widths must be positive");
  }
  if (input_length < 16 || input_length % 16 != 0) throw ConfigError("input_length must be a multiple of 16");
  if (bins < 1 || (input_length / 16) % bins != 0) throw ConfigError("bins must divide input_length / 16");
}

json to_json(const HyperNetConfig& cfg) {
  return {{"channels", cfg.channels},
          {"widths", cfg.widths},
          {"input_length", cfg.input_length},
          {"bins", cfg.bins},
          {"width_features", cfg.width_features},
          {"regression", std::string(to_string(cfg.regression))}};
}

HyperNetConfig hypernet_config_from_json(const json& j) {
  HyperNetConfig cfg;
  try {
    cfg.channels = j.value("channels", cfg.channels);
    cfg.widths = j.value("widths", cfg.widths);
    cfg.input_length = j.value("input_length", cfg.input_length);
    cfg.bins = j.value("bins", cfg.bins);
    cfg.width_features = j.value("width_features", cfg.width_features);
    cfg.regression = regression_mode_from_string(j.value("regression", std::string("indirect")));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("hypernet config: ") + e.what());
  }
  cfg.check();
  return cfg;
}

double task_target(HyperTask task, const LayerSpec& layer, const LayerContext& ctx, RegressionMode mode) {
  if (layer.kind != task_kind(task)) {
    throw KindMismatch(std::string(to_string(task)) + " cannot take a " + std::string(to_string(layer.kind)) +
                       " layer");
  }
  switch (task) {
    case HyperTask::ConvK: return layer.conv().k;
    case HyperTask::ConvS: return layer.conv().s;
    case HyperTask::MpK: return layer.max_pool().k;
    case HyperTask::MpS: return layer.max_pool().s;
    case HyperTask::MpP: return layer.max_pool().p;
    case HyperTask::ConvCout:
      if (mode == RegressionMode::Direct) return std::log2(static_cast<double>(layer.conv().c_out));
      return std::log(static_cast<double>(conv_overhead(layer.conv(), ctx.out.spatial(), ctx.bs)));
    case HyperTask::LinearFout:
      if (mode == RegressionMode::Direct) return std::log2(static_cast<double>(layer.linear().f_out));
      return std::log(static_cast<double>(linear_overhead(layer.linear(), ctx.bs)));
  }
  return 0.0;
}

std::vector<HyperExample> make_examples(HyperTask task, const std::vector<LabeledTrace>& traces,
                                        RegressionMode mode) {
  std::vector<HyperExample> out;
  for (const auto& lt : traces) {
    for (const auto& rec : lt.annotation.layers) {
      if (rec.kind != task_kind(task)) continue;
      out.push_back({cut_segment(lt.trace, rec), task_target(task, rec.layer, rec.context, mode)});
    }
  }
  return out;
}

// ---- model -------------------------------------------------------------------------

HyperNet::HyperNet(HyperNetConfig cfg, HyperTask task, std::uint64_t seed) : cfg_(std::move(cfg)), task_(task) {
  cfg_.check();
  int c = static_cast<int>(cfg_.channels.size());
  for (int i = 0; i < 4; ++i) {
    enc_[i] = nn::ResBlock("enc" + std::to_string(i), c, cfg_.widths[i]);
    c = cfg_.widths[i];
  }
  const int features = c * cfg_.bins + (cfg_.width_features ? 2 : 0);
  fc_ = nn::Dense("fc", features, outputs());
  nn::Rng rng(seed);
  for (auto& e : enc_) e.init(rng);
  fc_.init(rng);
}

int HyperNet::outputs() const { return is_regression(task_) ? 1 : static_cast<int>(label_set(task_).size()); }

Mat HyperNet::prepare(const Segment& seg) const {
  if (seg.values.cols() < 1) throw Error("empty segment");
  const bool same = static_cast<int>(seg.values.rows()) == static_cast<int>(cfg_.channels.size());
  if (!same) throw Error("segment channel count does not match the model");
  return resize(normalize(seg.values), cfg_.input_length);
}

Vec HyperNet::aux_features(const Segment& seg) const {
  if (!cfg_.width_features) return Vec(0);
  const double w = seg.source_width > 0 ? seg.source_width : static_cast<double>(seg.values.cols());
  const std::array<double, 2> raw{w, std::log(w)};
  Vec aux(2);
  for (int i = 0; i < 2; ++i) aux(i) = static_cast<float>((raw[i] - aux_mean_[i]) / aux_std_[i]);
  return aux;
}

Vec HyperNet::head(const Mat& x, const Vec& aux, Cache* cache) const {
  Mat cur = x;
  for (int i = 0; i < 4; ++i) {
    cur = nn::max_pool2(enc_[i].forward(cur, cache ? &cache->enc[i] : nullptr), cache ? &cache->pool[i] : nullptr);
  }
  const Vec pooled = nn::adaptive_avg_pool(cur, cfg_.bins);
  Vec features(pooled.size() + aux.size());
  features << pooled, aux;
  if (cache) {
    cache->features = features;
    cache->last_length = static_cast<int>(cur.cols());
  }
  return fc_.forward(features);
}

void HyperNet::backward(const Vec& dout, const Cache& cache) {
  const Vec dfeat = fc_.backward(dout, cache.features);
  const int c = cfg_.widths[3];
  Mat dcur = nn::adaptive_avg_pool_backward(dfeat.head(c * cfg_.bins), c, cache.last_length, cfg_.bins);
  for (int i = 3; i >= 0; --i) dcur = enc_[i].backward(nn::max_pool2_backward(dcur, cache.pool[i]), cache.enc[i]);
}

void HyperNet::check_kind(const Segment& seg) const {
  if (seg.kind != task_kind(task_)) {
    throw KindMismatch(std::string(to_string(task_)) + " model fed a " + std::string(to_string(seg.kind)) +
                       " segment");
  }
}

ClassPrediction HyperNet::classify(const Segment& seg) const {
  if (is_regression(task_)) throw ConfigError(std::string(to_string(task_)) + " is a regression task");
  check_kind(seg);
  const Vec logits = head(prepare(seg), aux_features(seg));
  const Eigen::ArrayXd e = (logits.cast<double>().array() - logits.cast<double>().maxCoeff()).exp();
  ClassPrediction out;
  out.confidence.resize(static_cast<std::size_t>(e.size()));
  for (Eigen::Index i = 0; i < e.size(); ++i) out.confidence[static_cast<std::size_t>(i)] = e(i) / e.sum();
  const auto best = std::max_element(out.confidence.begin(), out.confidence.end()) - out.confidence.begin();
  out.label = label_set(task_)[static_cast<std::size_t>(best)];
  return out;
}

double HyperNet::regress(const Segment& seg) const {
  if (!is_regression(task_)) throw ConfigError(std::string(to_string(task_)) + " is a classification task");
  check_kind(seg);
  const Vec out = head(prepare(seg), aux_features(seg));
  return target_mean_ + target_std_ * static_cast<double>(out(0));
}

void HyperNet::set_target_scaling(double mean, double stddev) {
  target_mean_ = mean;
  target_std_ = stddev > 1e-6 ? stddev : 1.0;
}

void HyperNet::set_aux_scaling(const std::array<double, 2>& mean, const std::array<double, 2>& stddev) {
  for (int i = 0; i < 2; ++i) {
    aux_mean_[i] = mean[i];
    aux_std_[i] = stddev[i] > 1e-6 ? stddev[i] : 1.0;
  }
}

nn::ParamList HyperNet::params() {
  nn::ParamList out;
  for (auto& e : enc_) e.collect(out);
  fc_.collect(out);
  return out;
}

Checkpoint HyperNet::to_checkpoint(bool with_velocity) const {
  Checkpoint ckpt;
  ckpt.kind = "hypernet";
  ckpt.config = {{"task", std::string(to_string(task_))},
                 {"net", to_json(cfg_)},
                 {"target_mean", target_mean_},
                 {"target_std", target_std_},
                 {"aux_mean", aux_mean_},
                 {"aux_std", aux_std_}};
  store_params(ckpt, const_cast<HyperNet*>(this)->params(), with_velocity);
  return ckpt;
}

HyperNet HyperNet::from_checkpoint(const Checkpoint& ckpt, bool with_velocity) {
  if (ckpt.kind != "hypernet") throw MalformedFile("checkpoint kind is " + ckpt.kind + ", expected hypernet");
  try {
    HyperNet net(hypernet_config_from_json(ckpt.config.at("net")),
                 hyper_task_from_string(ckpt.config.at("task").get<std::string>()));
    net.set_target_scaling(ckpt.config.at("target_mean").get<double>(), ckpt.config.at("target_std").get<double>());
    net.set_aux_scaling(ckpt.config.at("aux_mean").get<std::array<double, 2>>(),
                        ckpt.config.at("aux_std").get<std::array<double, 2>>());
    load_params(ckpt, net.params(), with_velocity);
    return net;
  } catch (const json::exception& e) {
    throw MalformedFile(std::string("hypernet checkpoint: ") + e.what());
  }
}

// ---- training ----------------------------------------------------------------------

void HyperTrainConfig::check() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (max_examples < 0) throw ConfigError("max_examples must be >= 0");
}

json to_json(const HyperTrainConfig& cfg) {
  return {{"epochs", cfg.epochs},     {"batch_size", cfg.batch_size}, {"lr", cfg.lr},
          {"momentum", cfg.momentum}, {"clip_norm", cfg.clip_norm},   {"seed", cfg.seed},
          {"max_examples", cfg.max_examples}};
}

HyperTrainConfig hyper_train_config_from_json(const json& j) {
  HyperTrainConfig cfg;
  try {
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.momentum = j.value("momentum", cfg.momentum);
    cfg.clip_norm = j.value("clip_norm", cfg.clip_norm);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.max_examples = j.value("max_examples", cfg.max_examples);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("hypernet training config: ") + e.what());
  }
  cfg.check();
  return cfg;
}

double mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw Error("mse_loss: size mismatch");
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += (pred[i] - target[i]) * (pred[i] - target[i]);
  return sum / static_cast<double>(pred.size());
}

std::vector<double> mse_loss_grad(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw Error("mse_loss_grad: size mismatch");
  std::vector<double> g(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) g[i] = 2.0 * (pred[i] - target[i]) / static_cast<double>(pred.size());
  return g;
}

HyperTrainResult train_task(HyperTask task, const std::vector<HyperExample>& examples, const HyperNetConfig& net_cfg,
                            const HyperTrainConfig& cfg, const std::function<void(const HyperEpoch&)>& on_epoch) {
  cfg.check();
  net_cfg.check();
  const bool regression = is_regression(task);
  for (const auto& ex : examples) {
    if (ex.segment.kind != task_kind(task)) {
      throw KindMismatch(std::string(to_string(task)) + " training set holds a " +
                         std::string(to_string(ex.segment.kind)) + " segment");
    }
    if (!regression) label_position(task, static_cast<int>(std::lround(ex.target)));
  }
  if (examples.empty()) throw Error(std::string(to_string(task)) + ": no training examples");

  std::vector<std::size_t> pick(examples.size());
  std::iota(pick.begin(), pick.end(), 0);
  if (cfg.max_examples > 0 && static_cast<std::size_t>(cfg.max_examples) < pick.size()) {
    nn::Rng rng(derive_seed(cfg.seed, 0xE4A));
    std::shuffle(pick.begin(), pick.end(), rng);
    pick.resize(static_cast<std::size_t>(cfg.max_examples));
    std::sort(pick.begin(), pick.end());
  }

  HyperTrainResult result{HyperNet(net_cfg, task, derive_seed(cfg.seed, 0x4E7, task_index(task))), {}};
  HyperNet& net = result.model;

  {
    std::array<double, 2> mean{}, sq{};
    for (std::size_t i : pick) {
      const double w = examples[i].segment.source_width > 0 ? examples[i].segment.source_width
                                                            : static_cast<double>(examples[i].segment.values.cols());
      const std::array<double, 2> raw{w, std::log(w)};
      for (int d = 0; d < 2; ++d) {
        mean[d] += raw[d];
        sq[d] += raw[d] * raw[d];
      }
    }
    std::array<double, 2> sd{};
    const auto m = static_cast<double>(pick.size());
    for (int d = 0; d < 2; ++d) {
      mean[d] /= m;
      sd[d] = std::sqrt(std::max(0.0, sq[d] / m - mean[d] * mean[d]));
    }
    net.set_aux_scaling(mean, sd);
  }

  std::vector<Mat> inputs;
  std::vector<Vec> aux;
  std::vector<double> targets;
  for (std::size_t i : pick) {
    inputs.push_back(net.prepare(examples[i].segment));
    aux.push_back(net.aux_features(examples[i].segment));
    targets.push_back(examples[i].target);
  }
  if (regression) {
    const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(targets.size());
    double var = 0.0;
    for (double t : targets) var += (t - mean) * (t - mean);
    net.set_target_scaling(mean, std::sqrt(var / static_cast<double>(targets.size())));
  }
  // Indirect targets are ln(overhead); direct ones log2(width). Either way a
  // prediction within half a binary order of magnitude snaps to the truth.
  const double tolerance =
      net_cfg.regression == RegressionMode::Indirect ? 0.5 * std::numbers::ln2 : 0.5;

  if (cfg.checkpoint && std::filesystem::exists(*cfg.checkpoint)) {
    const auto ckpt = read_checkpoint(*cfg.checkpoint);
    net = HyperNet::from_checkpoint(ckpt, true);
    for (const auto& h : ckpt.metadata.at("history")) {
      result.history.push_back({h.at("epoch").get<int>(), h.at("lr").get<double>(), h.at("loss").get<double>(),
                                h.at("accuracy").get<double>(), h.at("seconds").get<double>()});
    }
  }

  const auto params = net.params();
  const nn::SgdConfig sgd{cfg.lr, cfg.momentum, 0.0, cfg.clip_norm};
  const auto n = inputs.size();
  for (int epoch = static_cast<int>(result.history.size()); epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = nn::cosine_lr(cfg.lr, epoch, cfg.epochs);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    nn::Rng rng(derive_seed(cfg.seed, 0xE90C, epoch));
    std::shuffle(order.begin(), order.end(), rng);

    HyperEpoch stats{epoch, lr, 0.0, 0.0, 0.0};
    std::size_t correct = 0;
    for (std::size_t b = 0; b < n; b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(n, b + static_cast<std::size_t>(cfg.batch_size));
      const auto batch = static_cast<float>(end - b);
      nn::zero_grad(params);
      for (std::size_t k = b; k < end; ++k) {
        const std::size_t i = order[k];
        HyperNet::Cache cache;
        const Vec out = net.head(inputs[i], aux[i], &cache);
        Vec dout(out.size());
        if (regression) {
          const double y = (targets[i] - net.target_mean()) / net.target_std();
          const double diff = static_cast<double>(out(0)) - y;
          stats.loss += diff * diff;
          dout(0) = static_cast<float>(2.0 * diff) / batch;
          correct += std::abs(diff * net.target_std()) < tolerance ? 1 : 0;
        } else {
          const int y = label_position(task, static_cast<int>(std::lround(targets[i])));
          const Eigen::ArrayXd z = out.cast<double>().array() - out.cast<double>().maxCoeff();
          const Eigen::ArrayXd p = z.exp() / z.exp().sum();
          stats.loss -= std::log(std::max(p(y), kProbFloor));
          Eigen::ArrayXd g = p;
          g(y) -= 1.0;
          dout = (g / static_cast<double>(batch)).cast<float>().matrix();
          Eigen::Index best = 0;
          p.maxCoeff(&best);
          correct += best == y ? 1 : 0;
        }
        net.backward(dout, cache);
      }
      nn::sgd_step(params, sgd, lr);
    }
    stats.loss /= static_cast<double>(n);
    stats.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(stats);
    if (cfg.checkpoint) {
      Checkpoint ckpt = net.to_checkpoint(true);
      json hist = json::array();
      for (const auto& h : result.history) {
        hist.push_back({{"epoch", h.epoch}, {"lr", h.lr}, {"loss", h.loss}, {"accuracy", h.accuracy},
                        {"seconds", h.seconds}});
      }
      ckpt.metadata = {{"seed", cfg.seed},
                       {"corpus_hash", cfg.corpus_hash},
                       {"epoch", result.history.size()},
                       {"train", to_json(cfg)},
                       {"history", std::move(hist)}};
      write_checkpoint(ckpt, *cfg.checkpoint);
    }
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

// ---- inference ---------------------------------------------------------------------

ClassPrediction infer_classification(const HyperNet& model, const Segment& seg) { return model.classify(seg); }

int snap_width(double estimate) {
  if (!(estimate > 0.0) || !std::isfinite(estimate)) throw InferenceError("non-positive width estimate");
  const double e = std::clamp(std::round(std::log2(estimate)), 4.0, 30.0);
  return 1 << static_cast<int>(e);
}

int cout_from_log_overhead(double log_overhead, const CoutContext& ctx) {
  if (ctx.c_in <= 0 || ctx.bs <= 0) throw InferenceError("c_in and bs must be positive");
  const int p = same_padding(ctx.k);
  const ConvParams probe{ctx.c_in, 16, ctx.k, ctx.s, p, 1, 1};
  SpatialShape out;
  try {
    out = derive_output_shape(LayerSpec::conv(probe), {ctx.h_in, ctx.w_in});
  } catch (const InvalidArchitecture& e) {
    throw InferenceError(std::string("conv output shape: ") + e.what());
  }
  const double denom = static_cast<double>(ctx.c_in) * ctx.k * ctx.k * out.h * out.w * ctx.bs;
  return snap_width(std::exp(log_overhead) / denom);
}

int fout_from_log_overhead(double log_overhead, const FoutContext& ctx) {
  if (ctx.f_in <= 0 || ctx.bs <= 0) throw InferenceError("f_in and bs must be positive");
  const double estimate = std::exp(log_overhead) / (static_cast<double>(ctx.f_in) * ctx.bs);
  if (!(estimate > 0.0)) throw InferenceError("non-positive f_out estimate");
  if (ctx.is_last) return ctx.class_count;
  return snap_width(estimate);
}

int infer_cout(const HyperNet& model, const Segment& seg, const CoutContext& ctx) {
  if (model.task() != HyperTask::ConvCout) throw ConfigError("infer_cout needs a conv_cout model");
  const double v = model.regress(seg);
  if (model.config().regression == RegressionMode::Direct) return snap_width(std::exp2(v));
  return cout_from_log_overhead(v, ctx);
}

int infer_fout(const HyperNet& model, const Segment& seg, const FoutContext& ctx) {
  if (model.task() != HyperTask::LinearFout) throw ConfigError("infer_fout needs a linear_fout model");
  const double v = model.regress(seg);
  if (model.config().regression == RegressionMode::Direct) {
    if (ctx.is_last) return ctx.class_count;
    return snap_width(std::exp2(v));
  }
  return fout_from_log_overhead(v, ctx);
}

}  // namespace archrecon
