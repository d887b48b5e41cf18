#include "archrecon/segnet_train.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>

#include "archrecon/metrics.hpp"
#include "archrecon/preprocess.hpp"

namespace archrecon {

using nlohmann::json;
using nn::Mat;

void SegTrainConfig::check() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be >= 0");
  if (max_traces < 0) throw ConfigError("max_traces must be >= 0");
}

json to_json(const SegTrainConfig& cfg) {
  return {{"epochs", cfg.epochs},       {"batch_size", cfg.batch_size}, {"lr", cfg.lr},
          {"momentum", cfg.momentum},   {"clip_norm", cfg.clip_norm},   {"seed", cfg.seed},
          {"max_traces", cfg.max_traces}};
}

SegTrainConfig seg_train_config_from_json(const json& j) {
  SegTrainConfig cfg;
  try {
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.momentum = j.value("momentum", cfg.momentum);
    cfg.clip_norm = j.value("clip_norm", cfg.clip_norm);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.max_traces = j.value("max_traces", cfg.max_traces);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("segnet training config: ") + e.what());
  }
  cfg.check();
  return cfg;
}

json to_json(const EpochStats& s) {
  return {{"epoch", s.epoch}, {"lr", s.lr}, {"loss", s.loss}, {"ce", s.ce},
          {"up", s.up},       {"sa", s.sa}, {"seconds", s.seconds}};
}

EpochStats epoch_stats_from_json(const json& j) {
  return {j.at("epoch").get<int>(), j.at("lr").get<double>(), j.at("loss").get<double>(),
          j.at("ce").get<double>(), j.at("up").get<double>(), j.at("sa").get<double>(),
          j.at("seconds").get<double>()};
}

namespace {

struct Prepared {
  Mat x;                  // channels x padded length
  std::vector<int> labels;  // kIgnoreLabel on padding
  Positions positions;
};

Prepared prepare(const LabeledTrace& lt, const SegNetConfig& cfg) {
  if (lt.annotation.layers.empty()) throw Error(lt.arch_id + ": trace has no layer positions");
  Prepared p;
  p.x = prepare_input(lt.trace, cfg.channels);
  p.labels.assign(static_cast<std::size_t>(p.x.cols()), kIgnoreLabel);
  std::copy(lt.annotation.labels.begin(), lt.annotation.labels.end(), p.labels.begin());
  p.positions = lt.annotation.positions();
  return p;
}

std::vector<std::vector<int>> make_batches(const std::vector<Prepared>& data, int batch_size, std::uint64_t seed) {
  nn::Rng rng(seed);
  std::uniform_real_distribution<double> jitter(0.0, 1.0);
  std::vector<std::pair<double, int>> keyed;
  for (int i = 0; i < static_cast<int>(data.size()); ++i) {
    keyed.push_back({static_cast<double>(data[i].x.cols()) + jitter(rng), i});
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::vector<int>> batches;
  for (std::size_t i = 0; i < keyed.size(); i += static_cast<std::size_t>(batch_size)) {
    std::vector<int> b;
    for (std::size_t k = i; k < std::min(keyed.size(), i + static_cast<std::size_t>(batch_size)); ++k) {
      b.push_back(keyed[k].second);
    }
    batches.push_back(std::move(b));
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

Checkpoint make_checkpoint(const SegNet& net, const SegTrainConfig& cfg, const std::vector<EpochStats>& history) {
  Checkpoint ckpt = net.to_checkpoint(true);
  json hist = json::array();
  for (const auto& h : history) hist.push_back(to_json(h));
  ckpt.metadata = {{"seed", cfg.seed},
                   {"corpus_hash", cfg.corpus_hash},
                   {"epoch", history.size()},
                   {"train", to_json(cfg)},
                   {"history", std::move(hist)},
                   {"nondeterminism", "none: single-threaded kernels"}};
  return ckpt;
}

SegTrainResult run(const std::vector<LabeledTrace>& corpus, const SegNetConfig& net_cfg, const SegTrainConfig& cfg,
                   int stop_after, const EpochCallback& on_epoch) {
  cfg.check();
  net_cfg.check();
  std::vector<int> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  if (cfg.max_traces > 0 && static_cast<std::size_t>(cfg.max_traces) < order.size()) {
    nn::Rng rng(derive_seed(cfg.seed, 0xCA9));
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(static_cast<std::size_t>(cfg.max_traces));
    std::sort(order.begin(), order.end());
  }
  std::vector<Prepared> data;
  data.reserve(order.size());
  for (int i : order) data.push_back(prepare(corpus[static_cast<std::size_t>(i)], net_cfg));
  if (data.empty()) throw Error("segnet training corpus is empty");

  SegTrainResult result{SegNet(net_cfg, derive_seed(cfg.seed, 0x1417)), {}};
  if (cfg.checkpoint && std::filesystem::exists(*cfg.checkpoint)) {
    const auto ckpt = read_checkpoint(*cfg.checkpoint);
    if (ckpt.config != to_json(net_cfg)) throw ConfigError("checkpoint was trained with a different segnet config");
    result.model = SegNet::from_checkpoint(ckpt, true);
    for (const auto& h : ckpt.metadata.at("history")) result.history.push_back(epoch_stats_from_json(h));
  }

  SegNet& net = result.model;
  const auto params = net.params();
  const nn::SgdConfig sgd{cfg.lr, cfg.momentum, 0.0, cfg.clip_norm};
  int ran = 0;
  for (int epoch = static_cast<int>(result.history.size()); epoch < cfg.epochs && ran < stop_after; ++epoch, ++ran) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = nn::cosine_lr(cfg.lr, epoch, cfg.epochs);
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    std::size_t hits = 0, scored = 0;

    for (const auto& batch : make_batches(data, cfg.batch_size, derive_seed(cfg.seed, 0xBA7C, epoch))) {
      Eigen::Index longest = 0;
      for (int i : batch) longest = std::max(longest, data[i].x.cols());
      nn::zero_grad(params);
      for (int i : batch) {
        const auto& d = data[i];
        Mat x = Mat::Zero(d.x.rows(), longest);
        x.leftCols(d.x.cols()) = d.x;
        std::vector<int> labels(static_cast<std::size_t>(longest), kIgnoreLabel);
        std::copy(d.labels.begin(), d.labels.end(), labels.begin());

        SegNet::Cache cache;
        const Mat logits = net.logits(x, &cache);
        const ProbMatrix probs = softmax_rows(logits.transpose().cast<double>());
        const double ce = ce_loss(probs, labels, Reduction::Mean);
        const double up = up_loss(probs, d.positions, labels, Reduction::Mean);
        stats.ce += ce;
        stats.up += up;
        stats.loss += ce + net_cfg.up_lambda * up;

        const ProbMatrix dprobs = total_loss_grad(probs, labels, d.positions, net_cfg.up_lambda, Reduction::Mean);
        const Mat dlogits = softmax_rows_backward(probs, dprobs).transpose().cast<float>() /
                            static_cast<float>(batch.size());
        net.backward(dlogits, cache);

        for (Eigen::Index s = 0; s < probs.rows(); ++s) {
          const int y = labels[static_cast<std::size_t>(s)];
          if (y < 0 || y == kBackgroundLabel) continue;
          Eigen::Index best = 0;
          probs.row(s).maxCoeff(&best);
          hits += best == y ? 1 : 0;
          ++scored;
        }
      }
      nn::sgd_step(params, sgd, lr);
    }
    const auto n = static_cast<double>(data.size());
    stats.loss /= n;
    stats.ce /= n;
    stats.up /= n;
    stats.sa = scored ? static_cast<double>(hits) / static_cast<double>(scored) : 1.0;
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(stats);
    if (cfg.checkpoint) write_checkpoint(make_checkpoint(net, cfg, result.history), *cfg.checkpoint);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

}  // namespace

SegTrainResult train_segnet(const std::vector<LabeledTrace>& corpus, const SegNetConfig& net_cfg,
                            const SegTrainConfig& cfg, const EpochCallback& on_epoch) {
  return run(corpus, net_cfg, cfg, cfg.epochs, on_epoch);
}

SegTrainResult train_segnet_partial(const std::vector<LabeledTrace>& corpus, const SegNetConfig& net_cfg,
                                    const SegTrainConfig& cfg, int stop_after, const EpochCallback& on_epoch) {
  return run(corpus, net_cfg, cfg, stop_after, on_epoch);
}

}  // namespace archrecon
