#include "archrecon/segnet.hpp"

#include "archrecon/preprocess.hpp"

namespace archrecon {

using nlohmann::json;
using nn::Mat;

void SegNetConfig::check() const {
  if (channels.empty()) throw ConfigError("segnet needs at least one channel");
  if (class_count < 2) throw ConfigError("segnet class_count must be >= 2");
  for (int w : widths) {
    if (w < 1) throw ConfigError("segnet widths must be positive");
  }
  if (temporal && temporal_hidden < 1) throw ConfigError("temporal_hidden must be positive");
  if (!(up_lambda >= 0.0)) throw ConfigError("up_lambda must be >= 0");
}

json to_json(const SegNetConfig& cfg) {
  return {{"channels", cfg.channels},         {"class_count", cfg.class_count},
          {"background", cfg.background},     {"widths", cfg.widths},
          {"temporal_hidden", cfg.temporal_hidden}, {"temporal", cfg.temporal},
          {"up_lambda", cfg.up_lambda}};
}

SegNetConfig segnet_config_from_json(const json& j) {
  SegNetConfig cfg;
  try {
    cfg.channels = j.value("channels", cfg.channels);
    cfg.class_count = j.value("class_count", cfg.class_count);
    cfg.background = j.value("background", cfg.background);
    cfg.widths = j.value("widths", cfg.widths);
    cfg.temporal_hidden = j.value("temporal_hidden", cfg.temporal_hidden);
    cfg.temporal = j.value("temporal", cfg.temporal);
    cfg.up_lambda = j.value("up_lambda", cfg.up_lambda);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("segnet config: ") + e.what());
  }
  cfg.check();
  return cfg;
}

std::vector<int> SegmentationMap::argmax() const {
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index s = 0; s < probs.rows(); ++s) {
    Eigen::Index best = 0;
    probs.row(s).maxCoeff(&best);
    out[static_cast<std::size_t>(s)] = static_cast<int>(best);
  }
  return out;
}

Signal prepare_input(const Trace& trace, const std::vector<std::string>& channels) {
  const Trace t = trace.channels == channels ? trace : trace.select_channels(channels);
  return pad_to_multiple(normalize(t.samples), kDownsampleFactor);
}

SegNet::SegNet(SegNetConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.check();
  const auto& w = cfg_.widths;
  int c = cfg_.in_channels();
  for (int i = 0; i < kStages; ++i) {
    enc_[i] = nn::ResBlock("enc" + std::to_string(i), c, w[i]);
    c = w[i];
  }
  const int t_ch = cfg_.temporal ? 2 * cfg_.temporal_hidden : 0;
  if (cfg_.temporal) lstm_ = nn::BiLstm("temporal", w[kStages - 1], cfg_.temporal_hidden);
  int prev = w[kStages - 1];
  for (int j = 0; j < kStages; ++j) {
    const int level = kStages - 1 - j;
    dec_[j] = nn::ResBlock("dec" + std::to_string(j), prev + w[level] + t_ch, w[level]);
    prev = w[level];
  }
  head_ = nn::Conv1d("head", prev, cfg_.outputs(), 1);

  nn::Rng rng(seed);
  for (auto& e : enc_) e.init(rng);
  if (cfg_.temporal) lstm_.init(rng);
  for (auto& d : dec_) d.init(rng);
  head_.init(rng);
}

Mat SegNet::logits(const Mat& x, Cache* cache) const {
  Cache local;
  Cache& k = cache ? *cache : local;
  const bool keep = cache != nullptr;

  std::array<Mat, kStages> skips;
  Mat cur = x;
  k.length[0] = static_cast<int>(x.cols());
  for (int i = 0; i < kStages; ++i) {
    skips[i] = enc_[i].forward(cur, keep ? &k.enc[i] : nullptr);
    cur = nn::max_pool2(skips[i], keep ? &k.pool[i] : nullptr);
    k.length[i + 1] = static_cast<int>(cur.cols());
  }
  Mat temporal;
  if (cfg_.temporal) temporal = lstm_.forward(cur, keep ? &k.lstm : nullptr);

  for (int j = 0; j < kStages; ++j) {
    const int level = kStages - 1 - j;
    const int len = k.length[level];
    const Mat up = nn::upsample_linear(cur, len);
    Mat in(up.rows() + skips[level].rows() + temporal.rows(), len);
    in.topRows(up.rows()) = up;
    in.middleRows(up.rows(), skips[level].rows()) = skips[level];
    if (cfg_.temporal) in.bottomRows(temporal.rows()) = nn::upsample_linear(temporal, len);
    cur = dec_[j].forward(in, keep ? &k.dec[j] : nullptr);
  }
  if (keep) k.temporal = std::move(temporal);
  return head_.forward(cur, keep ? &k.head : nullptr);
}

void SegNet::backward(const Mat& dlogits, const Cache& k) {
  const auto& w = cfg_.widths;
  const int t_ch = cfg_.temporal ? 2 * cfg_.temporal_hidden : 0;
  const int t_len = k.length[kStages];

  Mat dcur = head_.backward(dlogits, k.head);
  std::array<Mat, kStages> dskip;
  Mat dtemporal = Mat::Zero(t_ch, t_len);
  for (int j = kStages - 1; j >= 0; --j) {
    const int level = kStages - 1 - j;
    const int prev_ch = j == 0 ? w[kStages - 1] : w[level + 1];
    const int prev_len = k.length[level + 1];
    const Mat din = dec_[j].backward(dcur, k.dec[j]);
    dskip[level] = din.middleRows(prev_ch, w[level]);
    if (cfg_.temporal) dtemporal += nn::upsample_linear_backward(din.bottomRows(t_ch), t_len);
    dcur = nn::upsample_linear_backward(din.topRows(prev_ch), prev_len);
  }
  if (cfg_.temporal) dcur += lstm_.backward(dtemporal, k.lstm);
  for (int i = kStages - 1; i >= 0; --i) {
    Mat de = nn::max_pool2_backward(dcur, k.pool[i]);
    de += dskip[i];
    dcur = enc_[i].backward(de, k.enc[i]);
  }
}

SegmentationMap SegNet::forward(const Mat& x) const {
  if (x.rows() != cfg_.in_channels()) throw Error("segnet: channel count does not match the model");
  if (x.cols() < kDownsampleFactor || x.cols() % kDownsampleFactor != 0) {
    throw Error("segnet: input length must be a positive multiple of 16");
  }
  return {nn::softmax_columns(logits(x)).transpose()};
}

SegmentationMap SegNet::predict(const Trace& trace) const {
  if (trace.length() < 1) return {Eigen::MatrixXf(0, cfg_.outputs())};
  SegmentationMap map = forward(prepare_input(trace, cfg_.channels));
  map.probs.conservativeResize(trace.length(), Eigen::NoChange);
  return map;
}

nn::ParamList SegNet::params() {
  nn::ParamList out;
  for (auto& e : enc_) e.collect(out);
  if (cfg_.temporal) lstm_.collect(out);
  for (auto& d : dec_) d.collect(out);
  head_.collect(out);
  return out;
}

Checkpoint SegNet::to_checkpoint(bool with_velocity) const {
  Checkpoint ckpt;
  ckpt.kind = "segnet";
  ckpt.config = to_json(cfg_);
  store_params(ckpt, const_cast<SegNet*>(this)->params(), with_velocity);
  return ckpt;
}

SegNet SegNet::from_checkpoint(const Checkpoint& ckpt, bool with_velocity) {
  if (ckpt.kind != "segnet") throw MalformedFile("checkpoint kind is " + ckpt.kind + ", expected segnet");
  SegNet net(segnet_config_from_json(ckpt.config));
  load_params(ckpt, net.params(), with_velocity);
  return net;
}

// ---- segment extraction ---------------------------------------------------------

namespace {

struct Run {
  int label;
  int start;
  int end;  // inclusive
  int width() const { return end - start + 1; }
};

double run_mean(const SegmentationMap& map, const Run& r, int label) {
  return map.probs.col(label).segment(r.start, r.width()).cast<double>().mean();
}

}  // namespace

Extraction extract_segments(const SegmentationMap& map, int min_run) {
  Extraction out;
  const auto labels = map.argmax();
  std::vector<Run> runs;
  for (int s = 0; s < static_cast<int>(labels.size()); ++s) {
    if (!runs.empty() && runs.back().label == labels[s]) {
      runs.back().end = s;
    } else {
      runs.push_back({labels[s], s, s});
    }
  }

  auto collapse = [&runs] {
    std::vector<Run> merged;
    for (const auto& r : runs) {
      if (!merged.empty() && merged.back().label == r.label) {
        merged.back().end = r.end;
      } else {
        merged.push_back(r);
      }
    }
    runs = std::move(merged);
  };

  // Repeatedly absorb the shortest too-short run.
  while (min_run > 1 && runs.size() > 1) {
    std::size_t pick = runs.size();
    for (std::size_t i = 0; i < runs.size(); ++i) {
      if (runs[i].width() < min_run && (pick == runs.size() || runs[i].width() < runs[pick].width())) pick = i;
    }
    if (pick == runs.size()) break;
    const Run r = runs[pick];
    const bool has_left = pick > 0;
    const bool has_right = pick + 1 < runs.size();
    double left = has_left ? run_mean(map, r, runs[pick - 1].label) : -1.0;
    double right = has_right ? run_mean(map, r, runs[pick + 1].label) : -1.0;
    if (left >= right) {
      runs[pick - 1].end = r.end;
    } else {
      runs[pick + 1].start = r.start;
    }
    runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(pick));
    collapse();
  }
  collapse();

  for (const auto& r : runs) {
    if (r.label >= kLayerKindCount) continue;
    out.kinds.push_back(kind_from_index(r.label));
    out.positions.push_back({r.start, r.end});
    out.confidence.push_back(run_mean(map, r, r.label));
  }
  return out;
}

}  // namespace archrecon
