#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "archrecon/checkpoint.hpp"
#include "archrecon/losses.hpp"
#include "archrecon/lstm.hpp"
#include "archrecon/nn.hpp"
#include "archrecon/trace.hpp"

namespace archrecon {

inline constexpr int kStages = 4;

struct SegNetConfig {
  std::vector<std::string> channels{"pp0", "dram"};
  int class_count = kLayerKindCount;
  // Adds an output column for samples that belong to no layer.
  bool background = false;
  std::array<int, kStages> widths{8, 16, 32, 64};
  int temporal_hidden = 16;  // per direction
  bool temporal = true;
  double up_lambda = 1.0;

  int in_channels() const { return static_cast<int>(channels.size()); }
  int outputs() const { return class_count + (background ? 1 : 0); }
  void check() const;
};

nlohmann::json to_json(const SegNetConfig& cfg);
SegNetConfig segnet_config_from_json(const nlohmann::json& j);

struct SegmentationMap {
  Eigen::MatrixXf probs;  // samples x classes, rows sum to 1

  int length() const { return static_cast<int>(probs.rows()); }
  int classes() const { return static_cast<int>(probs.cols()); }
  std::vector<int> argmax() const;
};

// Normalized, padded model input for a trace restricted to `channels`.
Signal prepare_input(const Trace& trace, const std::vector<std::string>& channels);

class SegNet {
 public:
  struct Cache {
    std::array<nn::ResBlock::Cache, kStages> enc;
    std::array<nn::MaxPoolCache, kStages> pool;
    std::array<int, kStages + 1> length{};
    nn::BiLstm::Cache lstm;
    nn::Mat temporal;
    std::array<nn::ResBlock::Cache, kStages> dec;
    nn::Conv1d::Cache head;
  };

  explicit SegNet(SegNetConfig cfg, std::uint64_t seed = 0);

  const SegNetConfig& config() const { return cfg_; }

  // x is channels x l with l divisible by 16. Returns outputs x l logits.
  nn::Mat logits(const nn::Mat& x, Cache* cache = nullptr) const;
  // Accumulates parameter gradients; dlogits matches the logits shape.
  void backward(const nn::Mat& dlogits, const Cache& cache);

  // Softmax map for an already normalized, padded input. Throws Error when
  // the length is not a multiple of 16 or the channel count is wrong.
  SegmentationMap forward(const nn::Mat& x) const;
  // Selects channels, normalizes, pads, runs forward and trims the padding.
  SegmentationMap predict(const Trace& trace) const;

  nn::ParamList params();

  Checkpoint to_checkpoint(bool with_velocity) const;
  static SegNet from_checkpoint(const Checkpoint& ckpt, bool with_velocity = false);

 private:
  SegNetConfig cfg_;
  std::array<nn::ResBlock, kStages> enc_;
  nn::BiLstm lstm_;
  std::array<nn::ResBlock, kStages> dec_;
  nn::Conv1d head_;
};

struct Extraction {
  std::vector<LayerKind> kinds;
  Positions positions;
  std::vector<double> confidence;  // mean probability of the kind over its run
};

// Argmax per sample, run-length encode, merge runs shorter than min_run into
// the neighbour whose class is more probable over the run, collapse repeats
// and drop background runs.
Extraction extract_segments(const SegmentationMap& map, int min_run = 1);

}  // namespace archrecon
