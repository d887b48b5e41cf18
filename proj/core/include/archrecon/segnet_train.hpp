#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "archrecon/corpus.hpp"
#include "archrecon/segnet.hpp"

namespace archrecon {

struct SegTrainConfig {
  int epochs = 100;
  int batch_size = 32;
  double lr = 0.01;
  double momentum = 0.9;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  // Train on at most this many traces (0 keeps all).
  int max_traces = 0;
  // Written after every epoch when set; training resumes from it if present.
  std::optional<std::filesystem::path> checkpoint;
  std::string corpus_hash;

  void check() const;
};

nlohmann::json to_json(const SegTrainConfig& cfg);
SegTrainConfig seg_train_config_from_json(const nlohmann::json& j);

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;  // mean over traces of CE + lambda * UP
  double ce = 0.0;
  double up = 0.0;
  double sa = 0.0;  // training-set segment accuracy seen during the epoch
  double seconds = 0.0;

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

nlohmann::json to_json(const EpochStats& s);
EpochStats epoch_stats_from_json(const nlohmann::json& j);

struct SegTrainResult {
  SegNet model;
  std::vector<EpochStats> history;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Mini-batch SGD with cosine annealing. Each batch holds traces of similar
// length, padded to the longest one; padded samples are masked from both
// losses. Throws Error when a trace has no layer positions.
SegTrainResult train_segnet(const std::vector<LabeledTrace>& corpus, const SegNetConfig& net_cfg,
                            const SegTrainConfig& cfg, const EpochCallback& on_epoch = {});

// Stops after `stop_after` epochs (for resume tests); the checkpoint is left
// as it would be mid-run.
SegTrainResult train_segnet_partial(const std::vector<LabeledTrace>& corpus, const SegNetConfig& net_cfg,
                                    const SegTrainConfig& cfg, int stop_after, const EpochCallback& on_epoch = {});

}  // namespace archrecon
