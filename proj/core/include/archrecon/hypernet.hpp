#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "archrecon/checkpoint.hpp"
#include "archrecon/corpus.hpp"
#include "archrecon/nn.hpp"
#include "archrecon/preprocess.hpp"
#include "archrecon/segnet.hpp"
#include "archrecon/trace.hpp"

namespace archrecon {

enum class HyperTask : std::uint8_t { ConvCout, ConvK, ConvS, MpK, MpS, MpP, LinearFout };

inline constexpr int kHyperTaskCount = 7;
inline constexpr std::array<HyperTask, kHyperTaskCount> kAllHyperTasks = {
    HyperTask::ConvCout, HyperTask::ConvK, HyperTask::ConvS,     HyperTask::MpK,
    HyperTask::MpS,      HyperTask::MpP,   HyperTask::LinearFout};

std::string_view to_string(HyperTask task);
HyperTask hyper_task_from_string(std::string_view name);
LayerKind task_kind(HyperTask task);
bool is_regression(HyperTask task);
// Empty for the regression tasks.
std::span<const int> label_set(HyperTask task);
inline constexpr int task_index(HyperTask t) { return static_cast<int>(t); }

// Indirect: regress ln(overhead) and solve for the width. Direct: regress
// log2 of the width itself.
enum class RegressionMode : std::uint8_t { Indirect, Direct };

std::string_view to_string(RegressionMode mode);
RegressionMode regression_mode_from_string(std::string_view name);

struct HyperNetConfig {
  std::vector<std::string> channels{"pp0", "dram"};
  std::array<int, 4> widths{8, 16, 32, 32};
  int input_length = kSegmentLength;
  int bins = 4;
  // Appends (w, ln w) of the unresized segment, standardized over the
  // training set, to the pooled features.
  bool width_features = true;
  RegressionMode regression = RegressionMode::Indirect;

  void check() const;
};

nlohmann::json to_json(const HyperNetConfig& cfg);
HyperNetConfig hypernet_config_from_json(const nlohmann::json& j);

// Ground truth for one segment: the hyperparameter value for classification
// tasks, ln(overhead) or log2(width) for regression ones.
struct HyperExample {
  Segment segment;
  double target = 0.0;
};

// Value of `task` for a layer, as the corresponding model is trained on it.
double task_target(HyperTask task, const LayerSpec& layer, const LayerContext& ctx,
                   RegressionMode mode = RegressionMode::Indirect);

// Every ground-truth segment of the task's kind in the traces.
std::vector<HyperExample> make_examples(HyperTask task, const std::vector<LabeledTrace>& traces,
                                        RegressionMode mode = RegressionMode::Indirect);

struct ClassPrediction {
  int label = 0;
  std::vector<double> confidence;  // aligned with label_set(task), sums to 1
};

class HyperNet {
 public:
  HyperNet(HyperNetConfig cfg, HyperTask task, std::uint64_t seed = 0);

  HyperTask task() const { return task_; }
  const HyperNetConfig& config() const { return cfg_; }
  int outputs() const;

  // Normalized, resized network input for a raw segment.
  nn::Mat prepare(const Segment& seg) const;
  nn::Vec aux_features(const Segment& seg) const;

  struct Cache {
    std::array<nn::ResBlock::Cache, 4> enc;
    std::array<nn::MaxPoolCache, 4> pool;
    nn::Vec features;
    int last_length = 0;
  };
  // Raw head output (logits, or the standardized regression value).
  nn::Vec head(const nn::Mat& x, const nn::Vec& aux, Cache* cache = nullptr) const;
  void backward(const nn::Vec& dout, const Cache& cache);

  // Throws KindMismatch when the segment kind is not the task's kind.
  ClassPrediction classify(const Segment& seg) const;
  // ln(overhead) in indirect mode, log2(width) in direct mode.
  double regress(const Segment& seg) const;

  void set_target_scaling(double mean, double stddev);
  double target_mean() const { return target_mean_; }
  double target_std() const { return target_std_; }
  // Mean and spread of the raw (w, ln w) features.
  void set_aux_scaling(const std::array<double, 2>& mean, const std::array<double, 2>& stddev);

  nn::ParamList params();
  Checkpoint to_checkpoint(bool with_velocity) const;
  static HyperNet from_checkpoint(const Checkpoint& ckpt, bool with_velocity = false);

 private:
  void check_kind(const Segment& seg) const;

  HyperNetConfig cfg_;
  HyperTask task_;
  std::array<nn::ResBlock, 4> enc_;
  nn::Dense fc_;
  double target_mean_ = 0.0;
  double target_std_ = 1.0;
  std::array<double, 2> aux_mean_{0.0, 0.0};
  std::array<double, 2> aux_std_{1.0, 1.0};
};

struct HyperTrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double lr = 0.01;
  double momentum = 0.9;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  // Train on at most this many examples (0 keeps all).
  int max_examples = 4000;
  std::optional<std::filesystem::path> checkpoint;
  std::string corpus_hash;

  void check() const;
};

nlohmann::json to_json(const HyperTrainConfig& cfg);
HyperTrainConfig hyper_train_config_from_json(const nlohmann::json& j);

struct HyperEpoch {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double accuracy = 0.0;  // classification: top-1; regression: within a factor of sqrt(2)
  double seconds = 0.0;
};

struct HyperTrainResult {
  HyperNet model;
  std::vector<HyperEpoch> history;
};

// CE for classification tasks, MSE on the standardized target for regression.
// Throws LabelSetError for a classification target outside the label set and
// KindMismatch for a segment of the wrong kind.
HyperTrainResult train_task(HyperTask task, const std::vector<HyperExample>& examples, const HyperNetConfig& net_cfg,
                            const HyperTrainConfig& cfg,
                            const std::function<void(const HyperEpoch&)>& on_epoch = {});

// Mean squared error and its gradient, both over the batch.
double mse_loss(std::span<const double> pred, std::span<const double> target);
std::vector<double> mse_loss_grad(std::span<const double> pred, std::span<const double> target);

ClassPrediction infer_classification(const HyperNet& model, const Segment& seg);

struct CoutContext {
  int c_in = 0;
  int k = 3;
  int s = 1;
  int h_in = 0;
  int w_in = 0;
  int bs = 1;
};

struct FoutContext {
  int f_in = 0;
  int bs = 1;
  bool is_last = false;
  int class_count = 1000;
};

// Pure algebra: width from an estimated ln(overhead). Throws InferenceError
// on a non-positive estimate or output shape.
int cout_from_log_overhead(double log_overhead, const CoutContext& ctx);
int fout_from_log_overhead(double log_overhead, const FoutContext& ctx);
int snap_width(double estimate);

// Run the regressor and solve; honours the model's regression mode.
int infer_cout(const HyperNet& model, const Segment& seg, const CoutContext& ctx);
int infer_fout(const HyperNet& model, const Segment& seg, const FoutContext& ctx);

}  // namespace archrecon
