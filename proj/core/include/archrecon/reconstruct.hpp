#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "archrecon/archspec.hpp"
#include "archrecon/hypernet.hpp"
#include "archrecon/segnet.hpp"
#include "archrecon/trace.hpp"

namespace archrecon {

// Step 1: per-sample layer-type probabilities for a trace.
class StructureModel {
 public:
  virtual ~StructureModel() = default;
  virtual SegmentationMap segment(const Trace& trace) const = 0;
};

// Step 2: the seven hyperparameter models behind one interface.
class HyperModels {
 public:
  virtual ~HyperModels() = default;
  virtual ClassPrediction classify(HyperTask task, const Segment& seg) const = 0;
  // ln(overhead) or log2(width), depending on regression_mode(task).
  virtual double regress(HyperTask task, const Segment& seg) const = 0;
  virtual RegressionMode regression_mode(HyperTask task) const = 0;
  // Channels segments must carry, in order; empty means whatever the trace has.
  virtual std::vector<std::string> channels() const { return {}; }
};

class SegNetStructure : public StructureModel {
 public:
  explicit SegNetStructure(const SegNet& net) : net_(&net) {}
  SegmentationMap segment(const Trace& trace) const override { return net_->predict(trace); }

 private:
  const SegNet* net_;
};

// Trained models, one per task. All models must share their channel list.
class HyperNetModels : public HyperModels {
 public:
  explicit HyperNetModels(std::vector<HyperNet> models);

  ClassPrediction classify(HyperTask task, const Segment& seg) const override;
  double regress(HyperTask task, const Segment& seg) const override;
  RegressionMode regression_mode(HyperTask task) const override;
  std::vector<std::string> channels() const override { return channels_; }

  const HyperNet& model(HyperTask task) const;

 private:
  std::array<std::optional<HyperNet>, kHyperTaskCount> models_;
  std::vector<std::string> channels_;
};

// Ground-truth stand-ins, keyed by trace_key. The structure oracle emits a
// one-hot map (with a background column); the hyper oracle answers for the
// annotated layer that contains the segment's first sample.
class OracleStructure : public StructureModel {
 public:
  void add(const Trace& trace, const Annotation& ann);
  SegmentationMap segment(const Trace& trace) const override;

 private:
  std::map<std::string, std::vector<int>> labels_;
};

class OracleHyperModels : public HyperModels {
 public:
  explicit OracleHyperModels(RegressionMode mode = RegressionMode::Indirect) : mode_(mode) {}
  void add(const Trace& trace, const Annotation& ann);

  ClassPrediction classify(HyperTask task, const Segment& seg) const override;
  double regress(HyperTask task, const Segment& seg) const override;
  RegressionMode regression_mode(HyperTask) const override { return mode_; }

 private:
  const LayerRecord& lookup(HyperTask task, const Segment& seg) const;

  RegressionMode mode_;
  std::map<std::string, std::vector<LayerRecord>> layers_;
};

struct AttackContext {
  InputShape input;
  int class_count = 1000;
  int min_run = 1;
  // Assign Add operands with the ResNet block template; otherwise Adds are
  // emitted without a second operand and flagged.
  bool residual_edges = true;
};

struct LayerDiagnostic {
  int index = 0;
  LayerKind kind = LayerKind::Conv;
  int start = 0;
  int end = 0;
  double kind_confidence = 0.0;
  std::vector<double> class_probs;                        // mean over the run
  std::map<std::string, std::vector<double>> confidence;  // per classification task
  std::map<std::string, double> regressed;                // raw regression outputs
  std::vector<std::string> notes;
};

struct AttackDiagnostics {
  std::vector<LayerDiagnostic> layers;
  std::vector<std::string> contradictions;
  std::vector<std::string> notes;
  std::optional<double> lda;  // against the supplied ground truth
  std::optional<double> sa;
};

nlohmann::json to_json(const AttackDiagnostics& d);

struct AttackResult {
  ArchSpec spec;
  AttackDiagnostics diagnostics;
  // Shape after each layer as tracked during the walk.
  std::vector<FeatureShape> shapes;
};

// Pure function of its inputs. Never throws on inference failures: they are
// recorded as contradictions and the spec is emitted best-effort.
AttackResult attack(const Trace& trace, const AttackContext& ctx, const StructureModel& structure,
                    const HyperModels& hyper, const Annotation* truth = nullptr);

// Loaded checkpoints for a full attack.
struct ModelRegistry {
  SegNet segnet;
  HyperNetModels hyper;

  // Expects segnet.ckpt and <task>.ckpt for the seven tasks in `dir`.
  static ModelRegistry load(const std::filesystem::path& dir);
};

std::filesystem::path segnet_checkpoint_path(const std::filesystem::path& dir);
std::filesystem::path hypernet_checkpoint_path(const std::filesystem::path& dir, HyperTask task);

}  // namespace archrecon
