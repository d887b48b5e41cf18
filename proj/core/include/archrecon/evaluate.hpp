#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "archrecon/corpus.hpp"
#include "archrecon/hypernet.hpp"
#include "archrecon/metrics.hpp"
#include "archrecon/reconstruct.hpp"

namespace archrecon {

// Oracle: step-2 models see ground-truth segments. Chained: only the samples
// of each true layer that step 1 typed correctly; layers with none are
// dropped from the step-2 scores.
enum class EvalMode : std::uint8_t { Oracle, Chained };

std::string_view to_string(EvalMode mode);
EvalMode eval_mode_from_string(std::string_view name);

struct TaskScore {
  HyperTask task = HyperTask::ConvK;
  PrfReport prf;  // regression tasks are scored over the recovered widths
  std::size_t evaluated = 0;
  std::size_t dropped = 0;
};

struct EvalReport {
  EvalMode mode = EvalMode::Oracle;
  std::vector<std::string> channels;
  RegressionMode regression = RegressionMode::Indirect;
  std::size_t traces = 0;
  double sa = 0.0;           // over all non-background samples
  double lda = 0.0;          // mean over traces
  double exact_lda = 0.0;    // fraction of traces with LDA == 1
  PrfReport layer_types;     // per-sample, labels 0..7
  std::vector<TaskScore> tasks;  // the seven hyperparameters, in task order
  double weighted_f1 = 0.0;  // support-weighted over all hyperparameter rows

  const TaskScore& task(HyperTask t) const;
};

EvalReport evaluate_chained(const std::vector<LabeledTrace>& corpus, const StructureModel& structure,
                            const HyperModels& hyper, EvalMode mode, int min_run = 1);

nlohmann::json to_json(const EvalReport& report);
// Empty iff `j` has every field of a serialized EvalReport with the right
// types and all fractions in [0, 1].
std::vector<std::string> check_report_json(const nlohmann::json& j);
// Aligned text tables: structure recovery, then one row per hyperparameter.
std::string render_text(const EvalReport& report);

}  // namespace archrecon
