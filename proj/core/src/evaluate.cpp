#include "archrecon/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace archrecon {

using nlohmann::json;

std::string_view to_string(EvalMode mode) { return mode == EvalMode::Oracle ? "oracle" : "chained"; }

EvalMode eval_mode_from_string(std::string_view name) {
  if (name == "oracle") return EvalMode::Oracle;
  if (name == "chained") return EvalMode::Chained;
  throw ConfigError("unknown evaluation mode '" + std::string(name) + "'");
}

const TaskScore& EvalReport::task(HyperTask t) const {
  for (const auto& s : tasks) {
    if (s.task == t) return s;
  }
  throw Error("report has no row for " + std::string(to_string(t)));
}

namespace {

int true_value(HyperTask task, const LayerRecord& rec) {
  if (task == HyperTask::ConvCout) return rec.layer.conv().c_out;
  if (task == HyperTask::LinearFout) return rec.layer.linear().f_out;
  return static_cast<int>(std::lround(task_target(task, rec.layer, rec.context)));
}

// Width recovered from the regressor, with the rest of the layer context
// taken from ground truth so only this model is scored.
int predicted_width(HyperTask task, const HyperModels& hyper, const Segment& seg, const LayerRecord& rec) {
  const double v = hyper.regress(task, seg);
  const bool direct = hyper.regression_mode(task) == RegressionMode::Direct;
  if (task == HyperTask::ConvCout) {
    if (direct) return snap_width(std::exp2(v));
    const auto& c = rec.layer.conv();
    return cout_from_log_overhead(v, {c.c_in, c.k, c.s, rec.context.in.h, rec.context.in.w, rec.context.bs});
  }
  const auto& l = rec.layer.linear();
  const FoutContext fc{l.f_in, rec.context.bs, rec.context.last_linear, rec.context.last_linear ? l.f_out : 0};
  if (direct) return fc.is_last ? fc.class_count : snap_width(std::exp2(v));
  return fout_from_log_overhead(v, fc);
}

Segment chained_segment(const Segment& full, const LayerRecord& rec, const std::vector<int>& pred) {
  std::vector<int> cols;
  for (int s = rec.start; s <= rec.end; ++s) {
    if (pred[static_cast<std::size_t>(s)] == kind_index(rec.kind)) cols.push_back(s - rec.start);
  }
  Segment seg = full;
  if (cols.empty()) {
    seg.values.resize(full.values.rows(), 0);
    return seg;
  }
  seg.values.resize(full.values.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) seg.values.col(static_cast<Eigen::Index>(i)) = full.values.col(cols[i]);
  seg.source_width = static_cast<int>(cols.size());
  seg.start = rec.start + cols.front();
  return seg;
}

}  // namespace

EvalReport evaluate_chained(const std::vector<LabeledTrace>& corpus, const StructureModel& structure,
                            const HyperModels& hyper, EvalMode mode, int min_run) {
  EvalReport rep;
  rep.mode = mode;
  rep.channels = hyper.channels();
  rep.regression = hyper.regression_mode(HyperTask::ConvCout);
  rep.traces = corpus.size();

  std::vector<int> type_pred, type_true;
  std::size_t exact = 0;
  double lda_sum = 0.0;
  std::array<std::vector<int>, kHyperTaskCount> preds, truths;
  std::array<std::size_t, kHyperTaskCount> dropped{};

  for (const auto& lt : corpus) {
    const SegmentationMap map = structure.segment(lt.trace);
    const auto pred = map.argmax();
    const auto& truth = lt.annotation.labels;
    for (std::size_t s = 0; s < truth.size(); ++s) {
      if (truth[s] == kBackgroundLabel) continue;
      type_true.push_back(truth[s]);
      type_pred.push_back(pred[s]);
    }
    const double l = lda(extract_segments(map, min_run).kinds, lt.annotation.kinds());
    lda_sum += l;
    exact += l == 1.0 ? 1 : 0;

    const Trace source = rep.channels.empty() ? lt.trace : lt.trace.select_channels(rep.channels);
    for (const auto& rec : lt.annotation.layers) {
      for (const auto task : kAllHyperTasks) {
        if (task_kind(task) != rec.kind) continue;
        const int t = task_index(task);
        Segment seg = cut_segment(source, rec);
        if (mode == EvalMode::Chained) {
          seg = chained_segment(seg, rec, pred);
          if (seg.values.cols() == 0) {
            ++dropped[t];
            continue;
          }
        }
        int value = -1;
        try {
          value = is_regression(task) ? predicted_width(task, hyper, seg, rec)
                                      : hyper.classify(task, seg).label;
        } catch (const InferenceError&) {
        }
        preds[t].push_back(value);
        truths[t].push_back(true_value(task, rec));
      }
    }
  }

  rep.sa = sa(type_pred, type_true);
  rep.lda = corpus.empty() ? 1.0 : lda_sum / static_cast<double>(corpus.size());
  rep.exact_lda = corpus.empty() ? 1.0 : static_cast<double>(exact) / static_cast<double>(corpus.size());
  std::vector<int> kinds(kLayerKindCount + 1);
  for (int i = 0; i <= kLayerKindCount; ++i) kinds[i] = i;
  rep.layer_types = prf1(type_pred, type_true, kinds);

  double f1_sum = 0.0;
  std::size_t support = 0;
  for (const auto task : kAllHyperTasks) {
    const int t = task_index(task);
    std::vector<int> labels;
    if (is_regression(task)) {
      std::set<int> seen(truths[t].begin(), truths[t].end());
      seen.insert(preds[t].begin(), preds[t].end());
      labels.assign(seen.begin(), seen.end());
    } else {
      const auto ls = label_set(task);
      labels.assign(ls.begin(), ls.end());
      if (std::find(preds[t].begin(), preds[t].end(), -1) != preds[t].end()) labels.push_back(-1);
    }
    TaskScore score{task, prf1(preds[t], truths[t], labels), truths[t].size(), dropped[t]};
    f1_sum += score.prf.weighted_f1 * static_cast<double>(score.evaluated);
    support += score.evaluated;
    rep.tasks.push_back(std::move(score));
  }
  rep.weighted_f1 = support ? f1_sum / static_cast<double>(support) : 1.0;
  return rep;
}

// ---- serialization ------------------------------------------------------------

namespace {

json to_json(const PrfReport& r) {
  json per = json::array();
  for (const auto& s : r.per_label) {
    per.push_back({{"label", s.label},
                   {"precision", s.precision},
                   {"recall", s.recall},
                   {"f1", s.f1},
                   {"support", s.support}});
  }
  return {{"per_label", std::move(per)},
          {"weighted_precision", r.weighted_precision},
          {"weighted_recall", r.weighted_recall},
          {"weighted_f1", r.weighted_f1},
          {"accuracy", r.accuracy},
          {"total", r.total}};
}

void check_fraction(const json& j, const std::string& path, const char* key, std::vector<std::string>& out) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    out.push_back(path + "." + key + " missing or not a number");
    return;
  }
  const double v = j.at(key).get<double>();
  if (!(v >= 0.0 && v <= 1.0)) out.push_back(path + "." + key + " outside [0, 1]");
}

void check_count(const json& j, const std::string& path, const char* key, std::vector<std::string>& out) {
  if (!j.contains(key) || !j.at(key).is_number_unsigned()) out.push_back(path + "." + key + " missing or not a count");
}

void check_prf(const json& j, const std::string& path, std::vector<std::string>& out) {
  if (!j.is_object()) {
    out.push_back(path + " is not an object");
    return;
  }
  for (const char* k : {"weighted_precision", "weighted_recall", "weighted_f1", "accuracy"}) {
    check_fraction(j, path, k, out);
  }
  check_count(j, path, "total", out);
  if (!j.contains("per_label") || !j.at("per_label").is_array()) {
    out.push_back(path + ".per_label missing or not an array");
    return;
  }
  for (std::size_t i = 0; i < j.at("per_label").size(); ++i) {
    const auto& row = j.at("per_label")[i];
    const std::string p = path + ".per_label[" + std::to_string(i) + "]";
    if (!row.contains("label") || !row.at("label").is_number_integer()) out.push_back(p + ".label missing");
    for (const char* k : {"precision", "recall", "f1"}) check_fraction(row, p, k, out);
    check_count(row, p, "support", out);
  }
}

}  // namespace

json to_json(const EvalReport& r) {
  json tasks = json::array();
  for (const auto& t : r.tasks) {
    tasks.push_back({{"task", to_string(t.task)},
                     {"evaluated", t.evaluated},
                     {"dropped", t.dropped},
                     {"prf", to_json(t.prf)}});
  }
  return {{"mode", to_string(r.mode)},
          {"channels", r.channels},
          {"regression", to_string(r.regression)},
          {"traces", r.traces},
          {"sa", r.sa},
          {"lda", r.lda},
          {"exact_lda", r.exact_lda},
          {"layer_types", to_json(r.layer_types)},
          {"tasks", std::move(tasks)},
          {"weighted_f1", r.weighted_f1}};
}

std::vector<std::string> check_report_json(const json& j) {
  std::vector<std::string> out;
  if (!j.is_object()) return {"report is not an object"};
  if (!j.contains("mode") || !j.at("mode").is_string()) {
    out.push_back("mode missing");
  } else {
    try {
      (void)eval_mode_from_string(j.at("mode").get<std::string>());
    } catch (const ConfigError& e) {
      out.emplace_back(e.what());
    }
  }
  if (!j.contains("regression") || !j.at("regression").is_string()) out.push_back("regression missing");
  if (!j.contains("channels") || !j.at("channels").is_array()) out.push_back("channels missing");
  check_count(j, "report", "traces", out);
  for (const char* k : {"sa", "lda", "exact_lda", "weighted_f1"}) check_fraction(j, "report", k, out);
  if (j.contains("layer_types")) {
    check_prf(j.at("layer_types"), "layer_types", out);
  } else {
    out.push_back("layer_types missing");
  }
  if (!j.contains("tasks") || !j.at("tasks").is_array()) {
    out.push_back("tasks missing");
    return out;
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < j.at("tasks").size(); ++i) {
    const auto& t = j.at("tasks")[i];
    const std::string p = "tasks[" + std::to_string(i) + "]";
    if (!t.contains("task") || !t.at("task").is_string()) {
      out.push_back(p + ".task missing");
      continue;
    }
    try {
      seen.insert(std::string(to_string(hyper_task_from_string(t.at("task").get<std::string>()))));
    } catch (const Error& e) {
      out.push_back(p + ": " + e.what());
    }
    check_count(t, p, "evaluated", out);
    check_count(t, p, "dropped", out);
    if (t.contains("prf")) {
      check_prf(t.at("prf"), p + ".prf", out);
    } else {
      out.push_back(p + ".prf missing");
    }
  }
  if (seen.size() != kHyperTaskCount) out.push_back("tasks must list each hyperparameter once");
  return out;
}

std::string render_text(const EvalReport& r) {
  std::string channels;
  for (const auto& c : r.channels) channels += (channels.empty() ? "" : "+") + c;
  if (channels.empty()) channels = "all";
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof buf, "mode %s, channels %s, regression %s, %zu traces\n\n",
                std::string(to_string(r.mode)).c_str(), channels.c_str(),
                std::string(to_string(r.regression)).c_str(), r.traces);
  out += buf;
  std::snprintf(buf, sizeof buf, "%-10s %10s %10s %10s\n", "", "SA", "LDA", "LDA=1");
  out += buf;
  std::snprintf(buf, sizeof buf, "%-10s %9.2f%% %9.2f%% %9.2f%%\n\n", "structure", 100 * r.sa, 100 * r.lda,
                100 * r.exact_lda);
  out += buf;
  std::snprintf(buf, sizeof buf, "%-18s %10s %10s %10s %9s %8s\n", "hyperparameter", "precision", "recall", "F1",
                "support", "dropped");
  out += buf;
  for (const auto& t : r.tasks) {
    std::snprintf(buf, sizeof buf, "%-18s %9.2f%% %9.2f%% %9.2f%% %9zu %8zu\n", std::string(to_string(t.task)).c_str(),
                  100 * t.prf.weighted_precision, 100 * t.prf.weighted_recall, 100 * t.prf.weighted_f1, t.evaluated,
                  t.dropped);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%-18s %10s %10s %9.2f%%\n", "weighted average", "", "", 100 * r.weighted_f1);
  out += buf;
  return out;
}

}  // namespace archrecon
