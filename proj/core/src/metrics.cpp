#include "archrecon/metrics.hpp"

namespace archrecon {

double sa(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) {
    throw Error("sa: label streams differ in length (" + std::to_string(pred.size()) + " vs " +
                std::to_string(truth.size()) + ")");
  }
  std::size_t scored = 0, correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == kBackgroundLabel) continue;
    ++scored;
    if (pred[i] == truth[i]) ++correct;
  }
  return scored == 0 ? 1.0 : static_cast<double>(correct) / static_cast<double>(scored);
}

PrfReport prf1(std::span<const int> pred, std::span<const int> truth, std::span<const int> label_set) {
  if (pred.size() != truth.size()) throw Error("prf1: prediction and truth differ in length");
  PrfReport report;
  report.total = truth.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += pred[i] == truth[i];
  report.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());

  std::size_t weight = 0;
  for (int label : label_set) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool p = pred[i] == label;
      const bool t = truth[i] == label;
      tp += p && t;
      fp += p && !t;
      fn += !p && t;
    }
    LabelScore s;
    s.label = label;
    s.support = tp + fn;
    s.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    s.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    s.f1 = s.precision + s.recall == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / (s.precision + s.recall);
    report.per_label.push_back(s);
    if (s.support == 0) continue;
    weight += s.support;
    report.weighted_precision += s.precision * static_cast<double>(s.support);
    report.weighted_recall += s.recall * static_cast<double>(s.support);
    report.weighted_f1 += s.f1 * static_cast<double>(s.support);
  }
  if (weight > 0) {
    report.weighted_precision /= static_cast<double>(weight);
    report.weighted_recall /= static_cast<double>(weight);
    report.weighted_f1 /= static_cast<double>(weight);
  }
  return report;
}

}  // namespace archrecon
