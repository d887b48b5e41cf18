#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "archrecon/archspec.hpp"

namespace archrecon {

// Per-sample label stream value for samples that belong to no layer.
inline constexpr int kBackgroundLabel = kLayerKindCount;

template <typename T>
std::size_t levenshtein(std::span<const T> a, std::span<const T> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cur[0] = i + 1;
    for (std::size_t j = 0; j < b.size(); ++j) {
      cur[j + 1] = std::min({prev[j + 1] + 1, cur[j] + 1, prev[j] + (a[i] == b[j] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// 1 - edit distance / max length. Two empty sequences score 1.
template <typename T>
double lda(std::span<const T> pred, std::span<const T> truth) {
  const std::size_t denom = std::max(pred.size(), truth.size());
  if (denom == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(pred, truth)) / static_cast<double>(denom);
}

inline double lda(const std::vector<LayerKind>& pred, const std::vector<LayerKind>& truth) {
  return lda(std::span<const LayerKind>(pred), std::span<const LayerKind>(truth));
}

// Fraction of non-background ground-truth samples whose label is predicted.
// Throws Error on length mismatch; returns 1 when nothing is scorable.
double sa(std::span<const int> pred, std::span<const int> truth);

struct LabelScore {
  int label = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct PrfReport {
  std::vector<LabelScore> per_label;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  double accuracy = 0.0;
  std::size_t total = 0;
};

// One-vs-rest precision/recall/F1 per label; weighted averages use true-label
// support, so zero-support labels drop out of them.
PrfReport prf1(std::span<const int> pred, std::span<const int> truth, std::span<const int> label_set);

}  // namespace archrecon
