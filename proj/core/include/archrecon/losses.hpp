#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace archrecon {

// Probability matrices here are samples x classes (row-stochastic).
using ProbMatrix = Eigen::MatrixXd;

enum class Reduction { Sum, Mean };

inline constexpr double kProbFloor = 1e-12;
// Label value for samples that take no part in any loss (padding).
inline constexpr int kIgnoreLabel = -1;

using Positions = std::vector<std::array<int, 2>>;

// -sum_s log p_s[y_s]. Samples whose label is kIgnoreLabel or not a column of
// `probs` are skipped. Mean divides by the number of scored samples.
double ce_loss(const ProbMatrix& probs, std::span<const int> labels, Reduction r = Reduction::Sum);
ProbMatrix ce_loss_grad(const ProbMatrix& probs, std::span<const int> labels, Reduction r = Reduction::Sum);

// -sum_m log P_m, where P_m is the mean true-class probability over layer m's
// inclusive span. The true class of a layer is the label at its first sample.
// Mean divides by the number of layers. Throws Error on an empty or
// out-of-range span.
double up_loss(const ProbMatrix& probs, const Positions& positions, std::span<const int> labels,
               Reduction r = Reduction::Sum);
ProbMatrix up_loss_grad(const ProbMatrix& probs, const Positions& positions, std::span<const int> labels,
                        Reduction r = Reduction::Sum);

// CE + lambda * UP.
double total_loss(const ProbMatrix& probs, std::span<const int> labels, const Positions& positions,
                  double lambda, Reduction r = Reduction::Sum);
ProbMatrix total_loss_grad(const ProbMatrix& probs, std::span<const int> labels, const Positions& positions,
                           double lambda, Reduction r = Reduction::Sum);

ProbMatrix softmax_rows(const Eigen::MatrixXd& logits);
// Gradient with respect to the logits given the gradient with respect to the
// softmax output.
Eigen::MatrixXd softmax_rows_backward(const ProbMatrix& probs, const ProbMatrix& dprobs);

}  // namespace archrecon
