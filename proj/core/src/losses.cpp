#include "archrecon/losses.hpp"

#include <cmath>
#include <string>

#include "archrecon/errors.hpp"

namespace archrecon {

namespace {

bool scored(int label, Eigen::Index classes) { return label >= 0 && label < classes; }

void check_rows(const ProbMatrix& probs, std::span<const int> labels) {
  if (static_cast<std::size_t>(probs.rows()) != labels.size()) {
    throw Error("loss: " + std::to_string(probs.rows()) + " probability rows vs " +
                std::to_string(labels.size()) + " labels");
  }
}

void check_span(const std::array<int, 2>& z, Eigen::Index rows) {
  if (z[1] < z[0]) throw Error("up_loss: empty layer span");
  if (z[0] < 0 || z[1] >= rows) throw Error("up_loss: layer span outside the trace");
}

double layer_mean(const ProbMatrix& probs, const std::array<int, 2>& z, int cls) {
  return probs.col(cls).segment(z[0], z[1] - z[0] + 1).mean();
}

int layer_class(const ProbMatrix& probs, const std::array<int, 2>& z, std::span<const int> labels) {
  const int cls = labels[static_cast<std::size_t>(z[0])];
  if (!scored(cls, probs.cols())) throw Error("up_loss: layer span starts on an unscored label");
  return cls;
}

}  // namespace

double ce_loss(const ProbMatrix& probs, std::span<const int> labels, Reduction r) {
  check_rows(probs, labels);
  double sum = 0.0;
  std::size_t n = 0;
  for (Eigen::Index s = 0; s < probs.rows(); ++s) {
    const int y = labels[static_cast<std::size_t>(s)];
    if (!scored(y, probs.cols())) continue;
    sum -= std::log(std::max(probs(s, y), kProbFloor));
    ++n;
  }
  if (r == Reduction::Mean && n > 0) sum /= static_cast<double>(n);
  return sum;
}

ProbMatrix ce_loss_grad(const ProbMatrix& probs, std::span<const int> labels, Reduction r) {
  check_rows(probs, labels);
  ProbMatrix g = ProbMatrix::Zero(probs.rows(), probs.cols());
  std::size_t n = 0;
  for (Eigen::Index s = 0; s < probs.rows(); ++s) {
    const int y = labels[static_cast<std::size_t>(s)];
    if (!scored(y, probs.cols())) continue;
    if (probs(s, y) > kProbFloor) g(s, y) = -1.0 / probs(s, y);
    ++n;
  }
  if (r == Reduction::Mean && n > 0) g /= static_cast<double>(n);
  return g;
}

double up_loss(const ProbMatrix& probs, const Positions& positions, std::span<const int> labels, Reduction r) {
  check_rows(probs, labels);
  double sum = 0.0;
  for (const auto& z : positions) {
    check_span(z, probs.rows());
    sum -= std::log(std::max(layer_mean(probs, z, layer_class(probs, z, labels)), kProbFloor));
  }
  if (r == Reduction::Mean && !positions.empty()) sum /= static_cast<double>(positions.size());
  return sum;
}

ProbMatrix up_loss_grad(const ProbMatrix& probs, const Positions& positions, std::span<const int> labels,
                        Reduction r) {
  check_rows(probs, labels);
  ProbMatrix g = ProbMatrix::Zero(probs.rows(), probs.cols());
  const double scale = r == Reduction::Mean && !positions.empty() ? 1.0 / static_cast<double>(positions.size()) : 1.0;
  for (const auto& z : positions) {
    check_span(z, probs.rows());
    const int cls = layer_class(probs, z, labels);
    const double mean = layer_mean(probs, z, cls);
    if (mean <= kProbFloor) continue;
    const double width = z[1] - z[0] + 1;
    g.col(cls).segment(z[0], z[1] - z[0] + 1).array() += -scale / (mean * width);
  }
  return g;
}

double total_loss(const ProbMatrix& probs, std::span<const int> labels, const Positions& positions, double lambda,
                  Reduction r) {
  const double ce = ce_loss(probs, labels, r);
  return lambda == 0.0 ? ce : ce + lambda * up_loss(probs, positions, labels, r);
}

ProbMatrix total_loss_grad(const ProbMatrix& probs, std::span<const int> labels, const Positions& positions,
                           double lambda, Reduction r) {
  ProbMatrix g = ce_loss_grad(probs, labels, r);
  if (lambda != 0.0) g += lambda * up_loss_grad(probs, positions, labels, r);
  return g;
}

ProbMatrix softmax_rows(const Eigen::MatrixXd& logits) {
  ProbMatrix p(logits.rows(), logits.cols());
  for (Eigen::Index s = 0; s < logits.rows(); ++s) {
    const Eigen::ArrayXd e = (logits.row(s).array() - logits.row(s).maxCoeff()).exp().transpose();
    p.row(s) = (e / e.sum()).transpose();
  }
  return p;
}

Eigen::MatrixXd softmax_rows_backward(const ProbMatrix& probs, const ProbMatrix& dprobs) {
  Eigen::MatrixXd dz(probs.rows(), probs.cols());
  for (Eigen::Index s = 0; s < probs.rows(); ++s) {
    const double dot = probs.row(s).dot(dprobs.row(s));
    dz.row(s) = probs.row(s).cwiseProduct((dprobs.row(s).array() - dot).matrix());
  }
  return dz;
}

}  // namespace archrecon
