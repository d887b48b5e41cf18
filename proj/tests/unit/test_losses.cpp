#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "archrecon/losses.hpp"
#include "oracles.hpp"

using namespace archrecon;

namespace {

oracle::Probs to_rows(const ProbMatrix& p) {
  oracle::Probs out(static_cast<std::size_t>(p.rows()), std::vector<double>(static_cast<std::size_t>(p.cols())));
  for (Eigen::Index s = 0; s < p.rows(); ++s) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) out[static_cast<std::size_t>(s)][static_cast<std::size_t>(c)] = p(s, c);
  }
  return out;
}

ProbMatrix random_probs(int l, int n, std::mt19937& rng) {
  std::normal_distribution<double> g(0.0, 1.5);
  Eigen::MatrixXd logits(l, n);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = g(rng);
  return softmax_rows(logits);
}

// Random layer split of [0, l) with consecutive layers of different class.
void random_layers(int l, int n, std::mt19937& rng, Positions& pos, std::vector<int>& labels) {
  pos.clear();
  labels.assign(static_cast<std::size_t>(l), 0);
  int s = 0, prev = -1;
  while (s < l) {
    const int w = 1 + static_cast<int>(rng() % static_cast<unsigned>(std::min(6, l - s)));
    int y = static_cast<int>(rng() % static_cast<unsigned>(n));
    if (y == prev) y = (y + 1) % n;
    pos.push_back({s, s + w - 1});
    for (int i = s; i < s + w; ++i) labels[static_cast<std::size_t>(i)] = y;
    prev = y;
    s += w;
  }
}

}  // namespace

TEST(CeLoss, SpecExample) {
  ProbMatrix p(2, 2);
  p << 0.9, 0.1, 0.2, 0.8;
  const std::vector<int> y{0, 1};
  EXPECT_NEAR(ce_loss(p, y), -std::log(0.9) - std::log(0.8), 1e-12);
  EXPECT_NEAR(ce_loss(p, y, Reduction::Mean), (-std::log(0.9) - std::log(0.8)) / 2, 1e-12);
}

TEST(CeLoss, PerfectPredictionIsZero) {
  ProbMatrix p = ProbMatrix::Identity(3, 3);
  EXPECT_NEAR(ce_loss(p, std::vector<int>{0, 1, 2}), 0.0, 1e-9);
}

TEST(CeLoss, IgnoredSamplesDoNotCount) {
  ProbMatrix p(3, 2);
  p << 0.9, 0.1, 0.5, 0.5, 0.2, 0.8;
  EXPECT_NEAR(ce_loss(p, std::vector<int>{0, kIgnoreLabel, 1}), -std::log(0.9) - std::log(0.8), 1e-12);
}

TEST(UpLoss, SpecExample) {
  ProbMatrix p(4, 2);
  p << 0.9, 0.1, 0.7, 0.3, 0.4, 0.6, 0.2, 0.8;
  const std::vector<int> y{0, 0, 1, 1};
  const Positions z{{0, 1}, {2, 3}};
  EXPECT_NEAR(up_loss(p, z, y), -std::log(0.8) - std::log(0.7), 1e-12);
}

TEST(UpLoss, EmptySpanThrows) {
  ProbMatrix p = ProbMatrix::Constant(2, 2, 0.5);
  EXPECT_THROW(up_loss(p, Positions{{1, 0}}, std::vector<int>{0, 0}), Error);
  EXPECT_THROW(up_loss(p, Positions{{0, 2}}, std::vector<int>{0, 0}), Error);
}

TEST(UpLoss, InvariantToPermutationInsideSpan) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    ProbMatrix p = random_probs(12, 4, rng);
    Positions z;
    std::vector<int> y;
    random_layers(12, 4, rng, z, y);
    const double before = up_loss(p, z, y);
    for (const auto& span : z) {
      for (int s = span[1]; s > span[0]; --s) {
        const int j = span[0] + static_cast<int>(rng() % static_cast<unsigned>(s - span[0] + 1));
        p.row(s).swap(p.row(j));
      }
    }
    EXPECT_NEAR(up_loss(p, z, y), before, 1e-12);
  }
}

TEST(UpLoss, BoundedByMeanCrossEntropy) {
  // Jensen: -log(mean p) <= mean(-log p) per layer.
  std::mt19937 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const ProbMatrix p = random_probs(20, 5, rng);
    Positions z;
    std::vector<int> y;
    random_layers(20, 5, rng, z, y);
    double bound = 0.0;
    for (const auto& span : z) {
      double sum = 0.0;
      for (int s = span[0]; s <= span[1]; ++s) sum -= std::log(p(s, y[static_cast<std::size_t>(span[0])]));
      bound += sum / (span[1] - span[0] + 1);
    }
    EXPECT_LE(up_loss(p, z, y), bound + 1e-9);
  }
}

TEST(Losses, MatchBruteForceOnRandomInstances) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int l = 1 + static_cast<int>(rng() % 32);
    const int n = 2 + static_cast<int>(rng() % 4);
    const ProbMatrix p = random_probs(l, n, rng);
    Positions z;
    std::vector<int> y;
    random_layers(l, n, rng, z, y);
    const auto rows = to_rows(p);
    EXPECT_NEAR(ce_loss(p, y), oracle::ce(rows, y), 1e-6);
    EXPECT_NEAR(up_loss(p, z, y), oracle::up(rows, z, y), 1e-6);
  }
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  std::mt19937 rng(12);
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const int l = 2 + static_cast<int>(rng() % 10);
    const int n = 2 + static_cast<int>(rng() % 4);
    const ProbMatrix p = random_probs(l, n, rng);
    Positions z;
    std::vector<int> y;
    random_layers(l, n, rng, z, y);
    for (const auto r : {Reduction::Sum, Reduction::Mean}) {
      const ProbMatrix g = total_loss_grad(p, y, z, 0.7, r);
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        ProbMatrix plus = p, minus = p;
        plus.data()[i] += h;
        minus.data()[i] -= h;
        const double fd = (total_loss(plus, y, z, 0.7, r) - total_loss(minus, y, z, 0.7, r)) / (2 * h);
        EXPECT_NEAR(g.data()[i], fd, 1e-4 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST(Softmax, BackwardMatchesFiniteDifferences) {
  std::mt19937 rng(13);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd logits(4, 5), upstream(4, 5);
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    logits.data()[i] = g(rng);
    upstream.data()[i] = g(rng);
  }
  const auto f = [&](const Eigen::MatrixXd& x) { return (softmax_rows(x).array() * upstream.array()).sum(); };
  const Eigen::MatrixXd d = softmax_rows_backward(softmax_rows(logits), upstream);
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    Eigen::MatrixXd a = logits, b = logits;
    a.data()[i] += 1e-6;
    b.data()[i] -= 1e-6;
    EXPECT_NEAR(d.data()[i], (f(a) - f(b)) / 2e-6, 1e-6);
  }
  EXPECT_TRUE(softmax_rows(logits).rowwise().sum().isApproxToConstant(1.0));
}
