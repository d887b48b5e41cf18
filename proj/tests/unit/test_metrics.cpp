#include <gtest/gtest.h>

#include <random>

#include "archrecon/metrics.hpp"
#include "oracles.hpp"
#include "prf_fixtures.hpp"

using namespace archrecon;

namespace {

using K = LayerKind;

double lda_v(const std::vector<int>& a, const std::vector<int>& b) {
  return lda(std::span<const int>(a), std::span<const int>(b));
}

// Every sequence over {0,1,2} of length <= max_len.
std::vector<std::vector<int>> all_sequences(int max_len) {
  std::vector<std::vector<int>> out{{}};
  std::vector<std::vector<int>> frontier{{}};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<std::vector<int>> next;
    for (const auto& s : frontier) {
      for (int c = 0; c < 3; ++c) {
        auto t = s;
        t.push_back(c);
        next.push_back(t);
      }
    }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

}  // namespace

TEST(Lda, SpecExamples) {
  EXPECT_DOUBLE_EQ(lda({K::Conv, K::ReLU, K::MaxPool}, {K::Conv, K::ReLU, K::MaxPool}), 1.0);
  EXPECT_NEAR(lda({K::Conv, K::MaxPool}, {K::Conv, K::ReLU, K::MaxPool}), 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(lda({}, {}), 1.0);
  EXPECT_DOUBLE_EQ(lda({K::Conv}, {}), 0.0);
}

TEST(Lda, MatchesBruteForceExhaustively) {
  const auto seqs = all_sequences(6);
  ASSERT_EQ(seqs.size(), 1093u);
  for (const auto& a : seqs) {
    for (const auto& b : seqs) {
      ASSERT_NEAR(lda_v(a, b), oracle::lda(a, b), 1e-12);
    }
  }
}

TEST(Lda, SymmetricAndBounded) {
  std::mt19937 rng(5);
  for (int t = 0; t < 500; ++t) {
    std::vector<int> a(rng() % 12), b(rng() % 12);
    for (auto& v : a) v = static_cast<int>(rng() % 4);
    for (auto& v : b) v = static_cast<int>(rng() % 4);
    EXPECT_DOUBLE_EQ(lda_v(a, b), lda_v(b, a));
    EXPECT_GE(lda_v(a, b), 0.0);
    EXPECT_LE(lda_v(a, b), 1.0);
    EXPECT_DOUBLE_EQ(lda_v(a, a), 1.0);
  }
}

TEST(Lda, InvariantUnderRelabeling) {
  std::mt19937 rng(6);
  const std::array<int, 4> perm{2, 0, 3, 1};
  for (int t = 0; t < 200; ++t) {
    std::vector<int> a(rng() % 10), b(rng() % 10);
    for (auto& v : a) v = static_cast<int>(rng() % 4);
    for (auto& v : b) v = static_cast<int>(rng() % 4);
    auto pa = a, pb = b;
    for (auto& v : pa) v = perm[static_cast<std::size_t>(v)];
    for (auto& v : pb) v = perm[static_cast<std::size_t>(v)];
    EXPECT_DOUBLE_EQ(lda_v(a, b), lda_v(pa, pb));
  }
}

TEST(Sa, CountsNonBackgroundSamples) {
  const std::vector<int> truth{0, 0, 2, kBackgroundLabel, 5};
  EXPECT_DOUBLE_EQ(sa(std::vector<int>{0, 0, 2, 0, 5}, truth), 1.0);
  EXPECT_DOUBLE_EQ(sa(std::vector<int>{0, 1, 2, 0, 1}, truth), 0.5);
  EXPECT_THROW(sa(std::vector<int>{0}, truth), Error);
}

using oracle::f1_of;

TEST(Prf1, HandFixtures) {
  const auto fixtures = oracle::prf_fixtures();
  ASSERT_EQ(fixtures.size(), 20u);
  for (std::size_t f = 0; f < fixtures.size(); ++f) {
    const auto& fx = fixtures[f];
    const auto rep = prf1(fx.pred, fx.truth, fx.labels);
    ASSERT_EQ(rep.per_label.size(), fx.labels.size()) << f;
    double wf = 0.0, wp = 0.0, wr = 0.0;
    std::size_t total = 0;
    for (std::size_t i = 0; i < fx.labels.size(); ++i) {
      const auto& s = rep.per_label[i];
      EXPECT_EQ(s.label, fx.labels[i]) << f;
      EXPECT_NEAR(s.precision, fx.p[i], 1e-12) << "fixture " << f << " label " << s.label;
      EXPECT_NEAR(s.recall, fx.r[i], 1e-12) << "fixture " << f << " label " << s.label;
      EXPECT_NEAR(s.f1, f1_of(fx.p[i], fx.r[i]), 1e-12) << f;
      const auto support = static_cast<std::size_t>(std::count(fx.truth.begin(), fx.truth.end(), fx.labels[i]));
      EXPECT_EQ(s.support, support) << f;
      wf += static_cast<double>(support) * f1_of(fx.p[i], fx.r[i]);
      wp += static_cast<double>(support) * fx.p[i];
      wr += static_cast<double>(support) * fx.r[i];
      total += support;
    }
    if (total > 0) {
      EXPECT_NEAR(rep.weighted_f1, wf / static_cast<double>(total), 1e-12) << f;
      EXPECT_NEAR(rep.weighted_precision, wp / static_cast<double>(total), 1e-12) << f;
      EXPECT_NEAR(rep.weighted_recall, wr / static_cast<double>(total), 1e-12) << f;
    }
  }
}

TEST(Prf1, F1IsHarmonicMeanProperty) {
  std::mt19937 rng(8);
  const std::vector<int> labels{0, 1, 2, 3};
  for (int t = 0; t < 200; ++t) {
    std::vector<int> pred(1 + rng() % 30), truth;
    for (auto& v : pred) v = static_cast<int>(rng() % 4);
    truth.resize(pred.size());
    for (auto& v : truth) v = static_cast<int>(rng() % 4);
    const auto rep = prf1(pred, truth, labels);
    for (const auto& s : rep.per_label) EXPECT_NEAR(s.f1, f1_of(s.precision, s.recall), 1e-12);
    EXPECT_GE(rep.weighted_f1, 0.0);
    EXPECT_LE(rep.weighted_f1, 1.0);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
    EXPECT_DOUBLE_EQ(rep.accuracy, static_cast<double>(hits) / static_cast<double>(pred.size()));
  }
}
