#include <gtest/gtest.h>

#include "archrecon/corpus.hpp"
#include "archrecon/preprocess.hpp"
#include "archrecon/segnet.hpp"
#include "archrecon/segnet_train.hpp"
#include "oracles.hpp"

using namespace archrecon;

namespace {

SegmentationMap map_from_labels(const std::vector<int>& labels, int classes, float confidence = 0.9f) {
  SegmentationMap m;
  m.probs = Eigen::MatrixXf::Constant(static_cast<int>(labels.size()), classes, (1.0f - confidence) / (classes - 1));
  for (std::size_t s = 0; s < labels.size(); ++s) m.probs(static_cast<int>(s), labels[s]) = confidence;
  return m;
}

std::vector<LabeledTrace> tiny_corpus(int n_archs, std::uint64_t seed = 0) {
  CorpusConfig cfg;
  cfg.n_archs = n_archs;
  cfg.depth = {2, 12};
  cfg.family_weights = {0.0, 0.0, 1.0};
  cfg.input_sizes = {160};
  cfg.test_fraction = 0.0;
  cfg.seed = seed;
  return simulate_split(plan_corpus(cfg), Split::Train);
}

SegNetConfig small_net() {
  SegNetConfig c;
  c.widths = {4, 8, 8, 16};
  c.temporal_hidden = 8;
  return c;
}

}  // namespace

TEST(SegNet, OutputShapeContract) {
  const SegNet net(small_net(), 1);
  for (int l : {16, 64, 208}) {
    const auto map = net.forward(nn::Mat::Random(2, l));
    EXPECT_EQ(map.length(), l);
    EXPECT_EQ(map.classes(), kLayerKindCount);
    EXPECT_TRUE(map.probs.rowwise().sum().isApproxToConstant(1.0f, 1e-5f));
    EXPECT_GE(map.probs.minCoeff(), 0.0f);
  }
  EXPECT_THROW(net.forward(nn::Mat::Random(2, 30)), Error);
  EXPECT_THROW(net.forward(nn::Mat::Random(3, 32)), Error);
}

TEST(SegNet, PredictTrimsPadding) {
  const auto corpus = tiny_corpus(1);
  const SegNet net(small_net(), 2);
  const auto& t = corpus.front().trace;
  const auto map = net.predict(t);
  EXPECT_EQ(map.length(), t.length());
}

TEST(SegNet, BackgroundColumn) {
  auto cfg = small_net();
  cfg.background = true;
  const SegNet net(cfg, 3);
  EXPECT_EQ(net.forward(nn::Mat::Random(2, 32)).classes(), kLayerKindCount + 1);
}

TEST(SegNet, SingleChannelModel) {
  auto cfg = small_net();
  cfg.channels = {"dram"};
  const SegNet net(cfg, 4);
  const auto corpus = tiny_corpus(1);
  EXPECT_EQ(net.predict(corpus.front().trace).length(), corpus.front().trace.length());
}

TEST(SegNet, CheckpointRoundTripGivesIdenticalOutput) {
  oracle::TempDir dir("segnet_ckpt");
  const SegNet net(small_net(), 5);
  write_checkpoint(net.to_checkpoint(false), dir.path() / "s.ckpt");
  const auto back = SegNet::from_checkpoint(read_checkpoint(dir.path() / "s.ckpt"));
  const nn::Mat x = nn::Mat::Random(2, 48);
  EXPECT_TRUE(net.forward(x).probs == back.forward(x).probs);
  EXPECT_EQ(to_json(back.config()), to_json(net.config()));
}

TEST(ExtractSegments, RunLengthEncodes) {
  const auto e = extract_segments(map_from_labels({0, 0, 2, 2, 2, 3}, 7));
  EXPECT_EQ(e.kinds, (std::vector<LayerKind>{LayerKind::Conv, LayerKind::ReLU, LayerKind::MaxPool}));
  EXPECT_EQ(e.positions, (Positions{{0, 1}, {2, 4}, {5, 5}}));
  for (double c : e.confidence) EXPECT_NEAR(c, 0.9, 1e-6);
}

TEST(ExtractSegments, ShortRunsMergeIntoMoreProbableNeighbour) {
  auto m = map_from_labels({0, 0, 0, 2, 5, 5, 5}, 7);
  m.probs(3, 5) = 0.05f;
  m.probs(3, 0) = 0.04f;
  const auto e = extract_segments(m, 2);
  EXPECT_EQ(e.kinds, (std::vector<LayerKind>{LayerKind::Conv, LayerKind::Linear}));
  EXPECT_EQ(e.positions, (Positions{{0, 2}, {3, 6}}));
}

TEST(ExtractSegments, MergingCollapsesRepeats) {
  const auto e = extract_segments(map_from_labels({0, 0, 0, 2, 0, 0, 0}, 7), 2);
  EXPECT_EQ(e.kinds, (std::vector<LayerKind>{LayerKind::Conv}));
  EXPECT_EQ(e.positions, (Positions{{0, 6}}));
}

TEST(ExtractSegments, BackgroundRunsAreDropped) {
  const auto e = extract_segments(map_from_labels({7, 7, 0, 0, 7, 1, 1, 7}, 8));
  EXPECT_EQ(e.kinds, (std::vector<LayerKind>{LayerKind::Conv, LayerKind::BatchNorm}));
  EXPECT_EQ(e.positions, (Positions{{2, 3}, {5, 6}}));
}

TEST(ExtractSegments, PerfectMapRecoversAnnotation) {
  for (const auto& lt : tiny_corpus(4)) {
    const auto e = extract_segments(map_from_labels(lt.annotation.labels, kLayerKindCount));
    EXPECT_EQ(e.kinds, lt.annotation.kinds());
    EXPECT_EQ(e.positions, lt.annotation.positions());
  }
}

TEST(SegTrain, OverfitsTinyCorpus) {
  const auto corpus = tiny_corpus(10, 3);
  SegTrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 2;
  cfg.lr = 0.05;
  const auto res = train_segnet(corpus, SegNetConfig{}, cfg);
  ASSERT_EQ(res.history.size(), 200u);
  EXPECT_LT(res.history.back().loss, res.history.front().loss);
  double hit = 0, total = 0;
  for (const auto& lt : corpus) {
    const auto pred = res.model.predict(lt.trace).argmax();
    for (std::size_t s = 0; s < pred.size(); ++s) {
      hit += pred[s] == lt.annotation.labels[s];
      total += 1;
    }
  }
  EXPECT_GT(hit / total, 0.95);
}

TEST(SegTrain, ResumeMatchesUninterruptedRun) {
  oracle::TempDir dir("resume");
  const auto corpus = tiny_corpus(3, 4);
  SegTrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 2;
  const auto full = train_segnet(corpus, small_net(), cfg);

  cfg.checkpoint = dir.path() / "seg.ckpt";
  train_segnet_partial(corpus, small_net(), cfg, 2);
  const auto resumed = train_segnet(corpus, small_net(), cfg);
  ASSERT_EQ(resumed.history.size(), full.history.size());
  for (std::size_t e = 0; e < full.history.size(); ++e) {
    EXPECT_EQ(resumed.history[e].epoch, full.history[e].epoch);
    EXPECT_DOUBLE_EQ(resumed.history[e].loss, full.history[e].loss);
    EXPECT_DOUBLE_EQ(resumed.history[e].sa, full.history[e].sa);
  }
  const nn::Mat x = nn::Mat::Random(2, 64);
  EXPECT_TRUE(resumed.model.forward(x).probs == full.model.forward(x).probs);
}

TEST(SegTrain, RejectsBadConfig) {
  SegTrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(cfg.check(), ConfigError);
  auto net = small_net();
  net.channels = {};
  EXPECT_THROW(net.check(), ConfigError);
}
