#include <benchmark/benchmark.h>

#include <random>

#include "archrecon/family.hpp"
#include "archrecon/hypernet.hpp"
#include "archrecon/metrics.hpp"
#include "archrecon/nn.hpp"
#include "archrecon/segnet.hpp"
#include "archrecon/tracesim.hpp"

using namespace archrecon;

static void BM_Conv1dForward(benchmark::State& state) {
  nn::Rng rng(1);
  nn::Conv1d conv("c", 32, 32, 3);
  conv.init(rng);
  const nn::Mat x = nn::Mat::Random(32, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x, nullptr));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Conv1dForward)->Arg(256)->Arg(1024)->Arg(4096);

static void BM_SegNetForward(benchmark::State& state) {
  const SegNet net(SegNetConfig{}, 0);
  const nn::Mat x = nn::Mat::Random(2, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SegNetForward)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond);

static void BM_HyperNetClassify(benchmark::State& state) {
  const HyperNet net(HyperNetConfig{}, HyperTask::ConvK, 0);
  Segment seg;
  seg.kind = LayerKind::Conv;
  seg.values = Signal::Random(2, 40);
  seg.source_width = 40;
  for (auto _ : state) benchmark::DoNotOptimize(net.classify(seg));
}
BENCHMARK(BM_HyperNetClassify)->Unit(benchmark::kMicrosecond);

static void BM_Simulate(benchmark::State& state) {
  const InputShape in{128, 3, 224, 224};
  const auto spec = generate_family(Family::ResNet, {50, 50}, in, 7);
  const SimConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(simulate(spec, in, cfg));
}
BENCHMARK(BM_Simulate)->Unit(benchmark::kMicrosecond);

static void BM_Lda(benchmark::State& state) {
  std::mt19937 rng(3);
  std::vector<LayerKind> a(static_cast<std::size_t>(state.range(0))), b(a.size());
  for (auto& k : a) k = kind_from_index(static_cast<int>(rng() % kLayerKindCount));
  for (auto& k : b) k = kind_from_index(static_cast<int>(rng() % kLayerKindCount));
  for (auto _ : state) benchmark::DoNotOptimize(lda(a, b));
}
BENCHMARK(BM_Lda)->Arg(64)->Arg(512);
BENCHMARK_MAIN();
