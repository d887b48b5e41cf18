#include <gtest/gtest.h>

#include <fstream>

#include "archrecon/checkpoint.hpp"
#include "archrecon/corpus.hpp"
#include "archrecon/evaluate.hpp"
#include "archrecon/reconstruct.hpp"
#include "oracles.hpp"

using namespace archrecon;

namespace {

CorpusPlan small_plan(int n_archs, std::uint64_t seed = 0) {
  CorpusConfig cfg;
  cfg.n_archs = n_archs;
  cfg.depth = {2, 40};
  cfg.test_fraction = 0.5;
  cfg.seed = seed;
  return plan_corpus(cfg);
}

struct Oracles {
  OracleStructure structure;
  OracleHyperModels hyper;
  explicit Oracles(const std::vector<LabeledTrace>& traces) {
    for (const auto& lt : traces) {
      structure.add(lt.trace, lt.annotation);
      hyper.add(lt.trace, lt.annotation);
    }
  }
};

// Types the samples of the first ReLU as whatever precedes it, so the layer
// disappears from the recovered sequence.
class DropFirstRelu : public StructureModel {
 public:
  DropFirstRelu(const StructureModel& inner, const Annotation& ann) : inner_(&inner), ann_(&ann) {}
  SegmentationMap segment(const Trace& trace) const override {
    auto map = inner_->segment(trace);
    for (std::size_t m = 1; m < ann_->layers.size(); ++m) {
      const auto& r = ann_->layers[m];
      if (r.kind != LayerKind::ReLU) continue;
      const int prev = kind_index(ann_->layers[m - 1].kind);
      for (int s = r.start; s <= r.end; ++s) {
        map.probs.row(s).setZero();
        map.probs(s, prev) = 1.0f;
      }
      break;
    }
    return map;
  }

 private:
  const StructureModel* inner_;
  const Annotation* ann_;
};

}  // namespace

TEST(Attack, OracleModelsRecoverTheExactSpec) {
  const auto plan = small_plan(12);
  const auto traces = simulate_split(plan, Split::Test);
  const Oracles o(traces);
  std::map<std::string, const ArchSpec*> specs;
  for (std::size_t i = 0; i < plan.specs.size(); ++i) specs[plan.manifest.entries[i].arch_id] = &plan.specs[i];
  for (const auto& lt : traces) {
    const AttackContext ctx{lt.input, 1000, 1, true};
    const auto res = attack(lt.trace, ctx, o.structure, o.hyper, &lt.annotation);
    const auto expected = rebind_input(*specs.at(lt.arch_id), lt.input);
    EXPECT_EQ(res.spec.layers, expected.layers) << lt.arch_id;
    EXPECT_EQ(res.spec.skip_edges, expected.skip_edges) << lt.arch_id;
    EXPECT_EQ(res.spec.input, lt.input);
    EXPECT_TRUE(res.diagnostics.contradictions.empty()) << lt.arch_id;
    ASSERT_TRUE(res.diagnostics.lda.has_value());
    EXPECT_DOUBLE_EQ(*res.diagnostics.lda, 1.0);
    EXPECT_DOUBLE_EQ(*res.diagnostics.sa, 1.0);
  }
}

TEST(Attack, OutputIsSelfConsistent) {
  const auto traces = simulate_split(small_plan(8, 3), Split::Test);
  const Oracles o(traces);
  for (const auto& lt : traces) {
    const auto res = attack(lt.trace, {lt.input, 1000, 1, true}, o.structure, o.hyper);
    EXPECT_TRUE(validate(res.spec).empty());
    EXPECT_EQ(res.shapes, propagate_shapes(res.spec));
    EXPECT_EQ(res.diagnostics.layers.size(), res.spec.layers.size());
    EXPECT_FALSE(res.diagnostics.lda.has_value());
  }
}

TEST(Attack, MissedLayerLowersLdaAndIsRecorded) {
  const auto traces = simulate_split(small_plan(6, 1), Split::Test);
  const Oracles o(traces);
  bool any = false;
  for (const auto& lt : traces) {
    const auto kinds = lt.annotation.kinds();
    if (std::find(kinds.begin() + 1, kinds.end(), LayerKind::ReLU) == kinds.end()) continue;
    const DropFirstRelu broken(o.structure, lt.annotation);
    const auto res = attack(lt.trace, {lt.input, 1000, 1, true}, broken, o.hyper, &lt.annotation);
    ASSERT_TRUE(res.diagnostics.lda.has_value());
    EXPECT_LT(*res.diagnostics.lda, 1.0);
    EXPECT_LT(res.spec.layers.size(), lt.annotation.layers.size());
    any = true;
  }
  EXPECT_TRUE(any);
}

TEST(Attack, EmptyTraceGivesEmptySpec) {
  Trace t;
  t.channels = {"pp0", "dram"};
  t.samples.resize(2, 0);
  const OracleStructure s;
  const OracleHyperModels h;
  const auto res = attack(t, {}, s, h);
  EXPECT_TRUE(res.spec.layers.empty());
  EXPECT_FALSE(res.diagnostics.notes.empty());
}

TEST(Attack, Deterministic) {
  const auto traces = simulate_split(small_plan(4, 2), Split::Test);
  const Oracles o(traces);
  for (const auto& lt : traces) {
    const auto a = attack(lt.trace, {lt.input, 1000, 1, true}, o.structure, o.hyper);
    const auto b = attack(lt.trace, {lt.input, 1000, 1, true}, o.structure, o.hyper);
    EXPECT_EQ(a.spec, b.spec);
    EXPECT_EQ(to_json(a.diagnostics), to_json(b.diagnostics));
  }
}

TEST(Attack, WithoutEdgesAddsAreFlagged) {
  const auto traces = simulate_split(small_plan(12, 4), Split::Test);
  const Oracles o(traces);
  for (const auto& lt : traces) {
    if (lt.family != Family::ResNet) continue;
    const auto res = attack(lt.trace, {lt.input, 1000, 1, false}, o.structure, o.hyper);
    EXPECT_TRUE(res.spec.skip_edges.empty());
    EXPECT_FALSE(res.diagnostics.contradictions.empty());
    return;
  }
  GTEST_SKIP() << "no ResNet in the sample";
}

TEST(Evaluate, OracleModelsScorePerfectly) {
  const auto traces = simulate_split(small_plan(10), Split::Test);
  const Oracles o(traces);
  for (const auto mode : {EvalMode::Oracle, EvalMode::Chained}) {
    const auto rep = evaluate_chained(traces, o.structure, o.hyper, mode);
    EXPECT_EQ(rep.traces, traces.size());
    EXPECT_DOUBLE_EQ(rep.sa, 1.0);
    EXPECT_DOUBLE_EQ(rep.lda, 1.0);
    EXPECT_DOUBLE_EQ(rep.exact_lda, 1.0);
    ASSERT_EQ(rep.tasks.size(), 7u);
    for (const auto& t : rep.tasks) {
      if (t.evaluated == 0) continue;
      EXPECT_DOUBLE_EQ(t.prf.weighted_f1, 1.0) << to_string(t.task);
      EXPECT_EQ(t.dropped, 0u);
    }
    EXPECT_DOUBLE_EQ(rep.weighted_f1, 1.0);
    EXPECT_TRUE(check_report_json(to_json(rep)).empty());
  }
}

TEST(Evaluate, ChainedNeverBeatsOracleSegments) {
  const auto plan = small_plan(10, 6);
  const auto traces = simulate_split(plan, Split::Test);
  const Oracles o(traces);
  const auto first = traces.front();
  const DropFirstRelu broken(o.structure, first.annotation);
  const std::vector<LabeledTrace> one{first};
  const auto chained = evaluate_chained(one, broken, o.hyper, EvalMode::Chained);
  const auto oracle = evaluate_chained(one, broken, o.hyper, EvalMode::Oracle);
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_LE(chained.tasks[i].evaluated, oracle.tasks[i].evaluated);
  }
  EXPECT_LE(chained.lda, 1.0);
}

TEST(Evaluate, ReportSchemaCatchesDamage) {
  const auto traces = simulate_split(small_plan(4), Split::Test);
  const Oracles o(traces);
  auto j = to_json(evaluate_chained(traces, o.structure, o.hyper, EvalMode::Oracle));
  EXPECT_TRUE(check_report_json(j).empty());
  auto missing = j;
  missing.erase("lda");
  EXPECT_FALSE(check_report_json(missing).empty());
  auto range = j;
  range["sa"] = 1.5;
  EXPECT_FALSE(check_report_json(range).empty());
  EXPECT_NE(render_text(evaluate_chained(traces, o.structure, o.hyper, EvalMode::Oracle)).find("conv_k"),
            std::string::npos);
  EXPECT_THROW(eval_mode_from_string("sideways"), ConfigError);
}

TEST(Checkpoint, RoundTripAndCorruption) {
  oracle::TempDir dir("ckpt");
  Checkpoint c;
  c.kind = "test";
  c.config = {{"a", 1}};
  c.tensors.push_back({"w", nn::Mat::Random(3, 4)});
  c.tensors.push_back({"b", nn::Mat::Random(4, 1)});
  write_checkpoint(c, dir.path() / "c.ckpt");
  const auto back = read_checkpoint(dir.path() / "c.ckpt");
  EXPECT_EQ(back.kind, "test");
  EXPECT_EQ(back.config, c.config);
  ASSERT_NE(back.find("w"), nullptr);
  EXPECT_TRUE(back.find("w")->value == c.tensors[0].value);
  EXPECT_EQ(back.find("missing"), nullptr);

  std::fstream f(dir.path() / "c.ckpt", std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(0);
  f.put('X');
  f.close();
  EXPECT_THROW(read_checkpoint(dir.path() / "c.ckpt"), MalformedFile);
  EXPECT_THROW(read_checkpoint(dir.path() / "absent.ckpt"), Error);
}

TEST(Checkpoint, LoadParamsChecksShapes) {
  nn::Param p;
  p.name = "w";
  p.resize(2, 2);
  Checkpoint c;
  c.tensors.push_back({"w", nn::Mat::Ones(3, 2)});
  EXPECT_THROW(load_params(c, {&p}, false), MalformedFile);
  Checkpoint empty;
  EXPECT_THROW(load_params(empty, {&p}, false), MalformedFile);
}

TEST(ModelRegistry, MissingDirectoryIsAnError) {
  oracle::TempDir dir("registry");
  EXPECT_THROW(ModelRegistry::load(dir.path()), Error);
}
