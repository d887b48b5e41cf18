#include "archrecon/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "archrecon/family.hpp"
#include "archrecon/metrics.hpp"

namespace archrecon {

using nlohmann::json;

// ---- model adapters -------------------------------------------------------------

HyperNetModels::HyperNetModels(std::vector<HyperNet> models) {
  for (auto& m : models) {
    if (channels_.empty()) channels_ = m.config().channels;
    if (m.config().channels != channels_) throw ConfigError("hyperparameter models disagree on channels");
    const int t = task_index(m.task());
    if (models_[t]) throw ConfigError("two models for " + std::string(to_string(m.task())));
    models_[t].emplace(std::move(m));
  }
}

const HyperNet& HyperNetModels::model(HyperTask task) const {
  const auto& m = models_[task_index(task)];
  if (!m) throw ConfigError("no model loaded for " + std::string(to_string(task)));
  return *m;
}

ClassPrediction HyperNetModels::classify(HyperTask task, const Segment& seg) const {
  return model(task).classify(seg);
}

double HyperNetModels::regress(HyperTask task, const Segment& seg) const { return model(task).regress(seg); }

RegressionMode HyperNetModels::regression_mode(HyperTask task) const { return model(task).config().regression; }

void OracleStructure::add(const Trace& trace, const Annotation& ann) { labels_[trace_key(trace)] = ann.labels; }

SegmentationMap OracleStructure::segment(const Trace& trace) const {
  const auto it = labels_.find(trace_key(trace));
  if (it == labels_.end()) throw Error("oracle has no annotation for " + trace_key(trace));
  const auto& labels = it->second;
  SegmentationMap map{Eigen::MatrixXf::Zero(static_cast<Eigen::Index>(labels.size()), kLayerKindCount + 1)};
  for (std::size_t s = 0; s < labels.size(); ++s) map.probs(static_cast<Eigen::Index>(s), labels[s]) = 1.0f;
  return map;
}

void OracleHyperModels::add(const Trace& trace, const Annotation& ann) { layers_[trace_key(trace)] = ann.layers; }

const LayerRecord& OracleHyperModels::lookup(HyperTask task, const Segment& seg) const {
  const auto it = layers_.find(seg.source);
  if (it == layers_.end()) throw Error("oracle has no annotation for " + seg.source);
  for (const auto& rec : it->second) {
    if (rec.start <= seg.start && seg.start <= rec.end) {
      if (rec.kind != task_kind(task)) break;
      return rec;
    }
  }
  throw KindMismatch("oracle: no " + std::string(to_string(task_kind(task))) + " layer at sample " +
                     std::to_string(seg.start));
}

ClassPrediction OracleHyperModels::classify(HyperTask task, const Segment& seg) const {
  const auto& rec = lookup(task, seg);
  const auto labels = label_set(task);
  ClassPrediction out;
  out.label = static_cast<int>(std::lround(task_target(task, rec.layer, rec.context)));
  out.confidence.assign(labels.size(), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == out.label) out.confidence[i] = 1.0;
  }
  return out;
}

double OracleHyperModels::regress(HyperTask task, const Segment& seg) const {
  const auto& rec = lookup(task, seg);
  return task_target(task, rec.layer, rec.context, mode_);
}

// ---- diagnostics ----------------------------------------------------------------

json to_json(const AttackDiagnostics& d) {
  json layers = json::array();
  for (const auto& l : d.layers) {
    layers.push_back({{"index", l.index},
                      {"kind", to_string(l.kind)},
                      {"start", l.start},
                      {"end", l.end},
                      {"kind_confidence", l.kind_confidence},
                      {"class_probs", l.class_probs},
                      {"confidence", l.confidence},
                      {"regressed", l.regressed},
                      {"notes", l.notes}});
  }
  json out = {{"layers", std::move(layers)}, {"contradictions", d.contradictions}, {"notes", d.notes}};
  out["lda"] = d.lda ? json(*d.lda) : json(nullptr);
  out["sa"] = d.sa ? json(*d.sa) : json(nullptr);
  return out;
}

// ---- attack ---------------------------------------------------------------------

namespace {

struct Ranked {
  int value;
  double p;
};

std::vector<Ranked> ranked(HyperTask task, const ClassPrediction& pred) {
  const auto labels = label_set(task);
  std::vector<Ranked> out;
  for (std::size_t i = 0; i < labels.size(); ++i) out.push_back({labels[i], pred.confidence[i]});
  std::stable_sort(out.begin(), out.end(), [](const Ranked& a, const Ranked& b) { return a.p > b.p; });
  return out;
}

// Joint candidates ordered by the product of per-task confidences.
template <std::size_t N>
std::vector<std::array<int, N>> joint(const std::array<std::vector<Ranked>, N>& lists) {
  std::vector<std::pair<double, std::array<int, N>>> all{{1.0, {}}};
  for (std::size_t t = 0; t < N; ++t) {
    std::vector<std::pair<double, std::array<int, N>>> next;
    for (const auto& [p, vals] : all) {
      for (const auto& r : lists[t]) {
        auto v = vals;
        v[t] = r.value;
        next.push_back({p * r.p, v});
      }
    }
    all = std::move(next);
  }
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::array<int, N>> out;
  for (const auto& [p, v] : all) out.push_back(v);
  return out;
}

std::vector<double> confidences(const ClassPrediction& p) { return p.confidence; }

}  // namespace

AttackResult attack(const Trace& trace, const AttackContext& ctx, const StructureModel& structure,
                    const HyperModels& hyper, const Annotation* truth) {
  AttackResult res;
  auto& diag = res.diagnostics;
  res.spec.input = ctx.input;
  res.spec.class_count = ctx.class_count;

  if (trace.length() == 0) {
    diag.notes.push_back("empty trace: no layers recovered");
    if (truth) {
      diag.lda = lda(std::vector<LayerKind>{}, truth->kinds());
      diag.sa = 1.0;
    }
    return res;
  }

  const SegmentationMap map = structure.segment(trace);
  const Extraction ex = extract_segments(map, ctx.min_run);
  if (truth) {
    diag.lda = lda(ex.kinds, truth->kinds());
    diag.sa = sa(map.argmax(), truth->labels);
  }

  const int n = static_cast<int>(ex.kinds.size());
  if (n == 0) diag.notes.push_back("segmentation found no layers");
  for (const auto k : ex.kinds) res.spec.layers.push_back(LayerSpec::plain(k));
  if (ctx.residual_edges) res.spec.skip_edges = infer_residual_edges(ex.kinds);
  if (std::any_of(ex.kinds.begin(), ex.kinds.end(), [](LayerKind k) { return k == LayerKind::Add; })) {
    res.spec.family = Family::ResNet;
  }

  const auto wanted = hyper.channels();
  const Trace source = wanted.empty() ? trace : trace.select_channels(wanted);
  int last_linear = -1;
  for (int i = 0; i < n; ++i) {
    if (ex.kinds[i] == LayerKind::Linear) last_linear = i;
  }

  const FeatureShape input{ctx.input.c, ctx.input.h, ctx.input.w, false};
  res.shapes.assign(static_cast<std::size_t>(n), FeatureShape{});
  auto& shapes = res.shapes;
  auto shape_of = [&](int idx) { return idx == kNetworkInput ? input : shapes[idx]; };

  for (int i = 0; i < n; ++i) {
    const LayerKind kind = ex.kinds[i];
    const auto [start, end] = ex.positions[i];
    LayerDiagnostic ld;
    ld.index = i;
    ld.kind = kind;
    ld.start = start;
    ld.end = end;
    ld.kind_confidence = ex.confidence[i];
    const auto run = map.probs.middleRows(start, end - start + 1);
    for (Eigen::Index c = 0; c < map.probs.cols(); ++c) ld.class_probs.push_back(run.col(c).mean());

    Segment seg;
    seg.values = source.samples.middleCols(start, end - start + 1);
    seg.kind = kind;
    seg.source_width = end - start + 1;
    seg.start = start;
    seg.source = trace_key(trace);

    const auto inputs = layer_inputs(res.spec, i);
    FeatureShape in = shape_of(inputs[0]);
    auto& layer = res.spec.layers[i];
    auto contradiction = [&](const std::string& what) {
      diag.contradictions.push_back("layer " + std::to_string(i) + " (" + std::string(to_string(kind)) + "): " + what);
    };
    if (in.flat && kind != LayerKind::Linear && kind != LayerKind::BatchNorm && kind != LayerKind::ReLU &&
        kind != LayerKind::Add) {
      contradiction("follows a flat layer");
      in.flat = false;
    }

    try {
      switch (kind) {
        case LayerKind::Conv: {
          const auto pk = hyper.classify(HyperTask::ConvK, seg);
          const auto ps = hyper.classify(HyperTask::ConvS, seg);
          ld.confidence["conv_k"] = confidences(pk);
          ld.confidence["conv_s"] = confidences(ps);
          ConvParams c{in.c, 16, pk.label, ps.label, same_padding(pk.label), 1, 1};
          SpatialShape sp{};
          bool placed = false;
          for (const auto& [k, s] : joint<2>({ranked(HyperTask::ConvK, pk), ranked(HyperTask::ConvS, ps)})) {
            ConvParams trial = c;
            trial.k = k;
            trial.s = s;
            trial.p = same_padding(k);
            try {
              sp = derive_output_shape(LayerSpec::conv(trial), in.spatial());
            } catch (const InvalidArchitecture&) {
              continue;
            }
            if (k != pk.label || s != ps.label) {
              ld.notes.push_back("k/s fell back to (" + std::to_string(k) + ", " + std::to_string(s) +
                                 ") for a feasible output shape");
            }
            c = trial;
            placed = true;
            break;
          }
          if (!placed) {
            contradiction("no (k, s) gives a positive output shape");
            sp = {std::max(in.h, 1), std::max(in.w, 1)};
          }
          const double v = hyper.regress(HyperTask::ConvCout, seg);
          ld.regressed["conv_cout"] = v;
          if (hyper.regression_mode(HyperTask::ConvCout) == RegressionMode::Direct) {
            c.c_out = snap_width(std::exp2(v));
          } else {
            c.c_out = cout_from_log_overhead(v, {in.c, c.k, c.s, in.h, in.w, ctx.input.bs});
          }
          layer.params = c;
          shapes[i] = {c.c_out, sp.h, sp.w, false};
          break;
        }
        case LayerKind::MaxPool: {
          const auto pk = hyper.classify(HyperTask::MpK, seg);
          const auto ps = hyper.classify(HyperTask::MpS, seg);
          const auto pp = hyper.classify(HyperTask::MpP, seg);
          ld.confidence["mp_k"] = confidences(pk);
          ld.confidence["mp_s"] = confidences(ps);
          ld.confidence["mp_p"] = confidences(pp);
          MaxPoolParams m{pk.label, ps.label, pp.label, 1};
          SpatialShape sp{in.h, in.w};
          bool placed = false;
          for (const auto& [k, s, p] : joint<3>({ranked(HyperTask::MpK, pk), ranked(HyperTask::MpS, ps),
                                                 ranked(HyperTask::MpP, pp)})) {
            if (2 * p > k) continue;
            const MaxPoolParams trial{k, s, p, 1};
            try {
              sp = derive_output_shape(LayerSpec::max_pool(trial), in.spatial());
            } catch (const InvalidArchitecture&) {
              continue;
            }
            if (k != pk.label || s != ps.label || p != pp.label) {
              ld.notes.push_back("k/s/p fell back to (" + std::to_string(k) + ", " + std::to_string(s) + ", " +
                                 std::to_string(p) + ") for a feasible output shape");
            }
            m = trial;
            placed = true;
            break;
          }
          if (!placed) {
            contradiction("no (k, s, p) gives a positive output shape");
            sp = {std::max(in.h, 1), std::max(in.w, 1)};
          }
          layer.params = m;
          shapes[i] = {in.c, sp.h, sp.w, false};
          break;
        }
        case LayerKind::Linear: {
          LinearParams l{static_cast<int>(in.elements()), 16};
          const bool is_last = i == last_linear;
          const double v = hyper.regress(HyperTask::LinearFout, seg);
          ld.regressed["linear_fout"] = v;
          if (is_last) {
            l.f_out = ctx.class_count;
          } else if (hyper.regression_mode(HyperTask::LinearFout) == RegressionMode::Direct) {
            l.f_out = snap_width(std::exp2(v));
          } else {
            l.f_out = fout_from_log_overhead(v, {l.f_in, ctx.input.bs, false, ctx.class_count});
          }
          layer.params = l;
          shapes[i] = {l.f_out, 1, 1, true};
          break;
        }
        case LayerKind::AvgPool:
          shapes[i] = {in.c, 1, 1, false};
          break;
        case LayerKind::Add:
          if (inputs.size() != 2) {
            contradiction("unresolved skip source");
          } else if (!(shape_of(inputs[1]) == in)) {
            contradiction("operand shapes differ");
          }
          shapes[i] = in;
          break;
        case LayerKind::BatchNorm:
        case LayerKind::ReLU:
          shapes[i] = in;
          break;
      }
    } catch (const Error& e) {
      contradiction(e.what());
      if (kind == LayerKind::Conv && !std::holds_alternative<ConvParams>(layer.params)) {
        const ConvParams c{std::max(in.c, 1), 16, 3, 1, 1, 1, 1};
        layer.params = c;
        shapes[i] = {c.c_out, std::max(in.h, 1), std::max(in.w, 1), false};
      } else if (kind == LayerKind::MaxPool && !std::holds_alternative<MaxPoolParams>(layer.params)) {
        layer.params = MaxPoolParams{};
        shapes[i] = in;
      } else if (kind == LayerKind::Linear && !std::holds_alternative<LinearParams>(layer.params)) {
        const LinearParams l{static_cast<int>(in.elements()), i == last_linear ? ctx.class_count : 16};
        layer.params = l;
        shapes[i] = {l.f_out, 1, 1, true};
      }
    }
    diag.layers.push_back(std::move(ld));
  }

  for (auto& v : validate(res.spec)) diag.contradictions.push_back("validate: " + v);
  return res;
}

// ---- registry -------------------------------------------------------------------

std::filesystem::path segnet_checkpoint_path(const std::filesystem::path& dir) { return dir / "segnet.ckpt"; }

std::filesystem::path hypernet_checkpoint_path(const std::filesystem::path& dir, HyperTask task) {
  return dir / (std::string(to_string(task)) + ".ckpt");
}

ModelRegistry ModelRegistry::load(const std::filesystem::path& dir) {
  SegNet seg = SegNet::from_checkpoint(read_checkpoint(segnet_checkpoint_path(dir)));
  std::vector<HyperNet> nets;
  for (const auto task : kAllHyperTasks) {
    HyperNet net = HyperNet::from_checkpoint(read_checkpoint(hypernet_checkpoint_path(dir, task)));
    if (net.task() != task) {
      throw MalformedFile(hypernet_checkpoint_path(dir, task).string() + " holds a " +
                          std::string(to_string(net.task())) + " model");
    }
    nets.push_back(std::move(net));
  }
  return {std::move(seg), HyperNetModels(std::move(nets))};
}

}  // namespace archrecon
