// archrecon: corpus synthesis, training, attack and evaluation.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "archrecon/archspec_json.hpp"
#include "archrecon/corpus.hpp"
#include "archrecon/evaluate.hpp"
#include "archrecon/hypernet.hpp"
#include "archrecon/reconstruct.hpp"
#include "archrecon/segnet_train.hpp"
#include "archrecon/trace_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace archrecon;

namespace {

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

std::string config_hash(const json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 12);
}

// Content-addressed run directory holding the resolved config snapshot.
fs::path run_dir(const fs::path& root, const std::string& command, const json& resolved) {
  const fs::path dir = root / (command + "-" + config_hash(resolved));
  fs::create_directories(dir);
  write_json(resolved, dir / "config.json");
  return dir;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "runs";

  json section(const char* name) const {
    if (config.empty()) return json::object();
    const json root = read_json(config);
    json s = root.value(name, json::object());
    if (root.contains("seed") && !s.contains("seed")) s["seed"] = root.at("seed");
    return s;
  }
};

CorpusManifest open_corpus(const fs::path& dir) { return read_manifest(dir); }

// ---- synth ----------------------------------------------------------------------

struct SynthArgs {
  Common common;
  std::optional<int> archs;
  std::optional<double> noise;
  std::string input_sizes;
};

int cmd_synth(const SynthArgs& a) {
  json section = a.common.section("corpus");
  if (a.common.seed) section["seed"] = *a.common.seed;
  if (a.archs) section["n_archs"] = *a.archs;
  if (!a.input_sizes.empty()) {
    std::vector<int> sizes;
    for (const auto& s : split_list(a.input_sizes)) sizes.push_back(std::stoi(s));
    section["input_sizes"] = sizes;
  }
  if (a.noise) section["sim"]["noise_std"] = *a.noise;
  const CorpusConfig cfg = corpus_config_from_json(section);
  const json resolved = {{"command", "synth"}, {"corpus", to_json(cfg)}};
  const fs::path dir = run_dir(a.common.out, "corpus", resolved);
  const auto manifest = build_corpus(cfg, dir);
  std::cout << dir.string() << "\n"
            << manifest.trace_count() << " traces, content hash " << manifest.content_hash << "\n";
  return 0;
}

// ---- train-seg ------------------------------------------------------------------

struct TrainSegArgs {
  Common common;
  std::string corpus;
  std::optional<int> epochs;
  std::optional<int> max_traces;
  std::string channels;
  bool no_temporal = false;
  std::optional<double> up_lambda;
};

int cmd_train_seg(const TrainSegArgs& a) {
  json net = a.common.section("segnet");
  json train = a.common.section("seg_train");
  net.erase("seed");
  if (a.common.seed) train["seed"] = *a.common.seed;
  if (a.epochs) train["epochs"] = *a.epochs;
  if (a.max_traces) train["max_traces"] = *a.max_traces;
  if (!a.channels.empty()) net["channels"] = split_list(a.channels);
  if (a.no_temporal) net["temporal"] = false;
  if (a.up_lambda) net["up_lambda"] = *a.up_lambda;
  const SegNetConfig net_cfg = segnet_config_from_json(net);
  SegTrainConfig cfg = seg_train_config_from_json(train);

  const auto manifest = open_corpus(a.corpus);
  cfg.corpus_hash = manifest.content_hash;
  const json resolved = {{"command", "train-seg"},
                         {"corpus", fs::absolute(a.corpus).string()},
                         {"corpus_hash", manifest.content_hash},
                         {"segnet", to_json(net_cfg)},
                         {"seg_train", to_json(cfg)}};
  const fs::path dir = run_dir(a.common.out, "segnet", resolved);
  cfg.checkpoint = segnet_checkpoint_path(dir);

  const auto traces = load_split(manifest, a.corpus, Split::Train);
  json history = json::array();
  const auto result = train_segnet(traces, net_cfg, cfg, [&](const EpochStats& s) {
    std::printf("epoch %3d  lr %.5f  loss %.4f  ce %.4f  up %.4f  sa %.4f  %.1fs\n", s.epoch, s.lr, s.loss, s.ce,
                s.up, s.sa, s.seconds);
    std::fflush(stdout);
  });
  for (const auto& h : result.history) history.push_back(to_json(h));
  write_json(history, dir / "history.json");
  std::cout << dir.string() << "\n";
  return 0;
}

// ---- train-hyper ----------------------------------------------------------------

struct TrainHyperArgs {
  Common common;
  std::string corpus;
  std::string task = "all";
  std::optional<int> epochs;
  std::optional<int> max_examples;
  std::string channels;
  std::string regression;
};

int cmd_train_hyper(const TrainHyperArgs& a) {
  json net = a.common.section("hypernet");
  json train = a.common.section("hyper_train");
  net.erase("seed");
  if (a.common.seed) train["seed"] = *a.common.seed;
  if (a.epochs) train["epochs"] = *a.epochs;
  if (a.max_examples) train["max_examples"] = *a.max_examples;
  if (!a.channels.empty()) net["channels"] = split_list(a.channels);
  if (!a.regression.empty()) net["regression"] = a.regression;
  const HyperNetConfig net_cfg = hypernet_config_from_json(net);
  HyperTrainConfig cfg = hyper_train_config_from_json(train);

  std::vector<HyperTask> tasks;
  if (a.task == "all") {
    tasks.assign(kAllHyperTasks.begin(), kAllHyperTasks.end());
  } else {
    for (const auto& t : split_list(a.task)) tasks.push_back(hyper_task_from_string(t));
  }

  const auto manifest = open_corpus(a.corpus);
  cfg.corpus_hash = manifest.content_hash;
  json task_names = json::array();
  for (const auto t : tasks) task_names.push_back(std::string(to_string(t)));
  const json resolved = {{"command", "train-hyper"},
                         {"corpus", fs::absolute(a.corpus).string()},
                         {"corpus_hash", manifest.content_hash},
                         {"tasks", task_names},
                         {"hypernet", to_json(net_cfg)},
                         {"hyper_train", to_json(cfg)}};
  const fs::path dir = run_dir(a.common.out, "hyper", resolved);

  const auto traces = load_split(manifest, a.corpus, Split::Train);
  for (const auto task : tasks) {
    HyperTrainConfig tc = cfg;
    tc.checkpoint = hypernet_checkpoint_path(dir, task);
    const auto examples = make_examples(task, traces, net_cfg.regression);
    std::printf("%s: %zu examples\n", std::string(to_string(task)).c_str(), examples.size());
    train_task(task, examples, net_cfg, tc, [](const HyperEpoch& e) {
      std::printf("  epoch %3d  lr %.5f  loss %.4f  acc %.4f  %.1fs\n", e.epoch, e.lr, e.loss, e.accuracy,
                  e.seconds);
      std::fflush(stdout);
    });
  }
  std::cout << dir.string() << "\n";
  return 0;
}

// ---- attack ---------------------------------------------------------------------

struct AttackArgs {
  std::string trace;
  std::string segnet;
  std::string hyper;
  std::string out;
  std::string diagnostics;
  std::optional<int> bs;
  std::optional<int> hw;
  int class_count = 1000;
  int min_run = 1;
  bool no_edges = false;
};

int cmd_attack(const AttackArgs& a) {
  const auto file = read_trace(a.trace, {.allow_invalid = false, .load_annotation = true});
  AttackContext ctx;
  if (file.trace.input_shape) ctx.input = *file.trace.input_shape;
  if (a.bs) ctx.input.bs = *a.bs;
  if (a.hw) ctx.input.h = ctx.input.w = *a.hw;
  if (!file.trace.input_shape && !(a.bs && a.hw)) {
    throw ConfigError("trace carries no input shape; pass --bs and --hw");
  }
  ctx.class_count = a.class_count;
  ctx.min_run = a.min_run;
  ctx.residual_edges = !a.no_edges;

  const SegNet seg = SegNet::from_checkpoint(read_checkpoint(a.segnet));
  std::vector<HyperNet> nets;
  for (const auto task : kAllHyperTasks) {
    nets.push_back(HyperNet::from_checkpoint(read_checkpoint(hypernet_checkpoint_path(a.hyper, task))));
  }
  const HyperNetModels hyper(std::move(nets));
  const auto res = attack(file.trace, ctx, SegNetStructure(seg), hyper,
                          file.annotation ? &*file.annotation : nullptr);

  if (a.out.empty()) {
    std::cout << to_json(res.spec).dump(2) << "\n";
  } else {
    write_archspec(res.spec, a.out);
  }
  if (!a.diagnostics.empty()) write_json(to_json(res.diagnostics), a.diagnostics);
  for (const auto& c : res.diagnostics.contradictions) std::cerr << "contradiction: " << c << "\n";
  return 0;
}

// ---- eval -----------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string corpus;
  std::string segnet;
  std::string hyper;
  std::string mode = "both";
  std::string split = "test";
  int min_run = 1;
};

int cmd_eval(const EvalArgs& a) {
  std::vector<EvalMode> modes;
  if (a.mode == "both") {
    modes = {EvalMode::Oracle, EvalMode::Chained};
  } else {
    modes = {eval_mode_from_string(a.mode)};
  }
  const Split split = split_from_string(a.split);
  const auto manifest = open_corpus(a.corpus);
  const SegNet seg = SegNet::from_checkpoint(read_checkpoint(a.segnet));
  std::vector<HyperNet> nets;
  for (const auto task : kAllHyperTasks) {
    nets.push_back(HyperNet::from_checkpoint(read_checkpoint(hypernet_checkpoint_path(a.hyper, task))));
  }
  const HyperNetModels hyper(std::move(nets));

  const json resolved = {{"command", "eval"},
                         {"corpus", fs::absolute(a.corpus).string()},
                         {"corpus_hash", manifest.content_hash},
                         {"segnet", fs::absolute(a.segnet).string()},
                         {"hyper", fs::absolute(a.hyper).string()},
                         {"segnet_config", to_json(seg.config())},
                         {"split", a.split},
                         {"mode", a.mode},
                         {"min_run", a.min_run}};
  const fs::path dir = run_dir(a.common.out, "eval", resolved);
  const auto traces = load_split(manifest, a.corpus, split);
  const SegNetStructure structure(seg);
  for (const auto mode : modes) {
    const auto report = evaluate_chained(traces, structure, hyper, mode, a.min_run);
    const std::string name = "report_" + std::string(to_string(mode));
    write_json(to_json(report), dir / (name + ".json"));
    const std::string text = render_text(report);
    std::ofstream(dir / (name + ".txt")) << text;
    std::cout << "segnet channels ";
    for (const auto& c : seg.config().channels) std::cout << c << " ";
    std::cout << "\n" << text << "\n";
  }
  std::cout << dir.string() << "\n";
  return 0;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON config file (sections: corpus, segnet, seg_train, hypernet, hyper_train)");
  app->add_option("--seed", c.seed, "Root seed, overrides the config");
  app->add_option("--out", c.out, "Root directory for content-addressed outputs")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recover DNN architectures from low-rate power traces"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a labeled synthetic corpus");
  add_common(s, synth.common);
  s->add_option("--archs", synth.archs, "Number of architectures");
  s->add_option("--noise", synth.noise, "Noise std as a fraction of the signature level");
  s->add_option("--input-sizes", synth.input_sizes, "Comma-separated input sizes");

  TrainSegArgs tseg;
  auto* ts = app.add_subcommand("train-seg", "Train the segmentation model");
  add_common(ts, tseg.common);
  ts->add_option("--corpus", tseg.corpus, "Corpus directory")->required();
  ts->add_option("--epochs", tseg.epochs);
  ts->add_option("--max-traces", tseg.max_traces);
  ts->add_option("--channels", tseg.channels, "Comma-separated channel subset");
  ts->add_flag("--no-temporal", tseg.no_temporal, "Drop the recurrent bottleneck");
  ts->add_option("--up-lambda", tseg.up_lambda, "Weight of the unique-path loss (0 disables it)");

  TrainHyperArgs thyp;
  auto* th = app.add_subcommand("train-hyper", "Train hyperparameter models");
  add_common(th, thyp.common);
  th->add_option("--corpus", thyp.corpus, "Corpus directory")->required();
  th->add_option("--task", thyp.task, "Task name, comma list or 'all'")->capture_default_str();
  th->add_option("--epochs", thyp.epochs);
  th->add_option("--max-examples", thyp.max_examples);
  th->add_option("--channels", thyp.channels, "Comma-separated channel subset");
  th->add_option("--regression", thyp.regression, "indirect or direct");

  AttackArgs atk;
  auto* at = app.add_subcommand("attack", "Reconstruct an architecture from one trace");
  at->add_option("--trace", atk.trace, "Trace file")->required();
  at->add_option("--segnet", atk.segnet, "Segmentation checkpoint")->required();
  at->add_option("--hyper", atk.hyper, "Directory with the seven hyperparameter checkpoints")->required();
  at->add_option("--out", atk.out, "Write the spec here instead of stdout");
  at->add_option("--diagnostics", atk.diagnostics, "Write diagnostics JSON here");
  at->add_option("--bs", atk.bs, "Batch size of the query");
  at->add_option("--hw", atk.hw, "Input height and width of the query");
  at->add_option("--class-count", atk.class_count)->capture_default_str();
  at->add_option("--min-run", atk.min_run, "Absorb predicted runs shorter than this")->capture_default_str();
  at->add_flag("--no-edges", atk.no_edges, "Leave Add operands unresolved");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate trained models on a corpus split");
  add_common(e, ev.common);
  e->add_option("--corpus", ev.corpus, "Corpus directory")->required();
  e->add_option("--segnet", ev.segnet, "Segmentation checkpoint")->required();
  e->add_option("--hyper", ev.hyper, "Directory with the seven hyperparameter checkpoints")->required();
  e->add_option("--mode", ev.mode, "oracle, chained or both")->capture_default_str();
  e->add_option("--split", ev.split, "train or test")->capture_default_str();
  e->add_option("--min-run", ev.min_run)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*s) return cmd_synth(synth);
    if (*ts) return cmd_train_seg(tseg);
    if (*th) return cmd_train_hyper(thyp);
    if (*at) return cmd_attack(atk);
    if (*e) return cmd_eval(ev);
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 0;
}
