#include "archrecon/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "archrecon/archspec_json.hpp"
#include "archrecon/trace_io.hpp"

namespace archrecon {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::array<Family, 3> kFamilies{Family::VGG, Family::ResNet, Family::Random};

std::string arch_id_for(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "a%05d", index);
  return buf;
}

// Largest-remainder apportionment of n items over the weights.
std::array<int, 3> apportion(int n, const std::array<double, 3>& weights) {
  const double total = weights[0] + weights[1] + weights[2];
  std::array<int, 3> counts{};
  std::array<double, 3> rem{};
  int assigned = 0;
  for (int f = 0; f < 3; ++f) {
    const double exact = n * weights[f] / total;
    counts[f] = static_cast<int>(std::floor(exact));
    rem[f] = exact - counts[f];
    assigned += counts[f];
  }
  while (assigned < n) {
    const auto f = std::max_element(rem.begin(), rem.end()) - rem.begin();
    counts[f] += 1;
    rem[f] = -1.0;
    ++assigned;
  }
  return counts;
}

InputShape input_for(const CorpusConfig& cfg, int size) { return {cfg.batch_sizes.at(size), 3, size, size}; }

}  // namespace

std::string_view to_string(Split split) { return split == Split::Train ? "train" : "test"; }

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "test") return Split::Test;
  throw ConfigError("unknown split: " + std::string(name));
}

void CorpusConfig::check() const {
  if (n_archs < 1) throw ConfigError("n_archs must be >= 1");
  if (input_sizes.empty()) throw ConfigError("at least one input size is required");
  for (int s : input_sizes) {
    if (s < 32 || s > 1024) throw ConfigError("input size " + std::to_string(s) + " outside [32, 1024]");
    const auto it = batch_sizes.find(s);
    if (it == batch_sizes.end()) throw ConfigError("no batch size for input size " + std::to_string(s));
    if (it->second < 1) throw ConfigError("batch sizes must be positive");
  }
  if (std::adjacent_find(input_sizes.begin(), input_sizes.end()) != input_sizes.end()) {
    throw ConfigError("duplicate input size");
  }
  for (double w : family_weights) {
    if (!(w >= 0.0)) throw ConfigError("family weights must be >= 0");
  }
  if (!(family_weights[0] + family_weights[1] + family_weights[2] > 0.0)) {
    throw ConfigError("family weights must not all be zero");
  }
  if (depth.lo < kMinDepth || depth.hi > kMaxDepth || depth.lo > depth.hi) {
    throw ConfigError("depth range must lie within [2, 152]");
  }
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must be in [0, 1)");
  sim.check();
}

json to_json(const CorpusConfig& cfg) {
  json batch = json::object();
  for (const auto& [size, bs] : cfg.batch_sizes) batch[std::to_string(size)] = bs;
  const auto& r = cfg.generator.random;
  return {{"n_archs", cfg.n_archs},
          {"input_sizes", cfg.input_sizes},
          {"batch_sizes", std::move(batch)},
          {"family_weights", {{"vgg", cfg.family_weights[0]},
                              {"resnet", cfg.family_weights[1]},
                              {"random", cfg.family_weights[2]}}},
          {"depth", {cfg.depth.lo, cfg.depth.hi}},
          {"test_fraction", cfg.test_fraction},
          {"seed", cfg.seed},
          {"sim", to_json(cfg.sim)},
          {"generator",
           {{"class_count", cfg.generator.class_count},
            {"random",
             {{"mlp_probability", r.mlp_probability},
              {"batchnorm_probability", r.batchnorm_probability},
              {"relu_probability", r.relu_probability},
              {"maxpool_probability", r.maxpool_probability},
              {"avgpool_probability", r.avgpool_probability},
              {"stride2_probability", r.stride2_probability},
              {"max_linear_layers", r.max_linear_layers},
              {"min_log2_channels", r.min_log2_channels},
              {"max_log2_channels", r.max_log2_channels},
              {"max_log2_hidden", r.max_log2_hidden}}}}}};
}

CorpusConfig corpus_config_from_json(const json& j) {
  CorpusConfig cfg;
  try {
    cfg.n_archs = j.value("n_archs", cfg.n_archs);
    cfg.input_sizes = j.value("input_sizes", cfg.input_sizes);
    if (j.contains("batch_sizes")) {
      cfg.batch_sizes.clear();
      for (const auto& [k, v] : j.at("batch_sizes").items()) cfg.batch_sizes[std::stoi(k)] = v.get<int>();
    }
    if (j.contains("family_weights")) {
      const auto& w = j.at("family_weights");
      cfg.family_weights = {w.value("vgg", 0.0), w.value("resnet", 0.0), w.value("random", 0.0)};
    }
    if (j.contains("depth")) {
      const auto d = j.at("depth").get<std::vector<int>>();
      if (d.size() != 2) throw ConfigError("depth must be [lo, hi]");
      cfg.depth = {d[0], d[1]};
    }
    cfg.test_fraction = j.value("test_fraction", cfg.test_fraction);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("sim")) cfg.sim = sim_config_from_json(j.at("sim"));
    if (j.contains("generator")) {
      const auto& g = j.at("generator");
      cfg.generator.class_count = g.value("class_count", cfg.generator.class_count);
      if (g.contains("random")) {
        const auto& rj = g.at("random");
        auto& r = cfg.generator.random;
        r.mlp_probability = rj.value("mlp_probability", r.mlp_probability);
        r.batchnorm_probability = rj.value("batchnorm_probability", r.batchnorm_probability);
        r.relu_probability = rj.value("relu_probability", r.relu_probability);
        r.maxpool_probability = rj.value("maxpool_probability", r.maxpool_probability);
        r.avgpool_probability = rj.value("avgpool_probability", r.avgpool_probability);
        r.stride2_probability = rj.value("stride2_probability", r.stride2_probability);
        r.max_linear_layers = rj.value("max_linear_layers", r.max_linear_layers);
        r.min_log2_channels = rj.value("min_log2_channels", r.min_log2_channels);
        r.max_log2_channels = rj.value("max_log2_channels", r.max_log2_channels);
        r.max_log2_hidden = rj.value("max_log2_hidden", r.max_log2_hidden);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("corpus config: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ConfigError("corpus config: batch_sizes keys must be integers");
  }
  cfg.check();
  return cfg;
}

std::size_t CorpusManifest::trace_count() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.traces.size();
  return n;
}

std::size_t CorpusManifest::trace_count(Split split) const {
  std::size_t n = 0;
  for (const auto& e : entries) {
    if (e.split == split) n += e.traces.size();
  }
  return n;
}

json to_json(const CorpusManifest& m) {
  json entries = json::array();
  for (const auto& e : m.entries) {
    json traces = json::array();
    for (const auto& t : e.traces) {
      traces.push_back({{"input_size", t.input_size},
                        {"batch_size", t.batch_size},
                        {"file", t.file},
                        {"sim_seed", t.sim_seed}});
    }
    entries.push_back({{"arch_id", e.arch_id},
                       {"family", std::string(to_string(e.family))},
                       {"split", std::string(to_string(e.split))},
                       {"arch_seed", e.arch_seed},
                       {"spec_file", e.spec_file},
                       {"traces", std::move(traces)}});
  }
  return {{"format_version", kManifestFormatVersion},
          {"config", to_json(m.config)},
          {"content_hash", m.content_hash},
          {"entries", std::move(entries)}};
}

CorpusManifest corpus_manifest_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kManifestFormatVersion) {
      throw MalformedFile("unsupported manifest format_version");
    }
    CorpusManifest m;
    m.config = corpus_config_from_json(j.at("config"));
    m.content_hash = j.value("content_hash", std::string{});
    for (const auto& ej : j.at("entries")) {
      CorpusEntry e;
      e.arch_id = ej.at("arch_id").get<std::string>();
      e.family = family_from_string(ej.at("family").get<std::string>());
      e.split = split_from_string(ej.at("split").get<std::string>());
      e.arch_seed = ej.at("arch_seed").get<std::uint64_t>();
      e.spec_file = ej.at("spec_file").get<std::string>();
      for (const auto& tj : ej.at("traces")) {
        e.traces.push_back({tj.at("input_size").get<int>(), tj.at("batch_size").get<int>(),
                            tj.at("file").get<std::string>(), tj.at("sim_seed").get<std::uint64_t>()});
      }
      m.entries.push_back(std::move(e));
    }
    return m;
  } catch (const json::exception& e) {
    throw MalformedFile(std::string("manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw MalformedFile(std::string("manifest: ") + e.what());
  }
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(root) ^ a) ^ b);
}

CorpusPlan plan_corpus(const CorpusConfig& cfg) {
  cfg.check();
  CorpusPlan plan;
  plan.manifest.config = cfg;

  const auto counts = apportion(cfg.n_archs, cfg.family_weights);
  std::vector<Family> families;
  for (int f = 0; f < 3; ++f) families.insert(families.end(), counts[f], kFamilies[f]);
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x5EED));
  std::shuffle(families.begin(), families.end(), rng);

  // Specs are generated at the smallest input size and rebound for the others.
  const int base_size = *std::min_element(cfg.input_sizes.begin(), cfg.input_sizes.end());
  std::vector<int> sizes = cfg.input_sizes;
  std::sort(sizes.begin(), sizes.end());

  for (int i = 0; i < cfg.n_archs; ++i) {
    CorpusEntry e;
    e.arch_id = arch_id_for(i);
    e.family = families[i];
    e.arch_seed = derive_seed(cfg.seed, 1, static_cast<std::uint64_t>(i));
    e.spec_file = "archs/" + e.arch_id + ".json";
    ArchSpec spec = generate_family(e.family, cfg.depth, input_for(cfg, base_size), e.arch_seed, cfg.generator);
    for (int size : sizes) {
      CorpusTrace t;
      t.input_size = size;
      t.batch_size = cfg.batch_sizes.at(size);
      t.file = "traces/" + e.arch_id + "_s" + std::to_string(size) + ".trace";
      t.sim_seed = derive_seed(cfg.seed, 2 + static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(size));
      e.traces.push_back(std::move(t));
    }
    plan.manifest.entries.push_back(std::move(e));
    plan.specs.push_back(std::move(spec));
  }

  // Hold out whole architectures, stratified by family. Per-family quotas use
  // largest remainders so the total is exactly round(test_fraction * n_archs).
  std::array<std::vector<int>, kFamilies.size()> members;
  for (std::size_t f = 0; f < kFamilies.size(); ++f) {
    for (int i = 0; i < cfg.n_archs; ++i) {
      if (plan.manifest.entries[i].family == kFamilies[f]) members[f].push_back(i);
    }
    std::shuffle(members[f].begin(), members[f].end(), rng);
  }
  const auto n_test = static_cast<std::size_t>(std::lround(cfg.test_fraction * cfg.n_archs));
  std::array<std::size_t, kFamilies.size()> quota{};
  std::array<double, kFamilies.size()> remainder{};
  std::size_t assigned = 0;
  for (std::size_t f = 0; f < kFamilies.size(); ++f) {
    const double exact = cfg.test_fraction * static_cast<double>(members[f].size());
    quota[f] = static_cast<std::size_t>(std::floor(exact));
    remainder[f] = exact - std::floor(exact);
    assigned += quota[f];
  }
  while (assigned < n_test) {
    std::size_t best = 0;
    for (std::size_t f = 1; f < kFamilies.size(); ++f) {
      if (remainder[f] > remainder[best]) best = f;
    }
    ++quota[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  for (std::size_t f = 0; f < kFamilies.size(); ++f) {
    for (std::size_t k = 0; k < members[f].size(); ++k) {
      plan.manifest.entries[members[f][k]].split = k < quota[f] ? Split::Test : Split::Train;
    }
  }
  return plan;
}

namespace {

LabeledTrace simulate_entry(const CorpusConfig& cfg, const CorpusEntry& e, const ArchSpec& spec,
                            const CorpusTrace& t) {
  SimConfig sim = cfg.sim;
  sim.rng_seed = t.sim_seed;
  const InputShape input = input_for(cfg, t.input_size);
  auto [trace, ann] = simulate(spec, input, sim);
  trace.arch_id = e.arch_id;
  return {e.arch_id, e.family, input, std::move(trace), std::move(ann)};
}

}  // namespace

std::vector<LabeledTrace> simulate_split(const CorpusPlan& plan, Split split) {
  std::vector<LabeledTrace> out;
  const auto& entries = plan.manifest.entries;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split != split) continue;
    for (const auto& t : entries[i].traces) {
      out.push_back(simulate_entry(plan.manifest.config, entries[i], plan.specs[i], t));
    }
  }
  return out;
}

fs::path manifest_path(const fs::path& corpus_dir) { return corpus_dir / "manifest.json"; }

std::string hash_corpus_files(const CorpusManifest& m, const fs::path& corpus_dir) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto feed = [&h](const char* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(data[i]);
      h *= 0x100000001B3ULL;
    }
  };
  auto feed_file = [&](const std::string& rel) {
    feed(rel.data(), rel.size() + 1);
    std::ifstream is(corpus_dir / rel, std::ios::binary);
    if (!is) throw MalformedFile("missing corpus file " + rel);
    char buf[1 << 16];
    while (is) {
      is.read(buf, sizeof buf);
      feed(buf, static_cast<std::size_t>(is.gcount()));
    }
  };
  for (const auto& e : m.entries) {
    feed_file(e.spec_file);
    for (const auto& t : e.traces) {
      feed_file(t.file);
      const auto ann = annotation_path(t.file).string();
      if (fs::exists(corpus_dir / ann)) feed_file(ann);
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

CorpusManifest build_corpus(const CorpusConfig& cfg, const fs::path& out_dir) {
  CorpusPlan plan = plan_corpus(cfg);
  fs::create_directories(out_dir / "archs");
  fs::create_directories(out_dir / "traces");
  auto& m = plan.manifest;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    write_archspec(plan.specs[i], out_dir / e.spec_file);
    for (const auto& t : e.traces) {
      const auto lt = simulate_entry(cfg, e, plan.specs[i], t);
      write_trace(lt.trace, &lt.annotation, out_dir / t.file);
    }
  }
  m.content_hash = hash_corpus_files(m, out_dir);
  std::ofstream os(manifest_path(out_dir), std::ios::trunc);
  if (!os) throw Error("cannot write " + manifest_path(out_dir).string());
  os << to_json(m).dump(1) << '\n';
  return m;
}

CorpusManifest read_manifest(const fs::path& corpus_dir) {
  std::ifstream is(manifest_path(corpus_dir));
  if (!is) throw MalformedFile("cannot open " + manifest_path(corpus_dir).string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw MalformedFile("manifest: " + std::string(e.what()));
  }
  return corpus_manifest_from_json(j);
}

std::vector<LabeledTrace> load_split(const CorpusManifest& m, const fs::path& corpus_dir, Split split) {
  std::vector<LabeledTrace> out;
  for (const auto& e : m.entries) {
    if (e.split != split) continue;
    for (const auto& t : e.traces) {
      auto file = read_trace(corpus_dir / t.file);
      if (!file.annotation) throw MalformedFile(t.file + ": trace has no annotation");
      LabeledTrace lt;
      lt.arch_id = e.arch_id;
      lt.family = e.family;
      lt.input = file.trace.input_shape.value_or(InputShape{t.batch_size, 3, t.input_size, t.input_size});
      lt.trace = std::move(file.trace);
      lt.annotation = std::move(*file.annotation);
      out.push_back(std::move(lt));
    }
  }
  return out;
}

}  // namespace archrecon
