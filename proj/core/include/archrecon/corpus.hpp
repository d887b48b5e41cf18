#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "archrecon/archspec.hpp"
#include "archrecon/family.hpp"
#include "archrecon/trace.hpp"
#include "archrecon/tracesim.hpp"

namespace archrecon {

inline constexpr int kManifestFormatVersion = 1;

enum class Split : std::uint8_t { Train, Test };

std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

struct CorpusConfig {
  int n_archs = 200;
  std::vector<int> input_sizes{331, 299, 224, 192, 160};
  // Batch size used with each input size; larger inputs get smaller batches.
  std::map<int, int> batch_sizes{{160, 256}, {192, 192}, {224, 128}, {299, 96}, {331, 64}};
  // Relative family frequencies, VGG / ResNet / Random.
  std::array<double, 3> family_weights{0.046, 0.465, 0.489};
  DepthRange depth{kMinDepth, kMaxDepth};
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  SimConfig sim;
  GeneratorConfig generator;

  // Throws ConfigError on an invariant violation.
  void check() const;
};

nlohmann::json to_json(const CorpusConfig& cfg);
CorpusConfig corpus_config_from_json(const nlohmann::json& j);

struct CorpusTrace {
  int input_size = 0;
  int batch_size = 0;
  std::string file;  // relative to the corpus directory
  std::uint64_t sim_seed = 0;

  friend bool operator==(const CorpusTrace&, const CorpusTrace&) = default;
};

struct CorpusEntry {
  std::string arch_id;
  Family family = Family::Random;
  Split split = Split::Train;
  std::uint64_t arch_seed = 0;
  std::string spec_file;
  std::vector<CorpusTrace> traces;

  friend bool operator==(const CorpusEntry&, const CorpusEntry&) = default;
};

struct CorpusManifest {
  CorpusConfig config;
  std::vector<CorpusEntry> entries;
  std::string content_hash;  // set once files are written

  std::size_t trace_count() const;
  std::size_t trace_count(Split split) const;
};

nlohmann::json to_json(const CorpusManifest& m);
CorpusManifest corpus_manifest_from_json(const nlohmann::json& j);

// Deterministic 64-bit mixing used to derive per-item seeds from a root seed.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0);

// The manifest of the corpus that build_corpus would write, plus the specs.
struct CorpusPlan {
  CorpusManifest manifest;
  std::vector<ArchSpec> specs;  // aligned with manifest.entries
};

CorpusPlan plan_corpus(const CorpusConfig& cfg);

// Writes every spec, trace and annotation, then manifest.json, under out_dir.
CorpusManifest build_corpus(const CorpusConfig& cfg, const std::filesystem::path& out_dir);

CorpusManifest read_manifest(const std::filesystem::path& corpus_dir);
std::filesystem::path manifest_path(const std::filesystem::path& corpus_dir);

// FNV-1a over the relative names and bytes of every file the manifest lists.
std::string hash_corpus_files(const CorpusManifest& m, const std::filesystem::path& corpus_dir);

struct LabeledTrace {
  std::string arch_id;
  Family family = Family::Random;
  InputShape input;
  Trace trace;
  Annotation annotation;
};

// Loads every trace of the split. Throws MalformedFile when a trace lacks its
// annotation.
std::vector<LabeledTrace> load_split(const CorpusManifest& m, const std::filesystem::path& corpus_dir,
                                     Split split);

// Simulates the same traces in memory, without touching the file system.
std::vector<LabeledTrace> simulate_split(const CorpusPlan& plan, Split split);

}  // namespace archrecon
