#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "archrecon/archspec.hpp"
#include "archrecon/metrics.hpp"

namespace archrecon {

using Signal = Eigen::MatrixXf;  // channels x samples

inline constexpr double kDefaultSampleRateHz = 1000.0;

struct Trace {
  std::vector<std::string> channels;
  double sample_rate_hz = kDefaultSampleRateHz;
  Signal samples;
  std::string arch_id;
  std::optional<InputShape> input_shape;
  bool valid = true;

  int channel_count() const { return static_cast<int>(samples.rows()); }
  int length() const { return static_cast<int>(samples.cols()); }

  // Keeps only the named channels, in the order given. Throws ConfigError for
  // an unknown name.
  Trace select_channels(const std::vector<std::string>& names) const;
};

// Everything the attacker can know about a layer once its predecessors are
// reconstructed: batch size plus input/output activation shapes.
struct LayerContext {
  int bs = 0;
  FeatureShape in;
  FeatureShape out;
  bool last_linear = false;

  friend bool operator==(const LayerContext&, const LayerContext&) = default;
};

struct LayerRecord {
  LayerKind kind = LayerKind::Conv;
  int start = 0;  // inclusive
  int end = 0;    // inclusive
  LayerSpec layer;
  LayerContext context;

  int width() const { return end - start + 1; }
  friend bool operator==(const LayerRecord&, const LayerRecord&) = default;
};

struct Annotation {
  std::vector<int> labels;  // LayerKind index per sample, kBackgroundLabel in gaps
  std::vector<LayerRecord> layers;

  std::vector<std::array<int, 2>> positions() const;
  std::vector<LayerKind> kinds() const;
  friend bool operator==(const Annotation&, const Annotation&) = default;
};

// Throws MalformedFile if rows are unsorted, overlap, leave [0, length), carry
// repeated consecutive kinds, or disagree with the per-sample labels.
void validate_annotation(const Annotation& ann, int length);

// Per-sample labels implied by the layer rows; samples outside any row are
// background.
std::vector<int> labels_from_layers(const std::vector<LayerRecord>& layers, int length);

struct Segment {
  Signal values;
  LayerKind kind = LayerKind::Conv;
  LayerContext context;
  LayerSpec layer;  // ground truth when known
  int source_width = 0;  // width before any resize
  int start = -1;         // first sample in the source trace
  std::string source;     // trace_key of the source trace
};

// "<arch_id>@<h>x<w>", or just the arch id when the input shape is unknown.
std::string trace_key(const Trace& trace);

Segment cut_segment(const Trace& trace, const LayerRecord& record);

}  // namespace archrecon
