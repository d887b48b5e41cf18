#include "archrecon/trace.hpp"

#include <algorithm>

namespace archrecon {

Trace Trace::select_channels(const std::vector<std::string>& names) const {
  Trace out = *this;
  out.channels = names;
  out.samples.resize(static_cast<Eigen::Index>(names.size()), samples.cols());
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto it = std::find(channels.begin(), channels.end(), names[i]);
    if (it == channels.end()) throw ConfigError("trace has no channel '" + names[i] + "'");
    out.samples.row(static_cast<Eigen::Index>(i)) = samples.row(it - channels.begin());
  }
  return out;
}

std::vector<std::array<int, 2>> Annotation::positions() const {
  std::vector<std::array<int, 2>> out;
  out.reserve(layers.size());
  for (const auto& l : layers) out.push_back({l.start, l.end});
  return out;
}

std::vector<LayerKind> Annotation::kinds() const {
  std::vector<LayerKind> out;
  out.reserve(layers.size());
  for (const auto& l : layers) out.push_back(l.kind);
  return out;
}

std::vector<int> labels_from_layers(const std::vector<LayerRecord>& layers, int length) {
  std::vector<int> labels(static_cast<std::size_t>(std::max(length, 0)), kBackgroundLabel);
  for (const auto& l : layers) {
    for (int s = std::max(l.start, 0); s <= std::min(l.end, length - 1); ++s) {
      labels[static_cast<std::size_t>(s)] = kind_index(l.kind);
    }
  }
  return labels;
}

void validate_annotation(const Annotation& ann, int length) {
  if (static_cast<int>(ann.labels.size()) != length) {
    throw MalformedFile("annotation has " + std::to_string(ann.labels.size()) +
                        " labels for a trace of length " + std::to_string(length));
  }
  int prev_end = -1;
  for (std::size_t m = 0; m < ann.layers.size(); ++m) {
    const auto& l = ann.layers[m];
    const std::string where = "annotation row " + std::to_string(m);
    if (l.start < 0 || l.end >= length || l.start > l.end) throw MalformedFile(where + " leaves [0, l)");
    if (l.start <= prev_end) throw MalformedFile(where + " overlaps or is out of order");
    if (m > 0 && ann.layers[m - 1].kind == l.kind) throw MalformedFile(where + " repeats the previous kind");
    if (l.layer.kind != l.kind) throw MalformedFile(where + " kind disagrees with its layer record");
    prev_end = l.end;
  }
  if (labels_from_layers(ann.layers, length) != ann.labels) {
    throw MalformedFile("annotation labels disagree with layer positions");
  }
}

Segment cut_segment(const Trace& trace, const LayerRecord& record) {
  if (record.start < 0 || record.end >= trace.length() || record.start > record.end) {
    throw Error("segment bounds outside trace");
  }
  Segment seg;
  seg.values = trace.samples.middleCols(record.start, record.width());
  seg.kind = record.kind;
  seg.context = record.context;
  seg.layer = record.layer;
  seg.source_width = record.width();
  seg.start = record.start;
  seg.source = trace_key(trace);
  return seg;
}

std::string trace_key(const Trace& trace) {
  if (!trace.input_shape) return trace.arch_id;
  return trace.arch_id + "@" + std::to_string(trace.input_shape->h) + "x" + std::to_string(trace.input_shape->w);
}

}  // namespace archrecon
