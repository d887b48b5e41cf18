#pragma once

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "archrecon/trace.hpp"

namespace archrecon {

// On-disk trace layout (all integers little-endian):
//
//   offset 0   8 bytes   magic "ARCTRACE"
//   offset 8   u32       header byte length H
//   offset 12  H bytes   UTF-8 JSON header
//   then       c*l f32   samples, channel-major (all of channel 0, then 1, ...)
//
// Header keys: format_version (1), sample_rate_hz, channels, length, arch_id
// (string or null), input_shape ({bs,c,h,w} or null), valid (bool). Unknown
// keys are ignored. The annotation lives in a JSON sidecar "<path>.ann.json".
inline constexpr char kTraceMagic[8] = {'A', 'R', 'C', 'T', 'R', 'A', 'C', 'E'};
inline constexpr int kTraceFormatVersion = 1;
inline constexpr int kAnnotationFormatVersion = 1;

struct TraceFile {
  Trace trace;
  std::optional<Annotation> annotation;
};

struct ReadOptions {
  // Accept files the writer flagged as incomplete (valid = false).
  bool allow_invalid = false;
  bool load_annotation = true;
};

std::filesystem::path annotation_path(const std::filesystem::path& trace_path);

void write_trace(const Trace& trace, const Annotation* annotation, const std::filesystem::path& path);
TraceFile read_trace(const std::filesystem::path& path, const ReadOptions& options = {});

nlohmann::json annotation_to_json(const Annotation& ann);
Annotation annotation_from_json(const nlohmann::json& j);

nlohmann::json context_to_json(const LayerContext& ctx);
LayerContext context_from_json(const nlohmann::json& j);

}  // namespace archrecon
