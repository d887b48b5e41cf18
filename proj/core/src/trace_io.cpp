#include "archrecon/trace_io.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "archrecon/archspec_json.hpp"
#include "detail/bytes.hpp"

namespace archrecon {

using nlohmann::json;

namespace {

using detail::get_f32;
using detail::get_u32;
using detail::put_f32;
using detail::put_u32;

json shape_to_json(const FeatureShape& s) {
  return {{"c", s.c}, {"h", s.h}, {"w", s.w}, {"flat", s.flat}};
}

FeatureShape shape_from_json(const json& j) {
  return {j.at("c").get<int>(), j.at("h").get<int>(), j.at("w").get<int>(), j.at("flat").get<bool>()};
}

}  // namespace

std::filesystem::path annotation_path(const std::filesystem::path& trace_path) {
  return trace_path.string() + ".ann.json";
}

json context_to_json(const LayerContext& ctx) {
  return {{"bs", ctx.bs},
          {"in", shape_to_json(ctx.in)},
          {"out", shape_to_json(ctx.out)},
          {"last_linear", ctx.last_linear}};
}

LayerContext context_from_json(const json& j) {
  return {j.at("bs").get<int>(), shape_from_json(j.at("in")), shape_from_json(j.at("out")),
          j.value("last_linear", false)};
}

json annotation_to_json(const Annotation& ann) {
  json layers = json::array();
  for (const auto& l : ann.layers) {
    layers.push_back({{"kind", std::string(to_string(l.kind))},
                      {"start", l.start},
                      {"end", l.end},
                      {"layer", layer_to_json(l.layer)},
                      {"context", context_to_json(l.context)}});
  }
  return {{"format_version", kAnnotationFormatVersion},
          {"length", ann.labels.size()},
          {"labels", ann.labels},
          {"layers", std::move(layers)}};
}

Annotation annotation_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kAnnotationFormatVersion) {
      throw MalformedFile("unsupported annotation format_version");
    }
    Annotation ann;
    ann.labels = j.at("labels").get<std::vector<int>>();
    for (const auto& l : j.at("layers")) {
      LayerRecord r;
      r.kind = layer_kind_from_string(l.at("kind").get<std::string>());
      r.start = l.at("start").get<int>();
      r.end = l.at("end").get<int>();
      r.layer = layer_from_json(l.at("layer"));
      if (l.contains("context")) r.context = context_from_json(l.at("context"));
      ann.layers.push_back(std::move(r));
    }
    const int length = j.at("length").get<int>();
    validate_annotation(ann, length);
    return ann;
  } catch (const json::exception& e) {
    throw MalformedFile(std::string("annotation: ") + e.what());
  }
}

void write_trace(const Trace& trace, const Annotation* annotation, const std::filesystem::path& path) {
  if (static_cast<int>(trace.channels.size()) != trace.channel_count()) {
    throw Error("trace channel names do not match sample rows");
  }
  if (!(trace.sample_rate_hz > 0.0)) throw Error("sample_rate_hz must be positive");
  if (!trace.samples.allFinite()) throw Error("trace samples must be finite");

  json header{{"format_version", kTraceFormatVersion},
              {"sample_rate_hz", trace.sample_rate_hz},
              {"channels", trace.channels},
              {"length", trace.length()},
              {"arch_id", trace.arch_id.empty() ? json(nullptr) : json(trace.arch_id)},
              {"input_shape", trace.input_shape ? input_shape_to_json(*trace.input_shape) : json(nullptr)},
              {"valid", trace.valid}};
  const std::string header_text = header.dump();

  std::string bytes(kTraceMagic, sizeof(kTraceMagic));
  put_u32(bytes, static_cast<std::uint32_t>(header_text.size()));
  bytes += header_text;
  bytes.reserve(bytes.size() + static_cast<std::size_t>(trace.samples.size()) * 4);
  for (Eigen::Index c = 0; c < trace.samples.rows(); ++c) {
    for (Eigen::Index s = 0; s < trace.samples.cols(); ++s) put_f32(bytes, trace.samples(c, s));
  }

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("short write to " + path.string());

  const auto ann_path = annotation_path(path);
  if (annotation) {
    validate_annotation(*annotation, trace.length());
    std::ofstream as(ann_path, std::ios::trunc);
    if (!as) throw Error("cannot open " + ann_path.string() + " for writing");
    as << annotation_to_json(*annotation).dump() << '\n';
  } else {
    std::error_code ec;
    std::filesystem::remove(ann_path, ec);
  }
}

TraceFile read_trace(const std::filesystem::path& path, const ReadOptions& options) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MalformedFile("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::string where = path.string() + ": ";

  if (bytes.size() < 12 || std::memcmp(bytes.data(), kTraceMagic, sizeof(kTraceMagic)) != 0) {
    throw MalformedFile(where + "bad magic");
  }
  const std::uint32_t header_len = get_u32(data + 8);
  if (bytes.size() < 12 + std::size_t{header_len}) throw MalformedFile(where + "truncated header");

  json header;
  try {
    header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const json::exception& e) {
    throw MalformedFile(where + "header is not JSON: " + e.what());
  }

  TraceFile out;
  Trace& t = out.trace;
  try {
    if (header.at("format_version").get<int>() != kTraceFormatVersion) {
      throw MalformedFile(where + "version mismatch");
    }
    t.sample_rate_hz = header.at("sample_rate_hz").get<double>();
    t.channels = header.at("channels").get<std::vector<std::string>>();
    const auto length = header.at("length").get<long long>();
    if (length < 0) throw MalformedFile(where + "negative length");
    if (header.contains("arch_id") && header["arch_id"].is_string()) t.arch_id = header["arch_id"].get<std::string>();
    if (header.contains("input_shape") && header["input_shape"].is_object()) {
      t.input_shape = input_shape_from_json(header["input_shape"]);
    }
    t.valid = header.value("valid", true);

    if (!(t.sample_rate_hz > 0.0)) throw MalformedFile(where + "sample_rate_hz must be positive");
    if (!t.valid && !options.allow_invalid) throw MalformedFile(where + "trace flagged invalid by its writer");

    const std::size_t payload = bytes.size() - 12 - header_len;
    const std::size_t expected = t.channels.size() * static_cast<std::size_t>(length) * 4;
    if (payload != expected) {
      throw MalformedFile(where + "channel-length mismatch: payload holds " + std::to_string(payload) +
                          " bytes, header implies " + std::to_string(expected));
    }
    t.samples.resize(static_cast<Eigen::Index>(t.channels.size()), static_cast<Eigen::Index>(length));
    const unsigned char* p = data + 12 + header_len;
    for (Eigen::Index c = 0; c < t.samples.rows(); ++c) {
      for (Eigen::Index s = 0; s < t.samples.cols(); ++s, p += 4) t.samples(c, s) = get_f32(p);
    }
    if (!t.samples.allFinite()) throw MalformedFile(where + "non-finite samples");
  } catch (const json::exception& e) {
    throw MalformedFile(where + "header: " + e.what());
  }

  const auto ann_path = annotation_path(path);
  if (options.load_annotation && std::filesystem::exists(ann_path)) {
    std::ifstream as(ann_path);
    json j;
    try {
      as >> j;
    } catch (const json::exception& e) {
      throw MalformedFile(ann_path.string() + ": " + e.what());
    }
    auto ann = annotation_from_json(j);
    validate_annotation(ann, t.length());
    out.annotation = std::move(ann);
  }
  return out;
}

}  // namespace archrecon
