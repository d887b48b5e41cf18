#include "archrecon/archspec_json.hpp"

#include <fstream>

namespace archrecon {

using nlohmann::json;

namespace {

int get_int(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number_integer()) {
    throw MalformedFile(std::string("missing integer field '") + key + "'");
  }
  return it->get<int>();
}

}  // namespace

json layer_to_json(const LayerSpec& layer) {
  json j{{"kind", std::string(to_string(layer.kind))}};
  if (const auto* c = std::get_if<ConvParams>(&layer.params)) {
    j["c_in"] = c->c_in;
    j["c_out"] = c->c_out;
    j["k"] = c->k;
    j["s"] = c->s;
    j["p"] = c->p;
    j["d"] = c->d;
    j["g"] = c->g;
  } else if (const auto* m = std::get_if<MaxPoolParams>(&layer.params)) {
    j["k"] = m->k;
    j["s"] = m->s;
    j["p"] = m->p;
    j["d"] = m->d;
  } else if (const auto* l = std::get_if<LinearParams>(&layer.params)) {
    j["f_in"] = l->f_in;
    j["f_out"] = l->f_out;
  }
  return j;
}

LayerSpec layer_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw MalformedFile("layer record without kind");
  const auto kind = layer_kind_from_string(j.at("kind").get<std::string>());
  switch (kind) {
    case LayerKind::Conv:
      return LayerSpec::conv({get_int(j, "c_in"), get_int(j, "c_out"), get_int(j, "k"),
                              get_int(j, "s"), get_int(j, "p"), get_int(j, "d"), get_int(j, "g")});
    case LayerKind::MaxPool:
      return LayerSpec::max_pool(
          {get_int(j, "k"), get_int(j, "s"), get_int(j, "p"), get_int(j, "d")});
    case LayerKind::Linear:
      return LayerSpec::linear({get_int(j, "f_in"), get_int(j, "f_out")});
    default:
      return LayerSpec::plain(kind);
  }
}

json input_shape_to_json(const InputShape& shape) {
  return {{"bs", shape.bs}, {"c", shape.c}, {"h", shape.h}, {"w", shape.w}};
}

InputShape input_shape_from_json(const json& j) {
  if (!j.is_object()) throw MalformedFile("input shape must be an object");
  return {get_int(j, "bs"), get_int(j, "c"), get_int(j, "h"), get_int(j, "w")};
}

json to_json(const ArchSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.layers) layers.push_back(layer_to_json(l));
  json edges = json::array();
  for (const auto& e : spec.skip_edges) edges.push_back(json::array({e.source, e.target}));
  return {{"format_version", kArchSpecFormatVersion},
          {"family", std::string(to_string(spec.family))},
          {"class_count", spec.class_count},
          {"input", input_shape_to_json(spec.input)},
          {"layers", std::move(layers)},
          {"skip_edges", std::move(edges)}};
}

ArchSpec archspec_from_json(const json& j) {
  if (!j.is_object()) throw MalformedFile("archspec document must be an object");
  if (get_int(j, "format_version") != kArchSpecFormatVersion) {
    throw MalformedFile("unsupported archspec format_version");
  }
  ArchSpec spec;
  try {
    spec.family = family_from_string(j.at("family").get<std::string>());
  } catch (const ConfigError& e) {
    throw MalformedFile(e.what());
  } catch (const json::exception& e) {
    throw MalformedFile(std::string("archspec family: ") + e.what());
  }
  spec.class_count = get_int(j, "class_count");
  spec.input = input_shape_from_json(j.at("input"));
  if (!j.contains("layers") || !j["layers"].is_array()) throw MalformedFile("layers must be an array");
  for (const auto& l : j["layers"]) spec.layers.push_back(layer_from_json(l));
  if (j.contains("skip_edges")) {
    for (const auto& e : j["skip_edges"]) {
      if (!e.is_array() || e.size() != 2) throw MalformedFile("skip edge must be [source, target]");
      spec.skip_edges.push_back({e[0].get<int>(), e[1].get<int>()});
    }
  }
  return spec;
}

void write_archspec(const ArchSpec& spec, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << to_json(spec).dump(1) << '\n';
}

ArchSpec read_archspec(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MalformedFile("cannot open " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw MalformedFile(path.string() + ": " + e.what());
  }
  return archspec_from_json(j);
}

}  // namespace archrecon
