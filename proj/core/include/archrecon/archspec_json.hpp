#pragma once

#include <filesystem>

#include <json.hpp>

#include "archrecon/archspec.hpp"

namespace archrecon {

inline constexpr int kArchSpecFormatVersion = 1;

nlohmann::json layer_to_json(const LayerSpec& layer);
LayerSpec layer_from_json(const nlohmann::json& j);

nlohmann::json input_shape_to_json(const InputShape& shape);
InputShape input_shape_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ArchSpec& spec);
// Throws MalformedFile on a missing field or version mismatch.
ArchSpec archspec_from_json(const nlohmann::json& j);

void write_archspec(const ArchSpec& spec, const std::filesystem::path& path);
ArchSpec read_archspec(const std::filesystem::path& path);

}  // namespace archrecon
