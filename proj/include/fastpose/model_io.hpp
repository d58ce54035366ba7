#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "fastpose/tensornet.hpp"

namespace fastpose {

// A model file is a JSON graph description plus a sidecar blob of raw
// little-endian float32 parameters. The JSON carries, per layer, the byte
// offset and element count of its weight and bias arrays inside the blob;
// arrays are stored in layer order, weight before bias. `meta` holds the
// build config, seed and provenance and is round-tripped verbatim.
struct ModelFile {
  LayerGraph graph;
  nlohmann::json meta = nlohmann::json::object();
};

// Writes `<path>` (JSON) and `<path without extension>.bin`.
void save_model(const std::filesystem::path& json_path, const ModelFile& model);
// Throws SchemaViolation / IoError / ShapeMismatch.
ModelFile load_model(const std::filesystem::path& json_path);

std::string graph_to_json(const LayerGraph& graph, const nlohmann::json& meta,
                          const std::string& weights_file);
std::string graph_weights_blob(const LayerGraph& graph);
ModelFile graph_from_json(const std::string& json_text, const std::string& blob);

std::filesystem::path weights_path_for(const std::filesystem::path& json_path);

}  // namespace fastpose
