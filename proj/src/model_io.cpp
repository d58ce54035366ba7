#include "fastpose/model_io.hpp"

#include <bit>
#include <cstring>

#include "fastpose/datio.hpp"
#include "fastpose/errors.hpp"

namespace fastpose {

using nlohmann::json;

namespace {

void append_le(std::string& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

float read_le(const std::string& blob, std::size_t offset) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) {
    bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(blob[offset + i])) << (8 * i);
  }
  return std::bit_cast<float>(bits);
}

[[noreturn]] void schema_error(const std::string& path, const std::string& why) {
  fail(ErrorCode::kSchemaViolation, "at " + path + ": " + why);
}

const json& field(const json& j, const char* key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) schema_error(path + "/" + key, "missing required field");
  return *it;
}

int int_field(const json& j, const char* key, const std::string& path) {
  const json& v = field(j, key, path);
  if (!v.is_number_integer()) schema_error(path + "/" + key, "expected an integer");
  return v.get<int>();
}

std::vector<float> read_array(const json& j, const std::string& blob, const std::string& path) {
  const std::size_t offset = field(j, "offset", path).get<std::size_t>();
  const std::size_t count = field(j, "count", path).get<std::size_t>();
  if (offset % 4 != 0 || offset + 4 * count > blob.size()) {
    schema_error(path, "offset/count fall outside the weight blob");
  }
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = read_le(blob, offset + 4 * i);
  return out;
}

}  // namespace

std::filesystem::path weights_path_for(const std::filesystem::path& json_path) {
  auto p = json_path;
  p.replace_extension(".bin");
  return p;
}

std::string graph_to_json(const LayerGraph& graph, const json& meta, const std::string& weights_file) {
  json root;
  root["format"] = "fastpose-graph";
  root["version"] = 1;
  root["dtype"] = "float32";
  root["byte_order"] = "little";
  root["weights_file"] = weights_file;
  const Shape& s = graph.input_shape();
  root["input_shape"] = {s.c, s.h, s.w};
  std::size_t offset = 0;
  json layers = json::array();
  for (const auto& l : graph.layers()) {
    json inputs = json::array();
    for (const auto& in : l.inputs) inputs.push_back({{"layer", in.layer}, {"begin", in.begin}, {"end", in.end}});
    json jl = {{"name", l.name},
               {"module", l.module},
               {"kind", std::string(layer_kind_name(l.kind))},
               {"inputs", inputs},
               {"in_channels", l.in_channels},
               {"out_channels", l.out_channels},
               {"kernel", l.kernel},
               {"stride", l.stride},
               {"padding", l.padding},
               {"group_size", l.group_size}};
    jl["weight"] = {{"offset", offset}, {"count", l.weight.size()}};
    offset += 4 * l.weight.size();
    jl["bias"] = {{"offset", offset}, {"count", l.bias.size()}};
    offset += 4 * l.bias.size();
    layers.push_back(jl);
  }
  root["weights_bytes"] = offset;
  root["layers"] = layers;
  root["meta"] = meta;
  return root.dump(2) + "\n";
}

std::string graph_weights_blob(const LayerGraph& graph) {
  std::string blob;
  for (const auto& l : graph.layers()) {
    for (float w : l.weight) append_le(blob, w);
    for (float b : l.bias) append_le(blob, b);
  }
  return blob;
}

ModelFile graph_from_json(const std::string& json_text, const std::string& blob) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    schema_error("/", std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object() || root.value("format", "") != "fastpose-graph") {
    schema_error("/format", "not a fastpose-graph model file");
  }
  const json& shape = field(root, "input_shape", "");
  if (!shape.is_array() || shape.size() != 3) schema_error("/input_shape", "expected [c, h, w]");
  if (field(root, "weights_bytes", "").get<std::size_t>() != blob.size()) {
    schema_error("/weights_bytes", "blob size " + std::to_string(blob.size()) + " does not match");
  }
  ModelFile out;
  out.graph = LayerGraph(Shape{shape[0].get<int>(), shape[1].get<int>(), shape[2].get<int>()});
  const json& layers = field(root, "layers", "");
  if (!layers.is_array()) schema_error("/layers", "expected an array");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string path = "/layers/" + std::to_string(i);
    const json& jl = layers[i];
    Layer l;
    l.name = field(jl, "name", path).get<std::string>();
    l.module = jl.value("module", "");
    try {
      l.kind = layer_kind_from_name(field(jl, "kind", path).get<std::string>());
    } catch (const Error& e) {
      schema_error(path + "/kind", e.what());
    }
    for (const auto& in : field(jl, "inputs", path)) {
      l.inputs.push_back({in.at("layer").get<int>(), in.value("begin", 0), in.value("end", -1)});
    }
    l.in_channels = int_field(jl, "in_channels", path);
    l.out_channels = int_field(jl, "out_channels", path);
    l.kernel = int_field(jl, "kernel", path);
    l.stride = int_field(jl, "stride", path);
    l.padding = int_field(jl, "padding", path);
    l.group_size = int_field(jl, "group_size", path);
    l.weight = read_array(field(jl, "weight", path), blob, path + "/weight");
    l.bias = read_array(field(jl, "bias", path), blob, path + "/bias");
    out.graph.add(std::move(l));
  }
  out.graph.validate();
  if (auto m = root.find("meta"); m != root.end()) out.meta = *m;
  return out;
}

void save_model(const std::filesystem::path& json_path, const ModelFile& model) {
  const auto bin = weights_path_for(json_path);
  write_text_file(json_path, graph_to_json(model.graph, model.meta, bin.filename().string()));
  write_text_file(bin, graph_weights_blob(model.graph));
}

ModelFile load_model(const std::filesystem::path& json_path) {
  const std::string text = read_text_file(json_path);
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    schema_error("/", std::string("invalid JSON: ") + e.what());
  }
  const std::string weights = root.value("weights_file", weights_path_for(json_path).filename().string());
  return graph_from_json(text, read_text_file(json_path.parent_path() / weights));
}

}  // namespace fastpose
