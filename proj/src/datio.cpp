#include "fastpose/datio.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fastpose/errors.hpp"

namespace fastpose {

std::string format_real(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                 std::chars_format::general, 17);
  return std::string(buf.data(), end);
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

// Splits on LF; a trailing CR on each line is dropped by trim().
std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t p = s.find(sep, start);
    out.push_back(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

[[noreturn]] void line_error(ErrorCode code, std::size_t line_no, const std::string& reason) {
  fail(code, "line " + std::to_string(line_no) + ": " + reason);
}

std::vector<double> parse_reals(std::string_view field, std::size_t expected, std::size_t line_no,
                                std::string_view what) {
  const auto parts = split_ws(field);
  if (parts.size() != expected) {
    line_error(ErrorCode::kMalformedLine, line_no,
               std::string(what) + " needs " + std::to_string(expected) + " values, got " +
                   std::to_string(parts.size()));
  }
  std::vector<double> out;
  out.reserve(expected);
  for (auto p : parts) {
    auto v = parse_number<double>(p);
    if (!v || !std::isfinite(*v)) {
      line_error(ErrorCode::kMalformedLine, line_no,
                 std::string(what) + " value '" + std::string(p) + "' is not a finite real");
    }
    out.push_back(*v);
  }
  return out;
}

Mat3 mat3_row_major(const std::vector<double>& v, std::size_t offset = 0, std::size_t stride = 3) {
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m(r, c) = v[offset + r * stride + c];
  }
  return m;
}

}  // namespace

std::vector<EstimateRecord> parse_result_csv(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty() || trim(lines[0]) != kResultCsvHeader) {
    line_error(ErrorCode::kMalformedLine, 1,
               "expected header '" + std::string(kResultCsvHeader) + "'");
  }
  std::vector<EstimateRecord> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const auto line = trim(lines[i]);
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 7) {
      line_error(ErrorCode::kMalformedLine, line_no,
                 "expected 7 fields, got " + std::to_string(fields.size()));
    }
    EstimateRecord rec;
    const std::array<int*, 3> ids{&rec.scene_id, &rec.im_id, &rec.obj_id};
    static constexpr std::array<std::string_view, 3> kIdNames{"scene_id", "im_id", "obj_id"};
    for (std::size_t f = 0; f < 3; ++f) {
      auto v = parse_number<int>(fields[f]);
      if (!v) line_error(ErrorCode::kMalformedLine, line_no, std::string(kIdNames[f]) + " is not an integer");
      *ids[f] = *v;
    }
    auto score = parse_number<double>(fields[3]);
    if (!score || !std::isfinite(*score)) {
      line_error(ErrorCode::kMalformedLine, line_no, "score is not a finite real");
    }
    rec.score = *score;
    const auto r = parse_reals(fields[4], 9, line_no, "R");
    const auto t = parse_reals(fields[5], 3, line_no, "t");
    auto time = parse_number<double>(fields[6]);
    if (!time || !std::isfinite(*time) || (*time < 0.0 && *time != -1.0)) {
      line_error(ErrorCode::kMalformedLine, line_no, "time must be >= 0 or -1");
    }
    rec.time_s = *time;
    try {
      rec.pose = Pose(mat3_row_major(r), Vec3(t[0], t[1], t[2]));
    } catch (const Error& e) {
      line_error(ErrorCode::kInvalidRotation, line_no, e.what());
    }
    out.push_back(rec);
  }
  return out;
}

std::string serialize_result_csv(const std::vector<EstimateRecord>& records) {
  std::string out(kResultCsvHeader);
  out += '\n';
  for (const auto& rec : records) {
    out += std::to_string(rec.scene_id) + ',' + std::to_string(rec.im_id) + ',' +
           std::to_string(rec.obj_id) + ',' + format_real(rec.score) + ',';
    const Mat3& r = rec.pose.rotation();
    for (int i = 0; i < 9; ++i) {
      if (i) out += ' ';
      out += format_real(r(i / 3, i % 3));
    }
    out += ',';
    for (int i = 0; i < 3; ++i) {
      if (i) out += ' ';
      out += format_real(rec.pose.translation()[i]);
    }
    out += ',' + format_real(rec.time_s) + '\n';
  }
  return out;
}

ObjectModel parse_ply(std::string_view text) {
  const auto lines = split_lines(text);
  std::size_t i = 0;
  auto next_header = [&]() -> std::string_view {
    if (i >= lines.size()) fail(ErrorCode::kMalformedHeader, "unexpected end of PLY header");
    return trim(lines[i++]);
  };
  if (next_header() != "ply") fail(ErrorCode::kMalformedHeader, "line 1: missing 'ply' magic");

  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> properties;
    bool has_list = false;
  };
  std::vector<Element> elements;
  bool format_seen = false;
  for (;;) {
    const std::size_t line_no = i + 1;
    const auto line = next_header();
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() < 2) line_error(ErrorCode::kMalformedHeader, line_no, "format line incomplete");
      if (tok[1] != "ascii") {
        line_error(ErrorCode::kUnsupportedFormat, line_no,
                   "only ASCII PLY is supported, got '" + std::string(tok[1]) + "'");
      }
      format_seen = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) line_error(ErrorCode::kMalformedHeader, line_no, "element line needs name and count");
      auto count = parse_number<long long>(tok[2]);
      if (!count || *count < 0) line_error(ErrorCode::kMalformedHeader, line_no, "element count is invalid");
      elements.push_back({std::string(tok[1]), static_cast<std::size_t>(*count), {}, false});
    } else if (tok[0] == "property") {
      if (elements.empty()) line_error(ErrorCode::kMalformedHeader, line_no, "property before element");
      if (tok.size() >= 2 && tok[1] == "list") {
        if (tok.size() != 5) line_error(ErrorCode::kMalformedHeader, line_no, "list property malformed");
        elements.back().has_list = true;
        elements.back().properties.emplace_back(tok[4]);
      } else {
        if (tok.size() != 3) line_error(ErrorCode::kMalformedHeader, line_no, "property line malformed");
        elements.back().properties.emplace_back(tok[2]);
      }
    } else {
      line_error(ErrorCode::kMalformedHeader, line_no, "unknown header keyword '" + std::string(tok[0]) + "'");
    }
  }
  if (!format_seen) fail(ErrorCode::kMalformedHeader, "PLY header has no format line");

  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  bool vertex_seen = false;
  for (const auto& el : elements) {
    int ix = -1, iy = -1, iz = -1;
    if (el.name == "vertex") {
      vertex_seen = true;
      if (el.has_list) fail(ErrorCode::kUnsupportedFormat, "list properties on vertices are not supported");
      for (std::size_t p = 0; p < el.properties.size(); ++p) {
        if (el.properties[p] == "x") ix = static_cast<int>(p);
        if (el.properties[p] == "y") iy = static_cast<int>(p);
        if (el.properties[p] == "z") iz = static_cast<int>(p);
      }
      if (ix < 0 || iy < 0 || iz < 0) fail(ErrorCode::kMalformedHeader, "vertex element lacks x, y or z");
    } else if (el.name == "face") {
      if (!el.has_list || el.properties.size() != 1) {
        fail(ErrorCode::kUnsupportedFormat, "face element must have exactly one list property");
      }
    }
    for (std::size_t n = 0; n < el.count; ++n) {
      const std::size_t line_no = i + 1;
      if (i >= lines.size()) line_error(ErrorCode::kMalformedLine, line_no, "unexpected end of " + el.name + " data");
      const auto tok = split_ws(lines[i++]);
      if (el.name == "vertex") {
        if (tok.size() != el.properties.size()) {
          line_error(ErrorCode::kMalformedLine, line_no, "vertex has wrong number of values");
        }
        Vec3 v;
        const std::array<int, 3> idx{ix, iy, iz};
        for (int a = 0; a < 3; ++a) {
          auto val = parse_number<double>(tok[idx[a]]);
          if (!val || !std::isfinite(*val)) line_error(ErrorCode::kMalformedLine, line_no, "vertex coordinate is not a finite real");
          v[a] = *val;
        }
        vertices.push_back(v);
      } else if (el.name == "face") {
        if (tok.empty()) line_error(ErrorCode::kMalformedLine, line_no, "empty face line");
        auto k = parse_number<long long>(tok[0]);
        if (!k) line_error(ErrorCode::kMalformedLine, line_no, "face vertex count is not an integer");
        if (*k != 3) {
          line_error(ErrorCode::kUnsupportedFormat, line_no,
                     "only triangles are supported, got a " + std::to_string(*k) + "-gon");
        }
        if (tok.size() != 4) line_error(ErrorCode::kMalformedLine, line_no, "face has wrong number of indices");
        Triangle t{};
        for (int a = 0; a < 3; ++a) {
          auto idx = parse_number<long long>(tok[a + 1]);
          if (!idx) line_error(ErrorCode::kMalformedLine, line_no, "face index is not an integer");
          if (*idx < 0 || *idx >= static_cast<long long>(vertices.size())) {
            line_error(ErrorCode::kIndexOutOfRange, line_no,
                       "face index " + std::to_string(*idx) + " with " + std::to_string(vertices.size()) +
                           " vertices");
          }
          t[a] = static_cast<int>(*idx);
        }
        triangles.push_back(t);
      }
    }
  }
  if (!vertex_seen) fail(ErrorCode::kMalformedHeader, "PLY has no vertex element");
  return ObjectModel(std::move(vertices), std::move(triangles));
}

std::string model_to_ply(const ObjectModel& model) {
  std::string out = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(model.vertices().size()) +
                    "\nproperty float x\nproperty float y\nproperty float z\n";
  out += "element face " + std::to_string(model.triangles().size()) +
         "\nproperty list uchar int vertex_indices\nend_header\n";
  for (const auto& v : model.vertices()) {
    out += format_real(v.x()) + ' ' + format_real(v.y()) + ' ' + format_real(v.z()) + '\n';
  }
  for (const auto& t : model.triangles()) {
    out += "3 " + std::to_string(t[0]) + ' ' + std::to_string(t[1]) + ' ' + std::to_string(t[2]) + '\n';
  }
  return out;
}

namespace {

using nlohmann::json;

[[noreturn]] void schema_error(const std::string& path, const std::string& reason) {
  fail(ErrorCode::kSchemaViolation, "at " + path + ": " + reason);
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) schema_error(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(path + "/" + key, "missing required field");
  return *it;
}

int as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) schema_error(path, "expected an integer");
  return j.get<int>();
}

std::vector<double> as_reals(const json& j, std::size_t n, const std::string& path) {
  if (!j.is_array() || j.size() != n) {
    schema_error(path, "expected an array of " + std::to_string(n) + " numbers");
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!j[i].is_number()) schema_error(path + "/" + std::to_string(i), "expected a number");
    out.push_back(j[i].get<double>());
    if (!std::isfinite(out.back())) schema_error(path + "/" + std::to_string(i), "not finite");
  }
  return out;
}

Pose pose_at(const Mat3& r, const Vec3& t, const std::string& path) {
  try {
    return Pose(r, t);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidRotation) fail(ErrorCode::kInvalidRotation, "at " + path + ": " + e.what());
    throw;
  }
}

}  // namespace

GroundTruthSet parse_gt_json(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    schema_error("/", std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object()) schema_error("/", "expected an object");
  GroundTruthSet out;

  if (auto it = root.find("objects"); it != root.end()) {
    if (!it->is_object()) schema_error("/objects", "expected an object");
    for (const auto& [key, value] : it->items()) {
      const std::string path = "/objects/" + key;
      auto id = parse_number<int>(key);
      if (!id) schema_error(path, "object key must be an integer id");
      if (!value.is_object()) schema_error(path, "expected an object");
      ObjectMeta meta;
      meta.symmetries.push_back(Pose::identity());
      if (auto d = value.find("diameter"); d != value.end()) {
        if (!d->is_number() || !(d->get<double>() > 0.0)) schema_error(path + "/diameter", "expected a positive number");
        meta.diameter = d->get<double>();
      }
      if (auto s = value.find("symmetries"); s != value.end()) {
        if (!s->is_array()) schema_error(path + "/symmetries", "expected an array");
        for (std::size_t k = 0; k < s->size(); ++k) {
          const std::string sp = path + "/symmetries/" + std::to_string(k);
          const auto v = as_reals((*s)[k], 12, sp);
          meta.symmetries.push_back(pose_at(mat3_row_major(v, 0, 4), Vec3(v[3], v[7], v[11]), sp));
        }
      }
      if (auto f = value.find("symmetric"); f != value.end()) {
        if (!f->is_boolean()) schema_error(path + "/symmetric", "expected a boolean");
        meta.symmetric = f->get<bool>();
      }
      out.objects[*id] = std::move(meta);
    }
  }

  const json& instances = require(root, "instances", "");
  if (!instances.is_array()) schema_error("/instances", "expected an array");
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const std::string path = "/instances/" + std::to_string(i);
    const json& inst = instances[i];
    if (!inst.is_object()) schema_error(path, "expected an object");
    GroundTruthRecord rec;
    rec.scene_id = as_int(require(inst, "scene_id", path), path + "/scene_id");
    rec.im_id = as_int(require(inst, "im_id", path), path + "/im_id");
    rec.obj_id = as_int(require(inst, "obj_id", path), path + "/obj_id");
    const auto k = as_reals(require(inst, "cam_K", path), 9, path + "/cam_K");
    const json& size = require(inst, "im_size", path);
    if (!size.is_array() || size.size() != 2 || !size[0].is_number_integer() || !size[1].is_number_integer()) {
      schema_error(path + "/im_size", "expected [width, height] integers");
    }
    try {
      rec.camera = CameraIntrinsics(k[0], k[4], k[2], k[5], size[0].get<int>(), size[1].get<int>());
    } catch (const Error& e) {
      schema_error(path + "/cam_K", e.what());
    }
    const auto r = as_reals(require(inst, "cam_R_m2c", path), 9, path + "/cam_R_m2c");
    const auto t = as_reals(require(inst, "cam_t_m2c", path), 3, path + "/cam_t_m2c");
    rec.pose = pose_at(mat3_row_major(r), Vec3(t[0], t[1], t[2]), path + "/cam_R_m2c");
    out.records.push_back(rec);
  }
  return out;
}

std::string serialize_gt_json(const GroundTruthSet& gt) {
  json root;
  json objects = json::object();
  for (const auto& [id, meta] : gt.objects) {
    json o = json::object();
    if (meta.diameter) o["diameter"] = *meta.diameter;
    json syms = json::array();
    for (std::size_t s = 1; s < meta.symmetries.size(); ++s) {
      const Pose& p = meta.symmetries[s];
      json row = json::array();
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) row.push_back(p.rotation()(r, c));
        row.push_back(p.translation()[r]);
      }
      syms.push_back(row);
    }
    o["symmetries"] = syms;
    o["symmetric"] = meta.symmetric;
    objects[std::to_string(id)] = o;
  }
  root["objects"] = objects;
  json instances = json::array();
  for (const auto& rec : gt.records) {
    const auto& c = rec.camera;
    json r = json::array();
    for (int i = 0; i < 9; ++i) r.push_back(rec.pose.rotation()(i / 3, i % 3));
    instances.push_back({{"scene_id", rec.scene_id},
                         {"im_id", rec.im_id},
                         {"obj_id", rec.obj_id},
                         {"cam_K", {c.fx(), 0.0, c.cx(), 0.0, c.fy(), c.cy(), 0.0, 0.0, 1.0}},
                         {"im_size", {c.width(), c.height()}},
                         {"cam_R_m2c", r},
                         {"cam_t_m2c",
                          {rec.pose.translation()[0], rec.pose.translation()[1], rec.pose.translation()[2]}}});
  }
  root["instances"] = instances;
  return root.dump(1) + "\n";
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIoError, "cannot write '" + path.string() + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(ErrorCode::kIoError, "write failed for '" + path.string() + "'");
}

}  // namespace fastpose
