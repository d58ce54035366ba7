#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fastpose/geomcore.hpp"

namespace fastpose {

// One row of a BOP-style result file.
struct EstimateRecord {
  int scene_id = 0;
  int im_id = 0;
  int obj_id = 0;
  double score = 0.0;
  Pose pose;
  double time_s = -1.0;  // -1: not reported
};

struct GroundTruthRecord {
  int scene_id = 0;
  int im_id = 0;
  int obj_id = 0;
  Pose pose;
  CameraIntrinsics camera{1.0, 1.0, 0.0, 0.0, 1, 1};
};

struct ObjectMeta {
  std::optional<double> diameter;
  std::vector<Pose> symmetries;  // always starts with the identity
  bool symmetric = false;
};

struct GroundTruthSet {
  std::vector<GroundTruthRecord> records;
  std::map<int, ObjectMeta> objects;
};

inline constexpr std::string_view kResultCsvHeader = "scene_id,im_id,obj_id,score,R,t,time";

// Throws MalformedLine ("line N: ...") and InvalidRotation ("line N: ...").
std::vector<EstimateRecord> parse_result_csv(std::string_view text);
// Reals use 17 significant digits in the C locale.
std::string serialize_result_csv(const std::vector<EstimateRecord>& records);

// ASCII PLY with an `element vertex` (x, y, z among its properties) and an
// optional `element face` of 3-index lists. Throws UnsupportedFormat,
// MalformedHeader, IndexOutOfRange, MalformedLine.
ObjectModel parse_ply(std::string_view text);
std::string model_to_ply(const ObjectModel& model);

// Schema:
//   { "objects":   { "<obj_id>": { "diameter"?: real,
//                                  "symmetries"?: [[12 reals, 3x4 row-major [R|t]]...],
//                                  "symmetric"?: bool } },
//     "instances": [ { "scene_id", "im_id", "obj_id": int,
//                      "cam_K": [9 reals], "im_size": [width, height],
//                      "cam_R_m2c": [9 reals row-major], "cam_t_m2c": [3 reals] } ] }
// Throws SchemaViolation ("at /instances/0/cam_K: ..."), InvalidRotation.
GroundTruthSet parse_gt_json(std::string_view text);
std::string serialize_gt_json(const GroundTruthSet& gt);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// 17 significant digits, independent of the global locale.
std::string format_real(double v);

}  // namespace fastpose
