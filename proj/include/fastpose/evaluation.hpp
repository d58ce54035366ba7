#pragma once

#include <map>
#include <vector>

#include "fastpose/datio.hpp"
#include "fastpose/metrics.hpp"

namespace fastpose {

struct EvaluationResult {
  std::vector<ErrorSample> samples;
  ARReport report;
  std::size_t matched = 0;
  std::size_t missed = 0;
};

// Models keyed by obj_id, symmetries and symmetric flag already applied.
// Diameters default to the model diameter unless overridden.
//
// Matching, per (scene_id, im_id, obj_id): estimates are visited in
// descending score (ties keep file order) and each takes the unmatched GT
// instance with the nearest translation (ties: lower GT index). Unmatched GT
// instances contribute +inf to every metric. An estimate placing a vertex at
// non-positive depth gets +inf MSPD. All GT cameras must share one width.
//
// `threads` > 1 fans instances out to worker threads; results are written by
// instance index, so the output does not depend on the thread count.
EvaluationResult evaluate_dataset(const std::vector<GroundTruthRecord>& gt,
                                  const std::vector<EstimateRecord>& estimates,
                                  const std::map<int, ObjectModel>& models,
                                  const std::map<int, double>& diameter_overrides, int threads = 1);

// Applies GT metadata (symmetries, symmetric flag) to the loaded meshes.
std::map<int, ObjectModel> apply_object_meta(std::map<int, ObjectModel> models,
                                             const std::map<int, ObjectMeta>& meta);
std::map<int, double> diameter_overrides(const std::map<int, ObjectMeta>& meta);

}  // namespace fastpose
