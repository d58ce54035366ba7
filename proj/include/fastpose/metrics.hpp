#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fastpose/geomcore.hpp"
#include "fastpose/rasterizer.hpp"

namespace fastpose {

enum class MetricKind { kVsd, kMssd, kMspd, kAdd, kAddS };

std::string_view metric_name(MetricKind kind);

// One error value for one (image, object instance). VSD carries one value per
// misalignment tolerance; `error` is unused for VSD.
struct ErrorSample {
  int scene_id = 0;
  int im_id = 0;
  int obj_id = 0;
  MetricKind kind = MetricKind::kMssd;
  double error = 0.0;
  std::vector<double> vsd_errors;
};

// BOP correctness thresholds. VSD tolerances and MSSD/ADD thresholds are
// fractions of the object diameter; MSPD thresholds are multiples of
// r = image_width / 640.
struct ThresholdGrid {
  std::vector<double> vsd_taus;
  std::vector<double> vsd_correctness;
  std::vector<double> mssd_correctness;
  std::vector<double> mspd_correctness;
  std::vector<double> add_correctness;
  int image_width = 640;

  double r() const { return image_width / 640.0; }

  // Throws InvalidConfig unless every grid is nonempty, positive and strictly
  // increasing, and image_width >= 1.
  void validate() const;

  static ThresholdGrid bop(int image_width);
};

struct MetricRecall {
  double ar = 0.0;
  // Recall per correctness threshold. For VSD, row-major [tau][threshold].
  std::vector<double> recalls;
  std::size_t instances = 0;
};

struct ObjectRecall {
  int obj_id = 0;
  MetricRecall vsd, mssd, mspd, add;
};

struct ARReport {
  double ar_vsd = 0.0;
  double ar_mssd = 0.0;
  double ar_mspd = 0.0;
  double ar_bop = 0.0;
  double ar_add = 0.0;
  // Dataset-level per-threshold recall: mean over objects of the per-object
  // tables, same layout as MetricRecall::recalls.
  std::vector<double> vsd_recalls, mssd_recalls, mspd_recalls, add_recalls;
  std::vector<ObjectRecall> objects;  // ascending obj_id
  std::size_t instance_count = 0;
  ThresholdGrid grid;
};

// Mean distance between corresponding model vertices. Throws EmptyModel.
double e_add(const ObjectModel& model, const Pose& est, const Pose& gt);
// Mean distance to the nearest ground-truth-posed vertex. Throws EmptyModel.
double e_add_s(const ObjectModel& model, const Pose& est, const Pose& gt);
// min over symmetries S of max over vertices of ‖est·x − gt·S·x‖.
double e_mssd(const ObjectModel& model, const Pose& est, const Pose& gt);
// As e_mssd on projected points, in pixels. Throws NonPositiveDepth.
double e_mspd(const ObjectModel& model, const Pose& est, const Pose& gt,
              const CameraIntrinsics& k);

// Fraction of pixels in the union of both masks that are not (in both masks
// with |depth difference| < tau), one value per tau (mm). Empty union → 0.
std::vector<double> vsd_from_maps(const DistanceMap& est, const DistanceMap& gt,
                                  std::span<const double> taus_mm);
std::vector<double> e_vsd(const ObjectModel& model, const Pose& est, const Pose& gt,
                          const CameraIntrinsics& k, std::span<const double> taus_mm);

// Fraction of errors strictly below the threshold. Throws EmptyInput.
double recall_at(std::span<const double> errors, double threshold);

// Per-object pooling over instances, then equal-weight mean over objects.
// Throws EmptyInput, MissingDiameter, LengthMismatch (VSD vector size).
ARReport average_recall(std::span<const ErrorSample> samples, const ThresholdGrid& grid,
                        const std::map<int, double>& diameters);

std::string ar_report_to_json(const ARReport& report);
std::string ar_report_to_csv(const ARReport& report);

}  // namespace fastpose
