#include "fastpose/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "fastpose/errors.hpp"

namespace fastpose {

std::string_view metric_name(MetricKind kind) {
  switch (kind) {
    case MetricKind::kVsd: return "VSD";
    case MetricKind::kMssd: return "MSSD";
    case MetricKind::kMspd: return "MSPD";
    case MetricKind::kAdd: return "ADD";
    case MetricKind::kAddS: return "ADD-S";
  }
  return "?";
}

namespace {

void validate_grid(const std::vector<double>& g, std::string_view name) {
  if (g.empty()) fail(ErrorCode::kInvalidConfig, std::string(name) + " grid is empty");
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(g[i] > 0.0) || !std::isfinite(g[i])) {
      fail(ErrorCode::kInvalidConfig, std::string(name) + " grid has a non-positive entry");
    }
    if (i > 0 && !(g[i] > g[i - 1])) {
      fail(ErrorCode::kInvalidConfig, std::string(name) + " grid is not strictly increasing");
    }
  }
}

double distance(const Vec3& a, const Vec3& b) {
  const double dx = a(0) - b(0), dy = a(1) - b(1), dz = a(2) - b(2);
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double distance(const Vec2& a, const Vec2& b) {
  const double du = a(0) - b(0), dv = a(1) - b(1);
  return std::sqrt(du * du + dv * dv);
}

void require_vertices(const ObjectModel& model) {
  if (model.vertices().empty()) fail(ErrorCode::kEmptyModel, "model has no vertices");
}

}  // namespace

void ThresholdGrid::validate() const {
  validate_grid(vsd_taus, "vsd_taus");
  validate_grid(vsd_correctness, "vsd_correctness");
  validate_grid(mssd_correctness, "mssd_correctness");
  validate_grid(mspd_correctness, "mspd_correctness");
  validate_grid(add_correctness, "add_correctness");
  if (image_width < 1) fail(ErrorCode::kInvalidConfig, "image_width must be >= 1");
}

ThresholdGrid ThresholdGrid::bop(int image_width) {
  ThresholdGrid g;
  for (int k = 1; k <= 10; ++k) {
    const double frac = (5.0 * k) / 100.0;
    g.vsd_taus.push_back(frac);
    g.vsd_correctness.push_back(frac);
    g.mssd_correctness.push_back(frac);
    g.mspd_correctness.push_back(5.0 * k);
  }
  g.add_correctness = {0.02, 0.05, 0.10};
  g.image_width = image_width;
  g.validate();
  return g;
}

double e_add(const ObjectModel& model, const Pose& est, const Pose& gt) {
  require_vertices(model);
  double sum = 0.0;
  for (const auto& x : model.vertices()) {
    sum += distance(transform_point(est, x), transform_point(gt, x));
  }
  return sum / static_cast<double>(model.vertices().size());
}

double e_add_s(const ObjectModel& model, const Pose& est, const Pose& gt) {
  require_vertices(model);
  std::vector<Vec3> gt_points;
  gt_points.reserve(model.vertices().size());
  for (const auto& y : model.vertices()) gt_points.push_back(transform_point(gt, y));
  double sum = 0.0;
  for (const auto& x : model.vertices()) {
    const Vec3 p = transform_point(est, x);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : gt_points) best = std::min(best, distance(p, q));
    sum += best;
  }
  return sum / static_cast<double>(model.vertices().size());
}

double e_mssd(const ObjectModel& model, const Pose& est, const Pose& gt) {
  require_vertices(model);
  std::vector<Vec3> est_points;
  est_points.reserve(model.vertices().size());
  for (const auto& x : model.vertices()) est_points.push_back(transform_point(est, x));
  double best = std::numeric_limits<double>::infinity();
  for (const auto& sym : model.symmetries()) {
    double worst = 0.0;
    for (std::size_t i = 0; i < est_points.size(); ++i) {
      const Vec3 g = transform_point(gt, transform_point(sym, model.vertices()[i]));
      worst = std::max(worst, distance(est_points[i], g));
      if (worst >= best) break;
    }
    best = std::min(best, worst);
  }
  return best;
}

double e_mspd(const ObjectModel& model, const Pose& est, const Pose& gt,
              const CameraIntrinsics& k) {
  require_vertices(model);
  std::vector<Vec2> est_px;
  est_px.reserve(model.vertices().size());
  for (const auto& x : model.vertices()) est_px.push_back(project_point(k, transform_point(est, x)));
  // All symmetric ground-truth projections are validated up front so the
  // depth precondition does not depend on early exit.
  std::vector<std::vector<Vec2>> gt_px;
  gt_px.reserve(model.symmetries().size());
  for (const auto& sym : model.symmetries()) {
    auto& row = gt_px.emplace_back();
    row.reserve(model.vertices().size());
    for (const auto& x : model.vertices()) {
      row.push_back(project_point(k, transform_point(gt, transform_point(sym, x))));
    }
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& row : gt_px) {
    double worst = 0.0;
    for (std::size_t i = 0; i < est_px.size(); ++i) {
      worst = std::max(worst, distance(est_px[i], row[i]));
    }
    best = std::min(best, worst);
  }
  return best;
}

std::vector<double> vsd_from_maps(const DistanceMap& est, const DistanceMap& gt,
                                  std::span<const double> taus_mm) {
  if (est.width() != gt.width() || est.height() != gt.height()) {
    fail(ErrorCode::kShapeMismatch, "distance maps differ in size");
  }
  if (taus_mm.empty()) fail(ErrorCode::kEmptyInput, "no VSD tolerances given");
  for (double tau : taus_mm) {
    if (!(tau > 0.0)) fail(ErrorCode::kInvalidConfig, "VSD tolerance must be positive");
  }
  std::size_t union_count = 0;
  std::vector<std::size_t> good(taus_mm.size(), 0);
  const auto& de = est.depth();
  const auto& dg = gt.depth();
  const auto& ve = est.visible();
  const auto& vg = gt.visible();
  for (std::size_t i = 0; i < de.size(); ++i) {
    if (!ve[i] && !vg[i]) continue;
    ++union_count;
    if (!(ve[i] && vg[i])) continue;
    const double diff = std::abs(de[i] - dg[i]);
    for (std::size_t t = 0; t < taus_mm.size(); ++t) {
      if (diff < taus_mm[t]) ++good[t];
    }
  }
  std::vector<double> out(taus_mm.size(), 0.0);
  if (union_count == 0) return out;
  for (std::size_t t = 0; t < taus_mm.size(); ++t) {
    out[t] = static_cast<double>(union_count - good[t]) / static_cast<double>(union_count);
  }
  return out;
}

std::vector<double> e_vsd(const ObjectModel& model, const Pose& est, const Pose& gt,
                          const CameraIntrinsics& k, std::span<const double> taus_mm) {
  const DistanceMap d_est = render_distance_map(model, est, k);
  const DistanceMap d_gt = render_distance_map(model, gt, k);
  return vsd_from_maps(d_est, d_gt, taus_mm);
}

double recall_at(std::span<const double> errors, double threshold) {
  if (errors.empty()) fail(ErrorCode::kEmptyInput, "recall over an empty error list");
  std::size_t hits = 0;
  for (double e : errors) {
    if (e < threshold) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(errors.size());
}

namespace {

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

struct ObjectSamples {
  std::vector<const ErrorSample*> vsd, mssd, mspd, add;
};

MetricRecall scalar_recall(const std::vector<const ErrorSample*>& samples,
                           const std::vector<double>& thresholds, double scale) {
  MetricRecall out;
  out.instances = samples.size();
  if (samples.empty()) return out;
  std::vector<double> errors;
  errors.reserve(samples.size());
  for (const auto* s : samples) errors.push_back(s->error);
  for (double t : thresholds) out.recalls.push_back(recall_at(errors, t * scale));
  out.ar = mean(out.recalls);
  return out;
}

MetricRecall vsd_recall(const std::vector<const ErrorSample*>& samples, const ThresholdGrid& grid) {
  MetricRecall out;
  out.instances = samples.size();
  if (samples.empty()) return out;
  std::vector<double> errors(samples.size());
  for (std::size_t t = 0; t < grid.vsd_taus.size(); ++t) {
    for (std::size_t i = 0; i < samples.size(); ++i) errors[i] = samples[i]->vsd_errors[t];
    for (double c : grid.vsd_correctness) out.recalls.push_back(recall_at(errors, c));
  }
  out.ar = mean(out.recalls);
  return out;
}

// Mean over objects that have samples for this metric; table is averaged
// element-wise over the same objects.
void pool(const std::vector<ObjectRecall>& objects, MetricRecall ObjectRecall::*field,
          double& ar, std::vector<double>& table) {
  std::vector<double> ars;
  table.clear();
  for (const auto& o : objects) {
    const MetricRecall& m = o.*field;
    if (m.instances == 0) continue;
    ars.push_back(m.ar);
    if (table.empty()) table.assign(m.recalls.size(), 0.0);
    for (std::size_t i = 0; i < m.recalls.size(); ++i) table[i] += m.recalls[i];
  }
  ar = mean(ars);
  for (double& x : table) x /= static_cast<double>(ars.size());
}

}  // namespace

ARReport average_recall(std::span<const ErrorSample> samples, const ThresholdGrid& grid,
                        const std::map<int, double>& diameters) {
  grid.validate();
  if (samples.empty()) fail(ErrorCode::kEmptyInput, "no error samples");
  std::map<int, ObjectSamples> by_object;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ErrorSample& s = samples[i];
    if (!diameters.contains(s.obj_id)) {
      fail(ErrorCode::kMissingDiameter, "no diameter for obj_id " + std::to_string(s.obj_id));
    }
    auto& bucket = by_object[s.obj_id];
    switch (s.kind) {
      case MetricKind::kVsd:
        if (s.vsd_errors.size() != grid.vsd_taus.size()) {
          fail(ErrorCode::kLengthMismatch,
               "sample " + std::to_string(i) + " VSD vector length differs from the tau grid");
        }
        bucket.vsd.push_back(&s);
        break;
      case MetricKind::kMssd: bucket.mssd.push_back(&s); break;
      case MetricKind::kMspd: bucket.mspd.push_back(&s); break;
      case MetricKind::kAdd:
      case MetricKind::kAddS: bucket.add.push_back(&s); break;
    }
  }

  ARReport report;
  report.grid = grid;
  for (const auto& [obj_id, bucket] : by_object) {
    const double diameter = diameters.at(obj_id);
    ObjectRecall o;
    o.obj_id = obj_id;
    o.vsd = vsd_recall(bucket.vsd, grid);
    o.mssd = scalar_recall(bucket.mssd, grid.mssd_correctness, diameter);
    o.mspd = scalar_recall(bucket.mspd, grid.mspd_correctness, grid.r());
    o.add = scalar_recall(bucket.add, grid.add_correctness, diameter);
    report.objects.push_back(std::move(o));
  }
  report.instance_count = 0;
  for (const auto& o : report.objects) {
    report.instance_count += std::max({o.vsd.instances, o.mssd.instances, o.mspd.instances,
                                       o.add.instances});
  }

  pool(report.objects, &ObjectRecall::vsd, report.ar_vsd, report.vsd_recalls);
  pool(report.objects, &ObjectRecall::mssd, report.ar_mssd, report.mssd_recalls);
  pool(report.objects, &ObjectRecall::mspd, report.ar_mspd, report.mspd_recalls);
  pool(report.objects, &ObjectRecall::add, report.ar_add, report.add_recalls);
  report.ar_bop = (report.ar_vsd + report.ar_mssd + report.ar_mspd) / 3.0;
  return report;
}

namespace {

nlohmann::json metric_json(const MetricRecall& m) {
  return {{"ar", m.ar}, {"recalls", m.recalls}, {"instances", m.instances}};
}

}  // namespace

std::string ar_report_to_json(const ARReport& report) {
  nlohmann::json j;
  j["ar_bop"] = report.ar_bop;
  j["ar_vsd"] = report.ar_vsd;
  j["ar_mssd"] = report.ar_mssd;
  j["ar_mspd"] = report.ar_mspd;
  j["ar_add"] = report.ar_add;
  j["instance_count"] = report.instance_count;
  j["grid"] = {{"vsd_taus", report.grid.vsd_taus},
               {"vsd_correctness", report.grid.vsd_correctness},
               {"mssd_correctness", report.grid.mssd_correctness},
               {"mspd_correctness", report.grid.mspd_correctness},
               {"add_correctness", report.grid.add_correctness},
               {"image_width", report.grid.image_width},
               {"r", report.grid.r()}};
  j["recalls"] = {{"vsd", report.vsd_recalls},
                  {"mssd", report.mssd_recalls},
                  {"mspd", report.mspd_recalls},
                  {"add", report.add_recalls}};
  auto& objs = j["objects"] = nlohmann::json::array();
  for (const auto& o : report.objects) {
    objs.push_back({{"obj_id", o.obj_id},
                    {"vsd", metric_json(o.vsd)},
                    {"mssd", metric_json(o.mssd)},
                    {"mspd", metric_json(o.mspd)},
                    {"add", metric_json(o.add)}});
  }
  return j.dump(2) + "\n";
}

namespace {

std::string fmt17(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(17);
  os << v;
  return os.str();
}

void csv_table(std::ostringstream& os, const std::string& scope, std::string_view metric,
               const std::vector<double>& recalls, const ThresholdGrid& grid) {
  if (metric == "VSD") {
    std::size_t i = 0;
    for (double tau : grid.vsd_taus) {
      for (double c : grid.vsd_correctness) {
        if (i >= recalls.size()) return;
        os << scope << ',' << metric << ',' << fmt17(tau) << ',' << fmt17(c) << ','
           << fmt17(recalls[i++]) << '\n';
      }
    }
    return;
  }
  const auto& th = metric == "MSSD"   ? grid.mssd_correctness
                   : metric == "MSPD" ? grid.mspd_correctness
                                      : grid.add_correctness;
  for (std::size_t i = 0; i < th.size() && i < recalls.size(); ++i) {
    os << scope << ',' << metric << ",," << fmt17(th[i]) << ',' << fmt17(recalls[i]) << '\n';
  }
}

}  // namespace

std::string ar_report_to_csv(const ARReport& report) {
  std::ostringstream os;
  os << "scope,metric,tau,threshold,value\n";
  os << "all,AR_BOP,,," << fmt17(report.ar_bop) << '\n';
  os << "all,AR_VSD,,," << fmt17(report.ar_vsd) << '\n';
  os << "all,AR_MSSD,,," << fmt17(report.ar_mssd) << '\n';
  os << "all,AR_MSPD,,," << fmt17(report.ar_mspd) << '\n';
  os << "all,AR_ADD,,," << fmt17(report.ar_add) << '\n';
  csv_table(os, "all", "VSD", report.vsd_recalls, report.grid);
  csv_table(os, "all", "MSSD", report.mssd_recalls, report.grid);
  csv_table(os, "all", "MSPD", report.mspd_recalls, report.grid);
  csv_table(os, "all", "ADD", report.add_recalls, report.grid);
  for (const auto& o : report.objects) {
    const std::string scope = std::to_string(o.obj_id);
    os << scope << ",AR_VSD,,," << fmt17(o.vsd.ar) << '\n';
    os << scope << ",AR_MSSD,,," << fmt17(o.mssd.ar) << '\n';
    os << scope << ",AR_MSPD,,," << fmt17(o.mspd.ar) << '\n';
    os << scope << ",AR_ADD,,," << fmt17(o.add.ar) << '\n';
    csv_table(os, scope, "VSD", o.vsd.recalls, report.grid);
    csv_table(os, scope, "MSSD", o.mssd.recalls, report.grid);
    csv_table(os, scope, "MSPD", o.mspd.recalls, report.grid);
    csv_table(os, scope, "ADD", o.add.recalls, report.grid);
  }
  return os.str();
}

}  // namespace fastpose
