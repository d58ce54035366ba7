#include "fastpose/evaluation.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <thread>
#include <tuple>

#include "fastpose/errors.hpp"

namespace fastpose {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using InstanceKey = std::tuple<int, int, int>;

struct Job {
  std::size_t gt_index = 0;
  const EstimateRecord* estimate = nullptr;  // null: missed instance
};

struct JobResult {
  std::vector<double> vsd;
  double mssd = kInf;
  double mspd = kInf;
  double add = kInf;
};

JobResult run_job(const Job& job, const GroundTruthRecord& gt, const ObjectModel& model,
                  double diameter, const ThresholdGrid& grid) {
  JobResult out;
  out.vsd.assign(grid.vsd_taus.size(), kInf);
  if (job.estimate == nullptr) return out;
  const Pose& est = job.estimate->pose;
  std::vector<double> taus_mm;
  taus_mm.reserve(grid.vsd_taus.size());
  for (double t : grid.vsd_taus) taus_mm.push_back(t * diameter);
  out.vsd = e_vsd(model, est, gt.pose, gt.camera, taus_mm);
  out.mssd = e_mssd(model, est, gt.pose);
  try {
    out.mspd = e_mspd(model, est, gt.pose, gt.camera);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNonPositiveDepth) throw;
    out.mspd = kInf;
  }
  out.add = model.symmetric_flag() ? e_add_s(model, est, gt.pose) : e_add(model, est, gt.pose);
  return out;
}

void check_gt_in_front(const GroundTruthRecord& gt, const ObjectModel& model, std::size_t index) {
  for (const auto& sym : model.symmetries()) {
    const Pose posed = gt.pose * sym;
    for (const auto& x : model.vertices()) {
      if (!(transform_point(posed, x).z() > 0.0)) {
        fail(ErrorCode::kNonPositiveDepth,
             "GT instance " + std::to_string(index) + " (obj " + std::to_string(gt.obj_id) +
                 ") has a vertex at non-positive depth");
      }
    }
  }
}

}  // namespace

std::map<int, ObjectModel> apply_object_meta(std::map<int, ObjectModel> models,
                                             const std::map<int, ObjectMeta>& meta) {
  for (auto& [id, model] : models) {
    auto it = meta.find(id);
    if (it == meta.end()) continue;
    model = model.with_symmetries(it->second.symmetries, it->second.symmetric);
  }
  return models;
}

std::map<int, double> diameter_overrides(const std::map<int, ObjectMeta>& meta) {
  std::map<int, double> out;
  for (const auto& [id, m] : meta) {
    if (m.diameter) out[id] = *m.diameter;
  }
  return out;
}

EvaluationResult evaluate_dataset(const std::vector<GroundTruthRecord>& gt,
                                  const std::vector<EstimateRecord>& estimates,
                                  const std::map<int, ObjectModel>& models,
                                  const std::map<int, double>& diameter_overrides, int threads) {
  if (gt.empty()) fail(ErrorCode::kEmptyInput, "ground truth has no instances");
  const int width = gt.front().camera.width();
  std::map<int, double> diameters;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto& rec = gt[i];
    if (rec.camera.width() != width) {
      fail(ErrorCode::kInvalidConfig, "GT instance " + std::to_string(i) +
                                          " has a different image width; MSPD thresholds need one width");
    }
    auto it = models.find(rec.obj_id);
    if (it == models.end()) {
      fail(ErrorCode::kEmptyModel, "no mesh for obj_id " + std::to_string(rec.obj_id));
    }
    if (it->second.vertices().empty()) {
      fail(ErrorCode::kEmptyModel, "mesh for obj_id " + std::to_string(rec.obj_id) + " has no vertices");
    }
    check_gt_in_front(rec, it->second, i);
    auto ov = diameter_overrides.find(rec.obj_id);
    diameters[rec.obj_id] = ov != diameter_overrides.end() ? ov->second : it->second.diameter();
  }
  const ThresholdGrid grid = ThresholdGrid::bop(width);

  std::map<InstanceKey, std::vector<std::size_t>> gt_groups;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    gt_groups[{gt[i].scene_id, gt[i].im_id, gt[i].obj_id}].push_back(i);
  }
  std::map<InstanceKey, std::vector<std::size_t>> est_groups;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const auto& e = estimates[i];
    InstanceKey key{e.scene_id, e.im_id, e.obj_id};
    if (gt_groups.contains(key)) est_groups[key].push_back(i);
  }

  std::vector<Job> jobs(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) jobs[i].gt_index = i;
  for (auto& [key, est_idx] : est_groups) {
    std::stable_sort(est_idx.begin(), est_idx.end(), [&](std::size_t a, std::size_t b) {
      return estimates[a].score > estimates[b].score;
    });
    const auto& gt_idx = gt_groups.at(key);
    std::vector<bool> taken(gt_idx.size(), false);
    std::size_t remaining = gt_idx.size();
    for (std::size_t e : est_idx) {
      if (remaining == 0) break;
      std::size_t best = gt_idx.size();
      double best_d = kInf;
      for (std::size_t g = 0; g < gt_idx.size(); ++g) {
        if (taken[g]) continue;
        const double d = (estimates[e].pose.translation() - gt[gt_idx[g]].pose.translation()).norm();
        if (best == gt_idx.size() || d < best_d) {
          best = g;
          best_d = d;
        }
      }
      taken[best] = true;
      --remaining;
      jobs[gt_idx[best]].estimate = &estimates[e];
    }
  }

  std::vector<JobResult> results(jobs.size());
  auto worker = [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      const auto& rec = gt[jobs[j].gt_index];
      results[j] = run_job(jobs[j], rec, models.at(rec.obj_id), diameters.at(rec.obj_id), grid);
    }
  };
  const std::size_t n_threads =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, jobs.size());
  if (n_threads == 1) {
    worker(0, jobs.size());
  } else {
    std::vector<std::exception_ptr> errors(n_threads);
    std::vector<std::thread> pool;
    const std::size_t chunk = (jobs.size() + n_threads - 1) / n_threads;
    for (std::size_t t = 0; t < n_threads; ++t) {
      const std::size_t begin = std::min(jobs.size(), t * chunk);
      const std::size_t end = std::min(jobs.size(), begin + chunk);
      pool.emplace_back([&, t, begin, end] {
        try {
          worker(begin, end);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  EvaluationResult out;
  out.samples.reserve(jobs.size() * 4);
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const auto& rec = gt[jobs[j].gt_index];
    const auto& model = models.at(rec.obj_id);
    if (jobs[j].estimate) {
      ++out.matched;
    } else {
      ++out.missed;
    }
    auto base = [&](MetricKind kind, double error) {
      ErrorSample s;
      s.scene_id = rec.scene_id;
      s.im_id = rec.im_id;
      s.obj_id = rec.obj_id;
      s.kind = kind;
      s.error = error;
      return s;
    };
    ErrorSample vsd = base(MetricKind::kVsd, 0.0);
    vsd.vsd_errors = results[j].vsd;
    out.samples.push_back(std::move(vsd));
    out.samples.push_back(base(MetricKind::kMssd, results[j].mssd));
    out.samples.push_back(base(MetricKind::kMspd, results[j].mspd));
    out.samples.push_back(
        base(model.symmetric_flag() ? MetricKind::kAddS : MetricKind::kAdd, results[j].add));
  }
  out.report = average_recall(out.samples, grid, diameters);
  return out;
}

}  // namespace fastpose
