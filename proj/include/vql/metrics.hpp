#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vql/geometry.hpp"

// Evaluation protocol for 3D visual query localization under the Top-1
// retrieval setting: temporal IoU, spatio-temporal IoU, AP over threshold
// suites (tAP, stAP), Success and Recovery%.

namespace vql {

struct TemporalInterval {
  int start_frame = 0;
  int end_frame = 0;  // inclusive

  bool valid() const {
    return start_frame >= 0 && start_frame <= end_frame;
  }
  int length() const { return end_frame - start_frame + 1; }
};

struct ResponseTrack {
  std::string query_id;
  TemporalInterval interval;
  std::map<int, Box9> boxes;  // one box per frame in interval
  double confidence = 0.0;

  const Box9 *box_at(int frame) const {
    auto it = boxes.find(frame);
    return it == boxes.end() ? nullptr : &it->second;
  }
};

inline const std::vector<double> kTemporalThresholds = {0.25, 0.50, 0.75,
                                                        0.95};
inline const std::vector<double> kSpatioTemporalThresholds = {0.05, 0.25, 0.50,
                                                              0.75, 0.95};

struct ThresholdSuite {
  std::vector<double> thresholds;
  std::vector<double> ap;  // one per threshold
  double mean = 0.0;
};

struct MetricReport {
  ThresholdSuite tap;
  ThresholdSuite stap;
  double success_pct = 0.0;
  double recovery_pct = 0.0;         // pooled over all GT frames
  double recovery_macro_pct = 0.0;   // per-query mean, secondary
  std::map<std::string, double> per_query_stiou;
  int num_queries = 0;
  int num_predictions = 0;
};

// |intersection frames| / |union frames|, inclusive frame counting.
double tiou(const TemporalInterval &pred, const TemporalInterval &gt);

// Mean of per-frame iou3d over the GT frames; missing prediction frames
// contribute 0, prediction frames outside the GT interval contribute
// nothing.
double stiou(const ResponseTrack &pred, const ResponseTrack &gt);

// All-points interpolated AP. `ranked` must already be sorted by
// descending confidence (ties broken by query_id upstream); recall
// denominator is num_gt.
double average_precision(const std::vector<std::pair<double, bool>> &ranked,
                         int num_gt);

// One GT track per query; predictions keyed by query_id, at most one each.
using TrackSet = std::map<std::string, ResponseTrack>;

ThresholdSuite compute_tap(const TrackSet &preds, const TrackSet &gts);
ThresholdSuite compute_stap(const TrackSet &preds, const TrackSet &gts);
double success_rate(const TrackSet &preds, const TrackSet &gts);
double recovery_rate(const TrackSet &preds, const TrackSet &gts,
                     bool macro = false);

// Full report. Per-query stIoU values are computed once (optionally in
// parallel) and reduced in query_id order, so the report is identical for
// any worker count. Throws std::runtime_error listing any prediction
// whose query_id has no ground truth.
MetricReport score(const TrackSet &preds, const TrackSet &gts,
                   int workers = 1,
                   const std::vector<double> &thresholds_t =
                       kTemporalThresholds,
                   const std::vector<double> &thresholds_st =
                       kSpatioTemporalThresholds);

}  // namespace vql
