#include "vql/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vql {

double tiou(const TemporalInterval &pred, const TemporalInterval &gt) {
  const int inter = std::min(pred.end_frame, gt.end_frame) -
                    std::max(pred.start_frame, gt.start_frame) + 1;
  if (inter <= 0) return 0.0;
  const int uni = pred.length() + gt.length() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double stiou(const ResponseTrack &pred, const ResponseTrack &gt) {
  const int n = gt.interval.length();
  if (n <= 0) return 0.0;
  double sum = 0.0;
  for (int t = gt.interval.start_frame; t <= gt.interval.end_frame; ++t) {
    const Box9 *gb = gt.box_at(t);
    const Box9 *pb = pred.box_at(t);
    if (gb && pb) sum += iou3d(*pb, *gb);
  }
  return sum / static_cast<double>(n);
}

double average_precision(const std::vector<std::pair<double, bool>> &ranked,
                         int num_gt) {
  if (ranked.empty() || num_gt <= 0) return 0.0;
  // precision/recall after each rank
  std::vector<double> prec(ranked.size()), rec(ranked.size());
  int tp = 0;
  for (size_t i = 0; i < ranked.size(); ++i) {
    if (ranked[i].second) ++tp;
    prec[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    rec[i] = static_cast<double>(tp) / static_cast<double>(num_gt);
  }
  // precision envelope: max precision at recall >= r
  for (int i = static_cast<int>(prec.size()) - 2; i >= 0; --i)
    prec[i] = std::max(prec[i], prec[i + 1]);
  double ap = 0.0, prev_rec = 0.0;
  for (size_t i = 0; i < ranked.size(); ++i) {
    if (rec[i] > prev_rec) {
      ap += (rec[i] - prev_rec) * prec[i];
      prev_rec = rec[i];
    }
  }
  return ap;
}

namespace {

// Rank predictions by confidence descending, ties broken by query_id
// ascending, and evaluate each overlap value against a threshold suite.
ThresholdSuite ap_suite(const TrackSet &preds, const TrackSet &gts,
                        const std::vector<double> &thresholds,
                        const std::map<std::string, double> &overlap) {
  struct Entry {
    double conf;
    std::string qid;
    double ov;
  };
  std::vector<Entry> entries;
  entries.reserve(preds.size());
  for (const auto &[qid, trk] : preds)
    entries.push_back({trk.confidence, qid, overlap.at(qid)});
  std::sort(entries.begin(), entries.end(), [](const Entry &a, const Entry &b) {
    if (a.conf != b.conf) return a.conf > b.conf;
    return a.qid < b.qid;
  });

  ThresholdSuite suite;
  suite.thresholds = thresholds;
  const int num_gt = static_cast<int>(gts.size());
  for (double th : thresholds) {
    std::vector<std::pair<double, bool>> ranked;
    ranked.reserve(entries.size());
    for (const auto &e : entries) ranked.push_back({e.conf, e.ov >= th});
    suite.ap.push_back(average_precision(ranked, num_gt));
  }
  suite.mean = suite.ap.empty()
                   ? 0.0
                   : std::accumulate(suite.ap.begin(), suite.ap.end(), 0.0) /
                         static_cast<double>(suite.ap.size());
  return suite;
}

std::map<std::string, double> temporal_overlaps(const TrackSet &preds,
                                                const TrackSet &gts) {
  std::map<std::string, double> ov;
  for (const auto &[qid, trk] : preds) {
    auto it = gts.find(qid);
    ov[qid] = it == gts.end() ? 0.0 : tiou(trk.interval, it->second.interval);
  }
  return ov;
}

std::map<std::string, double> st_overlaps(const TrackSet &preds,
                                          const TrackSet &gts, int workers) {
  std::vector<const std::pair<const std::string, ResponseTrack> *> items;
  items.reserve(preds.size());
  for (const auto &kv : preds) items.push_back(&kv);
  std::vector<double> vals(items.size(), 0.0);
#ifdef _OPENMP
  if (workers > 0) omp_set_num_threads(workers);
#else
  (void)workers;
#endif
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(items.size()); ++i) {
    auto it = gts.find(items[i]->first);
    if (it != gts.end()) vals[i] = stiou(items[i]->second, it->second);
  }
  std::map<std::string, double> ov;
  for (size_t i = 0; i < items.size(); ++i) ov[items[i]->first] = vals[i];
  return ov;
}

}  // namespace

ThresholdSuite compute_tap(const TrackSet &preds, const TrackSet &gts) {
  return ap_suite(preds, gts, kTemporalThresholds,
                  temporal_overlaps(preds, gts));
}

ThresholdSuite compute_stap(const TrackSet &preds, const TrackSet &gts) {
  return ap_suite(preds, gts, kSpatioTemporalThresholds,
                  st_overlaps(preds, gts, 1));
}

double success_rate(const TrackSet &preds, const TrackSet &gts) {
  if (gts.empty()) return 0.0;
  int succ = 0;
  for (const auto &[qid, gt] : gts) {
    auto it = preds.find(qid);
    if (it != preds.end() && stiou(it->second, gt) >= 0.05) ++succ;
  }
  return 100.0 * succ / static_cast<double>(gts.size());
}

double recovery_rate(const TrackSet &preds, const TrackSet &gts, bool macro) {
  long long total = 0, recovered = 0;
  double macro_sum = 0.0;
  for (const auto &[qid, gt] : gts) {
    auto it = preds.find(qid);
    long long q_total = 0, q_rec = 0;
    for (int t = gt.interval.start_frame; t <= gt.interval.end_frame; ++t) {
      const Box9 *gb = gt.box_at(t);
      if (!gb) continue;
      ++q_total;
      if (it != preds.end()) {
        const Box9 *pb = it->second.box_at(t);
        if (pb && iou3d(*pb, *gb) >= 0.5) ++q_rec;
      }
    }
    total += q_total;
    recovered += q_rec;
    if (q_total > 0)
      macro_sum += static_cast<double>(q_rec) / static_cast<double>(q_total);
  }
  if (macro) {
    return gts.empty() ? 0.0 : 100.0 * macro_sum / static_cast<double>(gts.size());
  }
  return total == 0 ? 0.0
                    : 100.0 * static_cast<double>(recovered) /
                          static_cast<double>(total);
}

MetricReport score(const TrackSet &preds, const TrackSet &gts, int workers,
                   const std::vector<double> &thresholds_t,
                   const std::vector<double> &thresholds_st) {
  std::string offenders;
  for (const auto &[qid, trk] : preds) {
    if (gts.find(qid) == gts.end()) offenders += " " + qid;
  }
  if (!offenders.empty())
    throw std::runtime_error("predictions for unknown query_id:" + offenders);

  const auto st = st_overlaps(preds, gts, workers);
  MetricReport r;
  r.tap = ap_suite(preds, gts, thresholds_t, temporal_overlaps(preds, gts));
  r.stap = ap_suite(preds, gts, thresholds_st, st);
  r.per_query_stiou = st;
  int succ = 0;
  for (const auto &[qid, gt] : gts) {
    auto it = st.find(qid);
    if (it != st.end() && it->second >= 0.05) ++succ;
  }
  r.success_pct =
      gts.empty() ? 0.0 : 100.0 * succ / static_cast<double>(gts.size());
  r.recovery_pct = recovery_rate(preds, gts, false);
  r.recovery_macro_pct = recovery_rate(preds, gts, true);
  r.num_queries = static_cast<int>(gts.size());
  r.num_predictions = static_cast<int>(preds.size());
  return r;
}

}  // namespace vql
