#include <doctest.h>

#include <random>
#include <stdexcept>
#include <string>

#include "vql/data.hpp"
#include "vql/metrics.hpp"

using namespace vql;

namespace {

ResponseTrack make_track(const std::string &qid, int start, int end,
                         double conf = 1.0,
                         const Box9 &box = Box9({0, 0, 0}, {1, 1, 1},
                                                {0, 0, 0})) {
  ResponseTrack t;
  t.query_id = qid;
  t.interval = {start, end};
  t.confidence = conf;
  for (int f = start; f <= end; ++f) t.boxes[f] = box;
  return t;
}

// exhaustive PR oracle: walks the ranked list, enumerating the curve
double ap_oracle(const std::vector<std::pair<double, bool>> &ranked,
                 int num_gt) {
  double ap = 0;
  int tp = 0;
  std::vector<std::pair<double, double>> curve;  // (recall, precision)
  for (size_t i = 0; i < ranked.size(); ++i) {
    if (ranked[i].second) ++tp;
    curve.push_back({static_cast<double>(tp) / num_gt,
                     static_cast<double>(tp) / (i + 1)});
  }
  double prev_r = 0;
  for (size_t i = 0; i < curve.size(); ++i) {
    double best_p = 0;
    for (size_t j = i; j < curve.size(); ++j)
      best_p = std::max(best_p, curve[j].second);
    if (curve[i].first > prev_r) {
      ap += (curve[i].first - prev_r) * best_p;
      prev_r = curve[i].first;
    }
  }
  return ap;
}

}  // namespace

TEST_CASE("tiou") {
  CHECK(tiou({10, 20}, {10, 20}) == 1.0);
  CHECK(tiou({0, 5}, {10, 20}) == 0.0);
  CHECK(tiou({10, 29}, {20, 39}) == doctest::Approx(1.0 / 3.0));
  // single-frame intervals count inclusively
  CHECK(tiou({5, 5}, {5, 5}) == 1.0);
}

TEST_CASE("stiou") {
  const auto gt = make_track("q", 0, 2);
  CHECK(stiou(gt, gt) == doctest::Approx(1.0).epsilon(1e-9));

  const auto off = make_track("q", 10, 12);
  CHECK(stiou(off, gt) == 0.0);

  // per-frame IoUs {1, 1/3, 0} average over gt frames
  ResponseTrack partial;
  partial.query_id = "q";
  partial.interval = {0, 1};
  partial.boxes[0] = Box9({0, 0, 0}, {1, 1, 1}, {0, 0, 0});
  partial.boxes[1] = Box9({0.5, 0, 0}, {1, 1, 1}, {0, 0, 0});
  CHECK(stiou(partial, gt) == doctest::Approx((1.0 + 1.0 / 3.0) / 3.0));

  // frames outside the gt interval contribute nothing
  ResponseTrack wide = make_track("q", 0, 10);
  CHECK(stiou(wide, gt) == doctest::Approx(1.0));
}

TEST_CASE("average_precision") {
  CHECK(average_precision({{0.9, true}}, 1) == 1.0);
  CHECK(average_precision({{0.9, false}}, 1) == 0.0);
  CHECK(average_precision({}, 3) == 0.0);

  // the 5/9 hand case: 3 GT, TP/FP/TP by confidence
  const std::vector<std::pair<double, bool>> ranked = {
      {0.9, true}, {0.8, false}, {0.7, true}};
  CHECK(average_precision(ranked, 3) == doctest::Approx(5.0 / 9.0));

  // small instances match exhaustive enumeration
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 4);
    const int num_gt = n + static_cast<int>(rng() % 3);
    std::vector<std::pair<double, bool>> r;
    for (int i = 0; i < n; ++i) r.push_back({u(rng), rng() % 2 == 0});
    std::sort(r.begin(), r.end(),
              [](auto &a, auto &b) { return a.first > b.first; });
    CHECK(average_precision(r, num_gt) ==
          doctest::Approx(ap_oracle(r, num_gt)).epsilon(1e-12));
  }
}

TEST_CASE("compute_tap") {
  TrackSet gts, preds;
  gts["a"] = make_track("a", 0, 9);
  gts["b"] = make_track("b", 20, 29);
  preds["a"] = make_track("a", 0, 9);
  preds["b"] = make_track("b", 20, 29);
  auto suite = compute_tap(preds, gts);
  for (double ap : suite.ap) CHECK(ap == 1.0);
  CHECK(suite.mean == 1.0);

  // disjoint predictions score zero
  preds["a"] = make_track("a", 50, 59);
  preds["b"] = make_track("b", 50, 59);
  suite = compute_tap(preds, gts);
  for (double ap : suite.ap) CHECK(ap == 0.0);

  // half the queries at tiou 0.6, half at 0.3, equal confidence
  gts.clear();
  preds.clear();
  for (int i = 0; i < 4; ++i) {
    const std::string q = "q" + std::to_string(i);
    gts[q] = make_track(q, 0, 99);
    // suffix predictions: tiou = (100 - start) / 100 exactly
    if (i < 2)
      preds[q] = make_track(q, 40, 99, 0.5);  // tiou 0.6
    else
      preds[q] = make_track(q, 70, 99, 0.5);  // tiou 0.3
  }
  suite = compute_tap(preds, gts);
  CHECK(suite.ap[0] == doctest::Approx(1.0));  // all pass 0.25
  // at 0.50 only two of four pass; tie-break is lexicographic query_id,
  // so ranking is q0(TP) q1(TP) q2(FP) q3(FP) -> AP = 1/2
  CHECK(suite.ap[1] == doctest::Approx(0.5));
}

TEST_CASE("compute_stap thresholds") {
  TrackSet gts, preds;
  gts["q"] = make_track("q", 0, 9);
  // perfect boxes on exactly half the frames -> stIoU 0.5
  ResponseTrack half = make_track("q", 0, 4);
  preds["q"] = half;
  auto suite = compute_stap(preds, gts);
  REQUIRE(suite.thresholds.size() == 5);
  CHECK(suite.ap[0] == 1.0);  // 0.05
  CHECK(suite.ap[1] == 1.0);  // 0.25
  CHECK(suite.ap[2] == 1.0);  // 0.50
  CHECK(suite.ap[3] == 0.0);  // 0.75
  CHECK(suite.ap[4] == 0.0);  // 0.95
  CHECK(suite.mean == doctest::Approx(0.6));
}

TEST_CASE("success and recovery") {
  TrackSet gts, preds;
  gts["q"] = make_track("q", 0, 3);
  preds["q"] = gts["q"];
  CHECK(success_rate(preds, gts) == 100.0);
  CHECK(recovery_rate(preds, gts) == 100.0);

  preds.clear();
  CHECK(success_rate(preds, gts) == 0.0);
  CHECK(recovery_rate(preds, gts) == 0.0);

  // per-frame IoUs {1, 1/3, 1, 0} -> 2 of 4 recovered
  ResponseTrack mixed;
  mixed.query_id = "q";
  mixed.interval = {0, 3};
  mixed.boxes[0] = Box9({0, 0, 0}, {1, 1, 1}, {0, 0, 0});
  mixed.boxes[1] = Box9({0.5, 0, 0}, {1, 1, 1}, {0, 0, 0});
  mixed.boxes[2] = Box9({0, 0, 0}, {1, 1, 1}, {0, 0, 0});
  mixed.boxes[3] = Box9({5, 0, 0}, {1, 1, 1}, {0, 0, 0});
  preds["q"] = mixed;
  CHECK(recovery_rate(preds, gts) == 50.0);

  // deleting frames never increases recovery
  mixed.boxes.erase(2);
  preds["q"] = mixed;
  CHECK(recovery_rate(preds, gts) == 25.0);
}

TEST_CASE("score") {
  TrackSet gts, preds;
  for (int i = 0; i < 5; ++i) {
    const std::string q = "q" + std::to_string(i);
    gts[q] = make_track(q, i * 10, i * 10 + 5);
    preds[q] = gts[q];
  }
  const auto r = score(preds, gts);
  CHECK(r.tap.mean == 1.0);
  CHECK(r.stap.mean == 1.0);
  CHECK(r.success_pct == 100.0);
  CHECK(r.recovery_pct == 100.0);

  // empty predictions score all zero
  const auto z = score({}, gts);
  CHECK(z.tap.mean == 0.0);
  CHECK(z.stap.mean == 0.0);
  CHECK(z.success_pct == 0.0);
  CHECK(z.recovery_pct == 0.0);

  // unmatched query_id is a hard error naming the offender
  preds["ghost"] = make_track("ghost", 0, 3);
  bool threw = false;
  try {
    score(preds, gts);
  } catch (const std::runtime_error &e) {
    threw = true;
    CHECK(std::string(e.what()).find("ghost") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("score is worker-count and order independent") {
  GeneratorConfig cfg;
  cfg.num_sequences = 12;
  cfg.noise.center_jitter = 0.15;
  const auto data = generate_synthetic(77, cfg);
  TrackSet gts;
  for (const auto &a : data.annotations) gts[a.sequence_id] = a.to_gt_track();
  const auto r1 = score(data.degraded_predictions, gts, 1);
  const auto r8 = score(data.degraded_predictions, gts, 8);
  CHECK(serialize_report(r1) == serialize_report(r8));
}

TEST_CASE("per-threshold AP is non-increasing in the threshold") {
  GeneratorConfig cfg;
  cfg.num_sequences = 16;
  cfg.noise.center_jitter = 0.2;
  cfg.noise.temporal_shift = 3;
  const auto data = generate_synthetic(31, cfg);
  TrackSet gts;
  for (const auto &a : data.annotations) gts[a.sequence_id] = a.to_gt_track();
  const auto r = score(data.degraded_predictions, gts);
  for (size_t i = 1; i < r.tap.ap.size(); ++i)
    CHECK(r.tap.ap[i] <= r.tap.ap[i - 1] + 1e-12);
  for (size_t i = 1; i < r.stap.ap.size(); ++i)
    CHECK(r.stap.ap[i] <= r.stap.ap[i - 1] + 1e-12);
  // means equal the arithmetic mean of the per-threshold values
  double tsum = 0;
  for (double a : r.tap.ap) tsum += a;
  CHECK(std::abs(r.tap.mean - tsum / r.tap.ap.size()) < 1e-12);
  double ssum = 0;
  for (double a : r.stap.ap) ssum += a;
  CHECK(std::abs(r.stap.mean - ssum / r.stap.ap.size()) < 1e-12);
}
