#pragma once

#include <array>
#include <vector>

#include "vql/geometry.hpp"

// Anchor lattice over the workspace, box decoding/encoding against anchor
// centers, positive-anchor assignment, the training loss, and analytic
// gradients with a finite-difference checker.

namespace vql {

struct Workspace {
  Vec3 lo{0.0, -2.0, -1.0};
  Vec3 hi{10.0, 2.0, 1.0};

  bool valid() const {
    return hi.x > lo.x && hi.y > lo.y && hi.z > lo.z;
  }
};

// Uniform center lattice: one center per cell midpoint, ordered x-major
// (x slowest, then y, then z): n = (ix*ny + iy)*nz + iz.
struct AnchorGrid {
  Workspace workspace;
  int nx = 16, ny = 16, nz = 16;
  std::vector<Vec3> centers;

  int count() const { return nx * ny * nz; }
  Vec3 spacing() const {
    return {(workspace.hi.x - workspace.lo.x) / nx,
            (workspace.hi.y - workspace.lo.y) / ny,
            (workspace.hi.z - workspace.lo.z) / nz};
  }
};

AnchorGrid build_grid(const Workspace &ws, int nx, int ny, int nz);

// Per-anchor head output at one frame. `logit` is the raw presence score;
// the probability is its logistic.
struct AnchorPrediction {
  Vec3 center_offset;
  Vec3 size{1, 1, 1};
  Vec3 rotation;
  double logit = 0.0;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct FrameOutput {
  std::vector<AnchorPrediction> anchors;  // one per grid center
};

struct DecodedBox {
  Box9 box;
  double score = 0.0;  // presence probability of the winning anchor
  int anchor = -1;
};

// Eq-style decode: argmax presence (ties -> lowest index), box assembled
// from the winning anchor's center plus its predicted offset.
DecodedBox decode(const AnchorGrid &grid, const FrameOutput &out);

struct RegressionTarget {
  Vec3 center_offset;
  Vec3 size;
  Vec3 rotation;
};

// Inverse of decode for target construction; no clamping.
RegressionTarget encode(const AnchorGrid &grid, const Box9 &gt, int anchor);

struct AssignmentResult {
  std::vector<int> positives;                    // sorted ascending
  std::vector<RegressionTarget> targets;         // parallel to positives
};

inline constexpr double kAssignRadius = 0.3;  // meters
inline constexpr int kAssignTopK = 5;

// Positives = {n : |a_n - gt_center| <= 0.3 m} intersect top-5 nearest;
// distance ties broken by lower index. May be empty.
AssignmentResult assign_positives(const AnchorGrid &grid, const Box9 &gt);

struct FocalParams {
  double gamma = 2.0;
  double alpha = 0.25;
};

// Focal loss on a probability; p clamped to [1e-7, 1-1e-7].
double focal_loss(double p, int target, const FocalParams &fp = {});
// d(focal)/dp at the clamped point.
double focal_loss_grad(double p, int target, const FocalParams &fp = {});

struct LossWeights {
  double center = 1.0;
  double size = 1.0;
  double rotation = 0.1;
  double cls = 100.0;
  double dist = 0.3;
};

enum class RegressionKind { L1, SmoothL1 };

struct LossBreakdown {
  double center = 0.0;    // mean |Dc - Dc*| over positive coordinates
  double size = 0.0;
  double rotation = 0.0;  // wrapped angular error
  double cls = 0.0;       // focal over all anchors
  double dist = 0.0;      // mean |a_n + Dc_n - gt_center|
  double total = 0.0;
};

struct FrameTruth {
  bool visible = false;
  Box9 gt;
};

// Loss over one frame. Regression terms average over positives and are
// zero when the positive set is empty; classification always contributes.
LossBreakdown frame_loss(const AnchorGrid &grid, const FrameOutput &out,
                         const FrameTruth &truth, const LossWeights &w = {},
                         RegressionKind kind = RegressionKind::L1,
                         const FocalParams &fp = {});

// Mean of per-frame losses over a clip; frames evaluated independently
// and reduced in frame order.
LossBreakdown clip_loss(const AnchorGrid &grid,
                        const std::vector<FrameOutput> &outs,
                        const std::vector<FrameTruth> &truths,
                        const LossWeights &w = {},
                        RegressionKind kind = RegressionKind::L1,
                        const FocalParams &fp = {});

// Analytic gradient of the distance term w.r.t. one positive anchor's
// center offset: direction (a_n + Dc - gt) / |.| divided by |positives|.
Vec3 dist_loss_grad(const AnchorGrid &grid, const FrameOutput &out,
                    const Vec3 &gt_center, int anchor, int num_positives);

// Central finite differences against an analytic gradient; returns the
// max relative error over coordinates. `f` maps a flat parameter vector
// to a scalar; `grad` is the analytic gradient at `params`.
struct GradCheckResult {
  double max_rel_err = 0.0;
  int worst_index = -1;
  bool at_kink = false;  // flagged when |f' fd| and |grad| are both tiny
};

template <typename F>
GradCheckResult gradient_check(F &&f, std::vector<double> params,
                               const std::vector<double> &grad,
                               double eps = 1e-5) {
  GradCheckResult r;
  for (size_t i = 0; i < params.size(); ++i) {
    const double orig = params[i];
    params[i] = orig + eps;
    const double fp = f(params);
    params[i] = orig - eps;
    const double fm = f(params);
    params[i] = orig;
    const double fd = (fp - fm) / (2.0 * eps);
    const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
    const double rel = std::abs(fd - grad[i]) / denom;
    if (std::abs(fd) < 1e-12 && std::abs(grad[i]) < 1e-12) continue;
    if (rel > r.max_rel_err) {
      r.max_rel_err = rel;
      r.worst_index = static_cast<int>(i);
    }
  }
  return r;
}

}  // namespace vql
