#include "vql/anchor.hpp"

#include <algorithm>
#include <stdexcept>

namespace vql {

AnchorGrid build_grid(const Workspace &ws, int nx, int ny, int nz) {
  if (!ws.valid()) throw std::invalid_argument("degenerate workspace");
  if (nx < 1 || ny < 1 || nz < 1)
    throw std::invalid_argument("grid counts must be positive");
  AnchorGrid g;
  g.workspace = ws;
  g.nx = nx;
  g.ny = ny;
  g.nz = nz;
  g.centers.reserve(static_cast<size_t>(nx) * ny * nz);
  const Vec3 sp = g.spacing();
  for (int ix = 0; ix < nx; ++ix)
    for (int iy = 0; iy < ny; ++iy)
      for (int iz = 0; iz < nz; ++iz)
        g.centers.push_back({ws.lo.x + (ix + 0.5) * sp.x,
                             ws.lo.y + (iy + 0.5) * sp.y,
                             ws.lo.z + (iz + 0.5) * sp.z});
  return g;
}

DecodedBox decode(const AnchorGrid &grid, const FrameOutput &out) {
  if (static_cast<int>(out.anchors.size()) != grid.count())
    throw std::invalid_argument("head output size does not match grid");
  int best = 0;
  for (int n = 1; n < grid.count(); ++n) {
    if (out.anchors[n].logit > out.anchors[best].logit) best = n;
  }
  const AnchorPrediction &p = out.anchors[best];
  DecodedBox d;
  d.box = Box9(grid.centers[best] + p.center_offset, p.size, p.rotation);
  d.score = sigmoid(p.logit);
  d.anchor = best;
  return d;
}

RegressionTarget encode(const AnchorGrid &grid, const Box9 &gt, int anchor) {
  if (anchor < 0 || anchor >= grid.count())
    throw std::out_of_range("anchor index");
  return {gt.center - grid.centers[anchor], gt.size, gt.rotation};
}

AssignmentResult assign_positives(const AnchorGrid &grid, const Box9 &gt) {
  struct Cand {
    double dist;
    int idx;
  };
  std::vector<Cand> cands;
  for (int n = 0; n < grid.count(); ++n) {
    const double d = (grid.centers[n] - gt.center).norm();
    if (d <= kAssignRadius) cands.push_back({d, n});
  }
  // rank the in-radius candidates; top-5 nearest, ties by lower index
  std::sort(cands.begin(), cands.end(), [](const Cand &a, const Cand &b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    return a.idx < b.idx;
  });
  if (static_cast<int>(cands.size()) > kAssignTopK)
    cands.resize(kAssignTopK);

  AssignmentResult r;
  for (const auto &c : cands) r.positives.push_back(c.idx);
  std::sort(r.positives.begin(), r.positives.end());
  for (int n : r.positives) r.targets.push_back(encode(grid, gt, n));
  return r;
}

double focal_loss(double p, int target, const FocalParams &fp) {
  constexpr double eps = 1e-7;
  if (p == static_cast<double>(target)) return 0.0;  // exact hit pre-clamp
  p = std::clamp(p, eps, 1.0 - eps);
  if (target == 1)
    return fp.alpha * std::pow(1.0 - p, fp.gamma) * -std::log(p);
  return (1.0 - fp.alpha) * std::pow(p, fp.gamma) * -std::log(1.0 - p);
}

double focal_loss_grad(double p, int target, const FocalParams &fp) {
  constexpr double eps = 1e-7;
  p = std::clamp(p, eps, 1.0 - eps);
  if (target == 1) {
    // d/dp [ alpha (1-p)^g (-ln p) ]
    return fp.alpha * (fp.gamma * std::pow(1.0 - p, fp.gamma - 1.0) *
                           std::log(p) -
                       std::pow(1.0 - p, fp.gamma) / p);
  }
  // d/dp [ (1-alpha) p^g (-ln(1-p)) ]
  return (1.0 - fp.alpha) *
         (-fp.gamma * std::pow(p, fp.gamma - 1.0) * std::log(1.0 - p) +
          std::pow(p, fp.gamma) / (1.0 - p));
}

namespace {

double reg_err(double d, RegressionKind kind) {
  d = std::abs(d);
  if (kind == RegressionKind::L1) return d;
  return d < 1.0 ? 0.5 * d * d : d - 0.5;  // smooth-L1
}

}  // namespace

LossBreakdown frame_loss(const AnchorGrid &grid, const FrameOutput &out,
                         const FrameTruth &truth, const LossWeights &w,
                         RegressionKind kind, const FocalParams &fp) {
  if (static_cast<int>(out.anchors.size()) != grid.count())
    throw std::invalid_argument("head output size does not match grid");

  LossBreakdown l;
  AssignmentResult assign;
  if (truth.visible) assign = assign_positives(grid, truth.gt);
  const int np = static_cast<int>(assign.positives.size());

  std::vector<char> is_pos(grid.count(), 0);
  for (int n : assign.positives) is_pos[n] = 1;

  for (int n = 0; n < grid.count(); ++n) {
    const double p = sigmoid(out.anchors[n].logit);
    l.cls += focal_loss(p, is_pos[n] ? 1 : 0, fp);
  }
  l.cls /= static_cast<double>(grid.count());

  if (np > 0) {
    for (int i = 0; i < np; ++i) {
      const int n = assign.positives[i];
      const AnchorPrediction &pr = out.anchors[n];
      const RegressionTarget &tg = assign.targets[i];
      l.center += reg_err(pr.center_offset.x - tg.center_offset.x, kind) +
                  reg_err(pr.center_offset.y - tg.center_offset.y, kind) +
                  reg_err(pr.center_offset.z - tg.center_offset.z, kind);
      l.size += reg_err(pr.size.x - tg.size.x, kind) +
                reg_err(pr.size.y - tg.size.y, kind) +
                reg_err(pr.size.z - tg.size.z, kind);
      l.rotation += reg_err(wrap_angle(pr.rotation.x - tg.rotation.x), kind) +
                    reg_err(wrap_angle(pr.rotation.y - tg.rotation.y), kind) +
                    reg_err(wrap_angle(pr.rotation.z - tg.rotation.z), kind);
      l.dist +=
          (grid.centers[n] + pr.center_offset - truth.gt.center).norm();
    }
    const double denom = 3.0 * np;
    l.center /= denom;
    l.size /= denom;
    l.rotation /= denom;
    l.dist /= static_cast<double>(np);
  }

  l.total = w.center * l.center + w.size * l.size + w.rotation * l.rotation +
            w.cls * l.cls + w.dist * l.dist;
  return l;
}

LossBreakdown clip_loss(const AnchorGrid &grid,
                        const std::vector<FrameOutput> &outs,
                        const std::vector<FrameTruth> &truths,
                        const LossWeights &w, RegressionKind kind,
                        const FocalParams &fp) {
  if (outs.size() != truths.size())
    throw std::invalid_argument("outputs/truths length mismatch");
  LossBreakdown sum;
  for (size_t t = 0; t < outs.size(); ++t) {
    const LossBreakdown l = frame_loss(grid, outs[t], truths[t], w, kind, fp);
    sum.center += l.center;
    sum.size += l.size;
    sum.rotation += l.rotation;
    sum.cls += l.cls;
    sum.dist += l.dist;
    sum.total += l.total;
  }
  const double inv = outs.empty() ? 0.0 : 1.0 / static_cast<double>(outs.size());
  sum.center *= inv;
  sum.size *= inv;
  sum.rotation *= inv;
  sum.cls *= inv;
  sum.dist *= inv;
  sum.total *= inv;
  return sum;
}

Vec3 dist_loss_grad(const AnchorGrid &grid, const FrameOutput &out,
                    const Vec3 &gt_center, int anchor, int num_positives) {
  const Vec3 v =
      grid.centers[anchor] + out.anchors[anchor].center_offset - gt_center;
  const double nrm = v.norm();
  if (nrm == 0.0 || num_positives <= 0) return {};
  return v * (1.0 / (nrm * num_positives));
}

}  // namespace vql
