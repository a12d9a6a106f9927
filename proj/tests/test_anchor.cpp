#include <doctest.h>

#include <random>
#include <stdexcept>

#include "vql/anchor.hpp"

using namespace vql;

namespace {

Box9 random_workspace_box(std::mt19937_64 &rng, const Workspace &ws) {
  std::uniform_real_distribution<double> ux(ws.lo.x, ws.hi.x),
      uy(ws.lo.y, ws.hi.y), uz(ws.lo.z, ws.hi.z), s(0.2, 1.0),
      a(-M_PI, M_PI);
  return Box9({ux(rng), uy(rng), uz(rng)}, {s(rng), s(rng), s(rng)},
              {a(rng), a(rng), a(rng)});
}

// the two assignment rules applied literally over every center
std::vector<int> brute_force_positives(const AnchorGrid &g, const Vec3 &c) {
  struct D {
    double d;
    int i;
  };
  std::vector<D> all;
  for (int n = 0; n < g.count(); ++n)
    all.push_back({(g.centers[n] - c).norm(), n});
  std::sort(all.begin(), all.end(), [](const D &a, const D &b) {
    if (a.d != b.d) return a.d < b.d;
    return a.i < b.i;
  });
  std::vector<int> pos;
  for (int k = 0; k < kAssignTopK && k < static_cast<int>(all.size()); ++k)
    if (all[k].d <= kAssignRadius) pos.push_back(all[k].i);
  std::sort(pos.begin(), pos.end());
  return pos;
}

FrameOutput encode_gt_output(const AnchorGrid &grid, const Box9 &gt) {
  FrameOutput out;
  out.anchors.assign(grid.count(), AnchorPrediction{});
  const auto assign = assign_positives(grid, gt);
  for (auto &a : out.anchors)
    a.logit = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < assign.positives.size(); ++i) {
    const int n = assign.positives[i];
    out.anchors[n].center_offset = assign.targets[i].center_offset;
    out.anchors[n].size = assign.targets[i].size;
    out.anchors[n].rotation = assign.targets[i].rotation;
    out.anchors[n].logit = std::numeric_limits<double>::infinity();
  }
  return out;
}

}  // namespace

TEST_CASE("build_grid defaults") {
  const AnchorGrid g = build_grid(Workspace{}, 16, 16, 16);
  CHECK(g.count() == 4096);
  CHECK(static_cast<int>(g.centers.size()) == 4096);
  const Vec3 sp = g.spacing();
  CHECK(sp.x == doctest::Approx(0.625));
  CHECK(sp.y == doctest::Approx(0.25));
  CHECK(sp.z == doctest::Approx(0.125));
  // first center at the first cell midpoint
  CHECK(g.centers[0].x == doctest::Approx(0.3125));
  CHECK(g.centers[0].y == doctest::Approx(-1.875));
  CHECK(g.centers[0].z == doctest::Approx(-0.9375));
  // all centers strictly inside the workspace
  for (const auto &c : g.centers) {
    CHECK(c.x > g.workspace.lo.x);
    CHECK(c.x < g.workspace.hi.x);
    CHECK(c.z > g.workspace.lo.z);
    CHECK(c.z < g.workspace.hi.z);
  }
}

TEST_CASE("build_grid single cell and errors") {
  const AnchorGrid g = build_grid(Workspace{}, 1, 1, 1);
  REQUIRE(g.count() == 1);
  CHECK(g.centers[0].x == doctest::Approx(5.0));
  CHECK(g.centers[0].y == doctest::Approx(0.0));
  CHECK(g.centers[0].z == doctest::Approx(0.0));

  Workspace degenerate;
  degenerate.hi.x = degenerate.lo.x;
  CHECK_THROWS_AS(build_grid(degenerate, 4, 4, 4), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(Workspace{}, 0, 4, 4), std::invalid_argument);
}

TEST_CASE("decode") {
  const AnchorGrid g = build_grid(Workspace{}, 4, 4, 4);
  FrameOutput out;
  out.anchors.assign(g.count(), AnchorPrediction{});
  out.anchors[10].logit = 3.0;
  out.anchors[10].center_offset = {0.1, -0.2, 0.05};
  out.anchors[10].size = {1, 2, 3};
  out.anchors[10].rotation = {0.5, 0, 0};
  const DecodedBox d = decode(g, out);
  CHECK(d.anchor == 10);
  CHECK((d.box.center - (g.centers[10] + Vec3(0.1, -0.2, 0.05))).norm() <
        1e-12);
  CHECK(d.box.size.y == 2.0);
  CHECK(d.score == doctest::Approx(sigmoid(3.0)));

  // equal presence: lowest index wins
  out.anchors[5].logit = 3.0;
  CHECK(decode(g, out).anchor == 5);
}

TEST_CASE("encode/decode round trip") {
  const AnchorGrid g = build_grid(Workspace{}, 16, 16, 16);
  std::mt19937_64 rng(123);
  std::uniform_int_distribution<int> anchor_pick(0, g.count() - 1);
  for (int i = 0; i < 1000; ++i) {
    const Box9 gt = random_workspace_box(rng, g.workspace);
    const int n = anchor_pick(rng);
    const RegressionTarget t = encode(g, gt, n);
    FrameOutput out;
    out.anchors.assign(g.count(), AnchorPrediction{});
    out.anchors[n] = {t.center_offset, t.size, t.rotation, 10.0};
    const DecodedBox d = decode(g, out);
    CHECK((d.box.center - gt.center).norm() < 1e-9);
    CHECK((d.box.size - gt.size).norm() < 1e-9);
    CHECK(std::abs(wrap_angle(d.box.rotation.x - gt.rotation.x)) < 1e-9);
    CHECK(std::abs(wrap_angle(d.box.rotation.y - gt.rotation.y)) < 1e-9);
    CHECK(std::abs(wrap_angle(d.box.rotation.z - gt.rotation.z)) < 1e-9);
  }

  // gt centered exactly on a center gives a zero offset
  const RegressionTarget t0 =
      encode(g, Box9(g.centers[7], {1, 1, 1}, {0, 0, 0}), 7);
  CHECK(t0.center_offset.norm() == 0.0);

  // gt outside the workspace is still well-defined, no clamping
  const Box9 outside({-5, 0, 0}, {1, 1, 1}, {0, 0, 0});
  const RegressionTarget to = encode(g, outside, 0);
  CHECK(to.center_offset.x == doctest::Approx(-5.0 - g.centers[0].x));
}

TEST_CASE("decode argmax is invariant under monotone transforms") {
  const AnchorGrid g = build_grid(Workspace{}, 4, 4, 4);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-3, 3);
  FrameOutput out;
  out.anchors.assign(g.count(), AnchorPrediction{});
  for (auto &a : out.anchors) a.logit = u(rng);
  const int before = decode(g, out).anchor;
  for (auto &a : out.anchors) a.logit = 2.0 * a.logit + 1.0;
  CHECK(decode(g, out).anchor == before);
}

TEST_CASE("assign_positives") {
  const AnchorGrid g = build_grid(Workspace{}, 16, 16, 16);

  // gt on an anchor center: that anchor is positive at distance 0
  const Box9 on_center(g.centers[100], {0.5, 0.5, 0.5}, {0, 0, 0});
  const auto a1 = assign_positives(g, on_center);
  CHECK(std::count(a1.positives.begin(), a1.positives.end(), 100) == 1);

  // far outside the workspace: empty positive set
  const Box9 far({100, 100, 100}, {1, 1, 1}, {0, 0, 0});
  CHECK(assign_positives(g, far).positives.empty());

  std::mt19937_64 rng(55);
  for (int i = 0; i < 300; ++i) {
    const Box9 gt = random_workspace_box(rng, g.workspace);
    const auto r = assign_positives(g, gt);
    CHECK(r.positives.size() <= 5);
    for (int n : r.positives)
      CHECK((g.centers[n] - gt.center).norm() <= kAssignRadius);
    CHECK(r.positives == brute_force_positives(g, gt.center));
  }
}

TEST_CASE("focal loss") {
  CHECK(focal_loss(1.0, 1) == 0.0);
  CHECK(focal_loss(0.0, 0) == 0.0);
  CHECK(focal_loss(0.5, 1) ==
        doctest::Approx(0.25 * 0.25 * std::log(2.0)).epsilon(1e-12));
  // gamma=0, alpha=1 degenerates to plain cross-entropy
  const FocalParams ce{0.0, 1.0};
  CHECK(focal_loss(0.3, 1, ce) == doctest::Approx(-std::log(0.3)));
  CHECK(focal_loss(0.3, 0, ce) == 0.0);  // alpha=1 zeroes the negative term
}

TEST_CASE("focal gradient matches finite differences") {
  for (double p : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    for (int target : {0, 1}) {
      auto f = [&](const std::vector<double> &x) {
        return focal_loss(x[0], target);
      };
      const auto r =
          gradient_check(f, {p}, {focal_loss_grad(p, target)});
      CHECK(r.max_rel_err < 1e-4);
    }
  }
}

TEST_CASE("loss zero on perfectly encoding output") {
  const AnchorGrid g = build_grid(Workspace{}, 8, 8, 8);
  std::mt19937_64 rng(77);
  for (int i = 0; i < 20; ++i) {
    const Box9 gt = random_workspace_box(rng, g.workspace);
    const FrameOutput out = encode_gt_output(g, gt);
    const LossBreakdown l = frame_loss(g, out, {true, gt});
    CHECK(l.total == 0.0);
  }
}

TEST_CASE("loss component arithmetic") {
  const AnchorGrid g = build_grid(Workspace{}, 8, 8, 8);
  const Box9 gt(g.centers[100], {0.5, 0.5, 0.5}, {0, 0, 0});
  FrameOutput out = encode_gt_output(g, gt);
  const auto assign = assign_positives(g, gt);
  const int np = static_cast<int>(assign.positives.size());
  REQUIRE(np > 0);

  // perturbing one positive's offset by (0.1,0,0) with unit weights
  LossWeights unit{1, 1, 1, 1, 1};
  out.anchors[assign.positives[0]].center_offset.x += 0.1;
  const LossBreakdown l = frame_loss(g, out, {true, gt}, unit);
  CHECK(l.center == doctest::Approx(0.1 / (3.0 * np)).epsilon(1e-12));
  CHECK(l.dist == doctest::Approx(0.1 / np).epsilon(1e-9));

  // all-zero weights kill the total
  const LossWeights zero{0, 0, 0, 0, 0};
  const LossBreakdown lz = frame_loss(g, out, {true, gt}, zero);
  CHECK(lz.total == 0.0);

  // each component scales linearly in its weight
  LossWeights doubled{2, 1, 1, 1, 1};
  const LossBreakdown l2 = frame_loss(g, out, {true, gt}, doubled);
  CHECK(l2.total - l.total == doctest::Approx(l.center));
}

TEST_CASE("rotation loss uses wrapped differences") {
  const AnchorGrid g = build_grid(Workspace{}, 4, 4, 4);
  const Box9 gt(g.centers[10], {0.5, 0.5, 0.5}, {M_PI - 0.01, 0, 0});
  FrameOutput out = encode_gt_output(g, gt);
  const auto assign = assign_positives(g, gt);
  REQUIRE_FALSE(assign.positives.empty());
  // predict just past the wrap point: error must be 0.02, not ~2pi
  for (int n : assign.positives)
    out.anchors[n].rotation.x = -(M_PI - 0.01);
  const LossBreakdown l = frame_loss(g, out, {true, gt});
  const int np = static_cast<int>(assign.positives.size());
  CHECK(l.rotation == doctest::Approx(0.02 / 3.0).epsilon(1e-6));
  (void)np;
}

TEST_CASE("invisible frame contributes classification only") {
  const AnchorGrid g = build_grid(Workspace{}, 4, 4, 4);
  FrameOutput out;
  out.anchors.assign(g.count(), AnchorPrediction{});
  for (auto &a : out.anchors) a.logit = 0.3;
  const LossBreakdown l = frame_loss(g, out, {false, Box9{}});
  CHECK(l.center == 0.0);
  CHECK(l.size == 0.0);
  CHECK(l.dist == 0.0);
  CHECK(l.cls > 0.0);
}

TEST_CASE("dist gradient matches finite differences") {
  const AnchorGrid g = build_grid(Workspace{}, 8, 8, 8);
  std::mt19937_64 rng(88);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Box9 gt = random_workspace_box(rng, g.workspace);
    const auto assign = assign_positives(g, gt);
    if (assign.positives.empty()) continue;
    ++checked;
    FrameOutput out = encode_gt_output(g, gt);
    const int n = assign.positives[0];
    // move off the kink at zero distance
    out.anchors[n].center_offset += {u(rng) + 0.05, u(rng), u(rng)};
    const int np = static_cast<int>(assign.positives.size());

    auto f = [&](const std::vector<double> &x) {
      FrameOutput o = out;
      o.anchors[n].center_offset = {x[0], x[1], x[2]};
      double sum = 0;
      for (int m : assign.positives)
        sum += (g.centers[m] + o.anchors[m].center_offset - gt.center).norm();
      return sum / np;
    };
    const Vec3 grad = dist_loss_grad(g, out, gt.center, n, np);
    const auto r = gradient_check(
        f,
        {out.anchors[n].center_offset.x, out.anchors[n].center_offset.y,
         out.anchors[n].center_offset.z},
        {grad.x, grad.y, grad.z});
    CHECK(r.max_rel_err < 1e-4);
  }
  CHECK(checked > 10);
}

TEST_CASE("clip loss averages frames") {
  const AnchorGrid g = build_grid(Workspace{}, 4, 4, 4);
  const Box9 gt(g.centers[20], {0.5, 0.5, 0.5}, {0, 0, 0});
  const FrameOutput perfect = encode_gt_output(g, gt);
  FrameOutput noisy = perfect;
  noisy.anchors[0].logit = 0.0;  // p = 0.5 on a negative anchor

  const std::vector<FrameOutput> outs = {perfect, noisy};
  const std::vector<FrameTruth> truths = {{true, gt}, {true, gt}};
  const LossBreakdown both = clip_loss(g, outs, truths);
  const LossBreakdown single = frame_loss(g, noisy, {true, gt});
  CHECK(both.total == doctest::Approx(0.5 * single.total));
}
