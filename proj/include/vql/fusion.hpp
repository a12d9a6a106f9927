#pragma once

#include <cstdint>
#include <vector>

#include "vql/anchor.hpp"
#include "vql/geometry.hpp"

// Deterministic forward implementations of the fusion and correspondence
// operators: Lift, depth-attention fusion (DAF), guided-attention fusion
// (GAF), projection-aware fusion (PAF), element-wise addition, 3D RoI
// crop, query-to-frame cross-attention (STX), and windowed spatio-temporal
// self-attention (STTX). No parameters are trained; projections are
// identity or seeded-random per configuration.

namespace vql {

struct FeatureMap2D {
  int height = 0, width = 0, channels = 0;
  std::vector<double> values;  // (h, w, c) row-major

  double &at(int i, int j, int c) {
    return values[(static_cast<size_t>(i) * width + j) * channels + c];
  }
  double at(int i, int j, int c) const {
    return values[(static_cast<size_t>(i) * width + j) * channels + c];
  }
  static FeatureMap2D zeros(int h, int w, int c) {
    return {h, w, c, std::vector<double>(static_cast<size_t>(h) * w * c, 0.0)};
  }
};

// Dense voxel feature grid over a workspace; voxel centers at cell
// midpoints of the uniform subdivision. Axis order (d, h, w) maps to
// workspace (x, y, z).
struct FeatureVolume3D {
  int depth = 0, height = 0, width = 0, channels = 0;
  Workspace workspace;
  std::vector<double> values;  // (d, h, w, c)

  size_t voxel_count() const {
    return static_cast<size_t>(depth) * height * width;
  }
  size_t flat(int d, int h, int w) const {
    return (static_cast<size_t>(d) * height + h) * width + w;
  }
  double *voxel(int d, int h, int w) {
    return values.data() + flat(d, h, w) * channels;
  }
  const double *voxel(int d, int h, int w) const {
    return values.data() + flat(d, h, w) * channels;
  }
  Vec3 cell_size() const {
    return {(workspace.hi.x - workspace.lo.x) / depth,
            (workspace.hi.y - workspace.lo.y) / height,
            (workspace.hi.z - workspace.lo.z) / width};
  }
  Vec3 voxel_center(int d, int h, int w) const {
    const Vec3 sp = cell_size();
    return {workspace.lo.x + (d + 0.5) * sp.x,
            workspace.lo.y + (h + 0.5) * sp.y,
            workspace.lo.z + (w + 0.5) * sp.z};
  }
  static FeatureVolume3D zeros(int d, int h, int w, int c,
                               const Workspace &ws = {}) {
    FeatureVolume3D v;
    v.depth = d;
    v.height = h;
    v.width = w;
    v.channels = c;
    v.workspace = ws;
    v.values.assign(static_cast<size_t>(d) * h * w * c, 0.0);
    return v;
  }
};

struct AttentionParams {
  int dim = 0;    // model width C
  int heads = 1;  // must divide dim
  bool identity = true;
  std::vector<double> wq, wk, wv, wo;  // C x C row-major when not identity
  bool residual = false;
  bool keep_weights = false;  // store the full weight tensor for audits

  bool consistent() const {
    if (dim <= 0 || heads <= 0 || dim % heads != 0) return false;
    if (identity) return true;
    const size_t n = static_cast<size_t>(dim) * dim;
    return wq.size() == n && wk.size() == n && wv.size() == n &&
           wo.size() == n;
  }
};

// Seeded-random projections, scaled by 1/sqrt(dim).
AttentionParams make_random_params(std::uint64_t seed, int dim, int heads,
                                   bool residual = false);
AttentionParams make_identity_params(int dim, int heads = 1,
                                     bool residual = false);

struct AttentionResult {
  std::vector<double> out;                // Nq x C
  std::vector<double> weights;            // heads x Nq x Nk when kept
  std::vector<char> zero_rows;            // queries with no unmasked key
  int nq = 0, nk = 0, heads = 0;

  double weight(int h, int q, int k) const {
    return weights[(static_cast<size_t>(h) * nq + q) * nk + k];
  }
};

// Scaled dot-product multi-head attention. `mask`, when non-empty, is
// Nq x Nk with nonzero meaning the key is visible to that query; masked
// scores get -inf before normalization. Rows with no unmasked key output
// zero and are flagged.
AttentionResult mha(const std::vector<double> &queries, int nq,
                    const std::vector<double> &keys,
                    const std::vector<double> &values, int nk,
                    const std::vector<char> &mask,
                    const AttentionParams &params);

// True iff the voxel center projects inside the image with depth > 0.
std::vector<char> frustum_mask(const PinholeCamera &cam,
                               const FeatureVolume3D &volume);

struct LiftedFeatures {
  std::vector<Vec3> positions;      // world coordinates
  std::vector<double> features;     // N x C, token feature replicated
  std::vector<double> depths;       // camera-frame depth per sample
  std::vector<int> source_pixel;    // 2*N: (row, col) of the source token
  int channels = 0;

  size_t count() const { return positions.size(); }
};

// Back-project every token along its viewing ray, `depth_samples` points
// uniformly spaced over [near, far]. A single sample sits at the range
// midpoint. Token (i, j) projects to pixel (u, v) = (j, i).
LiftedFeatures lift(const FeatureMap2D &features, const PinholeCamera &cam,
                    int depth_samples, double near, double far);

struct FusionAudit {
  double min_row_sum = 1.0, max_row_sum = 1.0;  // over unmasked rows
  long long attended_queries = 0;
  long long passthrough_voxels = 0;
};

// Depth-slice-wise cross attention: in-frustum voxels of each depth slice
// query the lifted samples whose camera depth falls inside that slice's
// depth interval. Out-of-frustum voxels and slices without keys pass
// through unchanged.
FeatureVolume3D daf_fuse(const FeatureVolume3D &volume,
                         const LiftedFeatures &lifted,
                         const PinholeCamera &cam,
                         const AttentionParams &params,
                         FusionAudit *audit = nullptr);

// Cross attention with per-depth positional encoding added to the voxel
// queries; keys/values are the 2D tokens. `depth_encoding` is D x C.
FeatureVolume3D gaf_fuse(const FeatureVolume3D &volume,
                         const FeatureMap2D &features2d,
                         const std::vector<double> &depth_encoding,
                         const AttentionParams &params,
                         FusionAudit *audit = nullptr);

// Sinusoidal depth table, D x C.
std::vector<double> sinusoidal_depth_encoding(int depth, int channels);

// Projection + bilinear sampling, then attention along the depth axis per
// (h, w) column. Voxels projecting behind the camera or outside the map
// pass through.
FeatureVolume3D paf_fuse(const FeatureVolume3D &volume,
                         const FeatureMap2D &features2d,
                         const PinholeCamera &cam,
                         const AttentionParams &params,
                         FusionAudit *audit = nullptr);

// Element-wise sum; shapes must match exactly.
FeatureVolume3D add_fuse(const FeatureVolume3D &a, const FeatureVolume3D &b);

// Edge-clamped bilinear sample of a token map at continuous (u, v) where
// token (i, j) sits at (u, v) = (j, i).
void bilinear_sample(const FeatureMap2D &map, double u, double v,
                     double *out);

// Edge-clamped trilinear sample at a world position.
void trilinear_sample(const FeatureVolume3D &vol, const Vec3 &p, double *out);

struct RoiFeature {
  int pool = 0, channels = 0;
  std::vector<double> values;  // pool^3 x C
  bool outside = false;        // box AABB fully outside the volume
};

// pool^3 regular lattice inside the axis-aligned bound of the box,
// trilinear interpolation at each sample point.
RoiFeature roi_crop3d(const FeatureVolume3D &volume, const Box9 &box,
                      int pool);

// Query tokens cross-attend over frame tokens.
AttentionResult stx(const std::vector<double> &query_tokens, int nq,
                    const std::vector<double> &frame_tokens, int nk,
                    const AttentionParams &params);

// Windowed self-attention over the flattened (frame, token) axis; frame
// pairs farther than `window` apart are masked.
std::vector<double> sttx(const std::vector<double> &sequence, int frames,
                         int tokens_per_frame, int window,
                         const AttentionParams &params,
                         FusionAudit *audit = nullptr);

}  // namespace vql
