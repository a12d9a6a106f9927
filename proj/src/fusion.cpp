#include "vql/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace vql {

AttentionParams make_random_params(std::uint64_t seed, int dim, int heads,
                                   bool residual) {
  AttentionParams p;
  p.dim = dim;
  p.heads = heads;
  p.identity = false;
  p.residual = residual;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  auto fill = [&](std::vector<double> &w) {
    w.resize(static_cast<size_t>(dim) * dim);
    for (auto &x : w) x = u(rng) * scale;
  };
  fill(p.wq);
  fill(p.wk);
  fill(p.wv);
  fill(p.wo);
  return p;
}

AttentionParams make_identity_params(int dim, int heads, bool residual) {
  AttentionParams p;
  p.dim = dim;
  p.heads = heads;
  p.identity = true;
  p.residual = residual;
  return p;
}

namespace {

// out[n x dim] = in[n x dim] * w[dim x dim]
void matmul(const std::vector<double> &in, int n, int dim,
            const std::vector<double> &w, std::vector<double> &out) {
  out.assign(static_cast<size_t>(n) * dim, 0.0);
  for (int i = 0; i < n; ++i) {
    const double *row = in.data() + static_cast<size_t>(i) * dim;
    double *orow = out.data() + static_cast<size_t>(i) * dim;
    for (int k = 0; k < dim; ++k) {
      const double a = row[k];
      if (a == 0.0) continue;
      const double *wrow = w.data() + static_cast<size_t>(k) * dim;
      for (int j = 0; j < dim; ++j) orow[j] += a * wrow[j];
    }
  }
}

}  // namespace

AttentionResult mha(const std::vector<double> &queries, int nq,
                    const std::vector<double> &keys,
                    const std::vector<double> &values, int nk,
                    const std::vector<char> &mask,
                    const AttentionParams &params) {
  if (!params.consistent())
    throw std::invalid_argument("inconsistent attention params");
  const int dim = params.dim;
  if (queries.size() != static_cast<size_t>(nq) * dim ||
      keys.size() != static_cast<size_t>(nk) * dim ||
      values.size() != static_cast<size_t>(nk) * dim)
    throw std::invalid_argument("attention input shape mismatch");
  if (!mask.empty() && mask.size() != static_cast<size_t>(nq) * nk)
    throw std::invalid_argument("attention mask shape mismatch");

  const int heads = params.heads;
  const int dh = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<double> q, k, v;
  if (params.identity) {
    q = queries;
    k = keys;
    v = values;
  } else {
    matmul(queries, nq, dim, params.wq, q);
    matmul(keys, nk, dim, params.wk, k);
    matmul(values, nk, dim, params.wv, v);
  }

  AttentionResult res;
  res.nq = nq;
  res.nk = nk;
  res.heads = heads;
  res.zero_rows.assign(nq, 0);
  std::vector<double> concat(static_cast<size_t>(nq) * dim, 0.0);
  if (params.keep_weights)
    res.weights.assign(static_cast<size_t>(heads) * nq * nk, 0.0);

  std::vector<double> scores(nk);
  for (int h = 0; h < heads; ++h) {
    const int off = h * dh;
    for (int i = 0; i < nq; ++i) {
      const double *qr = q.data() + static_cast<size_t>(i) * dim + off;
      double maxs = -std::numeric_limits<double>::infinity();
      int live = 0;
      for (int j = 0; j < nk; ++j) {
        if (!mask.empty() && !mask[static_cast<size_t>(i) * nk + j]) {
          scores[j] = -std::numeric_limits<double>::infinity();
          continue;
        }
        const double *kr = k.data() + static_cast<size_t>(j) * dim + off;
        double s = 0;
        for (int c = 0; c < dh; ++c) s += qr[c] * kr[c];
        scores[j] = s * inv_sqrt;
        maxs = std::max(maxs, scores[j]);
        ++live;
      }
      if (live == 0) {
        res.zero_rows[i] = 1;
        continue;  // output stays zero
      }
      double denom = 0;
      for (int j = 0; j < nk; ++j) {
        if (std::isinf(scores[j])) {
          scores[j] = 0;
        } else {
          scores[j] = std::exp(scores[j] - maxs);
          denom += scores[j];
        }
      }
      double *orow = concat.data() + static_cast<size_t>(i) * dim + off;
      for (int j = 0; j < nk; ++j) {
        const double w = scores[j] / denom;
        if (w == 0.0) continue;
        const double *vr = v.data() + static_cast<size_t>(j) * dim + off;
        for (int c = 0; c < dh; ++c) orow[c] += w * vr[c];
        if (params.keep_weights)
          res.weights[(static_cast<size_t>(h) * nq + i) * nk + j] = w;
      }
    }
  }

  if (params.identity) {
    res.out = std::move(concat);
  } else {
    matmul(concat, nq, dim, params.wo, res.out);
  }
  if (params.residual) {
    for (size_t i = 0; i < res.out.size(); ++i) res.out[i] += queries[i];
  }
  // flagged rows stay exactly zero even with residual enabled
  if (params.residual) {
    for (int i = 0; i < nq; ++i) {
      if (!res.zero_rows[i]) continue;
      std::fill_n(res.out.begin() + static_cast<size_t>(i) * dim, dim, 0.0);
    }
  }
  return res;
}

std::vector<char> frustum_mask(const PinholeCamera &cam,
                               const FeatureVolume3D &volume) {
  std::vector<char> mask(volume.voxel_count(), 0);
  for (int d = 0; d < volume.depth; ++d)
    for (int h = 0; h < volume.height; ++h)
      for (int w = 0; w < volume.width; ++w) {
        const Projection pr = project_point(cam, volume.voxel_center(d, h, w));
        mask[volume.flat(d, h, w)] =
            pr.in_front && pr.u >= 0 && pr.u < cam.width && pr.v >= 0 &&
            pr.v < cam.height;
      }
  return mask;
}

LiftedFeatures lift(const FeatureMap2D &features, const PinholeCamera &cam,
                    int depth_samples, double near, double far) {
  if (depth_samples < 1)
    throw std::invalid_argument("depth_samples must be >= 1");
  LiftedFeatures out;
  out.channels = features.channels;
  const Mat3 rinv = cam.rot.transpose();
  for (int i = 0; i < features.height; ++i) {
    for (int j = 0; j < features.width; ++j) {
      const double rx = (j - cam.cx) / cam.fx;
      const double ry = (i - cam.cy) / cam.fy;
      for (int s = 0; s < depth_samples; ++s) {
        const double depth =
            depth_samples == 1
                ? 0.5 * (near + far)
                : near + (far - near) * s / (depth_samples - 1);
        const Vec3 pc(rx * depth, ry * depth, depth);
        out.positions.push_back(rinv * (pc - cam.trans));
        out.depths.push_back(depth);
        out.source_pixel.push_back(i);
        out.source_pixel.push_back(j);
        for (int c = 0; c < features.channels; ++c)
          out.features.push_back(features.at(i, j, c));
      }
    }
  }
  return out;
}

namespace {

void audit_weights(const AttentionResult &r, FusionAudit *audit) {
  if (!audit || r.weights.empty()) return;
  for (int h = 0; h < r.heads; ++h)
    for (int i = 0; i < r.nq; ++i) {
      if (r.zero_rows[i]) continue;
      double s = 0;
      for (int j = 0; j < r.nk; ++j) s += r.weight(h, i, j);
      audit->min_row_sum = std::min(audit->min_row_sum, s);
      audit->max_row_sum = std::max(audit->max_row_sum, s);
    }
}

}  // namespace

FeatureVolume3D daf_fuse(const FeatureVolume3D &volume,
                         const LiftedFeatures &lifted,
                         const PinholeCamera &cam,
                         const AttentionParams &params,
                         FusionAudit *audit) {
  if (lifted.channels != volume.channels)
    throw std::invalid_argument("channel mismatch");
  const auto mask = frustum_mask(cam, volume);
  FeatureVolume3D out = volume;

  // per-slice camera-depth intervals over in-frustum voxel centers
  struct Interval {
    double lo = 1e300, hi = -1e300;
    bool any() const { return hi >= lo; }
  };
  std::vector<Interval> slice_depth(volume.depth);
  for (int d = 0; d < volume.depth; ++d)
    for (int h = 0; h < volume.height; ++h)
      for (int w = 0; w < volume.width; ++w) {
        if (!mask[volume.flat(d, h, w)]) continue;
        const double z = cam.to_camera(volume.voxel_center(d, h, w)).z;
        slice_depth[d].lo = std::min(slice_depth[d].lo, z);
        slice_depth[d].hi = std::max(slice_depth[d].hi, z);
      }

  // each lifted sample goes to the first slice whose interval contains it
  std::vector<std::vector<int>> slice_keys(volume.depth);
  for (size_t s = 0; s < lifted.count(); ++s) {
    for (int d = 0; d < volume.depth; ++d) {
      if (slice_depth[d].any() && lifted.depths[s] >= slice_depth[d].lo &&
          lifted.depths[s] <= slice_depth[d].hi) {
        slice_keys[d].push_back(static_cast<int>(s));
        break;
      }
    }
  }

  const int C = volume.channels;
#pragma omp parallel for schedule(static)
  for (int d = 0; d < volume.depth; ++d) {
    std::vector<size_t> qvox;
    for (int h = 0; h < volume.height; ++h)
      for (int w = 0; w < volume.width; ++w)
        if (mask[volume.flat(d, h, w)]) qvox.push_back(volume.flat(d, h, w));
    if (qvox.empty() || slice_keys[d].empty()) continue;  // pass-through

    std::vector<double> q, k, v;
    for (size_t f : qvox)
      q.insert(q.end(), volume.values.data() + f * C,
               volume.values.data() + (f + 1) * C);
    for (int s : slice_keys[d]) {
      const double *fr = lifted.features.data() + static_cast<size_t>(s) * C;
      k.insert(k.end(), fr, fr + C);
    }
    v = k;
    const AttentionResult r =
        mha(q, static_cast<int>(qvox.size()), k, v,
            static_cast<int>(slice_keys[d].size()), {}, params);
#pragma omp critical
    audit_weights(r, audit);
    if (audit) {
#pragma omp atomic
      audit->attended_queries += static_cast<long long>(qvox.size());
    }
    for (size_t i = 0; i < qvox.size(); ++i)
      std::copy_n(r.out.data() + i * C, C, out.values.data() + qvox[i] * C);
  }
  if (audit) {
    long long att = audit->attended_queries;
    audit->passthrough_voxels =
        static_cast<long long>(volume.voxel_count()) - att;
  }
  return out;
}

std::vector<double> sinusoidal_depth_encoding(int depth, int channels) {
  std::vector<double> enc(static_cast<size_t>(depth) * channels);
  for (int d = 0; d < depth; ++d)
    for (int c = 0; c < channels; ++c) {
      const double rate = std::pow(10000.0, -2.0 * (c / 2) / channels);
      enc[static_cast<size_t>(d) * channels + c] =
          (c % 2 == 0) ? std::sin(d * rate) : std::cos(d * rate);
    }
  return enc;
}

FeatureVolume3D gaf_fuse(const FeatureVolume3D &volume,
                         const FeatureMap2D &features2d,
                         const std::vector<double> &depth_encoding,
                         const AttentionParams &params, FusionAudit *audit) {
  if (features2d.channels != volume.channels)
    throw std::invalid_argument("channel mismatch");
  if (depth_encoding.size() !=
      static_cast<size_t>(volume.depth) * volume.channels)
    throw std::invalid_argument("depth encoding length != depth count");

  const int C = volume.channels;
  const int nk = features2d.height * features2d.width;
  FeatureVolume3D out = volume;

#pragma omp parallel for schedule(static)
  for (int d = 0; d < volume.depth; ++d) {
    const double *enc = depth_encoding.data() + static_cast<size_t>(d) * C;
    const int nq = volume.height * volume.width;
    std::vector<double> q(static_cast<size_t>(nq) * C);
    for (int h = 0; h < volume.height; ++h)
      for (int w = 0; w < volume.width; ++w) {
        const double *src = volume.voxel(d, h, w);
        double *dst =
            q.data() + (static_cast<size_t>(h) * volume.width + w) * C;
        for (int c = 0; c < C; ++c) dst[c] = src[c] + enc[c];
      }
    const AttentionResult r =
        mha(q, nq, features2d.values, features2d.values, nk, {}, params);
#pragma omp critical
    audit_weights(r, audit);
    for (int h = 0; h < volume.height; ++h)
      for (int w = 0; w < volume.width; ++w)
        std::copy_n(
            r.out.data() + (static_cast<size_t>(h) * volume.width + w) * C, C,
            out.voxel(d, h, w));
  }
  return out;
}

void bilinear_sample(const FeatureMap2D &map, double u, double v,
                     double *out) {
  const int W = map.width, H = map.height, C = map.channels;
  double fu = std::clamp(u, 0.0, static_cast<double>(W - 1));
  double fv = std::clamp(v, 0.0, static_cast<double>(H - 1));
  int j0 = std::min(static_cast<int>(std::floor(fu)), W - 2 < 0 ? 0 : W - 2);
  int i0 = std::min(static_cast<int>(std::floor(fv)), H - 2 < 0 ? 0 : H - 2);
  const int j1 = std::min(j0 + 1, W - 1);
  const int i1 = std::min(i0 + 1, H - 1);
  const double a = fu - j0, b = fv - i0;
  for (int c = 0; c < C; ++c) {
    out[c] = (1 - a) * (1 - b) * map.at(i0, j0, c) +
             a * (1 - b) * map.at(i0, j1, c) +
             (1 - a) * b * map.at(i1, j0, c) + a * b * map.at(i1, j1, c);
  }
}

FeatureVolume3D paf_fuse(const FeatureVolume3D &volume,
                         const FeatureMap2D &features2d,
                         const PinholeCamera &cam,
                         const AttentionParams &params, FusionAudit *audit) {
  if (features2d.channels != volume.channels)
    throw std::invalid_argument("channel mismatch");
  const auto mask = frustum_mask(cam, volume);
  const int C = volume.channels;
  FeatureVolume3D out = volume;

  // sampled 2D feature per in-frustum voxel
  std::vector<double> sampled(volume.voxel_count() * C, 0.0);
  for (int d = 0; d < volume.depth; ++d)
    for (int h = 0; h < volume.height; ++h)
      for (int w = 0; w < volume.width; ++w) {
        const size_t f = volume.flat(d, h, w);
        if (!mask[f]) continue;
        const Projection pr = project_point(cam, volume.voxel_center(d, h, w));
        bilinear_sample(features2d, pr.u, pr.v, sampled.data() + f * C);
      }

  // attention along the depth axis per (h, w) column
#pragma omp parallel for collapse(2) schedule(static)
  for (int h = 0; h < volume.height; ++h) {
    for (int w = 0; w < volume.width; ++w) {
      std::vector<int> ds;
      for (int d = 0; d < volume.depth; ++d)
        if (mask[volume.flat(d, h, w)]) ds.push_back(d);
      if (ds.empty()) continue;
      std::vector<double> q, kv;
      for (int d : ds) {
        const size_t f = volume.flat(d, h, w);
        q.insert(q.end(), volume.values.data() + f * C,
                 volume.values.data() + (f + 1) * C);
        kv.insert(kv.end(), sampled.data() + f * C,
                  sampled.data() + (f + 1) * C);
      }
      const AttentionResult r = mha(q, static_cast<int>(ds.size()), kv, kv,
                                    static_cast<int>(ds.size()), {}, params);
#pragma omp critical
      audit_weights(r, audit);
      for (size_t i = 0; i < ds.size(); ++i)
        std::copy_n(r.out.data() + i * C, C, out.voxel(ds[i], h, w));
    }
  }
  return out;
}

FeatureVolume3D add_fuse(const FeatureVolume3D &a, const FeatureVolume3D &b) {
  if (a.depth != b.depth || a.height != b.height || a.width != b.width ||
      a.channels != b.channels)
    throw std::invalid_argument("shape mismatch in add_fuse");
  FeatureVolume3D out = a;
  for (size_t i = 0; i < out.values.size(); ++i) out.values[i] += b.values[i];
  return out;
}

void trilinear_sample(const FeatureVolume3D &vol, const Vec3 &p, double *out) {
  const Vec3 sp = vol.cell_size();
  auto grid_coord = [](double x, double lo, double s, int n) {
    return std::clamp(x / s - 0.5 - lo / s, 0.0, static_cast<double>(n - 1));
  };
  const double gx = grid_coord(p.x, vol.workspace.lo.x, sp.x, vol.depth);
  const double gy = grid_coord(p.y, vol.workspace.lo.y, sp.y, vol.height);
  const double gz = grid_coord(p.z, vol.workspace.lo.z, sp.z, vol.width);
  const int d0 = std::min(static_cast<int>(gx), std::max(vol.depth - 2, 0));
  const int h0 = std::min(static_cast<int>(gy), std::max(vol.height - 2, 0));
  const int w0 = std::min(static_cast<int>(gz), std::max(vol.width - 2, 0));
  const int d1 = std::min(d0 + 1, vol.depth - 1);
  const int h1 = std::min(h0 + 1, vol.height - 1);
  const int w1 = std::min(w0 + 1, vol.width - 1);
  const double a = gx - d0, b = gy - h0, c = gz - w0;
  const int C = vol.channels;
  for (int ch = 0; ch < C; ++ch) {
    out[ch] =
        (1 - a) * ((1 - b) * ((1 - c) * vol.voxel(d0, h0, w0)[ch] +
                              c * vol.voxel(d0, h0, w1)[ch]) +
                   b * ((1 - c) * vol.voxel(d0, h1, w0)[ch] +
                        c * vol.voxel(d0, h1, w1)[ch])) +
        a * ((1 - b) * ((1 - c) * vol.voxel(d1, h0, w0)[ch] +
                        c * vol.voxel(d1, h0, w1)[ch]) +
             b * ((1 - c) * vol.voxel(d1, h1, w0)[ch] +
                  c * vol.voxel(d1, h1, w1)[ch]));
  }
}

RoiFeature roi_crop3d(const FeatureVolume3D &volume, const Box9 &box,
                      int pool) {
  if (pool < 1) throw std::invalid_argument("pool must be >= 1");
  RoiFeature r;
  r.pool = pool;
  r.channels = volume.channels;
  r.values.assign(static_cast<size_t>(pool) * pool * pool * volume.channels,
                  0.0);

  Vec3 lo(1e300, 1e300, 1e300), hi(-1e300, -1e300, -1e300);
  for (const auto &c : box_corners(box)) {
    lo = {std::min(lo.x, c.x), std::min(lo.y, c.y), std::min(lo.z, c.z)};
    hi = {std::max(hi.x, c.x), std::max(hi.y, c.y), std::max(hi.z, c.z)};
  }
  const Workspace &ws = volume.workspace;
  if (hi.x < ws.lo.x || lo.x > ws.hi.x || hi.y < ws.lo.y || lo.y > ws.hi.y ||
      hi.z < ws.lo.z || lo.z > ws.hi.z) {
    r.outside = true;
    return r;
  }

  auto lattice = [&](double a, double b, int i) {
    if (pool == 1) return 0.5 * (a + b);
    return a + (b - a) * (i + 0.5) / pool;
  };
  size_t idx = 0;
  for (int i = 0; i < pool; ++i)
    for (int j = 0; j < pool; ++j)
      for (int k = 0; k < pool; ++k) {
        const Vec3 p(lattice(lo.x, hi.x, i), lattice(lo.y, hi.y, j),
                     lattice(lo.z, hi.z, k));
        trilinear_sample(volume, p, r.values.data() + idx * volume.channels);
        ++idx;
      }
  return r;
}

AttentionResult stx(const std::vector<double> &query_tokens, int nq,
                    const std::vector<double> &frame_tokens, int nk,
                    const AttentionParams &params) {
  return mha(query_tokens, nq, frame_tokens, frame_tokens, nk, {}, params);
}

std::vector<double> sttx(const std::vector<double> &sequence, int frames,
                         int tokens_per_frame, int window,
                         const AttentionParams &params, FusionAudit *audit) {
  const int n = frames * tokens_per_frame;
  std::vector<char> mask(static_cast<size_t>(n) * n, 0);
  for (int t = 0; t < frames; ++t)
    for (int u = 0; u < frames; ++u) {
      if (std::abs(t - u) > window) continue;
      for (int i = 0; i < tokens_per_frame; ++i)
        for (int j = 0; j < tokens_per_frame; ++j)
          mask[static_cast<size_t>(t * tokens_per_frame + i) * n +
               u * tokens_per_frame + j] = 1;
    }
  const AttentionResult r = mha(sequence, n, sequence, sequence, n, mask,
                                params);
  audit_weights(r, audit);
  return r.out;
}

}  // namespace vql
