#include "vql/geometry.hpp"

#include <algorithm>
#include <cstdlib>
#include <random>
#include <tuple>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vql {

double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * M_PI);
  if (a <= -M_PI) a += 2.0 * M_PI;
  if (a > M_PI) a -= 2.0 * M_PI;
  return a;
}

Mat3 rotation_matrix(double yaw, double pitch, double roll) {
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const double cr = std::cos(roll), sr = std::sin(roll);
  Mat3 rz, ry, rx;
  rz.m = {cy, -sy, 0, sy, cy, 0, 0, 0, 1};
  ry.m = {cp, 0, sp, 0, 1, 0, -sp, 0, cp};
  rx.m = {1, 0, 0, 0, cr, -sr, 0, sr, cr};
  return rz * ry * rx;
}

Box9::Box9(const Vec3 &c, const Vec3 &s, const Vec3 &r)
    : center(c), size(s),
      rotation(wrap_angle(r.x), wrap_angle(r.y), wrap_angle(r.z)) {}

bool Box9::contains(const Vec3 &p) const {
  const Vec3 local = rotation_mat().transpose() * (p - center);
  return std::abs(local.x) <= 0.5 * size.x &&
         std::abs(local.y) <= 0.5 * size.y &&
         std::abs(local.z) <= 0.5 * size.z;
}

std::array<Vec3, 8> box_corners(const Box9 &b) {
  static constexpr int sign[8][3] = {{-1, -1, -1}, {1, -1, -1}, {1, 1, -1},
                                     {-1, 1, -1},  {-1, -1, 1}, {1, -1, 1},
                                     {1, 1, 1},    {-1, 1, 1}};
  const Mat3 R = b.rotation_mat();
  std::array<Vec3, 8> out;
  for (int i = 0; i < 8; ++i) {
    Vec3 local(0.5 * sign[i][0] * b.size.x, 0.5 * sign[i][1] * b.size.y,
               0.5 * sign[i][2] * b.size.z);
    out[i] = b.center + R * local;
  }
  return out;
}

ConvexPolytope ConvexPolytope::from_box(const Box9 &b) {
  const auto c = box_corners(b);
  ConvexPolytope p;
  p.vertices.assign(c.begin(), c.end());
  // outward-oriented cycles for the corner ordering above
  p.faces = {
      {0, 3, 2, 1},  // bottom (-z)
      {4, 5, 6, 7},  // top (+z)
      {0, 1, 5, 4},  // -y
      {2, 3, 7, 6},  // +y
      {1, 2, 6, 5},  // +x
      {0, 4, 7, 3},  // -x
  };
  return p;
}

double ConvexPolytope::volume() const {
  if (vertices.empty() || faces.empty()) return 0.0;
  Vec3 centroid;
  for (const auto &v : vertices) centroid += v;
  centroid = centroid * (1.0 / static_cast<double>(vertices.size()));
  double vol = 0.0;
  for (const auto &face : faces) {
    if (face.size() < 3) continue;
    const Vec3 &a = vertices[face[0]];
    for (size_t i = 1; i + 1 < face.size(); ++i) {
      const Vec3 u = a - centroid;
      const Vec3 v = vertices[face[i]] - centroid;
      const Vec3 w = vertices[face[i + 1]] - centroid;
      vol += u.dot(v.cross(w)) / 6.0;
    }
  }
  return std::max(vol, 0.0);
}

ConvexPolytope clip_halfspace(const ConvexPolytope &poly, const Vec3 &n,
                              double d, double tol) {
  const size_t nv = poly.vertices.size();
  std::vector<double> dist(nv);
  bool any_out = false, any_in = false;
  for (size_t i = 0; i < nv; ++i) {
    dist[i] = poly.vertices[i].dot(n) - d;
    if (dist[i] > tol) any_out = true;
    else any_in = true;
  }
  if (!any_out) return poly;
  if (!any_in) return {};

  ConvexPolytope out;
  // vertex remap: kept vertices, plus one new vertex per clipped edge
  std::vector<int> remap(nv, -1);
  for (size_t i = 0; i < nv; ++i) {
    if (dist[i] <= tol) {
      remap[i] = static_cast<int>(out.vertices.size());
      out.vertices.push_back(poly.vertices[i]);
    }
  }
  struct EdgeKey {
    int a, b;
    bool operator<(const EdgeKey &o) const {
      return std::tie(a, b) < std::tie(o.a, o.b);
    }
  };
  std::vector<std::pair<EdgeKey, int>> edge_cache;
  auto edge_vertex = [&](int i, int j) -> int {
    EdgeKey k{std::min(i, j), std::max(i, j)};
    for (const auto &e : edge_cache)
      if (!(e.first < k) && !(k < e.first)) return e.second;
    const double t = dist[i] / (dist[i] - dist[j]);
    const Vec3 p = poly.vertices[i] + (poly.vertices[j] - poly.vertices[i]) * t;
    const int idx = static_cast<int>(out.vertices.size());
    out.vertices.push_back(p);
    edge_cache.push_back({k, idx});
    return idx;
  };

  std::vector<int> cap;  // new vertices on the clipping plane, per face entry
  for (const auto &face : poly.faces) {
    std::vector<int> clipped;
    const size_t fn = face.size();
    for (size_t i = 0; i < fn; ++i) {
      const int cur = face[i];
      const int nxt = face[(i + 1) % fn];
      const bool cur_in = dist[cur] <= tol;
      if (cur_in) {
        clipped.push_back(remap[cur]);
        // on-plane kept vertices bound the cap as well
        if (dist[cur] >= -tol) cap.push_back(remap[cur]);
      }
      // cross only strictly-inside -> strictly-outside edges; on-plane
      // endpoints already act as the crossing
      if ((dist[cur] > tol && dist[nxt] < -tol) ||
          (dist[cur] < -tol && dist[nxt] > tol)) {
        const int ev = edge_vertex(cur, nxt);
        clipped.push_back(ev);
        cap.push_back(ev);
      }
    }
    // drop consecutive duplicates
    std::vector<int> dedup;
    for (int v : clipped) {
      if (dedup.empty() || dedup.back() != v) dedup.push_back(v);
    }
    if (dedup.size() > 1 && dedup.front() == dedup.back()) dedup.pop_back();
    if (dedup.size() >= 3) out.faces.push_back(std::move(dedup));
  }

  // cap face: order the plane vertices by angle around their centroid
  std::sort(cap.begin(), cap.end());
  cap.erase(std::unique(cap.begin(), cap.end()), cap.end());
  if (cap.size() >= 3) {
    Vec3 c;
    for (int v : cap) c += out.vertices[v];
    c = c * (1.0 / static_cast<double>(cap.size()));
    // basis in the clipping plane
    Vec3 axis = std::abs(n.x) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
    Vec3 e1 = n.cross(axis);
    const double e1n = e1.norm();
    if (e1n > 0) {
      e1 = e1 * (1.0 / e1n);
      const Vec3 e2 = n.cross(e1);
      std::sort(cap.begin(), cap.end(), [&](int a, int b) {
        const Vec3 da = out.vertices[a] - c, db = out.vertices[b] - c;
        return std::atan2(da.dot(e2), da.dot(e1)) <
               std::atan2(db.dot(e2), db.dot(e1));
      });
      // outward orientation: cap normal must point along +n
      Vec3 fn3 = (out.vertices[cap[1]] - out.vertices[cap[0]])
                     .cross(out.vertices[cap[2]] - out.vertices[cap[0]]);
      if (fn3.dot(n) < 0) std::reverse(cap.begin(), cap.end());
      out.faces.push_back(cap);
    }
  }
  if (out.vertices.size() < 4 || out.faces.size() < 3) return {};
  return out;
}

namespace {

// 6 face half-spaces {n.p <= d} of an oriented box
void box_halfspaces(const Box9 &b, std::array<std::pair<Vec3, double>, 6> &hs) {
  const Mat3 R = b.rotation_mat();
  const Vec3 axes[3] = {{R.m[0], R.m[3], R.m[6]},
                        {R.m[1], R.m[4], R.m[7]},
                        {R.m[2], R.m[5], R.m[8]}};
  for (int i = 0; i < 3; ++i) {
    const double h = 0.5 * b.size[i];
    const double c = b.center.dot(axes[i]);
    hs[2 * i] = {axes[i], c + h};
    hs[2 * i + 1] = {axes[i] * -1.0, -(c - h)};
  }
}

double intersection_volume_ordered(const Box9 &a, const Box9 &b) {
  // quick separation reject on bounding spheres
  const double rad_a = 0.5 * a.size.norm();
  const double rad_b = 0.5 * b.size.norm();
  if ((a.center - b.center).norm() > rad_a + rad_b) return 0.0;

  ConvexPolytope poly = ConvexPolytope::from_box(a);
  std::array<std::pair<Vec3, double>, 6> hs;
  box_halfspaces(b, hs);
  for (const auto &[n, d] : hs) {
    poly = clip_halfspace(poly, n, d);
    if (poly.vertices.empty()) return 0.0;
  }
  return poly.volume();
}

// strict ordering on the full parameter tuple, for order normalization
bool box_less(const Box9 &a, const Box9 &b) {
  auto key = [](const Box9 &x) {
    return std::make_tuple(x.center.x, x.center.y, x.center.z, x.size.x,
                           x.size.y, x.size.z, x.rotation.x, x.rotation.y,
                           x.rotation.z);
  };
  return key(a) < key(b);
}

std::uint64_t splitmix64(std::uint64_t &state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

double intersection_volume(const Box9 &a, const Box9 &b) {
  if (box_less(b, a)) return intersection_volume_ordered(b, a);
  return intersection_volume_ordered(a, b);
}

double iou3d(const Box9 &a, const Box9 &b) {
  const double inter = intersection_volume(a, b);
  const double uni = a.volume() + b.volume() - inter;
  if (uni <= 0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double giou7(const Box9 &a, const Box9 &b) {
  const Box9 a7(a.center, a.size, {a.rotation.x, 0, 0});
  const Box9 b7(b.center, b.size, {b.rotation.x, 0, 0});
  const double inter = intersection_volume(a7, b7);
  const double uni = a7.volume() + b7.volume() - inter;
  const double iou = uni > 0 ? inter / uni : 0.0;

  Vec3 lo(1e300, 1e300, 1e300), hi(-1e300, -1e300, -1e300);
  for (const auto &corners : {box_corners(a7), box_corners(b7)}) {
    for (const auto &c : corners) {
      lo = {std::min(lo.x, c.x), std::min(lo.y, c.y), std::min(lo.z, c.z)};
      hi = {std::max(hi.x, c.x), std::max(hi.y, c.y), std::max(hi.z, c.z)};
    }
  }
  const double hull = (hi.x - lo.x) * (hi.y - lo.y) * (hi.z - lo.z);
  if (hull <= 0) return iou;
  return iou - (hull - uni) / hull;
}

double mc_iou_oracle(const Box9 &a, const Box9 &b, std::uint64_t n,
                     std::uint64_t seed, int workers) {
  if (n == 0) return 0.0;
  Vec3 lo(1e300, 1e300, 1e300), hi(-1e300, -1e300, -1e300);
  for (const auto &corners : {box_corners(a), box_corners(b)}) {
    for (const auto &c : corners) {
      lo = {std::min(lo.x, c.x), std::min(lo.y, c.y), std::min(lo.z, c.z)};
      hi = {std::max(hi.x, c.x), std::max(hi.y, c.y), std::max(hi.z, c.z)};
    }
  }

  // fixed-size chunks with per-chunk RNG streams: counts are integers, so
  // the reduction is exact and independent of the schedule
  constexpr std::uint64_t kChunk = 1u << 16;
  const std::uint64_t nchunks = (n + kChunk - 1) / kChunk;
  std::uint64_t in_a = 0, in_b = 0, in_both = 0;

  // hoist the world-to-box transforms out of the sampling loop
  const Mat3 ra = a.rotation_mat().transpose();
  const Mat3 rb = b.rotation_mat().transpose();
  const Vec3 ha = a.size * 0.5, hb = b.size * 0.5;
  auto inside = [](const Mat3 &rt, const Vec3 &center, const Vec3 &half,
                   const Vec3 &p) {
    const Vec3 local = rt * (p - center);
    return std::abs(local.x) <= half.x && std::abs(local.y) <= half.y &&
           std::abs(local.z) <= half.z;
  };

#ifdef _OPENMP
  if (workers > 0) omp_set_num_threads(workers);
#else
  (void)workers;
#endif
#pragma omp parallel for reduction(+ : in_a, in_b, in_both) schedule(static)
  for (long long ci = 0; ci < static_cast<long long>(nchunks); ++ci) {
    std::uint64_t st = seed ^ (0xd1342543de82ef95ULL * (ci + 1));
    std::mt19937_64 rng(splitmix64(st));
    std::uniform_real_distribution<double> ux(lo.x, hi.x), uy(lo.y, hi.y),
        uz(lo.z, hi.z);
    const std::uint64_t lim =
        std::min<std::uint64_t>(kChunk, n - static_cast<std::uint64_t>(ci) * kChunk);
    std::uint64_t ca = 0, cb = 0, cab = 0;
    for (std::uint64_t i = 0; i < lim; ++i) {
      const Vec3 p(ux(rng), uy(rng), uz(rng));
      const bool ia = inside(ra, a.center, ha, p);
      const bool ib = inside(rb, b.center, hb, p);
      ca += ia;
      cb += ib;
      cab += ia && ib;
    }
    in_a += ca;
    in_b += cb;
    in_both += cab;
  }

  const std::uint64_t uni = in_a + in_b - in_both;
  if (uni == 0) return 0.0;
  return static_cast<double>(in_both) / static_cast<double>(uni);
}

bool PinholeCamera::valid() const {
  if (!(fx > 0 && fy > 0 && width >= 1 && height >= 1)) return false;
  const Mat3 rtr = rot.transpose() * rot;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double want = i == j ? 1.0 : 0.0;
      if (std::abs(rtr.m[3 * i + j] - want) > 1e-9) return false;
    }
  return std::abs(rot.det() - 1.0) <= 1e-9;
}

Projection project_point(const PinholeCamera &cam, const Vec3 &p) {
  const Vec3 pc = cam.to_camera(p);
  Projection out;
  out.depth = pc.z;
  out.in_front = pc.z > 0;
  if (out.in_front) {
    out.u = cam.cx + cam.fx * pc.x / pc.z;
    out.v = cam.cy + cam.fy * pc.y / pc.z;
  }
  return out;
}

}  // namespace vql
