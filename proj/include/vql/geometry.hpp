#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

// Oriented 9-DoF box geometry: rotations, corners, exact intersection
// volume via half-space clipping, IoU, 7-DoF GIoU, and a Monte Carlo
// IoU oracle used for verification.
//
// Axis convention (fixed here, used everywhere): the workspace's third
// coordinate (z) is vertical, y is lateral, x is longitudinal. Rotations
// are intrinsic, applied yaw (about z) -> pitch (about y) -> roll (about x):
//   R = Rz(yaw) * Ry(pitch) * Rx(roll)

namespace vql {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3 &o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3 &o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 &operator+=(const Vec3 &o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  double dot(const Vec3 &o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3 &o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

struct Mat3 {
  // row-major
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  Vec3 operator*(const Vec3 &v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3 &o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += m[3 * i + k] * o.m[3 * k + j];
        r.m[3 * i + j] = s;
      }
    return r;
  }
  Mat3 transpose() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r.m[3 * i + j] = m[3 * j + i];
    return r;
  }
  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) -
           m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
};

// Wrap an angle into (-pi, pi].
double wrap_angle(double a);

// R = Rz(yaw) * Ry(pitch) * Rx(roll), intrinsic order yaw->pitch->roll.
Mat3 rotation_matrix(double yaw, double pitch, double roll);

// 9-DoF oriented box. Angles are normalized to (-pi, pi] on construction;
// size components must be strictly positive.
struct Box9 {
  Vec3 center;
  Vec3 size;      // (l, w, h): extents along the box's local x, y, z
  Vec3 rotation;  // (yaw, pitch, roll), radians

  Box9() : size(1, 1, 1) {}
  Box9(const Vec3 &c, const Vec3 &s, const Vec3 &r);

  double volume() const { return size.x * size.y * size.z; }
  Mat3 rotation_mat() const {
    return rotation_matrix(rotation.x, rotation.y, rotation.z);
  }
  bool valid() const {
    return size.x > 0 && size.y > 0 && size.z > 0 && std::isfinite(center.x) &&
           std::isfinite(center.y) && std::isfinite(center.z);
  }
  // True iff p lies inside the box (half-space test in the box frame).
  bool contains(const Vec3 &p) const;
};

// Corners in a fixed order: local sign pattern
// (-,-,-) (+,-,-) (+,+,-) (-,+,-) (-,-,+) (+,-,+) (+,+,+) (-,+,+)
// i.e. bottom face CCW then top face CCW (viewed from +z).
std::array<Vec3, 8> box_corners(const Box9 &b);

// Convex polytope as vertices plus outward-oriented vertex-index cycles.
struct ConvexPolytope {
  std::vector<Vec3> vertices;
  std::vector<std::vector<int>> faces;

  double volume() const;
  static ConvexPolytope from_box(const Box9 &b);
};

// Clip a convex polytope against the half-space {p : n.p <= d}.
// Vertices within `tol` of the plane are treated as on-plane and kept.
ConvexPolytope clip_halfspace(const ConvexPolytope &poly, const Vec3 &n,
                              double d, double tol = 1e-9);

// Exact intersection volume of two oriented boxes: polytope a clipped by
// the 6 face half-spaces of b.
double intersection_volume(const Box9 &a, const Box9 &b);

// vol(a&b) / vol(a|b), symmetric (inputs order-normalized by volume then
// lexicographic center before entering the clipping path).
double iou3d(const Box9 &a, const Box9 &b);

// 7-DoF generalized IoU: pitch and roll of both boxes are zeroed, the
// enclosing hull is the axis-aligned bounding box of both corner sets.
double giou7(const Box9 &a, const Box9 &b);

// Monte Carlo IoU estimate: uniform sampling inside the common AABB,
// membership by half-space tests. Deterministic for a fixed seed and
// independent of worker count (per-chunk counters, integer reduction).
double mc_iou_oracle(const Box9 &a, const Box9 &b, std::uint64_t n,
                     std::uint64_t seed, int workers = 0);

// Pinhole camera with a world-to-camera rigid pose. Camera frame: x right,
// y down, z forward (depth).
struct PinholeCamera {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  int width = 1, height = 1;
  Mat3 rot;   // world -> camera rotation
  Vec3 trans; // camera = rot * world + trans

  bool valid() const;
  Vec3 to_camera(const Vec3 &p) const { return rot * p + trans; }
};

struct Projection {
  double u = 0, v = 0, depth = 0;
  bool in_front = false;
};

// Pinhole projection; in_front is false for depth <= 0.
Projection project_point(const PinholeCamera &cam, const Vec3 &p);

}  // namespace vql
