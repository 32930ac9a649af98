#pragma once

#include <algorithm>
#include <cmath>

namespace risnoma::geom {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

inline double distance(const Vec3& a, const Vec3& b) {
  double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline double distance_xy(const Vec3& a, const Vec3& b) {
  double dx = a.x - b.x, dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

/// Axis-aligned box sitting on the floor: [x0,x1] x [y0,y1] x [0,height].
struct Box {
  double x0 = 0.0, x1 = 0.0;
  double y0 = 0.0, y1 = 0.0;
  double height = 0.0;

  bool contains_xy(double x, double y) const {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
  }
  bool contains(const Vec3& p) const {
    return contains_xy(p.x, p.y) && p.z >= 0.0 && p.z <= height;
  }
};

/// True iff the open segment a->b passes through the closed box with a
/// crossing of positive length (slab test; a tangential corner touch does
/// not count).
inline bool segment_intersects_box(const Vec3& a, const Vec3& b, const Box& box) {
  double t0 = 0.0, t1 = 1.0;
  const double origin[3] = {a.x, a.y, a.z};
  const double dir[3] = {b.x - a.x, b.y - a.y, b.z - a.z};
  const double lo[3] = {box.x0, box.y0, 0.0};
  const double hi[3] = {box.x1, box.y1, box.height};
  for (int k = 0; k < 3; ++k) {
    if (dir[k] == 0.0) {
      if (origin[k] < lo[k] || origin[k] > hi[k]) return false;
      continue;
    }
    double inv = 1.0 / dir[k];
    double tn = (lo[k] - origin[k]) * inv;
    double tf = (hi[k] - origin[k]) * inv;
    if (tn > tf) std::swap(tn, tf);
    t0 = std::max(t0, tn);
    t1 = std::min(t1, tf);
    if (t0 >= t1) return false;
  }
  // Overlap must lie inside the open parameter range.
  return t1 > 0.0 && t0 < 1.0;
}

}  // namespace risnoma::geom
