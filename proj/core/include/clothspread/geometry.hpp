#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace clothspread {

// Axis-aligned rectangle in the world x-y plane (table footprints and
// their inflated keep-out zones).
struct Rect {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  bool valid() const { return max_x > min_x && max_y > min_y; }

  bool contains(double x, double y) const {
    return x >= min_x && x <= max_x && y >= min_y && y <= max_y;
  }

  bool contains(const Eigen::Vector2d& p) const { return contains(p.x(), p.y()); }

  Rect inflated(double margin) const {
    return Rect{min_x - margin, min_y - margin, max_x + margin, max_y + margin};
  }

  // Euclidean distance from a point to the rectangle (0 inside).
  double distance(double x, double y) const {
    const double dx = std::max({min_x - x, 0.0, x - max_x});
    const double dy = std::max({min_y - y, 0.0, y - max_y});
    return std::hypot(dx, dy);
  }

  Eigen::Vector2d center() const {
    return {0.5 * (min_x + max_x), 0.5 * (min_y + max_y)};
  }
};

// True when the open segment p0-p1 passes through the interior of the
// rectangle. Liang-Barsky clip; touching the boundary does not count.
inline bool segment_crosses_rect(const Eigen::Vector2d& p0,
                                 const Eigen::Vector2d& p1, const Rect& r) {
  const double eps = 1e-12;
  double t0 = 0.0, t1 = 1.0;
  const double dx = p1.x() - p0.x();
  const double dy = p1.y() - p0.y();
  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {p0.x() - r.min_x, r.max_x - p0.x(), p0.y() - r.min_y,
                       r.max_y - p0.y()};
  for (int i = 0; i < 4; ++i) {
    if (std::abs(p[i]) < eps) {
      if (q[i] < 0.0) return false;  // parallel and outside this slab
    } else {
      const double t = q[i] / p[i];
      if (p[i] < 0.0) {
        t0 = std::max(t0, t);
      } else {
        t1 = std::min(t1, t);
      }
    }
  }
  return t0 + eps < t1;  // nonempty overlap means interior crossing
}

}  // namespace clothspread
