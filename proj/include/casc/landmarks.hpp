#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "casc/common.hpp"

namespace casc {

/// x is the column coordinate, y the row coordinate, both zero-indexed
/// pixels of whichever frame the shape lives in.
struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

/// Ordered facial landmark set; flattens to (x1,y1,...,xp,yp).
struct LandmarkShape {
  std::vector<Point> points;

  LandmarkShape() = default;
  explicit LandmarkShape(std::vector<Point> pts) : points(std::move(pts)) {}

  std::size_t size() const { return points.size(); }
  bool operator==(const LandmarkShape&) const = default;

  std::vector<double> flat() const {
    std::vector<double> out;
    out.reserve(points.size() * 2);
    for (const Point& p : points) {
      out.push_back(p.x);
      out.push_back(p.y);
    }
    return out;
  }

  static LandmarkShape from_flat(std::span<const double> v) {
    if (v.size() % 2 != 0)
      throw contract_error("flat shape vector length must be even");
    LandmarkShape s;
    s.points.reserve(v.size() / 2);
    for (std::size_t i = 0; i + 1 < v.size(); i += 2)
      s.points.push_back({v[i], v[i + 1]});
    return s;
  }
};

inline double squared_distance(const LandmarkShape& a, const LandmarkShape& b) {
  if (a.size() != b.size())
    throw contract_error("shape point counts differ: " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double dx = a.points[i].x - b.points[i].x;
    const double dy = a.points[i].y - b.points[i].y;
    acc += dx * dx + dy * dy;
  }
  return acc;
}

inline LandmarkShape add_delta(const LandmarkShape& s, const LandmarkShape& delta) {
  if (s.size() != delta.size())
    throw contract_error("shape delta point count mismatch");
  LandmarkShape out = s;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.points[i].x += delta.points[i].x;
    out.points[i].y += delta.points[i].y;
  }
  return out;
}

}  // namespace casc
