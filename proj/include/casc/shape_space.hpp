#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "casc/landmarks.hpp"
#include "casc/landmark_ops.hpp"

// Candidate shape space: k-means over training shapes in the working frame,
// plus the nearest-candidate initialization search.

namespace casc {

struct ShapeSpace {
  std::vector<LandmarkShape> candidates;
  std::uint64_t seed = 0;

  std::size_t size() const { return candidates.size(); }
  std::size_t landmark_count() const {
    return candidates.empty() ? 0 : candidates.front().size();
  }
};

struct KmeansResult {
  ShapeSpace space;
  std::vector<double> objective_trace;  // after each Lloyd iteration
  std::vector<std::string> warnings;
};

namespace detail {

inline double sqdist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace detail

/// Lloyd iterations over flattened 2p-vectors, k-means++ seeding, empty
/// clusters re-seeded to the point farthest from its assigned center.
/// Deterministic for a given seed; ties always take the smallest index.
inline KmeansResult kmeans_shapes(const std::vector<LandmarkShape>& shapes,
                                  std::size_t n_clusters, std::uint64_t seed,
                                  int max_iters = 100) {
  if (shapes.empty()) throw contract_error("kmeans_shapes: no input shapes");
  const std::size_t p = shapes.front().size();
  for (const LandmarkShape& s : shapes)
    if (s.size() != p)
      throw contract_error("kmeans_shapes: inconsistent landmark counts");
  if (n_clusters == 0) throw contract_error("kmeans_shapes: need at least one cluster");

  const std::size_t d = 2 * p;
  std::vector<std::vector<double>> pts;
  pts.reserve(shapes.size());
  for (const LandmarkShape& s : shapes) pts.push_back(s.flat());

  KmeansResult result;
  result.space.seed = seed;

  // Count distinct points; requesting more clusters than that would leave
  // permanently empty clusters.
  {
    std::vector<std::vector<double>> uniq = pts;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    if (n_clusters > uniq.size()) {
      result.warnings.push_back("requested " + std::to_string(n_clusters) +
                                " candidate shapes but only " +
                                std::to_string(uniq.size()) +
                                " distinct inputs; reducing");
      n_clusters = uniq.size();
    }
  }

  Rng rng = derive_rng(seed, 0x5eed);
  std::vector<std::vector<double>> centers;
  centers.reserve(n_clusters);

  // k-means++ seeding.
  centers.push_back(pts[rng.below(pts.size())]);
  std::vector<double> best_d2(pts.size());
  while (centers.size() < n_clusters) {
    double total = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double m = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) m = std::min(m, detail::sqdist(pts[i], c));
      best_d2[i] = m;
      total += m;
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        acc += best_d2[i];
        if (acc >= target) {
          pick = i;
          break;
        }
        pick = i;  // guards rounding at the tail
      }
    } else {
      // Every remaining point coincides with a center; distinct-count
      // reduction above makes this unreachable, but stay deterministic.
      pick = centers.size() % pts.size();
    }
    centers.push_back(pts[pick]);
  }

  std::vector<std::size_t> assign(pts.size(), 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    // Assignment.
    bool changed = iter == 0;
    double objective = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t c = 0; c < centers.size(); ++c) {
        const double dd = detail::sqdist(pts[i], centers[c]);
        if (dd < best) {
          best = dd;
          arg = c;
        }
      }
      if (arg != assign[i]) changed = true;
      assign[i] = arg;
      objective += best;
    }
    result.objective_trace.push_back(objective);
    if (!changed) break;

    // Update; empty clusters grab the globally farthest point.
    std::vector<std::size_t> counts(centers.size(), 0);
    std::vector<std::vector<double>> sums(centers.size(),
                                          std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      counts[assign[i]]++;
      for (std::size_t k = 0; k < d; ++k) sums[assign[i]][k] += pts[i][k];
    }
    for (std::size_t c = 0; c < centers.size(); ++c) {
      if (counts[c] == 0) {
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
          const double dd = detail::sqdist(pts[i], centers[assign[i]]);
          if (dd > far_d) {
            far_d = dd;
            far = i;
          }
        }
        centers[c] = pts[far];
      } else {
        for (std::size_t k = 0; k < d; ++k)
          centers[c][k] = sums[c][k] / static_cast<double>(counts[c]);
      }
    }
  }

  result.space.candidates.reserve(centers.size());
  for (const auto& c : centers)
    result.space.candidates.push_back(LandmarkShape::from_flat(c));
  return result;
}

struct InitializationChoice {
  std::size_t index = 0;
  LandmarkShape shape;
  double squared_distance = 0.0;
};

/// Exhaustive nearest candidate under squared Euclidean distance; ties go
/// to the smallest index.
inline InitializationChoice select_initialization(const LandmarkShape& predicted,
                                                  const ShapeSpace& space) {
  if (space.candidates.empty())
    throw contract_error("select_initialization: empty shape space");
  InitializationChoice best{0, space.candidates[0],
                            squared_distance(predicted, space.candidates[0])};
  for (std::size_t i = 1; i < space.candidates.size(); ++i) {
    const double d = squared_distance(predicted, space.candidates[i]);
    if (d < best.squared_distance) {
      best.index = i;
      best.shape = space.candidates[i];
      best.squared_distance = d;
    }
  }
  return best;
}

inline LandmarkShape mean_shape(const std::vector<LandmarkShape>& shapes) {
  if (shapes.empty()) throw contract_error("mean_shape: empty input");
  const std::size_t p = shapes.front().size();
  LandmarkShape mean;
  mean.points.assign(p, {0.0, 0.0});
  for (const LandmarkShape& s : shapes) {
    if (s.size() != p) throw contract_error("mean_shape: inconsistent landmark counts");
    for (std::size_t j = 0; j < p; ++j) {
      mean.points[j].x += s.points[j].x;
      mean.points[j].y += s.points[j].y;
    }
  }
  for (Point& pt : mean.points) {
    pt.x /= static_cast<double>(shapes.size());
    pt.y /= static_cast<double>(shapes.size());
  }
  return mean;
}

}  // namespace casc
