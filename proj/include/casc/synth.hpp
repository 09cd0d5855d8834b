#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "casc/data.hpp"

// Procedural face renderer for desk-scale verification: a filled head
// ellipse with eye discs, a nose dot and a mouth bar, posed by a
// three-mode (rotation, translation, scale) mixture so that the shape
// distribution is multi-modal and a single mean shape initializes poorly.

namespace casc {

struct SynthFace {
  Sample sample;
  int mode = 0;  // which pose cluster generated it
};

namespace detail {

struct FaceGeometry {
  double ax, by;          // head semi-axes
  double eye_r;           // eye disc radius
  double nose_r;
  double mouth_half, mouth_th;
  Point left_eye, right_eye, nose, left_mouth, right_mouth;
};

/// Per-face geometry: feature placement varies between faces so that crop
/// normalization cannot collapse the shape distribution onto pose alone.
inline FaceGeometry face_geometry(double scale, double aspect, Rng& rng) {
  FaceGeometry g;
  g.ax = scale * aspect;
  g.by = 1.3 * scale;
  g.eye_r = 0.16 * scale;
  g.nose_r = 0.09 * scale;
  g.mouth_th = 0.07 * scale;
  const double eye_dx = rng.uniform(0.38, 0.52) * g.ax;
  const double eye_y = rng.uniform(-0.42, -0.28) * g.by;
  const double mouth_y = rng.uniform(0.48, 0.62) * g.by;
  const double nose_y = rng.uniform(0.08, 0.22) * g.by;
  const double nose_x = rng.uniform(-0.06, 0.06) * g.ax;
  g.mouth_half = rng.uniform(0.40, 0.60) * g.ax;
  g.left_eye = {-eye_dx, eye_y};
  g.right_eye = {eye_dx, eye_y};
  g.nose = {nose_x, nose_y};
  g.left_mouth = {-g.mouth_half, mouth_y};
  g.right_mouth = {g.mouth_half, mouth_y};
  return g;
}

inline double face_intensity(const FaceGeometry& g, Point p) {
  auto in_disc = [&](Point c, double r) {
    const double dx = p.x - c.x, dy = p.y - c.y;
    return dx * dx + dy * dy <= r * r;
  };
  if (in_disc(g.left_eye, g.eye_r) || in_disc(g.right_eye, g.eye_r)) return 1.0;
  if (std::abs(p.y - g.left_mouth.y) <= g.mouth_th && p.x >= g.left_mouth.x &&
      p.x <= g.right_mouth.x)
    return 0.85;
  if (in_disc(g.nose, g.nose_r)) return 0.7;
  const double ex = p.x / g.ax, ey = p.y / g.by;
  if (ex * ex + ey * ey <= 1.0) return 0.45;
  return 0.0;
}

}  // namespace detail

/// Deterministic synthetic dataset. Landmarks: left eye center, right eye
/// center, nose tip, left mouth corner, right mouth corner (p = 5). Every
/// landmark is kept strictly inside the canvas.
inline std::vector<SynthFace> synth_faces(std::size_t count, std::uint64_t seed,
                                          std::size_t landmark_count = 5,
                                          std::int64_t size = 64) {
  if (landmark_count != 5)
    throw contract_error("synthetic faces provide exactly 5 landmarks");
  if (size < 16) throw contract_error("synthetic canvas too small");
  const double t = static_cast<double>(size);

  std::vector<SynthFace> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = derive_rng(seed, i);
    const int mode = static_cast<int>(rng.below(3));

    double angle = 0, cx = 0, cy = 0, scale = 0;
    for (int attempt = 0;; ++attempt) {
      switch (mode) {
        case 0:
          angle = rng.uniform(-30.0, -20.0);
          cx = t * rng.uniform(0.36, 0.44);
          cy = t * rng.uniform(0.40, 0.48);
          scale = t * rng.uniform(0.16, 0.19);
          break;
        case 1:
          angle = rng.uniform(-5.0, 5.0);
          cx = t * rng.uniform(0.46, 0.54);
          cy = t * rng.uniform(0.46, 0.54);
          scale = t * rng.uniform(0.20, 0.24);
          break;
        default:
          angle = rng.uniform(20.0, 30.0);
          cx = t * rng.uniform(0.56, 0.64);
          cy = t * rng.uniform(0.52, 0.60);
          scale = t * rng.uniform(0.16, 0.19);
          break;
      }
      const double reach = 1.35 * scale;  // beyond any landmark offset
      if (cx - reach > 1.0 && cx + reach < t - 2.0 && cy - reach > 1.0 &&
          cy + reach < t - 2.0)
        break;
      if (attempt > 64) throw contract_error("synthetic pose sampling failed");
    }
    const double aspect = rng.uniform(0.85, 1.15);

    const detail::FaceGeometry geo = detail::face_geometry(scale, aspect, rng);
    const double rad = angle * kPi / 180.0;
    const double co = std::cos(rad), si = std::sin(rad);
    auto to_canvas = [&](Point p) -> Point {
      return {co * p.x - si * p.y + cx, si * p.x + co * p.y + cy};
    };
    auto to_canon = [&](Point p) -> Point {
      const double dx = p.x - cx, dy = p.y - cy;
      return {co * dx + si * dy, -si * dx + co * dy};
    };

    SynthFace face;
    face.mode = mode;
    face.sample.image = Image(size, size);
    // 2x2 supersampling softens disc edges by roughly half a pixel.
    for (std::int64_t y = 0; y < size; ++y)
      for (std::int64_t x = 0; x < size; ++x) {
        double acc = 0.0;
        for (int sy = 0; sy < 2; ++sy)
          for (int sx = 0; sx < 2; ++sx) {
            const Point p = to_canon({x - 0.25 + 0.5 * sx, y - 0.25 + 0.5 * sy});
            acc += detail::face_intensity(geo, p);
          }
        face.sample.image.at(y, x) = acc / 4.0 + 0.02 * rng.gaussian();
      }

    face.sample.shape.points = {to_canvas(geo.left_eye), to_canvas(geo.right_eye),
                                to_canvas(geo.nose), to_canvas(geo.left_mouth),
                                to_canvas(geo.right_mouth)};

    // Axis-aligned bounds of the rotated head ellipse.
    const double ex = std::sqrt(geo.ax * geo.ax * co * co + geo.by * geo.by * si * si);
    const double ey = std::sqrt(geo.ax * geo.ax * si * si + geo.by * geo.by * co * co);
    face.sample.bbox = {cx - ex, cy - ey, 2.0 * ex, 2.0 * ey};
    out.push_back(std::move(face));
  }
  return out;
}

inline std::vector<Sample> synth_samples(std::size_t count, std::uint64_t seed,
                                         std::int64_t size = 64) {
  std::vector<Sample> out;
  out.reserve(count);
  for (SynthFace& f : synth_faces(count, seed, 5, size))
    out.push_back(std::move(f.sample));
  return out;
}

/// Eye index sets for the five-point synthetic markup.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
synth_eye_indices() {
  return {{0}, {1}};
}

}  // namespace casc
