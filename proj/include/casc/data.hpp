#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "casc/image.hpp"
#include "casc/landmarks.hpp"

// Dataset ingestion and geometric normalization: ibug .pts annotations,
// bounding-box crops into the working frame, and the rotation / bbox-jitter
// / mirror augmentation family.

namespace casc {

struct BBox {
  double left = 0, top = 0, width = 0, height = 0;

  Point center() const { return {left + width / 2.0, top + height / 2.0}; }
};

struct Sample {
  Image image;
  LandmarkShape shape;  // ground truth in this image's pixel coordinates
  BBox bbox;
};

// --- ibug .pts format -------------------------------------------------------
// version: 1
// n_points: p
// {
// x y          (p lines, 1-based coordinates)
// }

inline LandmarkShape parse_pts(std::istream& in, const std::string& origin = "pts") {
  auto fail = [&](int line, const std::string& what) -> void {
    throw data_error(origin + ":" + std::to_string(line) + ": " + what);
  };
  std::string line;
  int lineno = 0;

  auto next_line = [&]() -> std::string {
    if (!std::getline(in, line)) fail(lineno + 1, "unexpected end of file");
    ++lineno;
    return line;
  };

  std::string header = next_line();
  if (header.rfind("version:", 0) != 0) fail(lineno, "expected 'version:' header");
  std::string npts = next_line();
  if (npts.rfind("n_points:", 0) != 0) fail(lineno, "expected 'n_points:' header");
  long p = 0;
  try {
    p = std::stol(npts.substr(9));
  } catch (const std::exception&) {
    fail(lineno, "unreadable point count");
  }
  if (p <= 0) fail(lineno, "point count must be positive");
  std::string brace = next_line();
  if (brace.find('{') == std::string::npos) fail(lineno, "expected '{'");

  LandmarkShape shape;
  shape.points.reserve(static_cast<std::size_t>(p));
  for (long i = 0; i < p; ++i) {
    std::istringstream ls(next_line());
    double x = 0, y = 0;
    if (!(ls >> x >> y)) fail(lineno, "expected two numeric coordinates");
    shape.points.push_back({x - 1.0, y - 1.0});  // file is 1-based
  }
  std::string closing = next_line();
  if (closing.find('}') == std::string::npos)
    fail(lineno, "expected '}' after " + std::to_string(p) + " points");
  return shape;
}

inline LandmarkShape load_pts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open pts file: " + path);
  return parse_pts(in, path);
}

inline void serialize_pts(const LandmarkShape& shape, std::ostream& out) {
  out << "version: 1\n";
  out << "n_points: " << shape.size() << "\n{\n";
  out.precision(17);
  for (const Point& p : shape.points) out << p.x + 1.0 << " " << p.y + 1.0 << "\n";
  out << "}\n";
}

inline void save_pts(const LandmarkShape& shape, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write pts file: " + path);
  serialize_pts(shape, out);
}

// --- crop into the working frame --------------------------------------------

struct CropResult {
  Sample sample;          // image resized to T x T, shape in that frame
  Affine2 to_working;     // original -> working coordinates
  Affine2 to_original;    // working -> original coordinates
};

/// Expands the bbox by pad_fraction * bbox_width on all four sides, crops
/// (zero fill outside the source) and resizes to out_size x out_size. The
/// shape maps through the same affine.
inline CropResult crop_and_resize(const Sample& s, std::int64_t out_size,
                                  double pad_fraction = 0.2) {
  if (out_size <= 0) throw contract_error("crop_and_resize: output size must be positive");
  const double pad = pad_fraction * s.bbox.width;
  const double win_l = s.bbox.left - pad;
  const double win_t = s.bbox.top - pad;
  const double win_w = s.bbox.width + 2.0 * pad;
  const double win_h = s.bbox.height + 2.0 * pad;
  if (win_w <= 0.0 || win_h <= 0.0)
    throw data_error("degenerate crop window (zero area)");
  if (win_l + win_w <= 0.0 || win_t + win_h <= 0.0 ||
      win_l >= static_cast<double>(s.image.width) ||
      win_t >= static_cast<double>(s.image.height))
    throw data_error("crop window lies entirely outside the image");

  const double t = static_cast<double>(out_size);
  Affine2 fwd;  // original -> working
  fwd.a = t / win_w;
  fwd.d = t / win_h;
  fwd.tx = -win_l * fwd.a;
  fwd.ty = -win_t * fwd.d;
  const Affine2 inv = fwd.inverse();

  CropResult r;
  r.to_working = fwd;
  r.to_original = inv;
  r.sample.image = warp_affine(s.image, inv, out_size, out_size);
  r.sample.shape = transform_shape(s.shape, fwd);
  const Point tl = fwd.apply({s.bbox.left, s.bbox.top});
  const Point br = fwd.apply({s.bbox.left + s.bbox.width, s.bbox.top + s.bbox.height});
  r.sample.bbox = {tl.x, tl.y, br.x - tl.x, br.y - tl.y};
  return r;
}

// --- augmentation ------------------------------------------------------------

/// Rotation about the bbox center; the bbox becomes the axis-aligned box of
/// its rotated corners, the canvas keeps its size.
inline Sample rotate_sample(const Sample& s, double degrees) {
  if (!std::isfinite(degrees)) throw contract_error("rotation angle must be finite");
  if (degrees == 0.0) return s;
  const Affine2 fwd = Affine2::rotation_about(s.bbox.center(), degrees);
  const Affine2 inv = fwd.inverse();
  Sample out;
  out.image = warp_affine(s.image, inv, s.image.height, s.image.width);
  out.shape = transform_shape(s.shape, fwd);
  const std::array<Point, 4> corners = {
      Point{s.bbox.left, s.bbox.top},
      Point{s.bbox.left + s.bbox.width, s.bbox.top},
      Point{s.bbox.left, s.bbox.top + s.bbox.height},
      Point{s.bbox.left + s.bbox.width, s.bbox.top + s.bbox.height}};
  double minx = 1e300, miny = 1e300, maxx = -1e300, maxy = -1e300;
  for (Point c : corners) {
    const Point m = fwd.apply(c);
    minx = std::min(minx, m.x);
    miny = std::min(miny, m.y);
    maxx = std::max(maxx, m.x);
    maxy = std::max(maxy, m.y);
  }
  out.bbox = {minx, miny, maxx - minx, maxy - miny};
  return out;
}

/// Scales the box sides by u ~ U[0.9,1.1] and shifts the center by
/// +-5% of each side. `Uniform` is any callable (lo,hi) -> double.
template <class Uniform>
BBox jitter_bbox(const BBox& box, Uniform&& uniform) {
  const double u = uniform(0.9, 1.1);
  const double vx = uniform(-0.05, 0.05) * box.width;
  const double vy = uniform(-0.05, 0.05) * box.height;
  const Point c = box.center();
  BBox out;
  out.width = box.width * u;
  out.height = box.height * u;
  out.left = c.x + vx - out.width / 2.0;
  out.top = c.y + vy - out.height / 2.0;
  return out;
}

/// Left/right landmark exchange table for the 68-point markup.
inline std::vector<std::size_t> mirror_permutation_68() {
  std::vector<std::size_t> p(68);
  for (std::size_t i = 0; i < 68; ++i) p[i] = i;
  auto swap_pair = [&](std::size_t a, std::size_t b) {
    p[a] = b;
    p[b] = a;
  };
  for (std::size_t i = 0; i < 8; ++i) swap_pair(i, 16 - i);          // jaw
  for (std::size_t i = 0; i < 5; ++i) swap_pair(17 + i, 26 - i);     // brows
  swap_pair(31, 35);                                                 // nostrils
  swap_pair(32, 34);
  swap_pair(36, 45);                                                 // eyes
  swap_pair(37, 44);
  swap_pair(38, 43);
  swap_pair(39, 42);
  swap_pair(40, 47);
  swap_pair(41, 46);
  swap_pair(48, 54);                                                 // outer mouth
  swap_pair(49, 53);
  swap_pair(50, 52);
  swap_pair(55, 59);
  swap_pair(56, 58);
  swap_pair(60, 64);                                                 // inner mouth
  swap_pair(61, 63);
  swap_pair(65, 67);
  return p;
}

inline std::vector<std::size_t> identity_permutation(std::size_t p) {
  std::vector<std::size_t> out(p);
  for (std::size_t i = 0; i < p; ++i) out[i] = i;
  return out;
}

inline void check_involution(const std::vector<std::size_t>& perm) {
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= perm.size() || perm[perm[i]] != i)
      throw config_error("mirror permutation is not an involution at index " +
                         std::to_string(i));
  }
}

/// Horizontal flip: x <- (W-1) - x, landmark order re-labeled so left/right
/// features keep their semantic indices.
inline Sample mirror_sample(const Sample& s, const std::vector<std::size_t>& perm) {
  if (perm.size() != s.shape.size())
    throw config_error("mirror permutation size " + std::to_string(perm.size()) +
                       " does not match landmark count " +
                       std::to_string(s.shape.size()));
  check_involution(perm);
  Sample out;
  out.image = Image(s.image.height, s.image.width);
  for (std::int64_t y = 0; y < s.image.height; ++y)
    for (std::int64_t x = 0; x < s.image.width; ++x)
      out.image.at(y, x) = s.image.at(y, s.image.width - 1 - x);
  const double w1 = static_cast<double>(s.image.width) - 1.0;
  out.shape.points.resize(s.shape.size());
  for (std::size_t i = 0; i < s.shape.size(); ++i) {
    const Point& src = s.shape.points[perm[i]];
    out.shape.points[i] = {w1 - src.x, src.y};
  }
  out.bbox = {w1 - (s.bbox.left + s.bbox.width), s.bbox.top, s.bbox.width,
              s.bbox.height};
  return out;
}

struct AugmentConfig {
  std::vector<double> angles = {-30, -25, -20, -15, -10, -5, 0,
                                5,   10,  15,  20,  25,  30};
  int jitter_count = 2;
  bool mirror = true;
  std::vector<std::size_t> mirror_perm;  // empty -> identity for the dataset p

  void validate() const {
    bool has_zero = false;
    for (double a : angles)
      if (a == 0.0) has_zero = true;
    if (!has_zero) throw config_error("augmentation angle list must contain 0");
    if (jitter_count < 1) throw config_error("jitter count must be >= 1");
  }

  std::size_t multiplicity() const {
    return angles.size() * static_cast<std::size_t>(jitter_count) *
           (mirror ? 2u : 1u);
  }
};

/// Expands every sample by |angles| x jitter_count x (mirror ? 2 : 1)
/// variants. Variant rng streams derive from (seed, sample, variant) so the
/// expansion is reproducible and order-independent.
inline std::vector<Sample> augment_dataset(const std::vector<Sample>& samples,
                                           const AugmentConfig& cfg,
                                           std::uint64_t seed) {
  cfg.validate();
  std::vector<Sample> out;
  out.reserve(samples.size() * cfg.multiplicity());
  for (std::size_t si = 0; si < samples.size(); ++si) {
    const Sample& s = samples[si];
    const std::vector<std::size_t> perm =
        cfg.mirror_perm.empty() ? identity_permutation(s.shape.size())
                                : cfg.mirror_perm;
    std::size_t variant = 0;
    for (double angle : cfg.angles) {
      const Sample rotated = rotate_sample(s, angle);
      for (int j = 0; j < cfg.jitter_count; ++j) {
        Rng rng = derive_rng(seed, si, variant);
        Sample jittered = rotated;
        jittered.bbox = jitter_bbox(rotated.bbox,
                                    [&](double lo, double hi) { return rng.uniform(lo, hi); });
        const int mirror_variants = cfg.mirror ? 2 : 1;
        for (int m = 0; m < mirror_variants; ++m) {
          out.push_back(m == 0 ? jittered : mirror_sample(jittered, perm));
          ++variant;
        }
      }
    }
  }
  return out;
}

// --- dataset manifest ---------------------------------------------------------
// One sample per line: image_path pts_path left top width height
// Relative paths resolve against the manifest's directory.

struct ManifestEntry {
  std::string image_path;
  std::string pts_path;
  BBox bbox;
};

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open manifest: " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!(ls >> e.image_path >> e.pts_path >> e.bbox.left >> e.bbox.top >>
          e.bbox.width >> e.bbox.height))
      throw data_error(path + ":" + std::to_string(lineno) +
                       ": expected 'image pts left top width height'");
    if (e.bbox.width <= 0 || e.bbox.height <= 0)
      throw data_error(path + ":" + std::to_string(lineno) +
                       ": bbox sides must be positive");
    auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    e.image_path = resolve(e.image_path);
    e.pts_path = resolve(e.pts_path);
    entries.push_back(std::move(e));
  }
  return entries;
}

inline std::vector<Sample> load_manifest_samples(const std::string& path) {
  std::vector<Sample> samples;
  for (const ManifestEntry& e : read_manifest(path)) {
    Sample s;
    s.image = read_pnm(e.image_path);
    s.shape = load_pts(e.pts_path);
    s.bbox = e.bbox;
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace casc
