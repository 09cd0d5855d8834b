#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "casc/common.hpp"
#include "casc/landmarks.hpp"

namespace casc {

/// Grayscale raster, values in [0,1]. RGB input collapses to the channel
/// average on load.
struct Image {
  std::int64_t height = 0, width = 0;
  std::vector<double> pix;  // row-major

  Image() = default;
  Image(std::int64_t h, std::int64_t w) : height(h), width(w), pix(static_cast<std::size_t>(h * w), 0.0) {}

  double& at(std::int64_t y, std::int64_t x) { return pix[static_cast<std::size_t>(y * width + x)]; }
  double at(std::int64_t y, std::int64_t x) const { return pix[static_cast<std::size_t>(y * width + x)]; }

  /// Bilinear sample; anything outside the raster reads as zero.
  double sample(double x, double y) const {
    const double fx = std::floor(x), fy = std::floor(y);
    const std::int64_t x0 = static_cast<std::int64_t>(fx);
    const std::int64_t y0 = static_cast<std::int64_t>(fy);
    const double ax = x - fx, ay = y - fy;
    auto px = [&](std::int64_t yy, std::int64_t xx) {
      if (yy < 0 || yy >= height || xx < 0 || xx >= width) return 0.0;
      return at(yy, xx);
    };
    return (1 - ay) * ((1 - ax) * px(y0, x0) + ax * px(y0, x0 + 1)) +
           ay * ((1 - ax) * px(y0 + 1, x0) + ax * px(y0 + 1, x0 + 1));
  }
};

/// 2x3 affine map p -> A*p + t.
struct Affine2 {
  double a = 1, b = 0, tx = 0;
  double c = 0, d = 1, ty = 0;

  Point apply(Point p) const { return {a * p.x + b * p.y + tx, c * p.x + d * p.y + ty}; }

  Affine2 inverse() const {
    const double det = a * d - b * c;
    if (det == 0.0) throw contract_error("affine transform is singular");
    Affine2 inv;
    inv.a = d / det;
    inv.b = -b / det;
    inv.c = -c / det;
    inv.d = a / det;
    inv.tx = -(inv.a * tx + inv.b * ty);
    inv.ty = -(inv.c * tx + inv.d * ty);
    return inv;
  }

  static Affine2 rotation_about(Point center, double degrees) {
    const double rad = degrees * kPi / 180.0;
    const double co = std::cos(rad), si = std::sin(rad);
    Affine2 m;
    m.a = co;
    m.b = -si;
    m.c = si;
    m.d = co;
    m.tx = center.x - (co * center.x - si * center.y);
    m.ty = center.y - (si * center.x + co * center.y);
    return m;
  }
};

inline LandmarkShape transform_shape(const LandmarkShape& s, const Affine2& m) {
  LandmarkShape out = s;
  for (Point& p : out.points) p = m.apply(p);
  return out;
}

/// Output pixel (x,y) reads the source at out_to_src(x,y), bilinear with
/// zero fill.
inline Image warp_affine(const Image& src, const Affine2& out_to_src,
                         std::int64_t out_h, std::int64_t out_w) {
  Image out(out_h, out_w);
  for (std::int64_t y = 0; y < out_h; ++y)
    for (std::int64_t x = 0; x < out_w; ++x) {
      const Point p = out_to_src.apply({static_cast<double>(x), static_cast<double>(y)});
      out.at(y, x) = src.sample(p.x, p.y);
    }
  return out;
}

// --- portable pixmap I/O (P5 grayscale / P6 RGB, maxval 255) ---------------

namespace detail {

inline int pnm_token(std::istream& in) {
  // Skips whitespace and '#' comment lines, returns a nonnegative integer.
  for (;;) {
    int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  int value = 0;
  if (!(in >> value)) throw data_error("malformed pnm header");
  return value;
}

}  // namespace detail

inline Image read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open image: " + path);
  char p = 0, kind = 0;
  in.get(p).get(kind);
  if (p != 'P' || (kind != '5' && kind != '6'))
    throw data_error("unsupported image format in " + path + " (want P5 or P6)");
  const int w = detail::pnm_token(in);
  const int h = detail::pnm_token(in);
  const int maxval = detail::pnm_token(in);
  if (maxval != 255) throw data_error("unsupported pnm maxval in " + path);
  in.get();  // single whitespace before raster
  const int chans = kind == '5' ? 1 : 3;
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(chans));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw data_error("truncated pnm raster in " + path);
  Image img(h, w);
  for (std::size_t i = 0; i < img.pix.size(); ++i) {
    if (chans == 1) {
      img.pix[i] = raw[i] / 255.0;
    } else {
      const std::size_t o = 3 * i;
      img.pix[i] = (raw[o] + raw[o + 1] + raw[o + 2]) / (3.0 * 255.0);
    }
  }
  return img;
}

inline void write_pgm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write image: " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> raw(img.pix.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    double v = img.pix[i];
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    raw[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw data_error("failed writing image: " + path);
}

}  // namespace casc
