#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "casc/landmarks.hpp"
#include "casc/tensor.hpp"

// Landmark-specific differentiable mechanisms: the per-landmark target
// distribution, spatial softmax over a map, the distribution softmax loss,
// Shape-Indexed Pooling and the argmax landmark read-out.

namespace casc {

// ---------------------------------------------------------------------------
// Target distribution: value halves per unit Chebyshev distance from the
// rounded landmark cell, then the map is normalized to sum 1.
// ---------------------------------------------------------------------------

/// One H x W probability map stored as a (1,1,H,W) tensor.
inline Tensor build_target_map(Point landmark, std::int64_t height,
                               std::int64_t width) {
  if (height <= 0 || width <= 0)
    throw contract_error("target map dims must be positive, got " +
                         std::to_string(height) + "x" + std::to_string(width));
  const long cx = clamp_index(round_half_up(landmark.x), 0, width - 1);
  const long cy = clamp_index(round_half_up(landmark.y), 0, height - 1);
  Tensor q({1, 1, height, width});
  double sum = 0.0;
  for (std::int64_t r = 0; r < height; ++r)
    for (std::int64_t c = 0; c < width; ++c) {
      const long d = std::max(std::labs(static_cast<long>(c) - cx),
                              std::labs(static_cast<long>(r) - cy));
      const double val = std::ldexp(1.0, -static_cast<int>(d));  // exact 0.5^d
      q.at(0, 0, r, c) = val;
      sum += val;
    }
  for (auto& x : q.v) x /= sum;
  return q;
}

// ---------------------------------------------------------------------------
// Spatial softmax over one map, max-subtracted for overflow safety.
// ---------------------------------------------------------------------------

inline void spatial_softmax_span(std::span<const double> logits,
                                 std::span<double> out) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    z += out[i];
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= z;
}

/// Softmax each (n,c) map over its spatial extent.
inline Tensor spatial_softmax(const Tensor& logits) {
  Tensor out(logits.dims);
  const std::int64_t plane = logits.dims.h * logits.dims.w;
  const std::int64_t maps = logits.dims.n * logits.dims.c;
  for (std::int64_t m = 0; m < maps; ++m) {
    const std::size_t off = static_cast<std::size_t>(m * plane);
    spatial_softmax_span({logits.v.data() + off, static_cast<std::size_t>(plane)},
                         {out.v.data() + off, static_cast<std::size_t>(plane)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Distribution softmax loss: -sum Q log softmax(A), evaluated via
// log-sum-exp so the log never underflows. Gradient w.r.t. A is
// softmax(A) - Q.
// ---------------------------------------------------------------------------

struct DistributionLoss {
  double loss = 0.0;
  std::vector<double> grad;  // same length as the logits map
};

inline DistributionLoss distribution_softmax_loss(std::span<const double> logits,
                                                  std::span<const double> q) {
  if (logits.size() != q.size())
    throw shape_error("logits and target map sizes differ: " +
                      std::to_string(logits.size()) + " vs " +
                      std::to_string(q.size()));
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double a : logits) z += std::exp(a - m);
  const double lse = m + std::log(z);
  DistributionLoss r;
  r.grad.resize(logits.size());
  double qa = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    qa += q[i] * logits[i];
    r.grad[i] = std::exp(logits[i] - lse) - q[i];
  }
  r.loss = lse - qa;  // valid because sum(q) == 1
  return r;
}

inline DistributionLoss distribution_softmax_loss(const Tensor& logits,
                                                  const Tensor& q) {
  if (!(logits.dims == q.dims))
    throw shape_error("loss map dims differ: " + logits.dims.str() + " vs " +
                      q.dims.str());
  return distribution_softmax_loss(std::span<const double>(logits.v),
                                   std::span<const double>(q.v));
}

inline double entropy(std::span<const double> q) {
  double h = 0.0;
  for (double p : q)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

// ---------------------------------------------------------------------------
// Shape-Indexed Pooling: max over a (2b+1)-sided window centered at each
// rounded landmark, per channel; windows clamp at the map border. Output is
// landmark-major, channel-minor: out[j*M + m].
// ---------------------------------------------------------------------------

struct SipConfig {
  int halfwidth = 3;               // b; window side is 2b+1
  std::string tap = "deconv7";     // feature layer the windows read from
};

struct SipRecord {
  Dims featmap_dims{};
  std::vector<std::int64_t> argmax;  // flat featmap index per output element
};

struct SipResult {
  std::vector<double> features;  // length M*p
  SipRecord record;
};

/// featmaps must be a single-image tensor (1,M,H,W).
inline SipResult shape_indexed_pool(const Tensor& featmaps,
                                    const LandmarkShape& shape,
                                    const SipConfig& cfg) {
  if (featmaps.dims.h <= 0 || featmaps.dims.w <= 0 || featmaps.dims.c <= 0)
    throw contract_error("shape_indexed_pool on empty feature map " +
                         featmaps.dims.str());
  if (featmaps.dims.n != 1)
    throw contract_error("shape_indexed_pool expects a single-image tensor, got " +
                         featmaps.dims.str());
  if (cfg.halfwidth < 0)
    throw contract_error("sip halfwidth must be nonnegative");
  const std::int64_t M = featmaps.dims.c, H = featmaps.dims.h, W = featmaps.dims.w;
  const std::int64_t b = cfg.halfwidth;
  SipResult r;
  r.features.resize(shape.size() * static_cast<std::size_t>(M));
  r.record.featmap_dims = featmaps.dims;
  r.record.argmax.resize(r.features.size());
  for (std::size_t j = 0; j < shape.size(); ++j) {
    const long cx = clamp_index(round_half_up(shape.points[j].x), 0, W - 1);
    const long cy = clamp_index(round_half_up(shape.points[j].y), 0, H - 1);
    const std::int64_t y0 = std::max<std::int64_t>(0, cy - b);
    const std::int64_t y1 = std::min<std::int64_t>(H - 1, cy + b);
    const std::int64_t x0 = std::max<std::int64_t>(0, cx - b);
    const std::int64_t x1 = std::min<std::int64_t>(W - 1, cx + b);
    for (std::int64_t m = 0; m < M; ++m) {
      std::int64_t best = static_cast<std::int64_t>(featmaps.index(0, m, y0, x0));
      double bv = featmaps.v[static_cast<std::size_t>(best)];
      for (std::int64_t y = y0; y <= y1; ++y)
        for (std::int64_t x = x0; x <= x1; ++x) {
          const std::int64_t i = static_cast<std::int64_t>(featmaps.index(0, m, y, x));
          if (featmaps.v[static_cast<std::size_t>(i)] > bv) {
            bv = featmaps.v[static_cast<std::size_t>(i)];
            best = i;
          }
        }
      const std::size_t o = j * static_cast<std::size_t>(M) + static_cast<std::size_t>(m);
      r.features[o] = bv;
      r.record.argmax[o] = best;
    }
  }
  return r;
}

/// Scatter the upstream gradient back to the argmax cells. The shape input
/// receives no gradient by definition; only feature values do.
inline Tensor shape_indexed_pool_backward(std::span<const double> upstream,
                                          const SipRecord& record) {
  if (upstream.size() != record.argmax.size())
    throw contract_error("sip backward: upstream length " +
                         std::to_string(upstream.size()) +
                         " does not match argmax record of " +
                         std::to_string(record.argmax.size()));
  Tensor g(record.featmap_dims);
  for (std::size_t i = 0; i < upstream.size(); ++i)
    g.v[static_cast<std::size_t>(record.argmax[i])] += upstream[i];
  return g;
}

// ---------------------------------------------------------------------------
// argmax read-out: (x, y) of the largest value; ties go to the smallest
// row-major index.
// ---------------------------------------------------------------------------

inline Point argmax_location(std::span<const double> map, std::int64_t height,
                             std::int64_t width) {
  if (height <= 0 || width <= 0 ||
      map.size() != static_cast<std::size_t>(height * width))
    throw contract_error("argmax_location map size mismatch");
  std::size_t best = 0;
  for (std::size_t i = 1; i < map.size(); ++i)
    if (map[i] > map[best]) best = i;
  return {static_cast<double>(best % static_cast<std::size_t>(width)),
          static_cast<double>(best / static_cast<std::size_t>(width))};
}

/// Per-channel argmax over a (1,p,H,W) stack of probability maps.
inline LandmarkShape predict_shape_from_maps(const Tensor& maps) {
  const std::int64_t plane = maps.dims.h * maps.dims.w;
  LandmarkShape s;
  s.points.reserve(static_cast<std::size_t>(maps.dims.c));
  for (std::int64_t ch = 0; ch < maps.dims.c; ++ch) {
    const std::size_t off = static_cast<std::size_t>(ch * plane);
    s.points.push_back(argmax_location(
        {maps.v.data() + off, static_cast<std::size_t>(plane)}, maps.dims.h,
        maps.dims.w));
  }
  return s;
}

}  // namespace casc
