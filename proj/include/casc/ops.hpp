#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "casc/tensor.hpp"

// Layer primitives as pure forward/backward kernels on tensors.
// The autodiff wrappers in autodiff.hpp compose these; tests drive them
// directly. All kernels are deterministic: plain loops, fixed traversal
// order, ties broken at the smallest row-major index.

namespace casc {

// ---------------------------------------------------------------------------
// conv2d: stride 1, zero padding floor(k/2) on all sides, so output spatial
// dims equal input dims. kernels: (out_channels, in_channels, k, k).
// ---------------------------------------------------------------------------

template <class T>
void check_conv_args(const TensorT<T>& in, const TensorT<T>& ker) {
  if (ker.dims.h != ker.dims.w)
    throw shape_error("conv2d kernel must be square, got " + ker.dims.str());
  if (ker.dims.h % 2 == 0)
    throw shape_error("conv2d kernel size must be odd, got " + ker.dims.str());
  if (ker.dims.c != in.dims.c)
    throw shape_error("conv2d channel mismatch: input " + in.dims.str() +
                      " vs kernels " + ker.dims.str());
}

template <class T>
TensorT<T> conv2d_forward(const TensorT<T>& in, const TensorT<T>& ker) {
  check_conv_args(in, ker);
  const std::int64_t n = in.dims.n, ci = in.dims.c, h = in.dims.h, w = in.dims.w;
  const std::int64_t co = ker.dims.n, k = ker.dims.h, pad = k / 2;
  TensorT<T> out({n, co, h, w});
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t oc = 0; oc < co; ++oc)
      for (std::int64_t ic = 0; ic < ci; ++ic)
        for (std::int64_t ky = 0; ky < k; ++ky) {
          const std::int64_t y0 = std::max<std::int64_t>(0, pad - ky);
          const std::int64_t y1 = std::min<std::int64_t>(h, h + pad - ky);
          for (std::int64_t kx = 0; kx < k; ++kx) {
            const T wgt = ker.at(oc, ic, ky, kx);
            if (wgt == T(0)) continue;
            const std::int64_t x0 = std::max<std::int64_t>(0, pad - kx);
            const std::int64_t x1 = std::min<std::int64_t>(w, w + pad - kx);
            for (std::int64_t y = y0; y < y1; ++y) {
              const T* src = &in.v[in.index(b, ic, y + ky - pad, x0 + kx - pad)];
              T* dst = &out.v[out.index(b, oc, y, x0)];
              for (std::int64_t x = x0; x < x1; ++x) *dst++ += wgt * *src++;
            }
          }
        }
  return out;
}

template <class T>
void conv2d_backward(const TensorT<T>& in, const TensorT<T>& ker,
                     const std::vector<T>& gout, std::vector<T>* gin,
                     std::vector<T>* gker) {
  check_conv_args(in, ker);
  const std::int64_t n = in.dims.n, ci = in.dims.c, h = in.dims.h, w = in.dims.w;
  const std::int64_t co = ker.dims.n, k = ker.dims.h, pad = k / 2;
  TensorT<T> g({n, co, h, w});  // dims helper for indexing into gout
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t oc = 0; oc < co; ++oc)
      for (std::int64_t ic = 0; ic < ci; ++ic)
        for (std::int64_t ky = 0; ky < k; ++ky) {
          const std::int64_t y0 = std::max<std::int64_t>(0, pad - ky);
          const std::int64_t y1 = std::min<std::int64_t>(h, h + pad - ky);
          for (std::int64_t kx = 0; kx < k; ++kx) {
            const std::int64_t x0 = std::max<std::int64_t>(0, pad - kx);
            const std::int64_t x1 = std::min<std::int64_t>(w, w + pad - kx);
            const T wgt = ker.at(oc, ic, ky, kx);
            T acc = T(0);
            for (std::int64_t y = y0; y < y1; ++y) {
              const std::size_t src_i = in.index(b, ic, y + ky - pad, x0 + kx - pad);
              const std::size_t out_i = g.index(b, oc, y, x0);
              const T* go = &gout[out_i];
              if (gin) {
                T* gi = &(*gin)[src_i];
                for (std::int64_t x = x0; x < x1; ++x) gi[x - x0] += wgt * go[x - x0];
              }
              if (gker) {
                const T* src = &in.v[src_i];
                for (std::int64_t x = x0; x < x1; ++x) acc += src[x - x0] * go[x - x0];
              }
            }
            if (gker) (*gker)[ker.index(oc, ic, ky, kx)] += acc;
          }
        }
}

// ---------------------------------------------------------------------------
// maxpool2: 2x2 windows, stride 2. Requires even spatial dims. The argmax
// map (flat input indices) feeds the backward scatter.
// ---------------------------------------------------------------------------

template <class T>
struct PoolResult {
  TensorT<T> out;
  std::vector<std::int64_t> argmax;  // per output element, flat index into input
};

template <class T>
PoolResult<T> maxpool2_forward(const TensorT<T>& in) {
  if (in.dims.h % 2 != 0 || in.dims.w % 2 != 0)
    throw shape_error("maxpool2 requires even spatial dims, got " + in.dims.str());
  const std::int64_t n = in.dims.n, c = in.dims.c;
  const std::int64_t oh = in.dims.h / 2, ow = in.dims.w / 2;
  PoolResult<T> r{TensorT<T>({n, c, oh, ow}), {}};
  r.argmax.resize(static_cast<std::size_t>(r.out.numel()));
  std::size_t oi = 0;
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t x = 0; x < ow; ++x, ++oi) {
          std::int64_t best = static_cast<std::int64_t>(in.index(b, ch, 2 * y, 2 * x));
          T bv = in.v[static_cast<std::size_t>(best)];
          for (std::int64_t dy = 0; dy < 2; ++dy)
            for (std::int64_t dx = 0; dx < 2; ++dx) {
              const std::int64_t i =
                  static_cast<std::int64_t>(in.index(b, ch, 2 * y + dy, 2 * x + dx));
              if (in.v[static_cast<std::size_t>(i)] > bv) {  // ties keep first
                bv = in.v[static_cast<std::size_t>(i)];
                best = i;
              }
            }
          r.out.v[oi] = bv;
          r.argmax[oi] = best;
        }
  return r;
}

template <class T>
void maxpool2_backward(const std::vector<T>& gout,
                       const std::vector<std::int64_t>& argmax,
                       std::vector<T>* gin) {
  for (std::size_t i = 0; i < argmax.size(); ++i)
    (*gin)[static_cast<std::size_t>(argmax[i])] += gout[i];
}

// ---------------------------------------------------------------------------
// deconv2d (transposed convolution): kernel 4, stride 2, padding 1, the
// unique combination mapping h x w onto exactly 2h x 2w.
// kernels: (in_channels, out_channels, 4, 4).
// ---------------------------------------------------------------------------

inline constexpr std::int64_t kDeconvKernel = 4;
inline constexpr std::int64_t kDeconvStride = 2;
inline constexpr std::int64_t kDeconvPad = 1;

template <class T>
void check_deconv_args(const TensorT<T>& in, const TensorT<T>& ker) {
  if (ker.dims.h != kDeconvKernel || ker.dims.w != kDeconvKernel)
    throw shape_error("deconv2d kernel must be 4x4, got " + ker.dims.str());
  if (ker.dims.n != in.dims.c)
    throw shape_error("deconv2d channel mismatch: input " + in.dims.str() +
                      " vs kernels " + ker.dims.str());
}

template <class T>
TensorT<T> deconv2d_forward(const TensorT<T>& in, const TensorT<T>& ker) {
  check_deconv_args(in, ker);
  const std::int64_t n = in.dims.n, ci = in.dims.c, h = in.dims.h, w = in.dims.w;
  const std::int64_t co = ker.dims.c, oh = 2 * h, ow = 2 * w;
  TensorT<T> out({n, co, oh, ow});
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t ic = 0; ic < ci; ++ic)
      for (std::int64_t oc = 0; oc < co; ++oc)
        for (std::int64_t ky = 0; ky < kDeconvKernel; ++ky)
          for (std::int64_t kx = 0; kx < kDeconvKernel; ++kx) {
            const T wgt = ker.at(ic, oc, ky, kx);
            if (wgt == T(0)) continue;
            for (std::int64_t y = 0; y < h; ++y) {
              const std::int64_t oy = kDeconvStride * y - kDeconvPad + ky;
              if (oy < 0 || oy >= oh) continue;
              for (std::int64_t x = 0; x < w; ++x) {
                const std::int64_t ox = kDeconvStride * x - kDeconvPad + kx;
                if (ox < 0 || ox >= ow) continue;
                out.at(b, oc, oy, ox) += wgt * in.at(b, ic, y, x);
              }
            }
          }
  return out;
}

template <class T>
void deconv2d_backward(const TensorT<T>& in, const TensorT<T>& ker,
                       const std::vector<T>& gout, std::vector<T>* gin,
                       std::vector<T>* gker) {
  check_deconv_args(in, ker);
  const std::int64_t n = in.dims.n, ci = in.dims.c, h = in.dims.h, w = in.dims.w;
  const std::int64_t co = ker.dims.c, oh = 2 * h, ow = 2 * w;
  TensorT<T> g({n, co, oh, ow});
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t ic = 0; ic < ci; ++ic)
      for (std::int64_t oc = 0; oc < co; ++oc)
        for (std::int64_t ky = 0; ky < kDeconvKernel; ++ky)
          for (std::int64_t kx = 0; kx < kDeconvKernel; ++kx) {
            const T wgt = ker.at(ic, oc, ky, kx);
            T acc = T(0);
            for (std::int64_t y = 0; y < h; ++y) {
              const std::int64_t oy = kDeconvStride * y - kDeconvPad + ky;
              if (oy < 0 || oy >= oh) continue;
              for (std::int64_t x = 0; x < w; ++x) {
                const std::int64_t ox = kDeconvStride * x - kDeconvPad + kx;
                if (ox < 0 || ox >= ow) continue;
                const T go = gout[g.index(b, oc, oy, ox)];
                if (gin) (*gin)[in.index(b, ic, y, x)] += wgt * go;
                if (gker) acc += in.at(b, ic, y, x) * go;
              }
            }
            if (gker) (*gker)[ker.index(ic, oc, ky, kx)] += acc;
          }
}

// ---------------------------------------------------------------------------
// fully_connected: out = W x + b with x stored as (1,1,1,len), W as
// (1,1,rows,cols), b as (1,1,1,rows).
// ---------------------------------------------------------------------------

template <class T>
void check_fc_args(const TensorT<T>& wgt, const TensorT<T>& x, const TensorT<T>& b) {
  if (wgt.dims.w != x.numel())
    throw shape_error("fully_connected: weight cols " + wgt.dims.str() +
                      " vs input " + x.dims.str());
  if (b.numel() != wgt.dims.h)
    throw shape_error("fully_connected: bias " + b.dims.str() + " vs weight rows " +
                      wgt.dims.str());
}

template <class T>
TensorT<T> fully_connected_forward(const TensorT<T>& wgt, const TensorT<T>& x,
                                   const TensorT<T>& b) {
  check_fc_args(wgt, x, b);
  const std::int64_t rows = wgt.dims.h, cols = wgt.dims.w;
  TensorT<T> out({1, 1, 1, rows});
  for (std::int64_t r = 0; r < rows; ++r) {
    T acc = b.v[static_cast<std::size_t>(r)];
    const T* wr = &wgt.v[static_cast<std::size_t>(r * cols)];
    for (std::int64_t c = 0; c < cols; ++c) acc += wr[c] * x.v[static_cast<std::size_t>(c)];
    out.v[static_cast<std::size_t>(r)] = acc;
  }
  return out;
}

template <class T>
void fully_connected_backward(const TensorT<T>& wgt, const TensorT<T>& x,
                              const std::vector<T>& gout, std::vector<T>* gw,
                              std::vector<T>* gx, std::vector<T>* gb) {
  const std::int64_t rows = wgt.dims.h, cols = wgt.dims.w;
  for (std::int64_t r = 0; r < rows; ++r) {
    const T go = gout[static_cast<std::size_t>(r)];
    if (gb) (*gb)[static_cast<std::size_t>(r)] += go;
    const T* wr = &wgt.v[static_cast<std::size_t>(r * cols)];
    for (std::int64_t c = 0; c < cols; ++c) {
      if (gw) (*gw)[static_cast<std::size_t>(r * cols + c)] += go * x.v[static_cast<std::size_t>(c)];
      if (gx) (*gx)[static_cast<std::size_t>(c)] += go * wr[c];
    }
  }
}

// ---------------------------------------------------------------------------
// relu
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> relu_forward(const TensorT<T>& in) {
  TensorT<T> out(in.dims);
  for (std::size_t i = 0; i < in.v.size(); ++i)
    out.v[i] = in.v[i] > T(0) ? in.v[i] : T(0);
  return out;
}

template <class T>
void relu_backward(const TensorT<T>& in, const std::vector<T>& gout,
                   std::vector<T>* gin) {
  for (std::size_t i = 0; i < in.v.size(); ++i)
    if (in.v[i] > T(0)) (*gin)[i] += gout[i];
}

}  // namespace casc
