#pragma once

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "casc/common.hpp"

namespace casc {

/// (batch, channels, height, width) of a dense row-major tensor.
struct Dims {
  std::int64_t n = 0, c = 0, h = 0, w = 0;

  std::int64_t numel() const { return n * c * h * w; }
  bool operator==(const Dims&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

/// Dense 4-d array. `grad`, when present, mirrors `v` element for element.
template <class T>
struct TensorT {
  Dims dims{};
  std::vector<T> v;
  std::optional<std::vector<T>> grad;

  TensorT() = default;
  explicit TensorT(Dims d, T fill = T(0))
      : dims(d), v(static_cast<std::size_t>(d.numel()), fill) {}
  TensorT(Dims d, std::vector<T> values) : dims(d), v(std::move(values)) {
    if (static_cast<std::int64_t>(v.size()) != dims.numel())
      throw shape_error("tensor values length " + std::to_string(v.size()) +
                        " does not match dims " + dims.str());
  }

  static TensorT scalar(T value) { return TensorT({1, 1, 1, 1}, {value}); }
  static TensorT vec(std::vector<T> values) {
    Dims d{1, 1, 1, static_cast<std::int64_t>(values.size())};
    return TensorT(d, std::move(values));
  }

  std::int64_t numel() const { return dims.numel(); }

  std::size_t index(std::int64_t n, std::int64_t c, std::int64_t y,
                    std::int64_t x) const {
    return static_cast<std::size_t>(((n * dims.c + c) * dims.h + y) * dims.w + x);
  }
  T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) {
    return v[index(n, c, y, x)];
  }
  const T& at(std::int64_t n, std::int64_t c, std::int64_t y,
              std::int64_t x) const {
    return v[index(n, c, y, x)];
  }

  /// Zeroed gradient buffer matching dims; idempotent allocation.
  std::vector<T>& ensure_grad() {
    if (!grad) grad.emplace(v.size(), T(0));
    return *grad;
  }
  void reset_grad() { grad.emplace(v.size(), T(0)); }

  bool same_dims(const TensorT& o) const { return dims == o.dims; }
};

using Tensor = TensorT<double>;

template <class T>
TensorT<T> random_tensor(Dims d, Rng& rng, T lo = T(-1), T hi = T(1)) {
  TensorT<T> t(d);
  for (auto& x : t.v) x = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

/// Shuffled lattice of distinct values with a fixed minimum gap between
/// any two entries. Gradient probes use this to stay away from max ties.
template <class T>
TensorT<T> lattice_tensor(Dims d, Rng& rng, T step = T(0.01)) {
  TensorT<T> t(d);
  const std::int64_t n = d.numel();
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  for (std::int64_t i = n - 1; i > 0; --i) {
    std::uint64_t j = rng.below(static_cast<std::uint64_t>(i + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[j]);
  }
  for (std::int64_t i = 0; i < n; ++i)
    t.v[static_cast<std::size_t>(i)] = static_cast<T>(order[static_cast<std::size_t>(i)]) * step;
  return t;
}

}  // namespace casc
