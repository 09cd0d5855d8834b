#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "casc/ops.hpp"
#include "casc/landmark_ops.hpp"
#include "casc/tensor.hpp"

// Reverse-mode autodiff over a DAG of shared_ptr nodes. Ops record a
// closure that scatter-adds into their inputs' gradients; backward() runs
// the closures once each, in reverse topological order, which makes the
// accumulation deterministic.

namespace casc {

struct Var;
using VarPtr = std::shared_ptr<Var>;

struct Var {
  Tensor t;
  bool requires_grad = false;  // leaf parameter flag
  bool needs_grad = false;     // requires_grad or downstream of one
  std::vector<VarPtr> inputs;
  std::function<void(Var&)> backprop;

  explicit Var(Tensor value) : t(std::move(value)) {}

  std::vector<double>& grad() { return t.ensure_grad(); }
  const std::vector<double>& value() const { return t.v; }
};

inline VarPtr make_leaf(Tensor value, bool requires_grad = false) {
  auto v = std::make_shared<Var>(std::move(value));
  v->requires_grad = requires_grad;
  v->needs_grad = requires_grad;
  return v;
}

inline VarPtr make_node(Tensor value, std::vector<VarPtr> inputs,
                        std::function<void(Var&)> backprop) {
  auto v = std::make_shared<Var>(std::move(value));
  v->inputs = std::move(inputs);
  for (const VarPtr& in : v->inputs)
    if (in->needs_grad) v->needs_grad = true;
  if (v->needs_grad) v->backprop = std::move(backprop);
  return v;
}

/// Gradients of every reachable node are reset and then populated exactly
/// once. The loss must be scalar.
inline void backward(const VarPtr& loss) {
  if (loss->t.numel() != 1)
    throw contract_error("backward requires a scalar loss, got " +
                         loss->t.dims.str());
  std::vector<Var*> order;
  std::unordered_set<Var*> seen;
  std::vector<std::pair<Var*, std::size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Var* in = node->inputs[next++].get();
      if (seen.insert(in).second) stack.push_back({in, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Var* n : order) n->t.reset_grad();
  (*loss->t.grad)[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop(**it);
}

// --- op wrappers -----------------------------------------------------------

inline VarPtr conv2d(const VarPtr& x, const VarPtr& ker) {
  Tensor out = conv2d_forward(x->t, ker->t);
  return make_node(std::move(out), {x, ker}, [x = x.get(), k = ker.get()](Var& self) {
    conv2d_backward(x->t, k->t, *self.t.grad,
                    x->needs_grad ? &x->grad() : nullptr,
                    k->needs_grad ? &k->grad() : nullptr);
  });
}

/// Adds a per-channel bias (1,1,1,C) across a (n,C,h,w) activation.
inline VarPtr bias_add(const VarPtr& x, const VarPtr& b) {
  if (b->t.numel() != x->t.dims.c)
    throw shape_error("bias_add: bias " + b->t.dims.str() + " vs activation " +
                      x->t.dims.str());
  Tensor out = x->t;
  out.grad.reset();
  const std::int64_t plane = out.dims.h * out.dims.w;
  for (std::int64_t n = 0; n < out.dims.n; ++n)
    for (std::int64_t c = 0; c < out.dims.c; ++c) {
      double* dst = &out.v[out.index(n, c, 0, 0)];
      const double bv = b->t.v[static_cast<std::size_t>(c)];
      for (std::int64_t i = 0; i < plane; ++i) dst[i] += bv;
    }
  return make_node(std::move(out), {x, b}, [x = x.get(), b = b.get()](Var& self) {
    const std::vector<double>& g = *self.t.grad;
    if (x->needs_grad) {
      auto& gx = x->grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (b->needs_grad) {
      auto& gb = b->grad();
      const Dims d = self.t.dims;
      const std::int64_t plane = d.h * d.w;
      for (std::int64_t n = 0; n < d.n; ++n)
        for (std::int64_t c = 0; c < d.c; ++c) {
          const double* src = &g[self.t.index(n, c, 0, 0)];
          double acc = 0.0;
          for (std::int64_t i = 0; i < plane; ++i) acc += src[i];
          gb[static_cast<std::size_t>(c)] += acc;
        }
    }
  });
}

inline VarPtr maxpool2(const VarPtr& x) {
  PoolResult<double> r = maxpool2_forward(x->t);
  return make_node(std::move(r.out), {x},
                   [x = x.get(), argmax = std::move(r.argmax)](Var& self) {
                     if (x->needs_grad)
                       maxpool2_backward(*self.t.grad, argmax, &x->grad());
                   });
}

inline VarPtr deconv2d(const VarPtr& x, const VarPtr& ker) {
  Tensor out = deconv2d_forward(x->t, ker->t);
  return make_node(std::move(out), {x, ker}, [x = x.get(), k = ker.get()](Var& self) {
    deconv2d_backward(x->t, k->t, *self.t.grad,
                      x->needs_grad ? &x->grad() : nullptr,
                      k->needs_grad ? &k->grad() : nullptr);
  });
}

inline VarPtr relu(const VarPtr& x) {
  Tensor out = relu_forward(x->t);
  return make_node(std::move(out), {x}, [x = x.get()](Var& self) {
    if (x->needs_grad) relu_backward(x->t, *self.t.grad, &x->grad());
  });
}

inline VarPtr fully_connected(const VarPtr& wgt, const VarPtr& x, const VarPtr& b) {
  Tensor out = fully_connected_forward(wgt->t, x->t, b->t);
  return make_node(std::move(out), {wgt, x, b},
                   [w = wgt.get(), x = x.get(), b = b.get()](Var& self) {
                     fully_connected_backward(w->t, x->t, *self.t.grad,
                                              w->needs_grad ? &w->grad() : nullptr,
                                              x->needs_grad ? &x->grad() : nullptr,
                                              b->needs_grad ? &b->grad() : nullptr);
                   });
}

inline VarPtr add(const VarPtr& a, const VarPtr& b) {
  if (!(a->t.dims == b->t.dims))
    throw shape_error("add dims differ: " + a->t.dims.str() + " vs " +
                      b->t.dims.str());
  Tensor out(a->t.dims);
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = a->t.v[i] + b->t.v[i];
  return make_node(std::move(out), {a, b}, [a = a.get(), b = b.get()](Var& self) {
    const auto& g = *self.t.grad;
    if (a->needs_grad) {
      auto& ga = a->grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b->needs_grad) {
      auto& gb = b->grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

inline VarPtr mul(const VarPtr& a, const VarPtr& b) {
  if (!(a->t.dims == b->t.dims))
    throw shape_error("mul dims differ: " + a->t.dims.str() + " vs " +
                      b->t.dims.str());
  Tensor out(a->t.dims);
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = a->t.v[i] * b->t.v[i];
  return make_node(std::move(out), {a, b}, [a = a.get(), b = b.get()](Var& self) {
    const auto& g = *self.t.grad;
    if (a->needs_grad) {
      auto& ga = a->grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b->t.v[i];
    }
    if (b->needs_grad) {
      auto& gb = b->grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a->t.v[i];
    }
  });
}

inline VarPtr scale(const VarPtr& a, double s) {
  Tensor out(a->t.dims);
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = a->t.v[i] * s;
  return make_node(std::move(out), {a}, [a = a.get(), s](Var& self) {
    if (!a->needs_grad) return;
    auto& ga = a->grad();
    const auto& g = *self.t.grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
  });
}

/// Scalar projection sum(x .* w) with fixed weights; the standard way to
/// collapse an op output to a scalar in a gradient probe.
inline VarPtr dot(const VarPtr& x, Tensor weights) {
  if (!(x->t.dims == weights.dims))
    throw shape_error("dot dims differ: " + x->t.dims.str() + " vs " +
                      weights.dims.str());
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.v.size(); ++i) acc += x->t.v[i] * weights.v[i];
  return make_node(Tensor::scalar(acc), {x},
                   [x = x.get(), w = std::move(weights)](Var& self) {
                     if (!x->needs_grad) return;
                     auto& gx = x->grad();
                     const double g = (*self.t.grad)[0];
                     for (std::size_t i = 0; i < w.v.size(); ++i)
                       gx[i] += g * w.v[i];
                   });
}

/// Sum of squared differences against a fixed target, scaled by `weight`.
inline VarPtr sum_squares_to(const VarPtr& x, Tensor target, double weight = 1.0) {
  if (!(x->t.dims == target.dims))
    throw shape_error("sum_squares_to dims differ: " + x->t.dims.str() + " vs " +
                      target.dims.str());
  double acc = 0.0;
  for (std::size_t i = 0; i < target.v.size(); ++i) {
    const double d = x->t.v[i] - target.v[i];
    acc += d * d;
  }
  return make_node(Tensor::scalar(acc * weight), {x},
                   [x = x.get(), t = std::move(target), weight](Var& self) {
                     if (!x->needs_grad) return;
                     auto& gx = x->grad();
                     const double g = 2.0 * weight * (*self.t.grad)[0];
                     for (std::size_t i = 0; i < t.v.size(); ++i)
                       gx[i] += g * (x->t.v[i] - t.v[i]);
                   });
}

/// Per-map spatial softmax (each (n,c) plane normalized independently).
inline VarPtr spatial_softmax(const VarPtr& logits) {
  Tensor out = spatial_softmax(logits->t);
  return make_node(std::move(out), {logits}, [x = logits.get()](Var& self) {
    if (!x->needs_grad) return;
    auto& gx = x->grad();
    const auto& g = *self.t.grad;
    const auto& y = self.t.v;
    const std::int64_t plane = self.t.dims.h * self.t.dims.w;
    const std::int64_t maps = self.t.dims.n * self.t.dims.c;
    for (std::int64_t m = 0; m < maps; ++m) {
      const std::size_t off = static_cast<std::size_t>(m * plane);
      double gy = 0.0;
      for (std::int64_t i = 0; i < plane; ++i)
        gy += g[off + static_cast<std::size_t>(i)] * y[off + static_cast<std::size_t>(i)];
      for (std::int64_t i = 0; i < plane; ++i) {
        const std::size_t k = off + static_cast<std::size_t>(i);
        gx[k] += y[k] * (g[k] - gy);
      }
    }
  });
}

/// Mean (over maps in the batch axis) of the per-map distribution softmax
/// losses against fixed targets of identical layout.
inline VarPtr distribution_loss(const VarPtr& logits, Tensor targets,
                                double weight = 1.0) {
  if (!(logits->t.dims == targets.dims))
    throw shape_error("distribution_loss dims differ: " + logits->t.dims.str() +
                      " vs " + targets.dims.str());
  const std::int64_t plane = targets.dims.h * targets.dims.w;
  const std::int64_t maps = targets.dims.n * targets.dims.c;
  double total = 0.0;
  for (std::int64_t m = 0; m < maps; ++m) {
    const std::size_t off = static_cast<std::size_t>(m * plane);
    total += distribution_softmax_loss(
                 {logits->t.v.data() + off, static_cast<std::size_t>(plane)},
                 {targets.v.data() + off, static_cast<std::size_t>(plane)})
                 .loss;
  }
  return make_node(Tensor::scalar(total * weight), {logits},
                   [x = logits.get(), t = std::move(targets), weight](Var& self) {
                     if (!x->needs_grad) return;
                     auto& gx = x->grad();
                     const double g = weight * (*self.t.grad)[0];
                     const std::int64_t plane = t.dims.h * t.dims.w;
                     const std::int64_t maps = t.dims.n * t.dims.c;
                     for (std::int64_t m = 0; m < maps; ++m) {
                       const std::size_t off = static_cast<std::size_t>(m * plane);
                       DistributionLoss dl = distribution_softmax_loss(
                           {x->t.v.data() + off, static_cast<std::size_t>(plane)},
                           {t.v.data() + off, static_cast<std::size_t>(plane)});
                       for (std::int64_t i = 0; i < plane; ++i)
                         gx[off + static_cast<std::size_t>(i)] +=
                             g * dl.grad[static_cast<std::size_t>(i)];
                     }
                   });
}

/// Shape-Indexed Pooling over sample `batch_index` of a batched feature
/// tensor. Window centers come from the numeric shape; gradients flow only
/// into the pooled feature values.
inline VarPtr sip(const VarPtr& featmaps, std::int64_t batch_index,
                  const LandmarkShape& shape, const SipConfig& cfg) {
  const Dims fd = featmaps->t.dims;
  if (batch_index < 0 || batch_index >= fd.n)
    throw contract_error("sip batch index out of range");
  // View the sample as (1,M,H,W) without copying the batch.
  Tensor view({1, fd.c, fd.h, fd.w});
  const std::size_t off = featmaps->t.index(batch_index, 0, 0, 0);
  std::copy(featmaps->t.v.begin() + static_cast<std::ptrdiff_t>(off),
            featmaps->t.v.begin() + static_cast<std::ptrdiff_t>(off + view.v.size()),
            view.v.begin());
  SipResult r = shape_indexed_pool(view, shape, cfg);
  Tensor out = Tensor::vec(r.features);
  return make_node(std::move(out), {featmaps},
                   [f = featmaps.get(), rec = std::move(r.record), off](Var& self) {
                     if (!f->needs_grad) return;
                     auto& gf = f->grad();
                     const auto& g = *self.t.grad;
                     for (std::size_t i = 0; i < g.size(); ++i)
                       gf[off + static_cast<std::size_t>(rec.argmax[i])] += g[i];
                   });
}

// --- SGD with momentum -----------------------------------------------------

/// v <- mu*v - lr*(g + wd*w); w <- w + v.
struct OptimizerState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 4;
  std::vector<Tensor> velocity;  // one buffer per parameter, allocated lazily
};

inline void sgd_step(const std::vector<VarPtr>& params, OptimizerState& state) {
  if (state.velocity.empty())
    for (const VarPtr& p : params) state.velocity.emplace_back(p->t.dims);
  if (state.velocity.size() != params.size())
    throw contract_error("optimizer state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Var& p = *params[i];
    Tensor& vel = state.velocity[i];
    if (!(vel.dims == p.t.dims))
      throw shape_error("momentum buffer " + vel.dims.str() +
                        " does not match parameter " + p.t.dims.str());
    const std::vector<double>& g = p.grad();
    for (std::size_t k = 0; k < g.size(); ++k) {
      vel.v[k] = state.momentum * vel.v[k] -
                 state.learning_rate * (g[k] + state.weight_decay * p.t.v[k]);
      p.t.v[k] += vel.v[k];
    }
  }
}

}  // namespace casc
