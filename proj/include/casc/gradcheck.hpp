#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "casc/autodiff.hpp"
#include "casc/network.hpp"

// Finite-difference verification of every backward pass. Probe tensors are
// drawn on a coarse lattice so max windows and relu never sit within an
// epsilon of a tie.

namespace casc {

/// Max over all input elements of
/// |analytic - central difference| / max(1, |analytic|, |numeric|).
/// `build` must be a pure function from leaves to a scalar variable.
inline double grad_check(
    const std::function<VarPtr(const std::vector<VarPtr>&)>& build,
    std::vector<Tensor> inputs, double epsilon = 1e-4) {
  std::vector<VarPtr> leaves;
  leaves.reserve(inputs.size());
  for (Tensor& t : inputs) leaves.push_back(make_leaf(t, true));
  VarPtr loss = build(leaves);
  if (loss->t.numel() != 1)
    throw contract_error("grad_check builder must produce a scalar");
  backward(loss);

  auto eval = [&](const std::vector<VarPtr>& pts) {
    return build(pts)->t.v[0];
  };

  double max_err = 0.0;
  for (std::size_t which = 0; which < leaves.size(); ++which) {
    const std::vector<double> analytic = *leaves[which]->t.grad;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      std::vector<VarPtr> probe;
      for (std::size_t j = 0; j < leaves.size(); ++j)
        probe.push_back(make_leaf(leaves[j]->t, false));
      const double orig = probe[which]->t.v[i];
      probe[which]->t.v[i] = orig + epsilon;
      const double up = eval(probe);
      probe[which]->t.v[i] = orig - epsilon;
      const double down = eval(probe);
      probe[which]->t.v[i] = orig;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[i];
      const double err = std::abs(a - numeric) /
                         std::max({1.0, std::abs(a), std::abs(numeric)});
      if (err > max_err) max_err = err;
    }
  }
  return max_err;
}

struct OpCheck {
  std::string op;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool ok() const { return max_rel_err < tolerance; }
};

/// The per-op verification table behind `casc gradcheck`. Linear ops are
/// held to 1e-8; piecewise-linear ones to 1e-6 away from kinks; the rest to
/// 1e-4. `corrupt_backward` swaps in a deliberately broken conv backward so
/// harness failure detection can itself be tested.
inline std::vector<OpCheck> run_gradcheck_suite(bool corrupt_backward = false) {
  std::vector<OpCheck> table;
  Rng rng(20240217);

  auto weights_for = [&](Dims d) { return random_tensor<double>(d, rng); };

  {  // conv2d, linear in both arguments
    Tensor x = lattice_tensor<double>({1, 2, 6, 6}, rng);
    Tensor k = random_tensor<double>({3, 2, 3, 3}, rng);
    Tensor w = weights_for({1, 3, 6, 6});
    auto build = [&, corrupt_backward](const std::vector<VarPtr>& in) {
      VarPtr y = conv2d(in[0], in[1]);
      if (corrupt_backward) {
        // wrong chain: reuses the forward value but scales the gradient
        y = make_node(y->t, {in[0], in[1]}, [a = in[0].get(), b = in[1].get()](Var& self) {
          std::vector<double> g = *self.t.grad;
          for (auto& v : g) v *= 1.01;
          conv2d_backward(a->t, b->t, g, a->needs_grad ? &a->grad() : nullptr,
                          b->needs_grad ? &b->grad() : nullptr);
        });
      }
      return dot(y, w);
    };
    table.push_back({"conv2d", grad_check(build, {x, k}), 1e-8});
  }
  {  // maxpool2
    Tensor x = lattice_tensor<double>({1, 2, 6, 6}, rng);
    Tensor w = weights_for({1, 2, 3, 3});
    table.push_back({"maxpool2",
                     grad_check([&](const std::vector<VarPtr>& in) {
                       return dot(maxpool2(in[0]), w);
                     },
                                {x}),
                     1e-6});
  }
  {  // deconv2d
    Tensor x = lattice_tensor<double>({1, 2, 5, 5}, rng);
    Tensor k = random_tensor<double>({2, 3, 4, 4}, rng);
    Tensor w = weights_for({1, 3, 10, 10});
    table.push_back({"deconv2d",
                     grad_check([&](const std::vector<VarPtr>& in) {
                       return dot(deconv2d(in[0], in[1]), w);
                     },
                                {x, k}),
                     1e-8});
  }
  {  // fully_connected
    Tensor wgt = random_tensor<double>({1, 1, 4, 6}, rng);
    Tensor x = random_tensor<double>({1, 1, 1, 6}, rng);
    Tensor b = random_tensor<double>({1, 1, 1, 4}, rng);
    Tensor w = weights_for({1, 1, 1, 4});
    table.push_back({"fully_connected",
                     grad_check([&](const std::vector<VarPtr>& in) {
                       return dot(fully_connected(in[0], in[1], in[2]), w);
                     },
                                {wgt, x, b}),
                     1e-8});
  }
  {  // relu, probed away from zero
    Tensor x = lattice_tensor<double>({1, 1, 4, 4}, rng);
    for (auto& v : x.v) v -= 0.085;  // off-lattice shift keeps values off 0
    Tensor w = weights_for({1, 1, 4, 4});
    table.push_back({"relu",
                     grad_check([&](const std::vector<VarPtr>& in) {
                       return dot(relu(in[0]), w);
                     },
                                {x}),
                     1e-6});
  }
  {  // spatial softmax
    Tensor x = random_tensor<double>({1, 2, 4, 4}, rng);
    Tensor w = weights_for({1, 2, 4, 4});
    table.push_back({"spatial_softmax",
                     grad_check([&](const std::vector<VarPtr>& in) {
                       return dot(spatial_softmax(in[0]), w);
                     },
                                {x}),
                     1e-4});
  }
  {  // distribution softmax loss
    Tensor a = random_tensor<double>({1, 1, 4, 4}, rng);
    Tensor q = build_target_map({1.0, 2.0}, 4, 4);
    table.push_back({"distribution_loss",
                     grad_check([&](const std::vector<VarPtr>& in) {
                       return distribution_loss(in[0], q);
                     },
                                {a}),
                     1e-6});
  }
  {  // shape-indexed pooling (linear scatter away from ties)
    Tensor f = lattice_tensor<double>({1, 3, 8, 8}, rng);
    LandmarkShape shape({{2.0, 3.0}, {6.0, 5.0}});
    SipConfig cfg{1, "deconv7"};
    Tensor w = weights_for({1, 1, 1, 6});
    table.push_back({"sip",
                     grad_check([&](const std::vector<VarPtr>& in) {
                       return dot(sip(in[0], 0, shape, cfg), w);
                     },
                                {f}),
                     1e-8});
  }
  {  // two unrolled cascade stages in joint form
    const int p = 2, M = 3;
    Tensor f = lattice_tensor<double>({1, M, 8, 8}, rng);
    LandmarkShape s0({{2.2, 3.1}, {5.8, 4.9}});
    Tensor target = Tensor::vec({2.8, 3.6, 5.2, 4.4});
    SipConfig cfg{1, "deconv7"};
    Tensor r0 = random_tensor<double>({1, 1, 2 * p, M * p}, rng, -0.05, 0.05);
    Tensor b0 = random_tensor<double>({1, 1, 1, 2 * p}, rng, -0.05, 0.05);
    Tensor r1 = random_tensor<double>({1, 1, 2 * p, M * p}, rng, -0.05, 0.05);
    Tensor b1 = random_tensor<double>({1, 1, 1, 2 * p}, rng, -0.05, 0.05);
    auto build = [&](const std::vector<VarPtr>& in) {
      VarPtr shape_v = make_leaf(Tensor::vec(s0.flat()), false);
      VarPtr loss;
      const std::vector<VarPtr> stage_w = {in[1], in[3]};
      const std::vector<VarPtr> stage_b = {in[2], in[4]};
      for (int k = 0; k < 2; ++k) {
        LandmarkShape cur = LandmarkShape::from_flat(shape_v->t.v);
        VarPtr phi = sip(in[0], 0, cur, cfg);
        shape_v = add(shape_v, fully_connected(stage_w[static_cast<std::size_t>(k)],
                                               phi,
                                               stage_b[static_cast<std::size_t>(k)]));
        VarPtr l = sum_squares_to(shape_v, target);
        loss = loss ? add(loss, l) : l;
      }
      return loss;
    };
    table.push_back({"cascade_joint", grad_check(build, {f, r0, b0, r1, b1}), 1e-4});
  }
  return table;
}

}  // namespace casc
