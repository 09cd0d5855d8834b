#include <doctest.h>

#include <cmath>

#include "casc/autodiff.hpp"
#include "casc/gradcheck.hpp"
#include "casc/network.hpp"
#include "casc/ops.hpp"

using namespace casc;

namespace {

Tensor ones(Dims d) { return Tensor(d, 1.0); }

}  // namespace

TEST_CASE("conv2d hand examples") {
  SUBCASE("3x3 ones against 3x3 ones kernel") {
    Tensor out = conv2d_forward(ones({1, 1, 3, 3}), ones({1, 1, 3, 3}));
    CHECK(out.at(0, 0, 1, 1) == doctest::Approx(9.0));
    CHECK(out.at(0, 0, 0, 0) == doctest::Approx(4.0));
    CHECK(out.at(0, 0, 0, 2) == doctest::Approx(4.0));
    CHECK(out.at(0, 0, 2, 0) == doctest::Approx(4.0));
    CHECK(out.at(0, 0, 2, 2) == doctest::Approx(4.0));
    CHECK(out.at(0, 0, 0, 1) == doctest::Approx(6.0));
    CHECK(out.at(0, 0, 1, 0) == doctest::Approx(6.0));
    CHECK(out.at(0, 0, 1, 2) == doctest::Approx(6.0));
    CHECK(out.at(0, 0, 2, 1) == doctest::Approx(6.0));
  }
  SUBCASE("dirac kernel is the identity") {
    Rng rng(7);
    Tensor in = random_tensor<double>({1, 1, 5, 4}, rng);
    Tensor k({1, 1, 3, 3});
    k.at(0, 0, 1, 1) = 1.0;
    Tensor out = conv2d_forward(in, k);
    for (std::size_t i = 0; i < in.v.size(); ++i)
      CHECK(out.v[i] == doctest::Approx(in.v[i]));
  }
  SUBCASE("2x2 input fully covered by 3x3 ones") {
    Tensor in({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor out = conv2d_forward(in, ones({1, 1, 3, 3}));
    for (double v : out.v) CHECK(v == doctest::Approx(10.0));
  }
  SUBCASE("channel mismatch names both dims") {
    CHECK_THROWS_WITH_AS(conv2d_forward(ones({1, 2, 4, 4}), ones({1, 3, 3, 3})),
                         doctest::Contains("(1,2,4,4)"), shape_error);
  }
  SUBCASE("even kernel rejected") {
    CHECK_THROWS_AS(conv2d_forward(ones({1, 1, 4, 4}), ones({1, 1, 2, 2})),
                    shape_error);
  }
}

TEST_CASE("maxpool2 hand examples") {
  SUBCASE("single window") {
    Tensor in({1, 1, 2, 2}, {1, 2, 3, 4});
    PoolResult<double> r = maxpool2_forward(in);
    CHECK(r.out.dims == Dims{1, 1, 1, 1});
    CHECK(r.out.v[0] == 4.0);
    CHECK(r.argmax[0] == 3);  // row 1, col 1
  }
  SUBCASE("constant map ties to first row-major element") {
    Tensor in({1, 1, 2, 2}, 5.0);
    PoolResult<double> r = maxpool2_forward(in);
    CHECK(r.out.v[0] == 5.0);
    CHECK(r.argmax[0] == 0);
    std::vector<double> gin(4, 0.0);
    maxpool2_backward(std::vector<double>{1.0}, r.argmax, &gin);
    CHECK(gin == std::vector<double>{1.0, 0.0, 0.0, 0.0});
  }
  SUBCASE("4x4 ascending values") {
    std::vector<double> vals(16);
    for (int i = 0; i < 16; ++i) vals[static_cast<std::size_t>(i)] = i;
    PoolResult<double> r = maxpool2_forward(Tensor({1, 1, 4, 4}, vals));
    CHECK(r.out.v == std::vector<double>{5, 7, 13, 15});
  }
  SUBCASE("odd dims rejected") {
    CHECK_THROWS_AS(maxpool2_forward(ones({1, 1, 3, 4})), shape_error);
  }
}

TEST_CASE("deconv2d hand examples") {
  SUBCASE("1x1 input places the kernel's inner 2x2") {
    Tensor out = deconv2d_forward(ones({1, 1, 1, 1}), ones({1, 1, 4, 4}));
    CHECK(out.dims == Dims{1, 1, 2, 2});
    for (double v : out.v) CHECK(v == doctest::Approx(1.0));
  }
  SUBCASE("output is 2h x 2w for 50 random sizes") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      const auto h = static_cast<std::int64_t>(1 + rng.below(16));
      const auto w = static_cast<std::int64_t>(1 + rng.below(16));
      Tensor in = random_tensor<double>({1, 2, h, w}, rng);
      Tensor k = random_tensor<double>({2, 3, 4, 4}, rng);
      CHECK(deconv2d_forward(in, k).dims == Dims{1, 3, 2 * h, 2 * w});
    }
  }
  SUBCASE("zero input maps to zero output") {
    Rng rng(3);
    Tensor k = random_tensor<double>({2, 2, 4, 4}, rng);
    Tensor out = deconv2d_forward(Tensor({1, 2, 3, 3}), k);
    for (double v : out.v) CHECK(v == 0.0);
  }
}

TEST_CASE("fully_connected hand examples") {
  SUBCASE("identity weights, zero bias") {
    Tensor w({1, 1, 3, 3});
    for (int i = 0; i < 3; ++i) w.at(0, 0, i, i) = 1.0;
    Tensor x = Tensor::vec({4, 5, 6});
    Tensor out = fully_connected_forward(w, x, Tensor({1, 1, 1, 3}));
    CHECK(out.v == x.v);
  }
  SUBCASE("zero weights return the bias") {
    Tensor out = fully_connected_forward(Tensor({1, 1, 2, 3}), Tensor::vec({1, 2, 3}),
                                         Tensor::vec({7, -2}));
    CHECK(out.v == std::vector<double>{7, -2});
  }
  SUBCASE("hand matrix-vector product") {
    Tensor w({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor out = fully_connected_forward(w, Tensor::vec({1, 1}), Tensor::vec({0, 1}));
    CHECK(out.v == std::vector<double>{3, 8});
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(fully_connected_forward(Tensor({1, 1, 2, 3}), Tensor::vec({1, 2}),
                                            Tensor::vec({0, 0})),
                    shape_error);
  }
}

TEST_CASE("relu") {
  Tensor in = Tensor::vec({-1, 0, 2});
  Tensor out = relu_forward(in);
  CHECK(out.v == std::vector<double>{0, 0, 2});

  Tensor pos = Tensor::vec({0.5, 3.0});
  CHECK(relu_forward(pos).v == pos.v);

  std::vector<double> gin(3, 0.0);
  relu_backward(in, std::vector<double>{1, 1, 1}, &gin);
  CHECK(gin == std::vector<double>{0, 0, 1});  // gradient masked at x <= 0
}

TEST_CASE("backward basics") {
  SUBCASE("f(x) = x*x at 3 has gradient 6") {
    VarPtr x = make_leaf(Tensor::scalar(3.0), true);
    VarPtr y = mul(x, x);
    backward(y);
    CHECK((*x->t.grad)[0] == doctest::Approx(6.0));
  }
  SUBCASE("two paths accumulate: f(x) = x + x") {
    VarPtr x = make_leaf(Tensor::scalar(1.5), true);
    backward(add(x, x));
    CHECK((*x->t.grad)[0] == doctest::Approx(2.0));
  }
  SUBCASE("non-scalar loss rejected") {
    VarPtr x = make_leaf(Tensor::vec({1, 2}), true);
    CHECK_THROWS_AS(backward(x), contract_error);
  }
  SUBCASE("full tiny network loss matches finite differences") {
    const int p = 2;
    NetworkSpec spec = tiny_network(p);
    spec.validate(p);
    Network net = init_network(spec, 99);
    Rng rng(5);
    Tensor img = random_tensor<double>({1, 1, 8, 8}, rng, 0.0, 1.0);
    Tensor targets({1, p, 8, 8});
    {
      Tensor q0 = build_target_map({2.0, 3.0}, 8, 8);
      Tensor q1 = build_target_map({5.0, 4.0}, 8, 8);
      std::copy(q0.v.begin(), q0.v.end(), targets.v.begin());
      std::copy(q1.v.begin(), q1.v.end(), targets.v.begin() + 64);
    }
    std::vector<Tensor> inputs;
    for (const VarPtr& prm : net.parameters()) inputs.push_back(prm->t);
    auto build = [&](const std::vector<VarPtr>& in) {
      Network probe;
      probe.spec = spec;
      std::size_t next = 0;
      for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (net.kernels[i]) {
          probe.kernels.push_back(in[next++]);
          probe.biases.push_back(in[next++]);
        } else {
          probe.kernels.push_back(nullptr);
          probe.biases.push_back(nullptr);
        }
      }
      NetworkTaps taps = network_forward(probe, make_leaf(img, false));
      return distribution_loss(taps.logits, targets);
    };
    CHECK(grad_check(build, inputs, 1e-5) < 1e-4);
  }
}

TEST_CASE("grad_check tolerances per op family") {
  Rng rng(17);
  SUBCASE("conv2d on random 1x2x6x6") {
    Tensor x = random_tensor<double>({1, 2, 6, 6}, rng);
    Tensor k = random_tensor<double>({2, 2, 3, 3}, rng);
    Tensor w = random_tensor<double>({1, 2, 6, 6}, rng);
    const double err = grad_check(
        [&](const std::vector<VarPtr>& in) { return dot(conv2d(in[0], in[1]), w); },
        {x, k});
    CHECK(err < 1e-4);
    CHECK(err < 1e-8);  // linear, so central differences are exact
  }
  SUBCASE("relu probed away from zero") {
    Tensor x = lattice_tensor<double>({1, 1, 4, 4}, rng);
    for (auto& v : x.v) v -= 0.085;
    Tensor w = random_tensor<double>({1, 1, 4, 4}, rng);
    CHECK(grad_check([&](const std::vector<VarPtr>& in) { return dot(relu(in[0]), w); },
                     {x}) < 1e-6);
  }
  SUBCASE("fully_connected is exact") {
    Tensor wm = random_tensor<double>({1, 1, 3, 4}, rng);
    Tensor x = random_tensor<double>({1, 1, 1, 4}, rng);
    Tensor b = random_tensor<double>({1, 1, 1, 3}, rng);
    Tensor w = random_tensor<double>({1, 1, 1, 3}, rng);
    CHECK(grad_check(
              [&](const std::vector<VarPtr>& in) {
                return dot(fully_connected(in[0], in[1], in[2]), w);
              },
              {wm, x, b}) < 1e-8);
  }
}

TEST_CASE("sgd_step hand recursions") {
  auto param = [](double v) { return make_leaf(Tensor::scalar(v), true); };
  SUBCASE("single plain step") {
    VarPtr w = param(1.0);
    w->grad()[0] = 1.0;
    OptimizerState st;
    st.learning_rate = 0.1;
    st.momentum = 0.0;
    st.weight_decay = 0.0;
    std::vector<VarPtr> params{w};
    sgd_step(params, st);
    CHECK(w->t.v[0] == doctest::Approx(0.9));
  }
  SUBCASE("zero gradient is a fixed point") {
    VarPtr w = param(2.5);
    w->grad()[0] = 0.0;
    OptimizerState st;
    st.learning_rate = 0.1;
    st.momentum = 0.9;
    st.weight_decay = 0.0;
    std::vector<VarPtr> params{w};
    sgd_step(params, st);
    CHECK(w->t.v[0] == doctest::Approx(2.5));
  }
  SUBCASE("two momentum steps") {
    VarPtr w = param(0.0);
    OptimizerState st;
    st.learning_rate = 0.1;
    st.momentum = 0.9;
    st.weight_decay = 0.0;
    std::vector<VarPtr> params{w};
    w->grad()[0] = 1.0;
    sgd_step(params, st);
    CHECK(st.velocity[0].v[0] == doctest::Approx(-0.1));
    CHECK(w->t.v[0] == doctest::Approx(-0.1));
    w->t.reset_grad();
    w->grad()[0] = 1.0;
    sgd_step(params, st);
    CHECK(st.velocity[0].v[0] == doctest::Approx(-0.19));
    CHECK(w->t.v[0] == doctest::Approx(-0.29));
  }
}

TEST_CASE("shape contract: two pools then two deconvs restore H x W") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const auto h = 4 * static_cast<std::int64_t>(1 + rng.below(12));
    const auto w = 4 * static_cast<std::int64_t>(1 + rng.below(12));
    Tensor x = random_tensor<double>({1, 1, h, w}, rng);
    Tensor k1 = random_tensor<double>({1, 2, 4, 4}, rng);
    Tensor k2 = random_tensor<double>({2, 1, 4, 4}, rng);
    Tensor pooled = maxpool2_forward(maxpool2_forward(x).out).out;
    Tensor up = deconv2d_forward(deconv2d_forward(pooled, k1), k2);
    CHECK(up.dims.h == h);
    CHECK(up.dims.w == w);
  }
  // Same contract through NetworkSpec shape propagation.
  NetworkSpec spec = tiny_network(5);
  const auto [h, w] = spec.propagate(64, 64);
  CHECK(h == 64);
  CHECK(w == 64);
}

TEST_CASE("conv and deconv are linear in the input") {
  Rng rng(31);
  Tensor x = random_tensor<double>({1, 2, 5, 5}, rng);
  Tensor y = random_tensor<double>({1, 2, 5, 5}, rng);
  const double a = 1.7, b = -0.6;
  Tensor mix(x.dims);
  for (std::size_t i = 0; i < mix.v.size(); ++i) mix.v[i] = a * x.v[i] + b * y.v[i];

  SUBCASE("conv2d") {
    Tensor k = random_tensor<double>({3, 2, 3, 3}, rng);
    Tensor lhs = conv2d_forward(mix, k);
    Tensor fx = conv2d_forward(x, k), fy = conv2d_forward(y, k);
    for (std::size_t i = 0; i < lhs.v.size(); ++i)
      CHECK(lhs.v[i] == doctest::Approx(a * fx.v[i] + b * fy.v[i]).epsilon(1e-10));
  }
  SUBCASE("deconv2d") {
    Tensor k = random_tensor<double>({2, 3, 4, 4}, rng);
    Tensor lhs = deconv2d_forward(mix, k);
    Tensor fx = deconv2d_forward(x, k), fy = deconv2d_forward(y, k);
    for (std::size_t i = 0; i < lhs.v.size(); ++i)
      CHECK(lhs.v[i] == doctest::Approx(a * fx.v[i] + b * fy.v[i]).epsilon(1e-10));
  }
}

TEST_CASE("network determinism and validation") {
  NetworkSpec spec = tiny_network(5);
  Network a = init_network(spec, 42);
  Network b = init_network(spec, 42);
  for (std::size_t i = 0; i < a.kernels.size(); ++i) {
    if (!a.kernels[i]) continue;
    CHECK(a.kernels[i]->t.v == b.kernels[i]->t.v);
    CHECK(a.biases[i]->t.v == b.biases[i]->t.v);
  }

  Rng rng(1);
  Tensor img = random_tensor<double>({1, 1, 16, 16}, rng, 0.0, 1.0);
  NetworkTaps ta = network_forward(a, make_leaf(img, false));
  NetworkTaps tb = network_forward(b, make_leaf(img, false));
  CHECK(ta.logits->t.v == tb.logits->t.v);
  CHECK(ta.features->t.v == tb.features->t.v);

  // conv8 channels must equal the landmark count.
  CHECK_THROWS_AS(spec.validate(7), config_error);
  NetworkSpec broken = spec;
  broken.layers.push_back({LayerKind::MaxPool2});
  CHECK_THROWS_AS(broken.validate(5), config_error);
}
