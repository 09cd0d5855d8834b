#include <doctest.h>

#include <cmath>

#include "casc/cascade.hpp"
#include "casc/gradcheck.hpp"

using namespace casc;

namespace {

CascadeStage zero_stage(std::size_t p, std::size_t m) {
  CascadeStage s;
  s.weights = Matrix(2 * p, m * p);
  s.bias.assign(2 * p, 0.0);
  return s;
}

// Fixture: one landmark steered over a smooth feature map so the pooled
// features genuinely vary with the shape.
Tensor smooth_featmaps(std::int64_t m, std::int64_t h, std::int64_t w) {
  Tensor f({1, m, h, w});
  for (std::int64_t c = 0; c < m; ++c)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x)
        f.at(0, c, y, x) =
            std::sin(0.35 * static_cast<double>(x) + 0.2 * static_cast<double>(c)) +
            0.01 * static_cast<double>(y) * static_cast<double>(c + 1);
  return f;
}

}  // namespace

TEST_CASE("apply_stage") {
  SUBCASE("zero weights return the bias for any features") {
    CascadeStage s = zero_stage(2, 3);
    s.bias = {1, 2, 3, 4};
    LandmarkShape d = apply_stage(std::vector<double>(6, 9.0), s);
    CHECK(d.points[0] == Point{1, 2});
    CHECK(d.points[1] == Point{3, 4});
  }
  SUBCASE("zero bias and zero features give zero delta") {
    CascadeStage s = zero_stage(1, 2);
    LandmarkShape d = apply_stage(std::vector<double>{0, 0}, s);
    CHECK(d.points[0] == Point{0, 0});
  }
  SUBCASE("hand product, one landmark, M = 1") {
    CascadeStage s;
    s.weights = Matrix(2, 1);
    s.weights.at(0, 0) = 2.0;
    s.weights.at(1, 0) = 0.0;
    s.bias = {1.0, -1.0};
    LandmarkShape d = apply_stage(std::vector<double>{3.0}, s);
    CHECK(d.points[0].x == doctest::Approx(7.0));
    CHECK(d.points[0].y == doctest::Approx(-1.0));
  }
  SUBCASE("feature length mismatch") {
    CHECK_THROWS_AS(apply_stage(std::vector<double>{1.0}, zero_stage(1, 2)),
                    shape_error);
  }
}

TEST_CASE("run_cascade") {
  Tensor f = smooth_featmaps(2, 9, 9);
  LandmarkShape s0({{4.0, 4.0}});

  SUBCASE("all-zero stages keep the trajectory constant") {
    CascadeModel model;
    model.sip = {1, "deconv7"};
    model.feature_channels = 2;
    model.landmark_count = 1;
    for (int k = 0; k < 3; ++k) model.stages.push_back(zero_stage(1, 2));
    CascadeRun run = run_cascade(f, s0, model);
    CHECK(run.final == s0);
    CHECK(run.trajectory.size() == 4);
    for (const LandmarkShape& s : run.trajectory) CHECK(s == s0);
  }
  SUBCASE("K = 1 reduces to one apply_stage around S0") {
    CascadeModel model;
    model.sip = {1, "deconv7"};
    model.feature_channels = 2;
    model.landmark_count = 1;
    CascadeStage st = zero_stage(1, 2);
    st.bias = {0.5, -0.25};
    model.stages.push_back(st);
    CascadeRun run = run_cascade(f, s0, model);
    CHECK(run.trajectory.size() == 2);
    CHECK(run.final.points[0].x == doctest::Approx(4.5));
    CHECK(run.final.points[0].y == doctest::Approx(3.75));
  }
  SUBCASE("empty stage list rejected") {
    CascadeModel model;
    model.sip = {1, "deconv7"};
    model.feature_channels = 2;
    model.landmark_count = 1;
    CHECK_THROWS_AS(run_cascade(f, s0, model), contract_error);
  }
}

TEST_CASE("fit_stage_closed_form") {
  Rng rng(401);
  SUBCASE("exact recovery of a linear relation at lambda = 0") {
    const std::size_t n = 40, d = 6, q = 4;
    Matrix phi(n, d), targets(n, q);
    Matrix true_r(q, d);
    std::vector<double> true_b(q);
    for (auto& v : true_r.a) v = rng.uniform(-1, 1);
    for (auto& v : true_b) v = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) phi.at(i, j) = rng.uniform(-2, 2);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t r = 0; r < q; ++r) {
        double acc = true_b[r];
        for (std::size_t j = 0; j < d; ++j) acc += true_r.at(r, j) * phi.at(i, j);
        targets.at(i, r) = acc;
      }
    CascadeStage s = fit_stage_closed_form(phi, targets, 0.0);
    double resid = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t r = 0; r < q; ++r) {
        double pred = s.bias[r];
        for (std::size_t j = 0; j < d; ++j) pred += s.weights.at(r, j) * phi.at(i, j);
        const double e = pred - targets.at(i, r);
        resid += e * e;
      }
    CHECK(resid < 1e-16);
    for (std::size_t r = 0; r < q; ++r)
      for (std::size_t j = 0; j < d; ++j)
        CHECK(s.weights.at(r, j) == doctest::Approx(true_r.at(r, j)).epsilon(1e-8));
  }
  SUBCASE("constant features: weights vanish, bias is the mean target") {
    const std::size_t n = 10;
    Matrix phi(n, 3), targets(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      phi.at(i, 0) = 1.0;
      phi.at(i, 1) = -2.0;
      phi.at(i, 2) = 0.5;
      targets.at(i, 0) = static_cast<double>(i);
      targets.at(i, 1) = 3.0;
    }
    CascadeStage s = fit_stage_closed_form(phi, targets, 0.1);
    for (double v : s.weights.a) CHECK(std::abs(v) < 1e-12);
    CHECK(s.bias[0] == doctest::Approx(4.5));
    CHECK(s.bias[1] == doctest::Approx(3.0));
  }
  SUBCASE("zero targets give the zero stage") {
    Matrix phi(8, 4), targets(8, 2);
    for (auto& v : phi.a) v = rng.uniform(-1, 1);
    CascadeStage s = fit_stage_closed_form(phi, targets, 0.0);
    for (double v : s.weights.a) CHECK(std::abs(v) < 1e-10);
    for (double v : s.bias) CHECK(std::abs(v) < 1e-10);
  }
  SUBCASE("singular system with lambda = 0 solved in the minimum-norm sense") {
    // Two identical columns: infinitely many exact fits; the min-norm one
    // splits the weight equally.
    const std::size_t n = 12;
    Matrix phi(n, 2), targets(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = rng.uniform(-1, 1);
      phi.at(i, 0) = v;
      phi.at(i, 1) = v;
      targets.at(i, 0) = 2.0 * v;
    }
    CascadeStage s = fit_stage_closed_form(phi, targets, 0.0);
    CHECK(s.weights.at(0, 0) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(s.weights.at(0, 1) == doctest::Approx(1.0).epsilon(1e-8));
  }
  SUBCASE("sample order does not change the fit") {
    const std::size_t n = 30, d = 5, q = 2;
    Matrix phi(n, d), targets(n, q);
    for (auto& v : phi.a) v = rng.uniform(-1, 1);
    for (auto& v : targets.a) v = rng.uniform(-1, 1);
    Matrix phi_r(n, d), targets_r(n, q);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = n - 1 - i;
      for (std::size_t k = 0; k < d; ++k) phi_r.at(i, k) = phi.at(j, k);
      for (std::size_t k = 0; k < q; ++k) targets_r.at(i, k) = targets.at(j, k);
    }
    CascadeStage a = fit_stage_closed_form(phi, targets, 1e-3);
    CascadeStage b = fit_stage_closed_form(phi_r, targets_r, 1e-3);
    for (std::size_t i = 0; i < a.weights.a.size(); ++i)
      CHECK(a.weights.a[i] == doctest::Approx(b.weights.a[i]).epsilon(1e-8));
    for (std::size_t i = 0; i < a.bias.size(); ++i)
      CHECK(a.bias[i] == doctest::Approx(b.bias[i]).epsilon(1e-8));
  }
}

TEST_CASE("cascade_loss") {
  LandmarkShape a({{0, 0}, {1, 1}});
  SUBCASE("perfect predictions cost zero") {
    CHECK(cascade_loss({a}, {a}) == 0.0);
  }
  SUBCASE("single landmark off by (3,4) costs 25") {
    LandmarkShape b({{3, 4}});
    LandmarkShape origin({{0, 0}});
    CHECK(cascade_loss({b}, {origin}) == doctest::Approx(25.0));
  }
  SUBCASE("doubling residuals quadruples the loss") {
    LandmarkShape gt({{1, 2}});
    LandmarkShape p1({{2, 4}});
    LandmarkShape p2({{3, 6}});
    CHECK(cascade_loss({p2}, {gt}) == doctest::Approx(4.0 * cascade_loss({p1}, {gt})));
  }
}

TEST_CASE("sequential training decreases the squared residual per stage") {
  Rng rng(501);
  const std::size_t n = 24;
  std::vector<Tensor> feats;
  std::vector<LandmarkShape> init, gt;
  for (std::size_t i = 0; i < n; ++i) {
    feats.push_back(random_tensor<double>({1, 3, 12, 12}, rng));
    LandmarkShape g({{rng.uniform(2, 10), rng.uniform(2, 10)},
                     {rng.uniform(2, 10), rng.uniform(2, 10)}});
    LandmarkShape s = g;
    for (Point& pt : s.points) {
      pt.x += rng.uniform(-3, 3);
      pt.y += rng.uniform(-3, 3);
    }
    gt.push_back(g);
    init.push_back(s);
  }
  CascadeTrainConfig cfg;
  cfg.stages = 5;
  cfg.sip = {2, "deconv7"};
  std::vector<double> mse;
  train_cascade_sequential(feats, init, gt, cfg,
                           [&](int, double m) { mse.push_back(m); });
  REQUIRE(mse.size() == 5);
  double prev = cascade_loss(init, gt) / static_cast<double>(n);
  for (double m : mse) {
    CHECK(m <= prev + 1e-10);
    prev = m;
  }
}

TEST_CASE("K = 0 rejected") {
  std::vector<Tensor> feats{Tensor({1, 1, 4, 4})};
  std::vector<LandmarkShape> s{LandmarkShape({{1, 1}})};
  CascadeTrainConfig cfg;
  cfg.stages = 0;
  CHECK_THROWS_AS(train_cascade_sequential(feats, s, s, cfg), contract_error);
}

TEST_CASE("noiseless linear oracle recovered in one stage") {
  // Residuals constructed as an exact linear function of the pooled
  // features; a single lambda = 0 stage must erase them.
  Rng rng(601);
  const std::size_t n = 50, p = 2, m = 3;
  CascadeTrainConfig cfg;
  cfg.stages = 1;
  cfg.sip = {1, "deconv7"};
  cfg.ridge_scale = 0.0;

  Matrix true_r(2 * p, m * p);
  for (auto& v : true_r.a) v = rng.uniform(-0.3, 0.3);
  std::vector<double> true_b = {0.4, -0.2, 0.1, 0.3};

  std::vector<Tensor> feats;
  std::vector<LandmarkShape> init, gt;
  for (std::size_t i = 0; i < n; ++i) {
    feats.push_back(random_tensor<double>({1, m, 10, 10}, rng));
    LandmarkShape s({{rng.uniform(2, 8), rng.uniform(2, 8)},
                     {rng.uniform(2, 8), rng.uniform(2, 8)}});
    SipResult phi = shape_indexed_pool(feats.back(), s, cfg.sip);
    std::vector<double> delta(2 * p);
    for (std::size_t r = 0; r < 2 * p; ++r) {
      double acc = true_b[r];
      for (std::size_t c = 0; c < phi.features.size(); ++c)
        acc += true_r.at(r, c) * phi.features[c];
      delta[r] = acc;
    }
    const std::vector<double> flat = s.flat();
    std::vector<double> target(2 * p);
    for (std::size_t r = 0; r < 2 * p; ++r) target[r] = flat[r] + delta[r];
    init.push_back(s);
    gt.push_back(LandmarkShape::from_flat(target));
  }
  std::vector<double> mse;
  train_cascade_sequential(feats, init, gt, cfg,
                           [&](int, double m2) { mse.push_back(m2); });
  REQUIRE(mse.size() == 1);
  CHECK(mse[0] * static_cast<double>(n) < 1e-8);
}

TEST_CASE("joint mode gradients match finite differences") {
  for (const OpCheck& c : run_gradcheck_suite(false))
    if (c.op == "cascade_joint") {
      INFO("err=", c.max_rel_err);
      CHECK(c.max_rel_err < 1e-4);
    }
}

TEST_CASE("joint training reduces the summed stage loss") {
  // Tiny end-to-end joint run over a frozen two-stage model.
  Rng rng(701);
  const int p = 2;
  NetworkSpec spec = tiny_network(p);
  Network net = init_network(spec, 7);

  std::vector<Tensor> images;
  std::vector<LandmarkShape> init, gt;
  std::vector<Tensor> mask_targets;
  for (int i = 0; i < 6; ++i) {
    images.push_back(random_tensor<double>({1, 1, 16, 16}, rng, 0.0, 1.0));
    LandmarkShape g({{rng.uniform(4, 12), rng.uniform(4, 12)},
                     {rng.uniform(4, 12), rng.uniform(4, 12)}});
    LandmarkShape s = g;
    for (Point& pt : s.points) {
      pt.x += rng.uniform(-2, 2);
      pt.y += rng.uniform(-2, 2);
    }
    gt.push_back(g);
    init.push_back(s);
    Tensor t({1, p, 16, 16});
    for (int j = 0; j < p; ++j) {
      Tensor q = build_target_map(g.points[static_cast<std::size_t>(j)], 16, 16);
      std::copy(q.v.begin(), q.v.end(),
                t.v.begin() + static_cast<std::ptrdiff_t>(j * 256));
    }
    mask_targets.push_back(std::move(t));
  }

  CascadeModel model;
  model.sip = {1, "deconv7"};
  model.feature_channels = 12;
  model.landmark_count = p;
  for (int k = 0; k < 2; ++k) model.stages.push_back(zero_stage(p, 12));

  JointTrainConfig cfg;
  cfg.stages = 2;
  cfg.sip = model.sip;
  cfg.epochs = 8;
  cfg.learning_rate = 2e-4;
  cfg.mask_weight = 0.0;
  cfg.adapt_features = false;
  cfg.batch_size = 3;

  std::vector<double> losses;
  train_cascade_joint(net, images, init, gt, mask_targets, model, cfg,
                      [&](int, double l) { losses.push_back(l); });
  REQUIRE(losses.size() == 8);
  CHECK(losses.back() < losses.front());
}
