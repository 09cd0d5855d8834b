#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "casc/metrics.hpp"

using namespace casc;

namespace {

LandmarkShape rigid(const LandmarkShape& s, double deg, double scale, Point t) {
  const double rad = deg * kPi / 180.0;
  const double co = std::cos(rad) * scale, si = std::sin(rad) * scale;
  LandmarkShape out = s;
  for (Point& p : out.points)
    p = {co * p.x - si * p.y + t.x, si * p.x + co * p.y + t.y};
  return out;
}

}  // namespace

TEST_CASE("inter_pupil_distance") {
  SUBCASE("3-4-5 triangle") {
    LandmarkShape s({{0, 0}, {3, 4}});
    CHECK(inter_pupil_distance(s, {0}, {1}) == doctest::Approx(5.0));
  }
  SUBCASE("coincident eyes give zero, flagged downstream") {
    LandmarkShape s({{2, 2}, {2, 2}});
    CHECK(inter_pupil_distance(s, {0}, {1}) == 0.0);
    CHECK_THROWS_AS(mean_error({s}, {s}, {0}, {1}), data_error);
  }
  SUBCASE("singleton sets reduce to point distance") {
    LandmarkShape s({{1, 1}, {4, 5}, {9, 9}});
    CHECK(inter_pupil_distance(s, {0}, {1}) == doctest::Approx(5.0));
  }
  SUBCASE("overlapping sets rejected") {
    LandmarkShape s({{0, 0}, {1, 1}});
    CHECK_THROWS_AS(inter_pupil_distance(s, {0}, {0}), config_error);
  }
}

TEST_CASE("mean_error") {
  SUBCASE("exact predictions score zero") {
    LandmarkShape gt({{0, 0}, {10, 0}, {5, 8}});
    MeanErrorResult r = mean_error({gt, gt}, {gt, gt}, {0}, {1});
    CHECK(r.mean == 0.0);
    for (double e : r.per_image) CHECK(e == 0.0);
  }
  SUBCASE("one landmark off by 5 px with D = 50") {
    LandmarkShape gt({{0, 0}, {50, 0}, {25, 30}});
    LandmarkShape pred = gt;
    pred.points[2].x += 3;
    pred.points[2].y += 4;
    // p = 3 landmarks: e = (5/3)/50
    MeanErrorResult r = mean_error({pred}, {gt}, {0}, {1});
    CHECK(r.per_image[0] == doctest::Approx(5.0 / 3.0 / 50.0));

    LandmarkShape gt1({{0, 0}, {50, 0}});
    LandmarkShape pred1({{3, 4}, {50, 0}});
    // p = 1 equivalent via two eye landmarks is not expressible; use p = 2
    // with one exact landmark: e = (5/2)/50 = 0.05
    MeanErrorResult r1 = mean_error({pred1}, {gt1}, {0}, {1});
    CHECK(r1.per_image[0] == doctest::Approx(0.05));
  }
  SUBCASE("joint scaling leaves the error unchanged") {
    LandmarkShape gt({{0, 0}, {10, 2}, {4, 9}});
    LandmarkShape pred({{1, 0}, {9, 3}, {5, 8}});
    MeanErrorResult base = mean_error({pred}, {gt}, {0}, {1});
    for (double s : {0.5, 3.0, 17.0}) {
      LandmarkShape gts = rigid(gt, 0.0, s, {0, 0});
      LandmarkShape preds = rigid(pred, 0.0, s, {0, 0});
      MeanErrorResult r = mean_error({preds}, {gts}, {0}, {1});
      CHECK(r.mean == doctest::Approx(base.mean).epsilon(1e-12));
    }
  }
  SUBCASE("similarity invariance: rotation + scale + translation") {
    Rng rng(808);
    LandmarkShape gt, pred;
    for (int j = 0; j < 6; ++j) {
      gt.points.push_back({rng.uniform(0, 30), rng.uniform(0, 30)});
      pred.points.push_back({gt.points.back().x + rng.uniform(-2, 2),
                             gt.points.back().y + rng.uniform(-2, 2)});
    }
    MeanErrorResult base = mean_error({pred}, {gt}, {0, 1}, {2, 3});
    for (int trial = 0; trial < 20; ++trial) {
      const double deg = rng.uniform(-180, 180);
      const double s = rng.uniform(0.2, 5.0);
      const Point t{rng.uniform(-40, 40), rng.uniform(-40, 40)};
      MeanErrorResult r = mean_error({rigid(pred, deg, s, t)}, {rigid(gt, deg, s, t)},
                                     {0, 1}, {2, 3});
      CHECK(r.mean == doctest::Approx(base.mean).epsilon(1e-9));
    }
  }
}

TEST_CASE("ced") {
  const std::vector<double> errors = {0.03, 0.06, 0.09};
  SUBCASE("threshold at the maximum reaches 1") {
    auto curve = ced(errors, {0.09});
    CHECK(curve[0].second == doctest::Approx(1.0));
  }
  SUBCASE("hand count at l = 0.05") {
    auto curve = ced(errors, {0.05});
    CHECK(curve[0].second == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("curve is nondecreasing with correct endpoints") {
    Rng rng(5);
    std::vector<double> errs;
    for (int i = 0; i < 200; ++i) errs.push_back(rng.uniform(0.01, 0.4));
    std::vector<double> thresholds;
    for (int i = 0; i <= 60; ++i) thresholds.push_back(0.008 * i);
    auto curve = ced(errs, thresholds);
    for (std::size_t i = 1; i < curve.size(); ++i)
      CHECK(curve[i].second >= curve[i - 1].second);
    CHECK(ced(errs, {1e9})[0].second == 1.0);
    CHECK(ced(errs, {0.0})[0].second == 0.0);
  }
  SUBCASE("empty errors rejected") {
    CHECK_THROWS_AS(ced({}, {0.1}), contract_error);
  }
  SUBCASE("unsorted thresholds rejected") {
    CHECK_THROWS_AS(ced(errors, {0.2, 0.1}), contract_error);
  }
}

TEST_CASE("write_report") {
  EvalReport rep;
  rep.errors = {0.04, 0.0604};
  rep.mean = 0.0502;
  rep.curve = {{0.05, 0.5}, {0.10, 1.0}};
  rep.image_count = 2;
  rep.landmark_count = 5;

  SUBCASE("format is fixed to six decimals with the mean in percent") {
    std::ostringstream out;
    write_report(rep, out);
    CHECK(out.str() ==
          "threshold,fraction\n"
          "0.050000,0.500000\n"
          "0.100000,1.000000\n"
          "mean_error_percent,5.020000\n");
  }
  SUBCASE("empty thresholds produce a summary-only file") {
    EvalReport bare = rep;
    bare.curve.clear();
    std::ostringstream out;
    write_report(bare, out);
    CHECK(out.str() == "mean_error_percent,5.020000\n");
  }
  SUBCASE("file round trip reproduces the written text") {
    const std::string path = "test_report.csv";
    write_report(rep, path);
    std::ifstream in(path);
    std::stringstream buf;
    buf << in.rdbuf();
    std::ostringstream expect;
    write_report(rep, expect);
    CHECK(buf.str() == expect.str());
    std::remove(path.c_str());
  }
}

TEST_CASE("default eye indices") {
  const auto [l68, r68] = default_eye_indices(68);
  CHECK(l68.front() == 36);
  CHECK(r68.back() == 47);
  const auto [l5, r5] = default_eye_indices(5);
  CHECK(l5 == std::vector<std::size_t>{0});
  CHECK(r5 == std::vector<std::size_t>{1});
  CHECK_THROWS_AS(default_eye_indices(13), config_error);
}
