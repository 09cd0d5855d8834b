#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "casc/landmarks.hpp"

// Inter-pupil normalized mean error and the cumulative error distribution,
// with a deterministic CSV report writer.

namespace casc {

/// Euclidean distance between the means of the two eye index sets.
inline double inter_pupil_distance(const LandmarkShape& shape,
                                   const std::vector<std::size_t>& left_eye,
                                   const std::vector<std::size_t>& right_eye) {
  if (left_eye.empty() || right_eye.empty())
    throw config_error("eye index sets must be non-empty");
  for (std::size_t l : left_eye)
    for (std::size_t r : right_eye)
      if (l == r)
        throw config_error("eye index sets overlap at index " + std::to_string(l));
  auto mean_of = [&](const std::vector<std::size_t>& idx) -> Point {
    Point m{0, 0};
    for (std::size_t i : idx) {
      if (i >= shape.size())
        throw config_error("eye index " + std::to_string(i) + " out of range");
      m.x += shape.points[i].x;
      m.y += shape.points[i].y;
    }
    m.x /= static_cast<double>(idx.size());
    m.y /= static_cast<double>(idx.size());
    return m;
  };
  const Point a = mean_of(left_eye), b = mean_of(right_eye);
  return std::hypot(a.x - b.x, a.y - b.y);
}

struct MeanErrorResult {
  std::vector<double> per_image;  // e_i
  double mean = 0.0;
};

/// e_i = (1/p) sum_j ||pred_ij - gt_ij|| / D_i with D_i the ground-truth
/// inter-pupil distance.
inline MeanErrorResult mean_error(const std::vector<LandmarkShape>& predictions,
                                  const std::vector<LandmarkShape>& ground_truths,
                                  const std::vector<std::size_t>& left_eye,
                                  const std::vector<std::size_t>& right_eye) {
  if (predictions.size() != ground_truths.size())
    throw contract_error("mean_error: prediction and truth counts differ");
  if (predictions.empty()) throw contract_error("mean_error: empty input");
  MeanErrorResult r;
  r.per_image.reserve(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const LandmarkShape& pred = predictions[i];
    const LandmarkShape& gt = ground_truths[i];
    if (pred.size() != gt.size())
      throw contract_error("mean_error: landmark counts differ at image " +
                           std::to_string(i));
    const double d = inter_pupil_distance(gt, left_eye, right_eye);
    if (d <= 0.0)
      throw data_error("degenerate inter-pupil distance at image " +
                       std::to_string(i));
    double acc = 0.0;
    for (std::size_t j = 0; j < pred.size(); ++j)
      acc += std::hypot(pred.points[j].x - gt.points[j].x,
                        pred.points[j].y - gt.points[j].y);
    r.per_image.push_back(acc / (static_cast<double>(pred.size()) * d));
  }
  for (double e : r.per_image) r.mean += e;
  r.mean /= static_cast<double>(r.per_image.size());
  return r;
}

/// Fraction of images with error <= threshold, per threshold.
inline std::vector<std::pair<double, double>> ced(
    const std::vector<double>& errors, const std::vector<double>& thresholds) {
  if (errors.empty()) throw contract_error("ced: empty error list");
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (thresholds[i] < thresholds[i - 1])
      throw contract_error("ced: thresholds must be sorted ascending");
  std::vector<std::pair<double, double>> curve;
  curve.reserve(thresholds.size());
  for (double l : thresholds) {
    std::size_t count = 0;
    for (double e : errors)
      if (e <= l) ++count;
    curve.push_back({l, static_cast<double>(count) / static_cast<double>(errors.size())});
  }
  return curve;
}

struct EvalReport {
  std::vector<double> errors;                    // e_i, unitless
  double mean = 0.0;                             // unitless; reported x100
  std::vector<std::pair<double, double>> curve;  // (threshold, fraction)
  std::size_t image_count = 0;
  std::size_t landmark_count = 0;
};

inline EvalReport make_report(const std::vector<LandmarkShape>& predictions,
                              const std::vector<LandmarkShape>& ground_truths,
                              const std::vector<std::size_t>& left_eye,
                              const std::vector<std::size_t>& right_eye,
                              const std::vector<double>& thresholds) {
  MeanErrorResult me = mean_error(predictions, ground_truths, left_eye, right_eye);
  EvalReport rep;
  rep.errors = std::move(me.per_image);
  rep.mean = me.mean;
  rep.curve = thresholds.empty()
                  ? std::vector<std::pair<double, double>>{}
                  : ced(rep.errors, thresholds);
  rep.image_count = predictions.size();
  rep.landmark_count = predictions.front().size();
  return rep;
}

inline std::string format_fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// CSV: `threshold,fraction` rows for the CED, then a summary line with the
/// mean error in percent. Empty curve -> summary only.
inline void write_report(const EvalReport& rep, std::ostream& out) {
  if (!rep.curve.empty()) {
    out << "threshold,fraction\n";
    for (const auto& [l, f] : rep.curve)
      out << format_fixed6(l) << "," << format_fixed6(f) << "\n";
  }
  out << "mean_error_percent," << format_fixed6(rep.mean * 100.0) << "\n";
}

inline void write_report(const EvalReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write report: " + path);
  write_report(rep, out);
  if (!out) throw data_error("failed writing report: " + path);
}

/// Sibling key=value summary for harness consumption.
inline void write_summary(const EvalReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write summary: " + path);
  out << "images=" << rep.image_count << "\n";
  out << "landmarks=" << rep.landmark_count << "\n";
  out << "mean_error_percent=" << format_fixed6(rep.mean * 100.0) << "\n";
}

/// Default eye index sets by landmark count: the 68-point markup uses the
/// eye contours, the 5-point synthetic markup its two eye centers.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
default_eye_indices(std::size_t landmark_count) {
  if (landmark_count == 68)
    return {{36, 37, 38, 39, 40, 41}, {42, 43, 44, 45, 46, 47}};
  if (landmark_count == 5) return {{0}, {1}};
  throw config_error("no default eye index sets for " +
                     std::to_string(landmark_count) + " landmarks");
}

}  // namespace casc
