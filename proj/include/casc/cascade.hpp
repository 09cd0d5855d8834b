#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "casc/linalg.hpp"
#include "casc/network.hpp"
#include "casc/landmark_ops.hpp"
#include "casc/shape_space.hpp"

// Sequential shape refinement: pooled features at the current shape feed a
// learned linear stage per iteration. Stages are fit in closed form by
// ridge-regularized least squares (the default), or refined jointly by SGD
// with the stages held as fully-connected layers.

namespace casc {

struct CascadeStage {
  Matrix weights;            // 2p x (M*p)
  std::vector<double> bias;  // 2p
  int index = 0;
};

struct CascadeModel {
  std::vector<CascadeStage> stages;
  SipConfig sip;
  int feature_channels = 0;  // M
  int landmark_count = 0;    // p

  void validate() const {
    if (stages.empty()) throw contract_error("cascade model requires K >= 1");
    const std::size_t rows = 2 * static_cast<std::size_t>(landmark_count);
    const std::size_t cols =
        static_cast<std::size_t>(feature_channels) * static_cast<std::size_t>(landmark_count);
    for (const CascadeStage& s : stages) {
      if (s.weights.rows != rows || s.weights.cols != cols || s.bias.size() != rows)
        throw shape_error("cascade stage " + std::to_string(s.index) +
                          " has inconsistent dims");
    }
  }
};

/// Delta = R*phi + b, reshaped to p (dx,dy) pairs.
inline LandmarkShape apply_stage(std::span<const double> features,
                                 const CascadeStage& stage) {
  if (features.size() != stage.weights.cols)
    throw shape_error("apply_stage: feature length " +
                      std::to_string(features.size()) + " vs stage cols " +
                      std::to_string(stage.weights.cols));
  std::vector<double> delta(stage.weights.rows);
  for (std::size_t r = 0; r < stage.weights.rows; ++r) {
    double acc = stage.bias[r];
    const double* row = &stage.weights.a[r * stage.weights.cols];
    for (std::size_t c = 0; c < stage.weights.cols; ++c) acc += row[c] * features[c];
    delta[r] = acc;
  }
  return LandmarkShape::from_flat(delta);
}

struct CascadeRun {
  LandmarkShape final;
  std::vector<LandmarkShape> trajectory;  // K+1 entries including S0
};

inline CascadeRun run_cascade(const Tensor& featmaps, const LandmarkShape& s0,
                              const CascadeModel& model) {
  model.validate();
  CascadeRun run;
  run.trajectory.push_back(s0);
  LandmarkShape cur = s0;
  for (const CascadeStage& stage : model.stages) {
    SipResult phi = shape_indexed_pool(featmaps, cur, model.sip);
    cur = add_delta(cur, apply_stage(phi.features, stage));
    run.trajectory.push_back(cur);
  }
  run.final = cur;
  return run;
}

/// Ridge-regularized least squares on centered data; lambda penalizes the
/// weights only, the bias absorbs the mean residual. lambda == 0 falls back
/// to the minimum-norm solution of the (possibly singular) normal equations.
inline CascadeStage fit_stage_closed_form(const Matrix& features,
                                          const Matrix& targets, double lambda) {
  if (features.rows != targets.rows)
    throw contract_error("fit_stage: feature and target row counts differ");
  if (features.rows == 0) throw contract_error("fit_stage: empty training set");
  if (lambda < 0.0) throw contract_error("fit_stage: negative ridge strength");
  const std::size_t n = features.rows, d = features.cols, q = targets.cols;

  std::vector<double> fmean(d, 0.0), tmean(q, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) fmean[j] += features.at(i, j);
    for (std::size_t j = 0; j < q; ++j) tmean[j] += targets.at(i, j);
  }
  for (double& v : fmean) v /= static_cast<double>(n);
  for (double& v : tmean) v /= static_cast<double>(n);

  Matrix fc(n, d), tc(n, q);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) fc.at(i, j) = features.at(i, j) - fmean[j];
    for (std::size_t j = 0; j < q; ++j) tc.at(i, j) = targets.at(i, j) - tmean[j];
  }

  const Matrix w = spd_solve(gram(fc), cross(fc, tc), lambda);  // d x q

  CascadeStage stage;
  stage.weights = Matrix(q, d);
  for (std::size_t r = 0; r < q; ++r)
    for (std::size_t c = 0; c < d; ++c) stage.weights.at(r, c) = w.at(c, r);
  stage.bias.resize(q);
  for (std::size_t r = 0; r < q; ++r) {
    double acc = tmean[r];
    for (std::size_t c = 0; c < d; ++c) acc -= stage.weights.at(r, c) * fmean[c];
    stage.bias[r] = acc;
  }
  return stage;
}

/// Sum of squared coordinate residuals over matched shape lists.
inline double cascade_loss(const std::vector<LandmarkShape>& predictions,
                           const std::vector<LandmarkShape>& ground_truths) {
  if (predictions.size() != ground_truths.size())
    throw contract_error("cascade_loss: list sizes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    acc += squared_distance(predictions[i], ground_truths[i]);
  return acc;
}

struct CascadeTrainConfig {
  int stages = 8;        // K
  SipConfig sip;         // b and tap
  double ridge_scale = 1e-3;  // lambda = ridge_scale * mean feature variance
};

using StageLog = std::function<void(int stage, double mean_squared_residual)>;

/// Classic sequential fit: per stage, regress the remaining residuals on
/// pooled features, then advance every training shape. Features are frozen.
/// featmaps[i] must be the (1,M,H,W) feature tensor of sample i.
inline CascadeModel train_cascade_sequential(
    const std::vector<Tensor>& featmaps,
    const std::vector<LandmarkShape>& initial,
    const std::vector<LandmarkShape>& ground_truth,
    const CascadeTrainConfig& cfg, const StageLog& log = {}) {
  if (featmaps.empty()) throw contract_error("train_cascade: empty dataset");
  if (featmaps.size() != initial.size() || initial.size() != ground_truth.size())
    throw contract_error("train_cascade: dataset lists differ in length");
  if (cfg.stages < 1) throw contract_error("train_cascade: K must be >= 1");

  const std::size_t n = featmaps.size();
  const std::size_t p = ground_truth.front().size();
  const std::size_t m = static_cast<std::size_t>(featmaps.front().dims.c);
  const std::size_t d = m * p, q = 2 * p;

  CascadeModel model;
  model.sip = cfg.sip;
  model.feature_channels = static_cast<int>(m);
  model.landmark_count = static_cast<int>(p);

  std::vector<LandmarkShape> current = initial;
  for (int k = 0; k < cfg.stages; ++k) {
    Matrix phi(n, d), resid(n, q);
    for (std::size_t i = 0; i < n; ++i) {
      SipResult r = shape_indexed_pool(featmaps[i], current[i], cfg.sip);
      for (std::size_t j = 0; j < d; ++j) phi.at(i, j) = r.features[j];
      const std::vector<double> cur = current[i].flat();
      const std::vector<double> gt = ground_truth[i].flat();
      for (std::size_t j = 0; j < q; ++j) resid.at(i, j) = gt[j] - cur[j];
    }

    // Mean per-column variance sets the ridge scale.
    double var_sum = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += phi.at(i, j);
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double dd = phi.at(i, j) - mean;
        sq += dd * dd;
      }
      var_sum += sq / static_cast<double>(n);
    }
    const double lambda = cfg.ridge_scale * (var_sum / static_cast<double>(d));

    CascadeStage stage = fit_stage_closed_form(phi, resid, lambda);
    stage.index = k;

    double sq_residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row(d);
      for (std::size_t j = 0; j < d; ++j) row[j] = phi.at(i, j);
      current[i] = add_delta(current[i], apply_stage(row, stage));
      sq_residual += squared_distance(current[i], ground_truth[i]);
    }
    if (log) log(k, sq_residual / static_cast<double>(n));
    model.stages.push_back(std::move(stage));
  }
  model.validate();
  return model;
}

struct JointTrainConfig {
  int stages = 8;
  SipConfig sip;
  int epochs = 5;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int batch_size = 4;
  double mask_weight = 1.0;     // weight of the distribution loss term
  bool adapt_features = true;   // backprop through the network
  std::uint64_t seed = 1;
};

/// Joint refinement: stages as fully-connected layers, SGD on the summed
/// per-stage squared residuals (plus, optionally, the landmark-map loss),
/// with pooled-feature gradients scattered back into the feature maps.
/// Returns the refined model; `images` are working-frame inputs.
inline CascadeModel train_cascade_joint(
    const Network& net, const std::vector<Tensor>& images,
    const std::vector<LandmarkShape>& initial,
    const std::vector<LandmarkShape>& ground_truth,
    const std::vector<Tensor>& mask_targets, CascadeModel model,
    const JointTrainConfig& cfg,
    const std::function<void(int epoch, double loss)>& log = {}) {
  if (images.empty()) throw contract_error("train_cascade_joint: empty dataset");
  model.validate();
  const std::size_t n = images.size();
  const std::size_t q = 2 * static_cast<std::size_t>(model.landmark_count);
  const std::size_t d = static_cast<std::size_t>(model.feature_channels) *
                        static_cast<std::size_t>(model.landmark_count);

  // Stage parameters as leaves.
  std::vector<VarPtr> stage_w, stage_b;
  for (const CascadeStage& s : model.stages) {
    Tensor w({1, 1, static_cast<std::int64_t>(q), static_cast<std::int64_t>(d)});
    w.v = s.weights.a;
    stage_w.push_back(make_leaf(std::move(w), true));
    Tensor b({1, 1, 1, static_cast<std::int64_t>(q)});
    b.v = s.bias;
    stage_b.push_back(make_leaf(std::move(b), true));
  }

  std::vector<VarPtr> params;
  if (cfg.adapt_features) params = net.parameters();
  for (std::size_t k = 0; k < stage_w.size(); ++k) {
    params.push_back(stage_w[k]);
    params.push_back(stage_b[k]);
  }
  OptimizerState opt;
  opt.learning_rate = cfg.learning_rate;
  opt.momentum = cfg.momentum;
  opt.weight_decay = cfg.weight_decay;
  opt.batch_size = cfg.batch_size;

  Rng order_rng = derive_rng(cfg.seed, 0x90b7);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[order_rng.below(i)]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t bsz = stop - start;

      Dims id = images[0].dims;
      Tensor batch({static_cast<std::int64_t>(bsz), id.c, id.h, id.w});
      Tensor masks;
      if (cfg.mask_weight > 0.0) {
        Dims md = mask_targets[0].dims;
        masks = Tensor({static_cast<std::int64_t>(bsz), md.c, md.h, md.w});
      }
      for (std::size_t b = 0; b < bsz; ++b) {
        const std::size_t i = order[start + b];
        std::copy(images[i].v.begin(), images[i].v.end(),
                  batch.v.begin() + static_cast<std::ptrdiff_t>(b * images[i].v.size()));
        if (cfg.mask_weight > 0.0)
          std::copy(mask_targets[i].v.begin(), mask_targets[i].v.end(),
                    masks.v.begin() + static_cast<std::ptrdiff_t>(b * mask_targets[i].v.size()));
      }

      VarPtr input = make_leaf(std::move(batch), false);
      NetworkTaps taps = network_forward(net, input);

      VarPtr loss;
      for (std::size_t b = 0; b < bsz; ++b) {
        const std::size_t i = order[start + b];
        VarPtr shape_v = make_leaf(Tensor::vec(initial[i].flat()), false);
        const Tensor target = Tensor::vec(ground_truth[i].flat());
        for (std::size_t k = 0; k < stage_w.size(); ++k) {
          LandmarkShape cur = LandmarkShape::from_flat(shape_v->t.v);
          VarPtr phi = sip(taps.features, static_cast<std::int64_t>(b), cur, cfg.sip);
          shape_v = add(shape_v, fully_connected(stage_w[k], phi, stage_b[k]));
          VarPtr l = sum_squares_to(shape_v, target, 1.0 / static_cast<double>(bsz));
          loss = loss ? add(loss, l) : l;
        }
      }
      if (cfg.mask_weight > 0.0)
        loss = add(loss, distribution_loss(taps.logits, std::move(masks),
                                           cfg.mask_weight / static_cast<double>(bsz)));

      backward(loss);
      sgd_step(params, opt);
      epoch_loss += loss->t.v[0] * static_cast<double>(bsz);
    }
    if (log) log(epoch, epoch_loss / static_cast<double>(n));
  }

  for (std::size_t k = 0; k < model.stages.size(); ++k) {
    model.stages[k].weights.a = stage_w[k]->t.v;
    model.stages[k].bias = stage_b[k]->t.v;
  }
  return model;
}

}  // namespace casc
