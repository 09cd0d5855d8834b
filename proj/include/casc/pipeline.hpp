#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "casc/cascade.hpp"
#include "casc/checkpoint.hpp"
#include "casc/config.hpp"
#include "casc/data.hpp"
#include "casc/metrics.hpp"
#include "casc/network.hpp"
#include "casc/synth.hpp"

// Orchestration of the three training phases: landmark-map learning on the
// encode-decode network, k-means shape-space construction, and cascade
// fitting; plus the inference path from a raw sample back to original-image
// coordinates.

namespace casc {

using LogFn = std::function<void(const std::string&)>;

inline void log_line(const LogFn& log, const std::string& line) {
  if (log) log(line);
}

struct WorkingSet {
  std::vector<Tensor> images;         // (1,1,T,T) each
  std::vector<LandmarkShape> shapes;  // ground truth in the working frame
  std::vector<Affine2> to_original;
  std::int64_t size = 0;
};

inline Tensor image_to_tensor(const Image& img) {
  Tensor t({1, 1, img.height, img.width});
  t.v = img.pix;
  return t;
}

inline WorkingSet prepare_working_set(const std::vector<Sample>& samples,
                                      std::int64_t out_size) {
  WorkingSet ws;
  ws.size = out_size;
  ws.images.reserve(samples.size());
  for (const Sample& s : samples) {
    CropResult crop = crop_and_resize(s, out_size);
    ws.images.push_back(image_to_tensor(crop.sample.image));
    ws.shapes.push_back(crop.sample.shape);
    ws.to_original.push_back(crop.to_original);
  }
  return ws;
}

/// Stacked per-landmark target maps (1,p,T,T) for one working shape.
inline Tensor stack_target_maps(const LandmarkShape& shape, std::int64_t size) {
  const std::int64_t p = static_cast<std::int64_t>(shape.size());
  Tensor t({1, p, size, size});
  for (std::int64_t j = 0; j < p; ++j) {
    const Tensor q = build_target_map(shape.points[static_cast<std::size_t>(j)],
                                      size, size);
    std::copy(q.v.begin(), q.v.end(),
              t.v.begin() + static_cast<std::ptrdiff_t>(t.index(0, j, 0, 0)));
  }
  return t;
}

/// Phase 1: SGD on the summed per-landmark distribution losses.
inline void train_masks(Network& net, const WorkingSet& ws,
                        const OptimConfig& optim, std::uint64_t seed,
                        const LogFn& log = {}) {
  const std::size_t n = ws.images.size();
  if (n == 0) throw contract_error("train_masks: empty dataset");
  std::vector<VarPtr> params = net.parameters();
  OptimizerState state;
  state.learning_rate = optim.learning_rate;
  state.momentum = optim.momentum;
  state.weight_decay = optim.weight_decay;
  state.batch_size = optim.batch_size;

  Rng order_rng = derive_rng(seed, 0xe90c);
  const Dims id = ws.images[0].dims;
  for (int epoch = 0; epoch < optim.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[order_rng.below(i)]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n;
         start += static_cast<std::size_t>(optim.batch_size)) {
      const std::size_t stop =
          std::min(n, start + static_cast<std::size_t>(optim.batch_size));
      const std::size_t bsz = stop - start;
      Tensor batch({static_cast<std::int64_t>(bsz), id.c, id.h, id.w});
      Tensor targets({static_cast<std::int64_t>(bsz),
                      static_cast<std::int64_t>(ws.shapes[0].size()), id.h, id.w});
      for (std::size_t b = 0; b < bsz; ++b) {
        const std::size_t i = order[start + b];
        std::copy(ws.images[i].v.begin(), ws.images[i].v.end(),
                  batch.v.begin() + static_cast<std::ptrdiff_t>(b * ws.images[i].v.size()));
        const Tensor q = stack_target_maps(ws.shapes[i], ws.size);
        std::copy(q.v.begin(), q.v.end(),
                  targets.v.begin() + static_cast<std::ptrdiff_t>(b * q.v.size()));
      }
      VarPtr input = make_leaf(std::move(batch), false);
      NetworkTaps taps = network_forward(net, input);
      VarPtr loss = distribution_loss(taps.logits, std::move(targets),
                                      1.0 / static_cast<double>(bsz));
      backward(loss);
      sgd_step(params, state);
      epoch_loss += loss->t.v[0] * static_cast<double>(bsz);
    }
    log_line(log, "phase=1 epoch=" + std::to_string(epoch) +
                      " loss=" + std::to_string(epoch_loss / static_cast<double>(n)));
  }
}

struct SampleEncoding {
  Tensor features;       // (1,M,T,T) deconv7 activation
  Tensor probability;    // (1,p,T,T) softmaxed conv8 maps
};

inline SampleEncoding encode_sample(const Network& net, const Tensor& image) {
  VarPtr input = make_leaf(image, false);
  NetworkTaps taps = network_forward(net, input);
  SampleEncoding enc;
  enc.features = taps.features->t;
  enc.probability = spatial_softmax(taps.logits->t);
  return enc;
}

/// Mask argmax -> nearest shape-space candidate.
inline LandmarkShape initialize_shape(const SampleEncoding& enc,
                                      const ShapeSpace& space) {
  const LandmarkShape predicted = predict_shape_from_maps(enc.probability);
  return select_initialization(predicted, space).shape;
}

struct TrainArtifacts {
  TrainedModel model;
  std::vector<double> stage_mse;  // per-stage training mean squared residual
};

inline TrainArtifacts train_full(const RunConfig& cfg,
                                 const std::vector<Sample>& train_samples,
                                 const LogFn& log = {}) {
  cfg.validate();
  if (train_samples.empty()) throw contract_error("train_full: empty dataset");
  const std::size_t p = train_samples.front().shape.size();

  std::vector<Sample> samples = train_samples;
  if (cfg.augment_enabled) {
    AugmentConfig aug = cfg.augment;
    if (aug.mirror && aug.mirror_perm.empty() && p == 68)
      aug.mirror_perm = mirror_permutation_68();
    samples = augment_dataset(samples, aug, cfg.seed);
    log_line(log, "augmented=" + std::to_string(samples.size()));
  }

  WorkingSet ws = prepare_working_set(samples, cfg.input_size);

  NetworkSpec spec = cfg.custom_network ? *cfg.custom_network
                                        : network_preset(cfg.network, static_cast<int>(p));
  spec.validate(static_cast<int>(p));
  Network net = init_network(spec, cfg.seed);

  train_masks(net, ws, cfg.optim, cfg.seed, log);

  KmeansResult km = kmeans_shapes(ws.shapes,
                                  static_cast<std::size_t>(cfg.shape_space_size),
                                  cfg.seed, cfg.kmeans_max_iters);
  for (const std::string& w : km.warnings) log_line(log, "warning=" + w);
  log_line(log, "phase=2 candidates=" + std::to_string(km.space.size()) +
                    " kmeans_iters=" + std::to_string(km.objective_trace.size()));

  // Per-sample encodings feed both the initialization and the cascade.
  std::vector<Tensor> features;
  std::vector<LandmarkShape> initial;
  std::vector<Tensor> mask_targets;  // only kept for joint mode
  features.reserve(ws.images.size());
  initial.reserve(ws.images.size());
  for (std::size_t i = 0; i < ws.images.size(); ++i) {
    SampleEncoding enc = encode_sample(net, ws.images[i]);
    initial.push_back(initialize_shape(enc, km.space));
    features.push_back(std::move(enc.features));
  }
  {
    double init_sq = 0.0;
    for (std::size_t i = 0; i < initial.size(); ++i)
      init_sq += squared_distance(initial[i], ws.shapes[i]);
    log_line(log, "phase=3 stage=init train_mse=" +
                      std::to_string(init_sq / static_cast<double>(initial.size())));
  }

  TrainArtifacts art;
  CascadeTrainConfig ctc;
  ctc.stages = cfg.stages;
  ctc.sip.halfwidth = cfg.sip_halfwidth;
  ctc.ridge_scale = cfg.ridge_scale;
  CascadeModel cascade = train_cascade_sequential(
      features, initial, ws.shapes, ctc, [&](int stage, double mse) {
        art.stage_mse.push_back(mse);
        log_line(log, "phase=3 stage=" + std::to_string(stage) +
                          " train_mse=" + std::to_string(mse));
      });

  if (cfg.mode == "joint") {
    for (const LandmarkShape& s : ws.shapes)
      mask_targets.push_back(stack_target_maps(s, ws.size));
    JointTrainConfig jtc;
    jtc.stages = cfg.stages;
    jtc.sip = ctc.sip;
    jtc.epochs = cfg.joint.epochs;
    jtc.learning_rate = cfg.joint.learning_rate;
    jtc.momentum = cfg.optim.momentum;
    jtc.weight_decay = cfg.optim.weight_decay;
    jtc.batch_size = cfg.optim.batch_size;
    jtc.mask_weight = cfg.joint.mask_weight;
    jtc.adapt_features = cfg.joint.adapt_features;
    jtc.seed = cfg.seed;
    cascade = train_cascade_joint(net, ws.images, initial, ws.shapes,
                                  mask_targets, std::move(cascade), jtc,
                                  [&](int epoch, double loss) {
                                    log_line(log, "phase=3 joint_epoch=" +
                                                      std::to_string(epoch) +
                                                      " loss=" + std::to_string(loss));
                                  });
  }

  art.model.net = std::move(net);
  art.model.space = std::move(km.space);
  art.model.cascade = std::move(cascade);
  art.model.input_size = cfg.input_size;
  return art;
}

/// Full inference path; the returned shape is in original-image pixels.
inline LandmarkShape predict_sample(const TrainedModel& model, const Sample& s) {
  CropResult crop = crop_and_resize(s, model.input_size);
  SampleEncoding enc = encode_sample(model.net, image_to_tensor(crop.sample.image));
  const LandmarkShape s0 = initialize_shape(enc, model.space);
  CascadeRun run = run_cascade(enc.features, s0, model.cascade);
  return transform_shape(run.final, crop.to_original);
}

inline std::vector<Sample> load_dataset(const RunConfig& cfg, bool test_split) {
  if (cfg.data.kind == "synthetic") {
    const int count = test_split ? cfg.data.synth_test : cfg.data.synth_train;
    // Distinct streams keep train and test disjoint.
    return synth_samples(static_cast<std::size_t>(count),
                         mix_seed(cfg.seed, test_split ? 0x7e57 : 0x7121),
                         cfg.input_size);
  }
  const std::string& path = test_split ? cfg.data.test_manifest : cfg.data.train_manifest;
  if (path.empty()) throw config_error("no manifest configured for this split");
  return load_manifest_samples(path);
}

}  // namespace casc
