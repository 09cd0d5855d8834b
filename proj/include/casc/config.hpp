#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "casc/data.hpp"
#include "casc/network.hpp"
#include "casc/landmark_ops.hpp"

// Run configuration: one JSON document whose keys default to the full-scale
// hyperparameters; the "desk" profile swaps in the synthetic-data settings
// small enough for a single core.

namespace casc {

struct OptimConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 4;
  int epochs = 30;
};

struct DataConfig {
  std::string kind = "manifest";  // "manifest" | "synthetic"
  std::string train_manifest;
  std::string test_manifest;
  int synth_train = 500;
  int synth_test = 100;
};

struct JointConfig {
  int epochs = 5;
  double learning_rate = 1e-3;
  double mask_weight = 1.0;
  bool adapt_features = true;
};

struct RunConfig {
  std::string profile = "paper";
  std::string network = "vgg-19";
  std::optional<NetworkSpec> custom_network;
  int input_size = 256;         // T
  int stages = 8;               // K
  int sip_halfwidth = 3;        // b
  int shape_space_size = 5000;  // N
  double ridge_scale = 1e-3;
  int kmeans_max_iters = 100;
  std::string mode = "sequential";  // "sequential" | "joint"
  OptimConfig optim;
  JointConfig joint;
  AugmentConfig augment;
  bool augment_enabled = false;
  DataConfig data;
  std::uint64_t seed = 1;
  std::vector<double> ced_thresholds;

  void validate() const {
    if (stages < 1) throw config_error("stages (K) must be >= 1");
    if (sip_halfwidth < 0) throw config_error("sip_halfwidth (b) must be >= 0");
    if (shape_space_size < 1) throw config_error("shape_space_size (N) must be >= 1");
    if (input_size <= 0 || input_size % 4 != 0)
      throw config_error("input_size (T) must be positive and divisible by 4");
    if (optim.batch_size < 1) throw config_error("batch_size must be >= 1");
    if (mode != "sequential" && mode != "joint")
      throw config_error("mode must be 'sequential' or 'joint'");
    if (data.kind == "manifest") {
      if (data.train_manifest.empty())
        throw config_error("manifest data requires data.train_manifest");
      if (!std::filesystem::exists(data.train_manifest))
        throw data_error("train manifest not found: " + data.train_manifest);
      if (!data.test_manifest.empty() &&
          !std::filesystem::exists(data.test_manifest))
        throw data_error("test manifest not found: " + data.test_manifest);
    } else if (data.kind == "synthetic") {
      if (data.synth_train < 1) throw config_error("synthetic train count must be >= 1");
    } else {
      throw config_error("data.kind must be 'manifest' or 'synthetic'");
    }
    if (augment_enabled) augment.validate();
  }
};

inline std::vector<double> default_ced_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 50; ++i) t.push_back(i * 0.01);
  return t;
}

/// T=64, N=64, tiny network, synthetic data; everything else inherited.
inline RunConfig desk_profile() {
  RunConfig c;
  c.profile = "desk";
  c.network = "tiny";
  c.input_size = 64;
  c.shape_space_size = 64;
  c.data.kind = "synthetic";
  c.optim.learning_rate = 0.005;
  c.optim.epochs = 20;
  c.ced_thresholds = default_ced_thresholds();
  return c;
}

inline RunConfig paper_profile() {
  RunConfig c;
  c.ced_thresholds = default_ced_thresholds();
  return c;
}

inline RunConfig profile_config(const std::string& name) {
  if (name == "desk") return desk_profile();
  if (name == "paper") return paper_profile();
  throw config_error("unknown profile: " + name);
}

namespace detail {

template <class T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline NetworkSpec parse_network_spec(const nlohmann::json& j) {
  NetworkSpec spec;
  detail::maybe(j, "input_channels", spec.input_channels);
  if (!j.contains("layers") || !j.at("layers").is_array())
    throw config_error("explicit network spec needs a 'layers' array");
  for (const auto& lj : j.at("layers")) {
    LayerDesc l;
    const std::string kind = lj.value("kind", std::string());
    if (kind == "conv")
      l.kind = LayerKind::Conv;
    else if (kind == "maxpool2")
      l.kind = LayerKind::MaxPool2;
    else if (kind == "deconv")
      l.kind = LayerKind::Deconv;
    else if (kind == "relu")
      l.kind = LayerKind::Relu;
    else
      throw config_error("unknown layer kind: '" + kind + "'");
    detail::maybe(lj, "channels", l.channels);
    detail::maybe(lj, "kernel", l.kernel);
    spec.layers.push_back(l);
  }
  if (!j.contains("taps"))
    throw config_error("explicit network spec needs 'taps' with deconv7 and conv8");
  for (const auto& [name, idx] : j.at("taps").items()) {
    const auto i = idx.get<std::size_t>();
    if (i >= spec.layers.size())
      throw config_error("tap '" + name + "' is out of range");
    spec.taps[name] = i;
  }
  if (!spec.taps.contains("deconv7") || !spec.taps.contains("conv8"))
    throw config_error("explicit network spec needs 'taps' with deconv7 and conv8");
  return spec;
}

inline RunConfig parse_config(const nlohmann::json& j) {
  RunConfig c = profile_config(j.value("profile", std::string("paper")));
  using detail::maybe;
  if (j.contains("network") && j.at("network").is_object()) {
    c.custom_network = parse_network_spec(j.at("network"));
    c.network = "custom";
  } else {
    maybe(j, "network", c.network);
  }
  maybe(j, "input_size", c.input_size);
  maybe(j, "stages", c.stages);
  maybe(j, "sip_halfwidth", c.sip_halfwidth);
  maybe(j, "shape_space_size", c.shape_space_size);
  maybe(j, "ridge_scale", c.ridge_scale);
  maybe(j, "kmeans_max_iters", c.kmeans_max_iters);
  maybe(j, "mode", c.mode);
  maybe(j, "seed", c.seed);
  maybe(j, "ced_thresholds", c.ced_thresholds);
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    maybe(o, "learning_rate", c.optim.learning_rate);
    maybe(o, "momentum", c.optim.momentum);
    maybe(o, "weight_decay", c.optim.weight_decay);
    maybe(o, "batch_size", c.optim.batch_size);
    maybe(o, "epochs", c.optim.epochs);
  }
  if (j.contains("joint")) {
    const auto& o = j.at("joint");
    maybe(o, "epochs", c.joint.epochs);
    maybe(o, "learning_rate", c.joint.learning_rate);
    maybe(o, "mask_weight", c.joint.mask_weight);
    maybe(o, "adapt_features", c.joint.adapt_features);
  }
  if (j.contains("augment")) {
    const auto& o = j.at("augment");
    maybe(o, "enabled", c.augment_enabled);
    maybe(o, "angles", c.augment.angles);
    maybe(o, "jitter_count", c.augment.jitter_count);
    maybe(o, "mirror", c.augment.mirror);
    maybe(o, "mirror_perm", c.augment.mirror_perm);
  }
  if (j.contains("data")) {
    const auto& o = j.at("data");
    maybe(o, "kind", c.data.kind);
    maybe(o, "train_manifest", c.data.train_manifest);
    maybe(o, "test_manifest", c.data.test_manifest);
    maybe(o, "synth_train", c.data.synth_train);
    maybe(o, "synth_test", c.data.synth_test);
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("invalid config JSON in " + path + ": " + e.what());
  }
  try {
    return parse_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw config_error("invalid config value in " + path + ": " + e.what());
  }
}

}  // namespace casc
