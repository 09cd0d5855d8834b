#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "casc/autodiff.hpp"

// Encode-decode backbone: convolutions at constant resolution, two 2x
// downsamplings, two 2x upsamplings, so the named taps sit at full input
// resolution. "deconv7" is the feature layer read by shape-indexed pooling;
// "conv8" carries one logit map per landmark.

namespace casc {

enum class LayerKind { Conv, MaxPool2, Deconv, Relu };

struct LayerDesc {
  LayerKind kind;
  int channels = 0;  // output channels for conv/deconv
  int kernel = 0;    // conv kernel size (odd); deconv is fixed 4/2/1
};

struct NetworkSpec {
  std::vector<LayerDesc> layers;
  std::map<std::string, std::size_t> taps;  // "deconv7", "conv8" -> layer index
  int input_channels = 1;

  std::size_t tap(const std::string& name) const {
    auto it = taps.find(name);
    if (it == taps.end()) throw contract_error("unknown network tap: " + name);
    return it->second;
  }

  int channels_at(std::size_t index) const {
    int c = input_channels;
    for (std::size_t i = 0; i <= index && i < layers.size(); ++i)
      if (layers[i].kind == LayerKind::Conv || layers[i].kind == LayerKind::Deconv)
        c = layers[i].channels;
    return c;
  }

  /// Spatial dims after every layer; fails if pooling meets odd dims.
  std::pair<std::int64_t, std::int64_t> propagate(std::int64_t h,
                                                  std::int64_t w) const {
    for (const LayerDesc& l : layers) {
      if (l.kind == LayerKind::MaxPool2) {
        if (h % 2 != 0 || w % 2 != 0)
          throw shape_error("maxpool2 on odd dims " + std::to_string(h) + "x" +
                            std::to_string(w));
        h /= 2;
        w /= 2;
      } else if (l.kind == LayerKind::Deconv) {
        h *= 2;
        w *= 2;
      }
    }
    return {h, w};
  }

  /// Structural contract: two pools, two deconvs, landmark head present.
  void validate(int landmark_count) const {
    int pools = 0, deconvs = 0;
    for (const LayerDesc& l : layers) {
      if (l.kind == LayerKind::MaxPool2) ++pools;
      if (l.kind == LayerKind::Deconv) ++deconvs;
      if (l.kind == LayerKind::Conv && l.kernel % 2 == 0)
        throw config_error("conv kernels must be odd");
    }
    if (pools != 2 || deconvs != 2)
      throw config_error("network must contain exactly two maxpool2 and two "
                         "deconv layers, got " +
                         std::to_string(pools) + " pools and " +
                         std::to_string(deconvs) + " deconvs");
    const std::size_t mask = tap("conv8");
    tap("deconv7");
    if (layers[mask].kind != LayerKind::Conv)
      throw config_error("conv8 tap must name a conv layer");
    if (layers[mask].channels != landmark_count)
      throw config_error("conv8 channel count " +
                         std::to_string(layers[mask].channels) +
                         " must equal landmark count " +
                         std::to_string(landmark_count));
  }
};

/// Desk-scale preset small enough to train on a single core.
inline NetworkSpec tiny_network(int landmark_count) {
  NetworkSpec s;
  s.layers = {
      {LayerKind::Conv, 8, 3},   {LayerKind::Relu},
      {LayerKind::Conv, 8, 3},   {LayerKind::Relu},
      {LayerKind::MaxPool2},     {LayerKind::Conv, 16, 3},
      {LayerKind::Relu},         {LayerKind::MaxPool2},
      {LayerKind::Deconv, 12},   {LayerKind::Relu},
      {LayerKind::Deconv, 12},   {LayerKind::Relu},
      {LayerKind::Conv, landmark_count, 3},
  };
  s.taps["deconv7"] = 11;
  s.taps["conv8"] = 12;
  return s;
}

/// Five-conv variant with the same two-pool / two-deconv envelope.
inline NetworkSpec vgg_s_network(int landmark_count) {
  NetworkSpec s;
  auto conv = [&](int c, int k) {
    s.layers.push_back({LayerKind::Conv, c, k});
    s.layers.push_back({LayerKind::Relu});
  };
  conv(96, 7);
  s.layers.push_back({LayerKind::MaxPool2});
  conv(256, 5);
  s.layers.push_back({LayerKind::MaxPool2});
  conv(512, 3);
  conv(512, 3);
  conv(512, 3);
  s.layers.push_back({LayerKind::Deconv, 96});
  s.layers.push_back({LayerKind::Relu});
  s.layers.push_back({LayerKind::Deconv, 96});
  s.layers.push_back({LayerKind::Relu});
  s.taps["deconv7"] = s.layers.size() - 1;
  s.layers.push_back({LayerKind::Conv, landmark_count, 3});
  s.taps["conv8"] = s.layers.size() - 1;
  return s;
}

/// Sixteen-conv variant: the first two pooling stages are kept, later ones
/// replaced by the upsampling tail.
inline NetworkSpec vgg19_network(int landmark_count) {
  NetworkSpec s;
  auto conv = [&](int c) {
    s.layers.push_back({LayerKind::Conv, c, 3});
    s.layers.push_back({LayerKind::Relu});
  };
  conv(64);
  conv(64);
  s.layers.push_back({LayerKind::MaxPool2});
  conv(128);
  conv(128);
  s.layers.push_back({LayerKind::MaxPool2});
  for (int i = 0; i < 4; ++i) conv(256);
  for (int i = 0; i < 4; ++i) conv(512);
  for (int i = 0; i < 4; ++i) conv(512);
  s.layers.push_back({LayerKind::Deconv, 96});
  s.layers.push_back({LayerKind::Relu});
  s.layers.push_back({LayerKind::Deconv, 96});
  s.layers.push_back({LayerKind::Relu});
  s.taps["deconv7"] = s.layers.size() - 1;
  s.layers.push_back({LayerKind::Conv, landmark_count, 3});
  s.taps["conv8"] = s.layers.size() - 1;
  return s;
}

inline NetworkSpec network_preset(const std::string& name, int landmark_count) {
  if (name == "tiny") return tiny_network(landmark_count);
  if (name == "vgg-s") return vgg_s_network(landmark_count);
  if (name == "vgg-19") return vgg19_network(landmark_count);
  throw config_error("unknown network preset: " + name);
}

/// Backbone parameters: a kernel and per-channel bias per parametric layer,
/// kept as leaf variables so optimizer steps persist across graphs.
struct Network {
  NetworkSpec spec;
  std::vector<VarPtr> kernels;  // entry per layer; null for pool/relu
  std::vector<VarPtr> biases;

  std::vector<VarPtr> parameters() const {
    std::vector<VarPtr> out;
    for (std::size_t i = 0; i < kernels.size(); ++i)
      if (kernels[i]) {
        out.push_back(kernels[i]);
        out.push_back(biases[i]);
      }
    return out;
  }
};

/// Zero bias, kernel entries N(0, 2/fan_in), fixed seed.
inline Network init_network(const NetworkSpec& spec, std::uint64_t seed) {
  Network net;
  net.spec = spec;
  Rng rng = derive_rng(seed, 0x1217);
  int in_c = spec.input_channels;
  for (const LayerDesc& l : spec.layers) {
    if (l.kind == LayerKind::Conv) {
      Tensor k({l.channels, in_c, l.kernel, l.kernel});
      const double sigma = std::sqrt(2.0 / (in_c * l.kernel * l.kernel));
      for (auto& v : k.v) v = sigma * rng.gaussian();
      net.kernels.push_back(make_leaf(std::move(k), true));
      net.biases.push_back(make_leaf(Tensor({1, 1, 1, l.channels}), true));
      in_c = l.channels;
    } else if (l.kind == LayerKind::Deconv) {
      Tensor k({in_c, l.channels, kDeconvKernel, kDeconvKernel});
      const double sigma =
          std::sqrt(2.0 / (in_c * kDeconvKernel * kDeconvKernel));
      for (auto& v : k.v) v = sigma * rng.gaussian();
      net.kernels.push_back(make_leaf(std::move(k), true));
      net.biases.push_back(make_leaf(Tensor({1, 1, 1, l.channels}), true));
      in_c = l.channels;
    } else {
      net.kernels.push_back(nullptr);
      net.biases.push_back(nullptr);
    }
  }
  return net;
}

struct NetworkTaps {
  VarPtr features;  // deconv7 activation, full resolution
  VarPtr logits;    // conv8 activation, one map per landmark
};

inline NetworkTaps network_forward(const Network& net, const VarPtr& input) {
  VarPtr x = input;
  NetworkTaps taps;
  const std::size_t feat = net.spec.tap("deconv7");
  const std::size_t mask = net.spec.tap("conv8");
  for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
    const LayerDesc& l = net.spec.layers[i];
    switch (l.kind) {
      case LayerKind::Conv:
        x = bias_add(conv2d(x, net.kernels[i]), net.biases[i]);
        break;
      case LayerKind::Deconv:
        x = bias_add(deconv2d(x, net.kernels[i]), net.biases[i]);
        break;
      case LayerKind::MaxPool2:
        x = maxpool2(x);
        break;
      case LayerKind::Relu:
        x = relu(x);
        break;
    }
    if (i == feat) taps.features = x;
    if (i == mask) taps.logits = x;
  }
  if (!taps.features || !taps.logits)
    throw contract_error("network taps not reached during forward pass");
  return taps;
}

}  // namespace casc
