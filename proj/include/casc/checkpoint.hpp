#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "casc/cascade.hpp"
#include "casc/network.hpp"
#include "casc/shape_space.hpp"

// Single-file model checkpoint, explicitly little-endian:
//   "CASC" | version u32 | model spec | parameter tensors
//   | shape space (N, p, 2p-double records) | cascade (K, per-stage R dims,
//   R values, bias values).

namespace casc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainedModel {
  Network net;
  ShapeSpace space;
  CascadeModel cascade;
  std::int64_t input_size = 0;  // working-frame side T
};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw checkpoint_error("truncated checkpoint");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw checkpoint_error("truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& in) {
  return std::bit_cast<double>(get_u64(in));
}

inline void put_tensor(std::ostream& out, const Tensor& t) {
  put_u64(out, static_cast<std::uint64_t>(t.dims.n));
  put_u64(out, static_cast<std::uint64_t>(t.dims.c));
  put_u64(out, static_cast<std::uint64_t>(t.dims.h));
  put_u64(out, static_cast<std::uint64_t>(t.dims.w));
  for (double v : t.v) put_f64(out, v);
}

inline Tensor get_tensor(std::istream& in) {
  Dims d;
  d.n = static_cast<std::int64_t>(get_u64(in));
  d.c = static_cast<std::int64_t>(get_u64(in));
  d.h = static_cast<std::int64_t>(get_u64(in));
  d.w = static_cast<std::int64_t>(get_u64(in));
  if (d.numel() < 0 || d.numel() > (1LL << 40))
    throw checkpoint_error("implausible tensor dims in checkpoint");
  Tensor t(d);
  for (auto& v : t.v) v = get_f64(in);
  return t;
}

}  // namespace detail

inline void save_checkpoint(const TrainedModel& model, std::ostream& out) {
  using namespace detail;
  out.write("CASC", 4);
  put_u32(out, kCheckpointVersion);

  // Model spec: geometry, layer list, taps, pooling halfwidth.
  const NetworkSpec& spec = model.net.spec;
  put_u32(out, static_cast<std::uint32_t>(model.input_size));
  put_u32(out, static_cast<std::uint32_t>(spec.input_channels));
  put_u32(out, static_cast<std::uint32_t>(model.cascade.sip.halfwidth));
  put_u32(out, static_cast<std::uint32_t>(spec.layers.size()));
  for (const LayerDesc& l : spec.layers) {
    put_u32(out, static_cast<std::uint32_t>(l.kind));
    put_u32(out, static_cast<std::uint32_t>(l.channels));
    put_u32(out, static_cast<std::uint32_t>(l.kernel));
  }
  put_u32(out, static_cast<std::uint32_t>(spec.tap("deconv7")));
  put_u32(out, static_cast<std::uint32_t>(spec.tap("conv8")));

  std::uint64_t param_count = 0;
  for (const VarPtr& k : model.net.kernels)
    if (k) param_count += 2;
  put_u64(out, param_count);
  for (std::size_t i = 0; i < model.net.kernels.size(); ++i)
    if (model.net.kernels[i]) {
      put_tensor(out, model.net.kernels[i]->t);
      put_tensor(out, model.net.biases[i]->t);
    }

  put_u64(out, model.space.candidates.size());
  put_u64(out, model.space.landmark_count());
  for (const LandmarkShape& s : model.space.candidates)
    for (double v : s.flat()) put_f64(out, v);

  put_u64(out, model.cascade.stages.size());
  for (const CascadeStage& s : model.cascade.stages) {
    put_u64(out, s.weights.rows);
    put_u64(out, s.weights.cols);
    for (double v : s.weights.a) put_f64(out, v);
    for (double v : s.bias) put_f64(out, v);
  }
  if (!out) throw checkpoint_error("failed writing checkpoint stream");
}

inline void save_checkpoint(const TrainedModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw checkpoint_error("cannot write checkpoint: " + path);
  save_checkpoint(model, out);
}

inline TrainedModel load_checkpoint(std::istream& in) {
  using namespace detail;
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "CASC", 4) != 0)
    throw checkpoint_error("not a checkpoint file (bad magic)");
  const std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion)
    throw checkpoint_error("unsupported checkpoint version " +
                           std::to_string(version) + " (expected " +
                           std::to_string(kCheckpointVersion) + ")");

  TrainedModel model;
  model.input_size = get_u32(in);
  NetworkSpec spec;
  spec.input_channels = static_cast<int>(get_u32(in));
  const int sip_halfwidth = static_cast<int>(get_u32(in));
  const std::uint32_t layer_count = get_u32(in);
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    LayerDesc l;
    l.kind = static_cast<LayerKind>(get_u32(in));
    l.channels = static_cast<int>(get_u32(in));
    l.kernel = static_cast<int>(get_u32(in));
    spec.layers.push_back(l);
  }
  spec.taps["deconv7"] = get_u32(in);
  spec.taps["conv8"] = get_u32(in);

  model.net.spec = spec;
  const std::uint64_t param_count = get_u64(in);
  std::uint64_t consumed = 0;
  for (const LayerDesc& l : spec.layers) {
    if (l.kind == LayerKind::Conv || l.kind == LayerKind::Deconv) {
      if (consumed + 2 > param_count)
        throw checkpoint_error("checkpoint parameter list too short");
      model.net.kernels.push_back(make_leaf(get_tensor(in), true));
      model.net.biases.push_back(make_leaf(get_tensor(in), true));
      consumed += 2;
    } else {
      model.net.kernels.push_back(nullptr);
      model.net.biases.push_back(nullptr);
    }
  }
  if (consumed != param_count)
    throw checkpoint_error("checkpoint parameter count mismatch");

  const std::uint64_t n = get_u64(in);
  const std::uint64_t p = get_u64(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::vector<double> flat(2 * p);
    for (auto& v : flat) v = get_f64(in);
    model.space.candidates.push_back(LandmarkShape::from_flat(flat));
  }

  const std::uint64_t stages = get_u64(in);
  for (std::uint64_t k = 0; k < stages; ++k) {
    CascadeStage s;
    const std::uint64_t rows = get_u64(in);
    const std::uint64_t cols = get_u64(in);
    s.weights = Matrix(rows, cols);
    for (auto& v : s.weights.a) v = get_f64(in);
    s.bias.resize(rows);
    for (auto& v : s.bias) v = get_f64(in);
    s.index = static_cast<int>(k);
    model.cascade.stages.push_back(std::move(s));
  }
  model.cascade.sip.halfwidth = sip_halfwidth;
  model.cascade.landmark_count = static_cast<int>(p);
  model.cascade.feature_channels =
      model.cascade.stages.empty()
          ? 0
          : static_cast<int>(model.cascade.stages[0].weights.cols / p);
  return model;
}

inline TrainedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw checkpoint_error("cannot open checkpoint: " + path);
  return load_checkpoint(in);
}

}  // namespace casc
