#pragma once

// Fusion network: pre-fusion blend, tied-weight encoder with a residual dense
// block, addition fusion, and a decoder with an unrolled feedback loop.
//
// Layer table (kernel, in -> out channels, activation):
//   encoder.C1          3   1 -> 16  relu
//   encoder.RDB.conv1   3  16 -> 16  relu
//   encoder.RDB.conv2   3  32 -> 16  relu
//   encoder.RDB.conv3   3  48 -> 16  relu
//   encoder.RDB.conv4   1  64 -> 64  -
//   decoder.C2          3  64 -> 64  relu
//   decoder.C3          3  64 -> 32  relu
//   decoder.C4          3  32 -> 16  relu
//   decoder.C5          3  16 ->  1  -
//   decoder.C6          3   1 -> 64  -     (feedback projection)

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>

#include "hfn/image.hpp"
#include "hfn/ops.hpp"

namespace hfn {

/// Parameter set does not match the layer table.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Layer : std::size_t {
  enc_c1,
  rdb_conv1,
  rdb_conv2,
  rdb_conv3,
  rdb_conv4,
  dec_c2,
  dec_c3,
  dec_c4,
  dec_c5,
  dec_c6,
};

inline constexpr std::size_t kLayerCount = 10;

struct LayerSpec {
  const char* name;
  std::size_t kernel;
  std::size_t in_channels;
  std::size_t out_channels;
  bool relu;

  Shape weight_shape() const { return {out_channels, in_channels, kernel, kernel}; }
  Shape bias_shape() const { return {out_channels}; }
};

inline constexpr std::array<LayerSpec, kLayerCount> kLayerTable{{
    {"encoder.C1", 3, 1, 16, true},
    {"encoder.RDB.conv1", 3, 16, 16, true},
    {"encoder.RDB.conv2", 3, 32, 16, true},
    {"encoder.RDB.conv3", 3, 48, 16, true},
    {"encoder.RDB.conv4", 1, 64, 64, false},
    {"decoder.C2", 3, 64, 64, true},
    {"decoder.C3", 3, 64, 32, true},
    {"decoder.C4", 3, 32, 16, true},
    {"decoder.C5", 3, 16, 1, false},
    {"decoder.C6", 3, 1, 64, false},
}};

inline constexpr const LayerSpec& spec_of(Layer l) { return kLayerTable[static_cast<std::size_t>(l)]; }

/// Channels produced by the encoder and consumed by the decoder.
inline constexpr std::size_t kFeatureChannels = 64;
/// Channels of the rough-feature layer and of each dense-block stage.
inline constexpr std::size_t kGrowthChannels = 16;

template <std::floating_point Real>
struct ConvParams {
  Tensor<Real> weight;
  Tensor<Real> bias;
};

/// One parameter set for the whole network; both Siamese encoder branches read it.
template <std::floating_point Real>
struct ModelParams {
  std::array<ConvParams<Real>, kLayerCount> layers;

  ConvParams<Real>& operator[](Layer l) { return layers[static_cast<std::size_t>(l)]; }
  const ConvParams<Real>& operator[](Layer l) const { return layers[static_cast<std::size_t>(l)]; }

  /// All-zero parameters with the table's shapes.
  static ModelParams zeros() {
    ModelParams p;
    for (std::size_t i = 0; i < kLayerCount; ++i) {
      p.layers[i].weight = Tensor<Real>(kLayerTable[i].weight_shape());
      p.layers[i].bias = Tensor<Real>(kLayerTable[i].bias_shape());
    }
    return p;
  }

  /// Weight and bias tensors in table order (weight first).
  std::array<Tensor<Real>*, 2 * kLayerCount> tensors() {
    std::array<Tensor<Real>*, 2 * kLayerCount> out{};
    for (std::size_t i = 0; i < kLayerCount; ++i) {
      out[2 * i] = &layers[i].weight;
      out[2 * i + 1] = &layers[i].bias;
    }
    return out;
  }
  std::array<const Tensor<Real>*, 2 * kLayerCount> tensors() const {
    std::array<const Tensor<Real>*, 2 * kLayerCount> out{};
    for (std::size_t i = 0; i < kLayerCount; ++i) {
      out[2 * i] = &layers[i].weight;
      out[2 * i + 1] = &layers[i].bias;
    }
    return out;
  }

  static std::string tensor_name(std::size_t flat_index) {
    return std::string(kLayerTable[flat_index / 2].name) + (flat_index % 2 == 0 ? ".weight" : ".bias");
  }

  template <std::floating_point Other>
  ModelParams<Other> cast() const {
    ModelParams<Other> out;
    for (std::size_t i = 0; i < kLayerCount; ++i) {
      out.layers[i].weight = layers[i].weight.template cast<Other>();
      out.layers[i].bias = layers[i].bias.template cast<Other>();
    }
    return out;
  }

  void validate() const {
    for (std::size_t i = 0; i < kLayerCount; ++i) {
      const LayerSpec& s = kLayerTable[i];
      auto check = [&](const Tensor<Real>& t, const Shape& want, const char* what) {
        if (t.shape() != want) {
          throw SchemaError(std::string(s.name) + "." + what + ": expected shape " + to_string(want) + " (" +
                            std::to_string(s.in_channels) + "->" + std::to_string(s.out_channels) + " channels, " +
                            std::to_string(s.kernel) + "x" + std::to_string(s.kernel) + " kernel), got " +
                            to_string(t.shape()));
        }
      };
      check(layers[i].weight, s.weight_shape(), "weight");
      check(layers[i].bias, s.bias_shape(), "bias");
    }
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    for (std::size_t i = 0; i < kLayerCount; ++i) {
      if (!(a.layers[i].weight == b.layers[i].weight) || !(a.layers[i].bias == b.layers[i].bias)) return false;
    }
    return true;
  }
};

/// Parameters as graph values: leaves on a tape for training, constants for inference.
template <std::floating_point Real>
struct ParamVars {
  std::array<std::pair<Var<Real>, Var<Real>>, kLayerCount> layers;

  const std::pair<Var<Real>, Var<Real>>& operator[](Layer l) const { return layers[static_cast<std::size_t>(l)]; }
};

template <std::floating_point Real>
ParamVars<Real> bind_params(Tape<Real>& tape, const ModelParams<Real>& params) {
  ParamVars<Real> out;
  for (std::size_t i = 0; i < kLayerCount; ++i) {
    out.layers[i] = {tape.leaf(params.layers[i].weight), tape.leaf(params.layers[i].bias)};
  }
  return out;
}

template <std::floating_point Real>
ParamVars<Real> constant_params(const ModelParams<Real>& params) {
  ParamVars<Real> out;
  for (std::size_t i = 0; i < kLayerCount; ++i) {
    out.layers[i] = {Var<Real>::constant(params.layers[i].weight), Var<Real>::constant(params.layers[i].bias)};
  }
  return out;
}

/// He-normal weights (std sqrt(2/fan_in)) for ReLU-followed layers, sqrt(1/fan_in)
/// otherwise; zero biases. Deterministic in `seed`.
template <std::floating_point Real = float>
ModelParams<Real> init_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelParams<Real> p = ModelParams<Real>::zeros();
  for (std::size_t i = 0; i < kLayerCount; ++i) {
    const LayerSpec& s = kLayerTable[i];
    const double fan_in = static_cast<double>(s.in_channels * s.kernel * s.kernel);
    std::normal_distribution<double> dist(0.0, std::sqrt((s.relu ? 2.0 : 1.0) / fan_in));
    for (auto& w : p.layers[i].weight.data()) w = static_cast<Real>(dist(rng));
  }
  return p;
}

struct PreFusionConfig {
  double a1 = 0.7;

  /// Always derived, so a1 + a2 == 1 holds by construction.
  double a2() const { return 1.0 - a1; }

  void validate() const {
    if (!(a1 >= 0.5 && a1 <= 1.0)) throw ContractError("pre-fusion weight a1 must lie in [0.5, 1], got " + std::to_string(a1));
  }
};

struct FeedbackConfig {
  int n_iterations = 4;

  void validate() const {
    if (n_iterations < 1) throw ContractError("feedback iterations must be >= 1, got " + std::to_string(n_iterations));
  }
};

/// I_iw = a1 I_i + a2 I_v and I_vw = a2 I_i + a1 I_v.
inline std::pair<ImageGray, ImageGray> pre_fuse(const ImageGray& ir, const ImageGray& vis, const PreFusionConfig& cfg) {
  cfg.validate();
  if (!ir.same_size(vis)) {
    throw ShapeError("pre_fuse: infrared " + std::to_string(ir.height) + "x" + std::to_string(ir.width) +
                     " vs visible " + std::to_string(vis.height) + "x" + std::to_string(vis.width));
  }
  const double a1 = cfg.a1, a2 = cfg.a2();
  ImageGray iw(ir.height, ir.width, 0.0f, Provenance::pre_fused);
  ImageGray vw(ir.height, ir.width, 0.0f, Provenance::pre_fused);
  for (std::size_t i = 0; i < ir.size(); ++i) {
    const double x = ir.pixels[i], y = vis.pixels[i];
    iw.pixels[i] = static_cast<float>(std::clamp(a1 * x + a2 * y, 0.0, 1.0));
    vw.pixels[i] = static_cast<float>(std::clamp(a2 * x + a1 * y, 0.0, 1.0));
  }
  return {std::move(iw), std::move(vw)};
}

namespace detail {

template <std::floating_point Real>
Var<Real> apply(Layer l, const Var<Real>& x, const ParamVars<Real>& p) {
  const auto& [w, b] = p[l];
  Var<Real> y = conv2d(x, w, b);
  return spec_of(l).relu ? relu(y) : y;
}

inline std::atomic<std::uint64_t>& fusion_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

}  // namespace detail

/// Number of fuse_add calls in this process; lets tests assert training never fuses.
inline std::uint64_t fusion_layer_invocations() { return detail::fusion_counter().load(); }

/// Residual dense block: three densely connected 3x3 stages, a 1x1 merge to 64
/// channels, and a local skip that adds the 16-channel input tiled 4x.
template <std::floating_point Real>
Var<Real> rdb_forward(const Var<Real>& f0, const ParamVars<Real>& p) {
  if (f0.shape().size() != 4 || f0.shape()[1] != kGrowthChannels) {
    throw ShapeError("rdb_forward: expected 16-channel input, got " + to_string(f0.shape()));
  }
  Var<Real> d1 = detail::apply(Layer::rdb_conv1, f0, p);
  Var<Real> d2 = detail::apply(Layer::rdb_conv2, concat_channels<Real>({f0, d1}), p);
  Var<Real> d3 = detail::apply(Layer::rdb_conv3, concat_channels<Real>({f0, d1, d2}), p);
  Var<Real> merged = detail::apply(Layer::rdb_conv4, concat_channels<Real>({f0, d1, d2, d3}), p);
  return add(merged, tile_channels(f0, kFeatureChannels / kGrowthChannels));
}

/// One Siamese encoder branch: [B,1,H,W] -> [B,64,H,W], with a global skip
/// from the rough features.
template <std::floating_point Real>
Var<Real> encode(const Var<Real>& img, const ParamVars<Real>& p) {
  if (img.shape().size() != 4 || img.shape()[1] != 1) {
    throw ShapeError("encode: expected single-channel [B,1,H,W] input, got " + to_string(img.shape()));
  }
  Var<Real> rough = detail::apply(Layer::enc_c1, img, p);
  return add(rdb_forward(rough, p), tile_channels(rough, kFeatureChannels / kGrowthChannels));
}

/// Addition fusion: y = phi1 + phi2 elementwise.
template <std::floating_point Real>
Var<Real> fuse_add(const Var<Real>& phi1, const Var<Real>& phi2) {
  if (phi1.shape() != phi2.shape()) {
    throw ShapeError("fuse_add: feature maps differ " + to_string(phi1.shape()) + " vs " + to_string(phi2.shape()));
  }
  detail::fusion_counter().fetch_add(1);
  return add(phi1, phi2);
}

/// Decoder with feedback. Iteration 1 decodes y; each later iteration decodes
/// y + C6(previous output). Returns the unclamped final output [B,1,H,W].
template <std::floating_point Real>
Var<Real> decode(const Var<Real>& y, const ParamVars<Real>& p, const FeedbackConfig& fb) {
  fb.validate();
  if (y.shape().size() != 4 || y.shape()[1] != kFeatureChannels) {
    throw ShapeError("decode: expected 64-channel features, got " + to_string(y.shape()));
  }
  Var<Real> out;
  for (int t = 0; t < fb.n_iterations; ++t) {
    const Var<Real> in = t == 0 ? y : add(y, detail::apply(Layer::dec_c6, out, p));
    Var<Real> h = detail::apply(Layer::dec_c2, in, p);
    h = detail::apply(Layer::dec_c3, h, p);
    h = detail::apply(Layer::dec_c4, h, p);
    out = detail::apply(Layer::dec_c5, h, p);
  }
  return out;
}

struct FuseOptions {
  FeedbackConfig feedback;
  /// Blend the pair with the pre-fusion layer before encoding (ablation only).
  bool pre_fusion = false;
  PreFusionConfig pre;
};

/// Test-time fusion: decode(encode(I_i) + encode(I_v)), clamped to [0,1].
template <std::floating_point Real = float>
ImageGray fuse_images(const ImageGray& ir, const ImageGray& vis, const ModelParams<Real>& params,
                      const FuseOptions& opts = {}) {
  params.validate();
  if (!ir.same_size(vis)) {
    throw ShapeError("fuse_images: infrared " + std::to_string(ir.height) + "x" + std::to_string(ir.width) +
                     " vs visible " + std::to_string(vis.height) + "x" + std::to_string(vis.width));
  }
  const ParamVars<Real> p = constant_params(params);
  Var<Real> a, b;
  if (opts.pre_fusion) {
    auto [iw, vw] = pre_fuse(ir, vis, opts.pre);
    a = Var<Real>::constant(iw.to_tensor<Real>());
    b = Var<Real>::constant(vw.to_tensor<Real>());
  } else {
    a = Var<Real>::constant(ir.to_tensor<Real>());
    b = Var<Real>::constant(vis.to_tensor<Real>());
  }
  const Var<Real> fused = decode(fuse_add(encode(a, p), encode(b, p)), p, opts.feedback);
  return ImageGray::from_tensor(fused.value(), Provenance::fused);
}

}  // namespace hfn
