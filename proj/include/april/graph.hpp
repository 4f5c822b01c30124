#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

#include "april/rng.hpp"
#include "april/tensor.hpp"

namespace april {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class LayerKind {
  kDense,
  kConvValid,
  kConvSame,
  kRelu,
  kTanh,
  kSigmoid,
  kSoftmax,
  kLayerNorm,
  kElementwiseMultiply,
  kTileChannels,
};

std::string layer_kind_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  int units = 0;     // dense: output width
  int channels = 0;  // conv: output channels; tile: replication count
  int kernel = 0;    // conv: square kernel size
  int stride = 1;    // conv

  static LayerSpec dense(int units) { return {LayerKind::kDense, units, 0, 0, 1}; }
  static LayerSpec conv_valid(int channels, int kernel, int stride = 1) {
    return {LayerKind::kConvValid, 0, channels, kernel, stride};
  }
  static LayerSpec conv_same(int channels, int kernel, int stride = 1) {
    return {LayerKind::kConvSame, 0, channels, kernel, stride};
  }
  static LayerSpec relu() { return {LayerKind::kRelu}; }
  static LayerSpec tanh() { return {LayerKind::kTanh}; }
  static LayerSpec sigmoid() { return {LayerKind::kSigmoid}; }
  static LayerSpec softmax() { return {LayerKind::kSoftmax}; }
  static LayerSpec layer_norm() { return {LayerKind::kLayerNorm}; }
  // Multiplies the activation elementwise by the graph's primary input
  // (soft gating); activation shape must equal the input shape.
  static LayerSpec elementwise_multiply() { return {LayerKind::kElementwiseMultiply}; }
  // Replicates a single-channel {H,W,1} map across `channels` channels.
  static LayerSpec tile_channels(int channels) {
    return {LayerKind::kTileChannels, 0, channels, 0, 1};
  }
};

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Extra upstream gradient injected at the output of layer `layer` during a
// backward pass (used for mid-graph loss terms, e.g. bottleneck regressors).
struct TapGradient {
  int layer;
  const Tensor* grad;
};

// Static sequential differentiable pipeline with cached activations.  One
// optional side input of width `side_dim` is concatenated in front of the
// dense layer at index `side_layer` (critics take actions this way).
//
// Copies are deep and independent; parameter snapshots may cross threads,
// but a single instance is not thread-safe during forward/backward.
class Graph {
 public:
  Graph() = default;
  Graph(std::string name, Shape input_shape, std::vector<LayerSpec> layers,
        int side_dim = 0, int side_layer = -1);

  // Uniform fan-in init (limit 1/sqrt(fan_in)) for dense/conv weights,
  // zero biases, layer-norm gain 1 / bias 0.  final_limit > 0 draws the
  // last parameterised layer's weights and bias from [-final_limit,
  // final_limit] instead (DDPG-style output-layer init).
  void init_params(Rng& rng, double final_limit = 0.0);

  const Tensor& forward(const Tensor& input);
  const Tensor& forward(const Tensor& input, const Tensor& side);

  // Accumulates parameter gradients and returns the gradient with respect
  // to the primary input.  `side_grad` (when non-null) receives the side
  // input gradient; `taps` inject extra upstream terms at intermediate
  // layer outputs.  Requires a preceding forward().
  Tensor backward(const Tensor& upstream);
  Tensor backward(const Tensor& upstream, Tensor* side_grad);
  Tensor backward(const Tensor& upstream, const std::vector<TapGradient>& taps,
                  Tensor* side_grad);

  const Tensor& output() const;
  const Tensor& activation(int layer) const;
  bool forward_done() const { return forward_done_; }

  const std::string& name() const { return name_; }
  int layer_count() const { return static_cast<int>(layers_.size()); }
  const LayerSpec& layer_spec(int i) const;
  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const;
  int side_dim() const { return side_dim_; }
  int side_layer() const { return side_layer_; }

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  long param_count() const;
  void zero_grads();
  void copy_params_from(const Graph& other);  // values only; same structure

 private:
  struct LayerState {
    LayerSpec spec;
    Shape in_shape;
    Shape out_shape;
    int weight = -1;  // param index (dense/conv W, layer-norm gain)
    int bias = -1;    // param index (dense/conv b, layer-norm bias)
    // caches, valid after forward
    Tensor out;
    Tensor dense_in;  // dense: flattened input incl. side concat
    RowMat cols;      // conv: im2col patches
    RowMat dcols;     // conv: backward workspace
    Tensor xhat;      // layer-norm: normalised pre-affine activation
    double inv_std = 0.0;
  };

  [[noreturn]] void fail(int layer, const std::string& message) const;
  void forward_layer(int index, const Tensor& input);
  Tensor backward_layer(int index, const Tensor& upstream, Tensor* side_grad);
  const Tensor& layer_input(int index) const;

  std::string name_;
  Shape input_shape_;
  int side_dim_ = 0;
  int side_layer_ = -1;
  std::vector<LayerState> layers_;
  std::vector<Param> params_;
  Tensor input_;
  Tensor side_;
  Tensor input_gate_grad_;  // extra input gradient from elementwise-multiply layers
  bool forward_done_ = false;
};

}  // namespace april
