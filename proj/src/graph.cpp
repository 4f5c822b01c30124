#include "april/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace april {

namespace {

constexpr double kLayerNormEps = 1e-8;

bool has_weights(LayerKind kind) {
  return kind == LayerKind::kDense || kind == LayerKind::kConvValid ||
         kind == LayerKind::kConvSame;
}

const char* short_kind(LayerKind kind) {
  switch (kind) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConvValid: return "conv";
    case LayerKind::kConvSame: return "conv";
    case LayerKind::kLayerNorm: return "ln";
    default: return "op";
  }
}

}  // namespace

std::string layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConvValid: return "conv-valid";
    case LayerKind::kConvSame: return "conv-same";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kTanh: return "tanh";
    case LayerKind::kSigmoid: return "sigmoid";
    case LayerKind::kSoftmax: return "softmax";
    case LayerKind::kLayerNorm: return "layer-norm";
    case LayerKind::kElementwiseMultiply: return "elementwise-multiply";
    case LayerKind::kTileChannels: return "tile-channels";
  }
  return "?";
}

void Graph::fail(int layer, const std::string& message) const {
  std::string where = "graph '" + name_ + "'";
  if (layer >= 0) {
    where += ", layer " + std::to_string(layer);
    if (layer < static_cast<int>(layers_.size()))
      where += " (" + layer_kind_name(layers_[static_cast<std::size_t>(layer)].spec.kind) + ")";
  }
  throw std::invalid_argument(where + ": " + message);
}

Graph::Graph(std::string name, Shape input_shape, std::vector<LayerSpec> layers,
             int side_dim, int side_layer)
    : name_(std::move(name)),
      input_shape_(std::move(input_shape)),
      side_dim_(side_dim),
      side_layer_(side_layer) {
  if (side_dim_ < 0 || (side_dim_ > 0) != (side_layer_ >= 0))
    fail(-1, "side input requires both a positive width and a target layer");

  Shape cur = input_shape_;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers_.emplace_back();
    LayerState& ls = layers_.back();
    ls.spec = layers[i];
    ls.in_shape = cur;
    const int li = static_cast<int>(i);
    const LayerSpec& spec = ls.spec;
    switch (spec.kind) {
      case LayerKind::kDense: {
        if (spec.units < 1) fail(li, "dense units must be >= 1");
        long fan_in = shape_size(cur);
        if (side_layer_ == li) fan_in += side_dim_;
        ls.weight = static_cast<int>(params_.size());
        params_.push_back({std::to_string(i) + ".dense.W",
                           Tensor({spec.units, static_cast<int>(fan_in)}),
                           Tensor({spec.units, static_cast<int>(fan_in)})});
        ls.bias = static_cast<int>(params_.size());
        params_.push_back({std::to_string(i) + ".dense.b", Tensor({spec.units}),
                           Tensor({spec.units})});
        ls.out_shape = {spec.units};
        break;
      }
      case LayerKind::kConvValid:
      case LayerKind::kConvSame: {
        if (cur.size() != 3) fail(li, "conv input must be {H,W,C}, got " + shape_str(cur));
        if (spec.channels < 1) fail(li, "conv channels must be >= 1");
        if (spec.stride < 1) fail(li, "conv stride must be >= 1");
        if (spec.kernel < 1) fail(li, "conv kernel must be >= 1");
        const bool same = spec.kind == LayerKind::kConvSame;
        if (same && spec.kernel % 2 == 0) fail(li, "conv-same kernel size must be odd");
        const int pad = same ? (spec.kernel - 1) / 2 : 0;
        const int oh = (cur[0] + 2 * pad - spec.kernel) / spec.stride + 1;
        const int ow = (cur[1] + 2 * pad - spec.kernel) / spec.stride + 1;
        if (oh < 1 || ow < 1)
          fail(li, "kernel " + std::to_string(spec.kernel) + " does not fit input " +
                       shape_str(cur));
        const int patch = spec.kernel * spec.kernel * cur[2];
        ls.weight = static_cast<int>(params_.size());
        params_.push_back({std::to_string(i) + ".conv.W", Tensor({patch, spec.channels}),
                           Tensor({patch, spec.channels})});
        ls.bias = static_cast<int>(params_.size());
        params_.push_back({std::to_string(i) + ".conv.b", Tensor({spec.channels}),
                           Tensor({spec.channels})});
        ls.out_shape = {oh, ow, spec.channels};
        break;
      }
      case LayerKind::kRelu:
      case LayerKind::kTanh:
      case LayerKind::kSigmoid:
      case LayerKind::kSoftmax:
        ls.out_shape = cur;
        break;
      case LayerKind::kLayerNorm: {
        const int n = static_cast<int>(shape_size(cur));
        ls.weight = static_cast<int>(params_.size());
        params_.push_back({std::to_string(i) + ".ln.g", Tensor({n}), Tensor({n})});
        ls.bias = static_cast<int>(params_.size());
        params_.push_back({std::to_string(i) + ".ln.b", Tensor({n}), Tensor({n})});
        ls.out_shape = cur;
        break;
      }
      case LayerKind::kElementwiseMultiply:
        if (cur != input_shape_)
          fail(li, "gate activation " + shape_str(cur) + " must match graph input " +
                       shape_str(input_shape_));
        ls.out_shape = cur;
        break;
      case LayerKind::kTileChannels:
        if (cur.size() != 3 || cur[2] != 1)
          fail(li, "tile-channels input must be {H,W,1}, got " + shape_str(cur));
        if (spec.channels < 1) fail(li, "tile-channels count must be >= 1");
        ls.out_shape = {cur[0], cur[1], spec.channels};
        break;
    }
    ls.out = Tensor(ls.out_shape);
    cur = ls.out_shape;
  }
  if (layers_.empty()) fail(-1, "graph needs at least one layer");
  if (side_layer_ >= 0) {
    if (side_layer_ >= layer_count()) fail(-1, "side layer index out of range");
    if (layers_[static_cast<std::size_t>(side_layer_)].spec.kind != LayerKind::kDense)
      fail(side_layer_, "side input must feed a dense layer");
  }
}

void Graph::init_params(Rng& rng, double final_limit) {
  int last_weighted = -1;
  for (int i = layer_count() - 1; i >= 0; --i) {
    if (has_weights(layers_[static_cast<std::size_t>(i)].spec.kind)) {
      last_weighted = i;
      break;
    }
  }
  for (int i = 0; i < layer_count(); ++i) {
    LayerState& ls = layers_[static_cast<std::size_t>(i)];
    if (ls.spec.kind == LayerKind::kLayerNorm) {
      params_[static_cast<std::size_t>(ls.weight)].value.array().setOnes();
      params_[static_cast<std::size_t>(ls.bias)].value.set_zero();
      continue;
    }
    if (!has_weights(ls.spec.kind)) continue;
    Tensor& w = params_[static_cast<std::size_t>(ls.weight)].value;
    Tensor& b = params_[static_cast<std::size_t>(ls.bias)].value;
    const long fan_in = ls.spec.kind == LayerKind::kDense ? w.dim(1) : w.dim(0);
    double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
    bool init_bias = false;
    if (final_limit > 0.0 && i == last_weighted) {
      limit = final_limit;
      init_bias = true;
    }
    for (long k = 0; k < w.size(); ++k) w[k] = rng.uniform(-limit, limit);
    if (init_bias)
      for (long k = 0; k < b.size(); ++k) b[k] = rng.uniform(-limit, limit);
    else
      b.set_zero();
  }
}

const Tensor& Graph::layer_input(int index) const {
  return index == 0 ? input_ : layers_[static_cast<std::size_t>(index - 1)].out;
}

const Tensor& Graph::forward(const Tensor& input) {
  if (side_dim_ > 0) fail(-1, "graph declares a side input; use forward(input, side)");
  static const Tensor kEmpty;
  return forward(input, kEmpty);
}

const Tensor& Graph::forward(const Tensor& input, const Tensor& side) {
  if (input.shape() != input_shape_)
    fail(-1, "input shape " + shape_str(input.shape()) + " does not match expected " +
                 shape_str(input_shape_));
  if (side_dim_ > 0 && side.size() != side_dim_)
    fail(side_layer_, "side input size " + std::to_string(side.size()) +
                          " does not match declared width " + std::to_string(side_dim_));
  input_ = input;
  if (side_dim_ > 0) side_ = side;
  for (int i = 0; i < layer_count(); ++i) {
    forward_layer(i, layer_input(i));
    const LayerState& ls = layers_[static_cast<std::size_t>(i)];
    if (!ls.out.all_finite())
      throw std::runtime_error("graph '" + name_ + "': non-finite activation at layer " +
                               std::to_string(i) + " (" + layer_kind_name(ls.spec.kind) + ")");
  }
  forward_done_ = true;
  return layers_.back().out;
}

void Graph::forward_layer(int index, const Tensor& x) {
  LayerState& ls = layers_[static_cast<std::size_t>(index)];
  switch (ls.spec.kind) {
    case LayerKind::kDense: {
      const Tensor& w = params_[static_cast<std::size_t>(ls.weight)].value;
      const Tensor& b = params_[static_cast<std::size_t>(ls.bias)].value;
      const long fan_in = w.dim(1);
      if (index == side_layer_) {
        ls.dense_in = Tensor({static_cast<int>(fan_in)});
        ls.dense_in.vec().head(x.size()) = x.vec();
        ls.dense_in.vec().tail(side_dim_) = side_.vec();
      } else {
        ls.dense_in = Tensor({static_cast<int>(fan_in)});
        ls.dense_in.vec() = x.vec();
      }
      Eigen::Map<const RowMat> wm(w.data(), w.dim(0), fan_in);
      ls.out.vec().noalias() = wm * ls.dense_in.vec();
      ls.out.vec() += b.vec();
      break;
    }
    case LayerKind::kConvValid:
    case LayerKind::kConvSame: {
      const LayerSpec& spec = ls.spec;
      const int h = ls.in_shape[0], w_in = ls.in_shape[1], c = ls.in_shape[2];
      const int k = spec.kernel, s = spec.stride;
      const int pad = spec.kind == LayerKind::kConvSame ? (k - 1) / 2 : 0;
      const int oh = ls.out_shape[0], ow = ls.out_shape[1], oc = ls.out_shape[2];
      const int patch = k * k * c;
      ls.cols.resize(static_cast<long>(oh) * ow, patch);
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double* row = ls.cols.data() + (static_cast<long>(oy) * ow + ox) * patch;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * s + ky - pad;
            if (iy < 0 || iy >= h) {
              std::fill(row + ky * k * c, row + (ky + 1) * k * c, 0.0);
              continue;
            }
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * s + kx - pad;
              double* dst = row + (ky * k + kx) * c;
              if (ix < 0 || ix >= w_in) {
                std::fill(dst, dst + c, 0.0);
              } else {
                const double* src = x.data() + (static_cast<long>(iy) * w_in + ix) * c;
                std::copy(src, src + c, dst);
              }
            }
          }
        }
      }
      const Tensor& w = params_[static_cast<std::size_t>(ls.weight)].value;
      const Tensor& b = params_[static_cast<std::size_t>(ls.bias)].value;
      Eigen::Map<const RowMat> wm(w.data(), patch, oc);
      Eigen::Map<RowMat> ym(ls.out.data(), static_cast<long>(oh) * ow, oc);
      ym.noalias() = ls.cols * wm;
      ym.rowwise() += b.vec().transpose();
      break;
    }
    case LayerKind::kRelu:
      ls.out.array() = x.array().max(0.0);
      break;
    case LayerKind::kTanh:
      ls.out.array() = x.array().tanh();
      break;
    case LayerKind::kSigmoid:
      ls.out.array() = 1.0 / (1.0 + (-x.array()).exp());
      break;
    case LayerKind::kSoftmax: {
      const double m = x.array().maxCoeff();
      ls.out.array() = (x.array() - m).exp();
      ls.out.array() /= ls.out.array().sum();
      break;
    }
    case LayerKind::kLayerNorm: {
      const Tensor& g = params_[static_cast<std::size_t>(ls.weight)].value;
      const Tensor& b = params_[static_cast<std::size_t>(ls.bias)].value;
      const double mu = x.array().mean();
      ls.xhat = Tensor(ls.out_shape);
      ls.xhat.array() = x.array() - mu;
      const double var = ls.xhat.array().square().mean();
      ls.inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
      ls.xhat.array() *= ls.inv_std;
      ls.out.array() = g.array() * ls.xhat.array() + b.array();
      break;
    }
    case LayerKind::kElementwiseMultiply:
      ls.out.array() = x.array() * input_.array();
      break;
    case LayerKind::kTileChannels: {
      const int n = ls.in_shape[0] * ls.in_shape[1];
      const int oc = ls.spec.channels;
      for (int p = 0; p < n; ++p)
        for (int ch = 0; ch < oc; ++ch) ls.out[static_cast<long>(p) * oc + ch] = x[p];
      break;
    }
  }
}

Tensor Graph::backward(const Tensor& upstream) { return backward(upstream, {}, nullptr); }

Tensor Graph::backward(const Tensor& upstream, Tensor* side_grad) {
  return backward(upstream, {}, side_grad);
}

Tensor Graph::backward(const Tensor& upstream, const std::vector<TapGradient>& taps,
                       Tensor* side_grad) {
  if (!forward_done_)
    throw std::logic_error("graph '" + name_ + "': backward called before forward");
  if (upstream.shape() != output_shape())
    fail(layer_count() - 1, "upstream shape " + shape_str(upstream.shape()) +
                                " does not match output " + shape_str(output_shape()));
  if (side_grad != nullptr) {
    *side_grad = Tensor({side_dim_ > 0 ? side_dim_ : 1});
    side_grad->set_zero();
  }
  input_gate_grad_ = Tensor(input_shape_);
  Tensor grad = upstream;
  for (int i = layer_count() - 1; i >= 0; --i) {
    for (const TapGradient& tap : taps) {
      if (tap.layer != i) continue;
      if (tap.grad->shape() != layers_[static_cast<std::size_t>(i)].out_shape)
        fail(i, "tap gradient shape mismatch");
      grad.array() += tap.grad->array();
    }
    grad = backward_layer(i, grad, side_grad);
  }
  grad.array() += input_gate_grad_.array();
  return grad;
}

Tensor Graph::backward_layer(int index, const Tensor& up, Tensor* side_grad) {
  LayerState& ls = layers_[static_cast<std::size_t>(index)];
  const Tensor& x = layer_input(index);
  Tensor down(ls.in_shape);
  switch (ls.spec.kind) {
    case LayerKind::kDense: {
      const Tensor& w = params_[static_cast<std::size_t>(ls.weight)].value;
      Tensor& dw = params_[static_cast<std::size_t>(ls.weight)].grad;
      Tensor& db = params_[static_cast<std::size_t>(ls.bias)].grad;
      const long fan_in = w.dim(1);
      Eigen::Map<const RowMat> wm(w.data(), w.dim(0), fan_in);
      Eigen::Map<RowMat> dwm(dw.data(), w.dim(0), fan_in);
      dwm.noalias() += up.vec() * ls.dense_in.vec().transpose();
      db.vec() += up.vec();
      Eigen::VectorXd dx = wm.transpose() * up.vec();
      down.vec() = dx.head(down.size());
      if (index == side_layer_ && side_grad != nullptr)
        side_grad->vec() += dx.tail(side_dim_);
      break;
    }
    case LayerKind::kConvValid:
    case LayerKind::kConvSame: {
      const LayerSpec& spec = ls.spec;
      const int h = ls.in_shape[0], w_in = ls.in_shape[1], c = ls.in_shape[2];
      const int k = spec.kernel, s = spec.stride;
      const int pad = spec.kind == LayerKind::kConvSame ? (k - 1) / 2 : 0;
      const int oh = ls.out_shape[0], ow = ls.out_shape[1], oc = ls.out_shape[2];
      const int patch = k * k * c;
      const Tensor& w = params_[static_cast<std::size_t>(ls.weight)].value;
      Tensor& dw = params_[static_cast<std::size_t>(ls.weight)].grad;
      Tensor& db = params_[static_cast<std::size_t>(ls.bias)].grad;
      Eigen::Map<const RowMat> wm(w.data(), patch, oc);
      Eigen::Map<RowMat> dwm(dw.data(), patch, oc);
      Eigen::Map<const RowMat> dym(up.data(), static_cast<long>(oh) * ow, oc);
      dwm.noalias() += ls.cols.transpose() * dym;
      db.vec() += dym.colwise().sum().transpose();
      ls.dcols.resize(static_cast<long>(oh) * ow, patch);
      ls.dcols.noalias() = dym * wm.transpose();
      down.set_zero();
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const double* row = ls.dcols.data() + (static_cast<long>(oy) * ow + ox) * patch;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * s + ky - pad;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * s + kx - pad;
              if (ix < 0 || ix >= w_in) continue;
              double* dst = down.data() + (static_cast<long>(iy) * w_in + ix) * c;
              const double* src = row + (ky * k + kx) * c;
              for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
            }
          }
        }
      }
      break;
    }
    case LayerKind::kRelu:
      down.array() = (ls.out.array() > 0.0).select(up.array(), 0.0);
      break;
    case LayerKind::kTanh:
      down.array() = up.array() * (1.0 - ls.out.array().square());
      break;
    case LayerKind::kSigmoid:
      down.array() = up.array() * ls.out.array() * (1.0 - ls.out.array());
      break;
    case LayerKind::kSoftmax: {
      const double dot = (up.array() * ls.out.array()).sum();
      down.array() = ls.out.array() * (up.array() - dot);
      break;
    }
    case LayerKind::kLayerNorm: {
      const Tensor& g = params_[static_cast<std::size_t>(ls.weight)].value;
      Tensor& dg = params_[static_cast<std::size_t>(ls.weight)].grad;
      Tensor& db = params_[static_cast<std::size_t>(ls.bias)].grad;
      dg.array() += up.array() * ls.xhat.array();
      db.array() += up.array();
      const Eigen::ArrayXd dxhat = up.array() * g.array();
      const double mean_dxhat = dxhat.mean();
      const double mean_dxhat_xhat = (dxhat * ls.xhat.array()).mean();
      down.array() =
          ls.inv_std * (dxhat - mean_dxhat - ls.xhat.array() * mean_dxhat_xhat);
      break;
    }
    case LayerKind::kElementwiseMultiply:
      down.array() = up.array() * input_.array();
      input_gate_grad_.array() += up.array() * x.array();
      break;
    case LayerKind::kTileChannels: {
      const int n = ls.in_shape[0] * ls.in_shape[1];
      const int oc = ls.spec.channels;
      for (int p = 0; p < n; ++p) {
        double acc = 0.0;
        for (int ch = 0; ch < oc; ++ch) acc += up[static_cast<long>(p) * oc + ch];
        down[p] = acc;
      }
      break;
    }
  }
  return down;
}

const Tensor& Graph::output() const {
  if (!forward_done_)
    throw std::logic_error("graph '" + name_ + "': output() before forward");
  return layers_.back().out;
}

const Tensor& Graph::activation(int layer) const {
  if (!forward_done_)
    throw std::logic_error("graph '" + name_ + "': activation() before forward");
  return layers_.at(static_cast<std::size_t>(layer)).out;
}

const LayerSpec& Graph::layer_spec(int i) const {
  return layers_.at(static_cast<std::size_t>(i)).spec;
}

const Shape& Graph::output_shape() const { return layers_.back().out_shape; }

long Graph::param_count() const {
  long n = 0;
  for (const Param& p : params_) n += p.value.size();
  return n;
}

void Graph::zero_grads() {
  for (Param& p : params_) p.grad.set_zero();
}

void Graph::copy_params_from(const Graph& other) {
  if (other.params_.size() != params_.size())
    fail(-1, "parameter copy between mismatched graphs");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].value.same_shape(other.params_[i].value))
      fail(-1, "parameter shape mismatch for " + params_[i].name);
    params_[i].value.array() = other.params_[i].value.array();
  }
}

}  // namespace april
