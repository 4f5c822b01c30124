#include "april/alignment.hpp"

#include <stdexcept>

namespace april {

namespace {

void require_disjoint(const SegmentationMaps& maps) {
  const int h = maps.height(), w = maps.width();
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      int owners = 0;
      for (const BitMask& m : maps.maps) owners += m.get(i, j) ? 1 : 0;
      if (owners > 1)
        throw std::invalid_argument("segmentation maps overlap at pixel (" +
                                    std::to_string(i) + "," + std::to_string(j) + ")");
    }
}

}  // namespace

Eigen::VectorXd object_attention(const Eigen::MatrixXd& adjacency, const Eigen::VectorXd& h) {
  if (adjacency.cols() != h.size())
    throw std::invalid_argument("object_attention: adjacency has " +
                                std::to_string(adjacency.cols()) + " columns but h has " +
                                std::to_string(h.size()) + " entries");
  return adjacency * h;
}

Tensor attention_target(const Eigen::VectorXd& c, const SegmentationMaps& maps) {
  if (c.size() != maps.count())
    throw std::invalid_argument("attention_target: " + std::to_string(c.size()) +
                                " attention values for " + std::to_string(maps.count()) +
                                " maps");
  require_disjoint(maps);
  const int h = maps.height(), w = maps.width();
  Tensor target({h, w, 1});
  for (int k = 0; k < maps.count(); ++k) {
    const BitMask& m = maps.maps[static_cast<std::size_t>(k)];
    const double ck = c[k];
    if (ck == 0.0) continue;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        if (m.get(i, j)) target.at(i, j, 0) += ck;
  }
  return target;
}

Tensor pixel_weights(const SegmentationMaps& maps) {
  const int h = maps.height(), w = maps.width();
  if (h == 0 || w == 0)
    throw std::invalid_argument("pixel_weights: empty segmentation maps");
  require_disjoint(maps);
  const double total = static_cast<double>(h) * w;
  long background = static_cast<long>(h) * w;
  for (const BitMask& m : maps.maps) background -= m.count();

  Tensor weights({h, w, 1});
  weights.array().setConstant(static_cast<double>(background) / total);
  for (const BitMask& m : maps.maps) {
    const double frac = static_cast<double>(m.count()) / total;
    if (frac == 0.0) continue;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        if (m.get(i, j)) weights.at(i, j, 0) = frac;
  }
  return weights;
}

double alignment_mse(const Tensor& h_out, const Tensor& target, const Tensor& weights) {
  if (!h_out.same_shape(target) || !h_out.same_shape(weights))
    throw std::invalid_argument("alignment_mse: shape mismatch between mask " +
                                shape_str(h_out.shape()) + ", target " +
                                shape_str(target.shape()) + ", weights " +
                                shape_str(weights.shape()));
  if (weights.array().minCoeff() <= 0.0)
    throw std::invalid_argument("alignment_mse: non-positive pixel weight");
  return 0.5 * ((h_out.array() - target.array()).square() / weights.array()).sum();
}

Tensor alignment_mse_grad(const Tensor& h_out, const Tensor& target, const Tensor& weights) {
  if (!h_out.same_shape(target) || !h_out.same_shape(weights))
    throw std::invalid_argument("alignment_mse_grad: shape mismatch");
  Tensor grad(h_out.shape());
  grad.array() = (h_out.array() - target.array()) / weights.array();
  return grad;
}

}  // namespace april
