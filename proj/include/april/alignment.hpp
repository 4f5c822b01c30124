#pragma once

#include <Eigen/Core>

#include "april/navworld.hpp"
#include "april/tensor.hpp"

namespace april {

// Object attention c = M . h, where M is the binary adjacency matrix from
// state dimensions to objects and h is the state-attention output.
Eigen::VectorXd object_attention(const Eigen::MatrixXd& adjacency, const Eigen::VectorXd& h);

// Pixel-space attention target T = sum_i c_i * z_i over disjoint object
// segmentation maps; zero on background pixels.  Returns {H,W,1}.
Tensor attention_target(const Eigen::VectorXd& c, const SegmentationMaps& maps);

// Per-pixel area fraction of the region owning each pixel (objects by their
// segmentation maps, background as its own region).  Values in (0,1].
Tensor pixel_weights(const SegmentationMaps& maps);

// Object-weighted half sum of squares: 0.5 * sum_ij (1/w_ij) (h - T)^2_ij.
// The 1/w weighting makes every region's total contribution independent of
// its pixel area.
double alignment_mse(const Tensor& h_out, const Tensor& target, const Tensor& weights);

// d(alignment_mse)/dh = (1/w) (h - T), elementwise.
Tensor alignment_mse_grad(const Tensor& h_out, const Tensor& target, const Tensor& weights);

}  // namespace april
