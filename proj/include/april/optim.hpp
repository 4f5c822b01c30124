#pragma once

#include <vector>

#include "april/graph.hpp"
#include "april/rng.hpp"

namespace april {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a graph's parameter list.  Moments are owned
// here, shaped after the parameters at construction.
class AdamState {
 public:
  AdamState() = default;
  AdamState(const std::vector<Param>& params, AdamConfig config);

  // One step using each param's accumulated grad.  Throws std::runtime_error
  // (naming the parameter) if any gradient is non-finite; parameters are
  // left untouched in that case.
  void step(std::vector<Param>& params);

  long step_count() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  long t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

// target <- tau * target + (1 - tau) * online, elementwise.
void polyak_update(std::vector<Param>& target, const std::vector<Param>& online, double tau);
void polyak_update(Graph& target, const Graph& online, double tau);

// perturbed <- online + N(0, sigma^2), elementwise (parameter-space noise).
void add_parameter_noise(Graph& perturbed, const Graph& online, double sigma, Rng& rng);

}  // namespace april
