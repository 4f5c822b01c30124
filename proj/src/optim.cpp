#include "april/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace april {

AdamState::AdamState(const std::vector<Param>& params, AdamConfig config)
    : config_(config) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Param& p : params) {
    m_.emplace_back(p.value.shape());
    v_.emplace_back(p.value.shape());
  }
}

void AdamState::step(std::vector<Param>& params) {
  if (params.size() != m_.size())
    throw std::invalid_argument("adam state was built for a different parameter list");
  for (const Param& p : params) {
    if (!p.grad.all_finite())
      throw std::runtime_error("adam: non-finite gradient for parameter '" + p.name + "'");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = m_[i].array();
    auto& v = v_[i].array();
    const auto& g = params[i].grad.array();
    m = config_.beta1 * m + (1.0 - config_.beta1) * g;
    v = config_.beta2 * v + (1.0 - config_.beta2) * g.square();
    params[i].value.array() -=
        config_.lr * (m / bc1) / ((v / bc2).sqrt() + config_.eps);
  }
}

void polyak_update(std::vector<Param>& target, const std::vector<Param>& online,
                   double tau) {
  if (target.size() != online.size())
    throw std::invalid_argument("polyak: parameter lists differ in length");
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (!target[i].value.same_shape(online[i].value))
      throw std::invalid_argument("polyak: shape mismatch for " + target[i].name);
    target[i].value.array() =
        tau * target[i].value.array() + (1.0 - tau) * online[i].value.array();
  }
}

void polyak_update(Graph& target, const Graph& online, double tau) {
  polyak_update(target.params(), online.params(), tau);
}

void add_parameter_noise(Graph& perturbed, const Graph& online, double sigma, Rng& rng) {
  perturbed.copy_params_from(online);
  for (Param& p : perturbed.params())
    for (long k = 0; k < p.value.size(); ++k) p.value[k] += rng.normal(0.0, sigma);
}

}  // namespace april
