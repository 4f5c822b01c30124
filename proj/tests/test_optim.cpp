#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "april/optim.hpp"

using namespace april;

namespace {

std::vector<Param> scalar_param(double value, double grad) {
  std::vector<Param> p;
  p.push_back({"w", Tensor::constant({1}, value), Tensor::constant({1}, grad)});
  return p;
}

}  // namespace

TEST_CASE("first adam step with unit gradient moves by about -lr") {
  auto params = scalar_param(0.0, 1.0);
  AdamState adam(params, {.lr = 1e-3});
  adam.step(params);
  // bias corrections cancel at t=1: step = -lr * g / (|g| + eps)
  CHECK(params[0].value[0] == doctest::Approx(-1e-3).epsilon(1e-7));
  CHECK(std::abs(params[0].value[0] + 1e-3) < 1e-10);
  CHECK(adam.step_count() == 1);
}

TEST_CASE("zero gradient leaves parameters unchanged") {
  auto params = scalar_param(0.7, 0.0);
  AdamState adam(params, {});
  adam.step(params);
  CHECK(params[0].value[0] == 0.7);

  // moments decay: a zero-grad step after a real one still moves, but less
  auto p2 = scalar_param(0.0, 1.0);
  AdamState a2(p2, {.lr = 1e-3});
  a2.step(p2);
  const double after_first = p2[0].value[0];
  p2[0].grad[0] = 0.0;
  a2.step(p2);
  const double second_move = p2[0].value[0] - after_first;
  CHECK(second_move < 0.0);                    // first moment persists
  CHECK(std::abs(second_move) < std::abs(after_first));
}

TEST_CASE("adam is deterministic for identical state and gradients") {
  auto pa = scalar_param(0.3, 0.25);
  auto pb = scalar_param(0.3, 0.25);
  AdamState a(pa, {.lr = 1e-2}), b(pb, {.lr = 1e-2});
  for (int i = 0; i < 5; ++i) {
    a.step(pa);
    b.step(pb);
    CHECK(pa[0].value[0] == pb[0].value[0]);
  }
}

TEST_CASE("non-finite gradients abort the step with a diagnostic") {
  auto params = scalar_param(1.0, std::nan(""));
  AdamState adam(params, {});
  CHECK_THROWS_WITH_AS(adam.step(params), doctest::Contains("'w'"), std::runtime_error);
  CHECK(params[0].value[0] == 1.0);  // untouched
  CHECK(adam.step_count() == 0);
}

TEST_CASE("polyak update tracks slowly at tau=0.999") {
  std::vector<Param> target, online;
  target.push_back({"p", Tensor::constant({3}, 0.0), Tensor({3})});
  online.push_back({"p", Tensor::constant({3}, 1.0), Tensor({3})});
  polyak_update(target, online, 0.999);
  for (int i = 0; i < 3; ++i)
    CHECK(target[0].value[i] == doctest::Approx(0.001).epsilon(1e-12));
}

TEST_CASE("polyak tau=1 is the identity, tau=0 is assignment") {
  std::vector<Param> target, online;
  target.push_back({"p", Tensor::constant({2}, 0.25), Tensor({2})});
  online.push_back({"p", Tensor::constant({2}, -3.0), Tensor({2})});
  polyak_update(target, online, 1.0);
  CHECK(target[0].value[0] == 0.25);
  polyak_update(target, online, 0.0);
  CHECK(target[0].value[0] == -3.0);
}

TEST_CASE("target lag after k identical polyak steps is tau^k of the gap") {
  std::vector<Param> target, online;
  target.push_back({"p", Tensor::constant({1}, 0.0), Tensor({1})});
  online.push_back({"p", Tensor::constant({1}, 1.0), Tensor({1})});
  const double tau = 0.9;
  for (int k = 1; k <= 20; ++k) {
    polyak_update(target, online, tau);
    const double gap = 1.0 - target[0].value[0];
    CHECK(gap == doctest::Approx(std::pow(tau, k)).epsilon(1e-12));
  }
}

TEST_CASE("parameter noise perturbs every weight and is seed-deterministic") {
  Graph online("g", {4}, {LayerSpec::dense(4), LayerSpec::dense(2)});
  Rng rng(3);
  online.init_params(rng);
  Graph pert_a = online, pert_b = online;
  Rng na(77), nb(77);
  add_parameter_noise(pert_a, online, 0.1, na);
  add_parameter_noise(pert_b, online, 0.1, nb);
  for (std::size_t i = 0; i < online.params().size(); ++i) {
    CHECK(pert_a.params()[i].value.vec() == pert_b.params()[i].value.vec());
    CHECK_FALSE(pert_a.params()[i].value.vec() == online.params()[i].value.vec());
  }
  // zero sigma gives exact copies
  Rng nc(5);
  add_parameter_noise(pert_a, online, 0.0, nc);
  for (std::size_t i = 0; i < online.params().size(); ++i)
    CHECK(pert_a.params()[i].value.vec() == online.params()[i].value.vec());
}
