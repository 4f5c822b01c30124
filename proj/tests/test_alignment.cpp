#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "april/alignment.hpp"
#include "april/navworld.hpp"
#include "april/rng.hpp"

using namespace april;

namespace {

// random pairwise-disjoint maps: each pixel assigned to one of n regions
// (index n = background) uniformly
SegmentationMaps random_disjoint_maps(int n, int h, int w, Rng& rng) {
  SegmentationMaps maps;
  maps.maps.assign(static_cast<std::size_t>(n), BitMask(h, w));
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const int owner = static_cast<int>(rng.uniform_int(n + 1));
      if (owner < n) maps.maps[static_cast<std::size_t>(owner)].set(i, j, true);
    }
  return maps;
}

Eigen::VectorXd random_attention(int n, Rng& rng) {
  Eigen::VectorXd h(n);
  for (int i = 0; i < n; ++i) h[i] = rng.uniform();
  h /= h.sum();
  return h;
}

// brute-force per-pixel target
double target_oracle(const Eigen::VectorXd& c, const SegmentationMaps& maps, int i, int j) {
  double acc = 0.0;
  for (int k = 0; k < maps.count(); ++k)
    if (maps.maps[static_cast<std::size_t>(k)].get(i, j)) acc += c[k];
  return acc;
}

}  // namespace

TEST_CASE("object attention is the adjacency product") {
  SUBCASE("identity adjacency passes attention through") {
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(2, 2);
    Eigen::VectorXd h(2);
    h << 0.3, 0.7;
    Eigen::VectorXd c = object_attention(m, h);
    CHECK(c[0] == 0.3);
    CHECK(c[1] == 0.7);
  }
  SUBCASE("row sums collect per-object mass") {
    Eigen::MatrixXd m(2, 4);
    m << 1, 1, 0, 0, 0, 0, 1, 1;
    Eigen::VectorXd h(4);
    h << 0.1, 0.2, 0.3, 0.4;
    Eigen::VectorXd c = object_attention(m, h);
    CHECK(c[0] == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(c[1] == doctest::Approx(0.7).epsilon(1e-15));
  }
  SUBCASE("softmax mass is conserved through one-hot columns") {
    Rng rng(3);
    for (int n : {2, 5, 9}) {
      Eigen::MatrixXd m = adjacency_matrix(n);
      Eigen::VectorXd h = random_attention(2 * n, rng);
      CHECK(object_attention(m, h).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("dimension mismatch is rejected") {
    CHECK_THROWS_AS(object_attention(Eigen::MatrixXd::Zero(2, 4), Eigen::VectorXd::Zero(3)),
                    std::invalid_argument);
  }
}

TEST_CASE("attention target equals the per-pixel loop oracle on 200 random instances") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_int(6));
    const int h = 4 + static_cast<int>(rng.uniform_int(9));
    const int w = 4 + static_cast<int>(rng.uniform_int(9));
    SegmentationMaps maps = random_disjoint_maps(n, h, w, rng);
    Eigen::MatrixXd adjacency = adjacency_matrix(n);
    Eigen::VectorXd hs = random_attention(2 * n, rng);
    Eigen::VectorXd c = object_attention(adjacency, hs);

    // oracle for c as well
    for (int k = 0; k < n; ++k)
      CHECK(std::abs(c[k] - (hs[2 * k] + hs[2 * k + 1])) <= 1e-12);

    Tensor target = attention_target(c, maps);
    double max_err = 0.0;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        max_err = std::max(max_err, std::abs(target.at(i, j, 0) - target_oracle(c, maps, i, j)));
    CHECK(max_err <= 1e-12);
  }
}

TEST_CASE("one-hot object attention reproduces that object's map exactly") {
  Rng rng(23);
  SegmentationMaps maps = random_disjoint_maps(3, 8, 8, rng);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(3);
  c[1] = 1.0;
  Tensor target = attention_target(c, maps);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      CHECK(target.at(i, j, 0) == (maps.maps[1].get(i, j) ? 1.0 : 0.0));
}

TEST_CASE("equal attention on disjoint maps gives a two-level target") {
  Rng rng(29);
  SegmentationMaps maps = random_disjoint_maps(2, 6, 6, rng);
  Eigen::VectorXd c(2);
  c << 0.5, 0.5;
  Tensor target = attention_target(c, maps);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      const bool on_object = maps.maps[0].get(i, j) || maps.maps[1].get(i, j);
      CHECK(target.at(i, j, 0) == (on_object ? 0.5 : 0.0));
    }
}

TEST_CASE("target is invariant to permuting objects together with maps") {
  Rng rng(31);
  const int n = 4;
  SegmentationMaps maps = random_disjoint_maps(n, 7, 7, rng);
  Eigen::VectorXd c(n);
  for (int i = 0; i < n; ++i) c[i] = rng.uniform();
  Tensor base = attention_target(c, maps);

  std::vector<int> perm{2, 0, 3, 1};
  SegmentationMaps pm;
  Eigen::VectorXd pc(n);
  for (int i = 0; i < n; ++i) {
    pm.maps.push_back(maps.maps[static_cast<std::size_t>(perm[i])]);
    pc[i] = c[perm[static_cast<std::size_t>(i)]];
  }
  Tensor permuted = attention_target(pc, pm);
  CHECK((base.vec() - permuted.vec()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("overlapping maps violate the contract") {
  SegmentationMaps maps;
  maps.maps.assign(2, BitMask(4, 4));
  maps.maps[0].set(1, 1, true);
  maps.maps[1].set(1, 1, true);
  Eigen::VectorXd c(2);
  c << 0.5, 0.5;
  CHECK_THROWS_WITH_AS(attention_target(c, maps), doctest::Contains("overlap"),
                       std::invalid_argument);
  CHECK_THROWS_AS(pixel_weights(maps), std::invalid_argument);
}

TEST_CASE("pixel weights are owning-region area fractions") {
  SUBCASE("one object covering 10% of pixels weighs 0.1 there") {
    SegmentationMaps maps;
    maps.maps.assign(1, BitMask(10, 10));
    for (int j = 0; j < 10; ++j) maps.maps[0].set(0, j, true);  // 10 of 100 pixels
    Tensor w = pixel_weights(maps);
    CHECK(w.at(0, 3, 0) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(w.at(5, 5, 0) == doctest::Approx(0.9).epsilon(1e-15));  // background region
  }
  SUBCASE("empty scene weighs 1 everywhere") {
    SegmentationMaps maps;
    maps.maps.assign(1, BitMask(6, 6));  // object with no pixels
    Tensor w = pixel_weights(maps);
    CHECK(w.array().minCoeff() == 1.0);
    CHECK(w.array().maxCoeff() == 1.0);
  }
  SUBCASE("per-region counting oracle") {
    Rng rng(37);
    SegmentationMaps maps = random_disjoint_maps(3, 9, 9, rng);
    Tensor w = pixel_weights(maps);
    const double total = 81.0;
    for (const BitMask& m : maps.maps) {
      if (m.count() == 0) continue;
      double acc = 0.0;
      for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 9; ++j)
          if (m.get(i, j)) acc += w.at(i, j, 0) / (static_cast<double>(m.count()) / total);
      CHECK(acc == doctest::Approx(static_cast<double>(m.count())).epsilon(1e-9));
    }
    CHECK(w.array().minCoeff() > 0.0);
    CHECK(w.array().maxCoeff() <= 1.0);
  }
}

TEST_CASE("alignment mse matches a brute-force double loop") {
  Rng rng(41);
  SegmentationMaps maps = random_disjoint_maps(3, 8, 8, rng);
  Tensor w = pixel_weights(maps);
  Eigen::VectorXd c = random_attention(3, rng);
  Tensor target = attention_target(c, maps);
  Tensor h({8, 8, 1});
  for (long i = 0; i < h.size(); ++i) h[i] = rng.uniform();

  double expected = 0.0;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      const double d = h.at(i, j, 0) - target.at(i, j, 0);
      expected += 0.5 * d * d / w.at(i, j, 0);
    }
  CHECK(alignment_mse(h, target, w) == doctest::Approx(expected).epsilon(1e-12));

  // gradient matches finite differences of the scalar
  Tensor grad = alignment_mse_grad(h, target, w);
  const double eps = 1e-6;
  for (long k = 0; k < h.size(); k += 7) {
    const double saved = h[k];
    h[k] = saved + eps;
    const double up = alignment_mse(h, target, w);
    h[k] = saved - eps;
    const double down = alignment_mse(h, target, w);
    h[k] = saved;
    CHECK(grad[k] == doctest::Approx((up - down) / (2 * eps)).epsilon(1e-5));
  }
}

TEST_CASE("perfect alignment has zero loss; loss is positive otherwise") {
  Rng rng(43);
  SegmentationMaps maps = random_disjoint_maps(2, 6, 6, rng);
  Tensor w = pixel_weights(maps);
  Eigen::VectorXd c = random_attention(2, rng);
  Tensor target = attention_target(c, maps);
  CHECK(alignment_mse(target, target, w) == 0.0);
  Tensor off = target;
  off[3] += 1e-3;
  CHECK(alignment_mse(off, target, w) > 0.0);
}

TEST_CASE("a single-pixel error on a half-image region costs e^2") {
  SegmentationMaps maps;
  maps.maps.assign(1, BitMask(4, 4));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 2; ++j) maps.maps[0].set(i, j, true);  // w = 0.5 on the object
  Tensor w = pixel_weights(maps);
  Eigen::VectorXd c(1);
  c << 0.4;
  Tensor target = attention_target(c, maps);
  Tensor h = target;
  const double e = 0.3;
  h.at(2, 1, 0) += e;
  CHECK(alignment_mse(h, target, w) == doctest::Approx(e * e).epsilon(1e-12));
}

TEST_CASE("size equalisation: equal per-pixel error costs the same for areas 1x and 4x") {
  // object 0: 8 pixels; object 1: 32 pixels, on a 16x16 grid
  SegmentationMaps maps;
  maps.maps.assign(2, BitMask(16, 16));
  int placed = 0;
  for (int j = 0; j < 8; ++j) maps.maps[0].set(0, j, true);
  for (int i = 2; i < 4; ++i)
    for (int j = 0; j < 16 && placed < 32; ++j, ++placed) maps.maps[1].set(i, j, true);
  REQUIRE(maps.maps[0].count() * 4 == maps.maps[1].count());

  Tensor w = pixel_weights(maps);
  Eigen::VectorXd c(2);
  c << 0.5, 0.5;
  Tensor target = attention_target(c, maps);

  const double e = 0.17;
  auto loss_with_error_on = [&](const BitMask& region) {
    Tensor h = target;
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 16; ++j)
        if (region.get(i, j)) h.at(i, j, 0) += e;
    return alignment_mse(h, target, w);
  };
  const double small_obj = loss_with_error_on(maps.maps[0]);
  const double big_obj = loss_with_error_on(maps.maps[1]);
  CHECK(std::abs(small_obj - big_obj) < 1e-10);
}
