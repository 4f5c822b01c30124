#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "april/rng.hpp"
#include "april/tensor.hpp"

namespace april {

// Packed binary pixel mask, row-major, one bit per pixel.
class BitMask {
 public:
  BitMask() = default;
  BitMask(int height, int width)
      : height_(height), width_(width),
        words_((static_cast<std::size_t>(height) * width + 63) / 64, 0) {}

  bool get(int i, int j) const {
    const std::size_t bit = static_cast<std::size_t>(i) * width_ + j;
    return (words_[bit >> 6] >> (bit & 63)) & 1u;
  }
  void set(int i, int j, bool v) {
    const std::size_t bit = static_cast<std::size_t>(i) * width_ + j;
    if (v)
      words_[bit >> 6] |= (std::uint64_t{1} << (bit & 63));
    else
      words_[bit >> 6] &= ~(std::uint64_t{1} << (bit & 63));
  }

  int height() const { return height_; }
  int width() const { return width_; }
  long count() const;

  std::vector<std::uint64_t>& words() { return words_; }
  const std::vector<std::uint64_t>& words() const { return words_; }

  bool operator==(const BitMask&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint64_t> words_;
};

// Per-object binary segmentation, pairwise disjoint (the later-painted
// object owns overlapping pixels).
struct SegmentationMaps {
  std::vector<BitMask> maps;

  int count() const { return static_cast<int>(maps.size()); }
  int height() const { return maps.empty() ? 0 : maps[0].height(); }
  int width() const { return maps.empty() ? 0 : maps[0].width(); }
  bool operator==(const SegmentationMaps&) const = default;
};

enum class ObjectRole { kAgent, kTarget, kDistractor };

struct SceneObject {
  int id = 0;
  ObjectRole role = ObjectRole::kDistractor;
  int sides = 0;                       // 0 = circle, 3 = triangle, >=4 regular polygon
  Eigen::Vector2d position{0.0, 0.0};  // world units, arena [-1,1]^2
  double orientation = 0.0;            // radians; unused for circles
  Eigen::Vector3d colour{0.0, 0.0, 0.0};  // RGB in [0,1], 8-bit quantised
  double size = 0.1;                   // circumradius in world units
};

enum class DomainClass { kTrain, kInterpolation, kExt4, kExt8 };

std::string domain_class_name(DomainClass c);
DomainClass domain_class_from_name(const std::string& name);

inline constexpr int kDomainSetSize = 100;  // fixed benchmark domains per class

struct DomainConfig {
  DomainClass domain_class = DomainClass::kTrain;
  std::uint64_t seed = 0;
  int distractors = 3;        // training-palette distractors
  int extra_distractors = 0;  // held-out-palette distractors (ext-4 / ext-8)
  int resolution = 60;        // square image side in pixels
  double size_min = 0.12;
  double size_max = 0.20;
  double epsilon = 0.12;      // success distance, world units
  double action_max = 0.15;   // per-axis velocity bound, world units/step
  int max_steps = 20;

  int object_count() const { return 2 + distractors + extra_distractors; }
  int state_dim() const { return 2 * object_count(); }

  std::string to_text() const;
  static DomainConfig from_text(const std::string& text);
};

struct ResetResult {
  Eigen::VectorXd state;
  Tensor observation;  // {H,W,3}, values in [0,1]
  SegmentationMaps maps;
};

struct StepResult {
  Eigen::VectorXd state;
  Tensor observation;
  SegmentationMaps maps;
  double reward = 0.0;
  bool done = false;
};

// Rasterises the scene at pixel centres (no anti-aliasing) so segmentation
// maps are exact.  Paint order: background, distractors, target, agent.
void render(const std::vector<SceneObject>& scene, const Eigen::Vector3d& background,
            int resolution, Tensor& observation, SegmentationMaps& maps);

// M in {0,1}^{N x 2N}: row i marks the two state dimensions of object i.
Eigen::MatrixXd adjacency_matrix(int object_count);

// Velocity-controlled navigation POMDP: circular agent, triangular target,
// polygonal distractors, sparse +1 reward within epsilon of the target,
// fixed step budget.  Deterministic given (seed, action sequence).
class Env {
 public:
  explicit Env(DomainConfig config);

  ResetResult reset() { return reset(config_.seed); }
  ResetResult reset(std::uint64_t seed);
  StepResult step(const Eigen::Vector2d& action);

  const DomainConfig& config() const { return config_; }
  const std::vector<SceneObject>& scene() const { return scene_; }
  const Eigen::Vector3d& background() const { return background_; }
  Eigen::VectorXd state() const;
  int steps_taken() const { return steps_; }
  bool done() const { return done_; }
  int object_count() const { return config_.object_count(); }
  int state_dim() const { return config_.state_dim(); }

 private:
  void render_current(Tensor& obs, SegmentationMaps& maps) const;

  DomainConfig config_;
  std::vector<SceneObject> scene_;
  Eigen::Vector3d background_{0.0, 0.0, 0.0};
  int steps_ = 0;
  bool done_ = false;
  bool scene_ready_ = false;
};

// Fixed benchmark domain for (class, index); index < kDomainSetSize.
// Interpolation keeps the training distribution with fresh seeds; ext-4 and
// ext-8 add 4 or 8 held-out-palette distractors on top of `base`.
DomainConfig make_domain(DomainClass cls, int index, const DomainConfig& base = {});

// Colour palettes.  Training hues occupy one half of the hue circle,
// held-out hues the opposite half, so the palettes are disjoint.
Eigen::Vector3d sample_object_colour(Rng& rng, bool held_out);
Eigen::Vector3d sample_background_colour(Rng& rng);
bool colour_in_training_palette(const Eigen::Vector3d& rgb);

// Quantise to the renderer's 8-bit colour grid (exact multiples of 1/255).
double quantise_8bit(double v);
Eigen::Vector3d quantise_8bit(const Eigen::Vector3d& rgb);

}  // namespace april
