#include "april/navworld.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace april {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;
constexpr double kPlacementLo = -0.85;
constexpr double kPlacementHi = 0.85;
constexpr double kPlacementGap = 0.03;
constexpr int kPlacementRetries = 200;

Eigen::Vector3d hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

double rgb_hue(const Eigen::Vector3d& rgb) {
  const double mx = rgb.maxCoeff(), mn = rgb.minCoeff();
  const double d = mx - mn;
  if (d <= 0.0) return 0.0;
  double h;
  if (mx == rgb[0])
    h = std::fmod((rgb[1] - rgb[2]) / d, 6.0);
  else if (mx == rgb[1])
    h = (rgb[2] - rgb[0]) / d + 2.0;
  else
    h = (rgb[0] - rgb[1]) / d + 4.0;
  h /= 6.0;
  return h < 0.0 ? h + 1.0 : h;
}

bool point_in_object(const SceneObject& obj, const Eigen::Vector2d& p) {
  const Eigen::Vector2d q = p - obj.position;
  if (obj.sides == 0) return q.squaredNorm() <= obj.size * obj.size;
  // regular polygon, vertices counter-clockwise
  const int k = obj.sides;
  for (int t = 0; t < k; ++t) {
    const double a0 = obj.orientation + kTwoPi * t / k;
    const double a1 = obj.orientation + kTwoPi * (t + 1) / k;
    const Eigen::Vector2d v0(obj.size * std::cos(a0), obj.size * std::sin(a0));
    const Eigen::Vector2d v1(obj.size * std::cos(a1), obj.size * std::sin(a1));
    const Eigen::Vector2d e = v1 - v0;
    const Eigen::Vector2d w = q - v0;
    if (e.x() * w.y() - e.y() * w.x() < 0.0) return false;
  }
  return true;
}

}  // namespace

long BitMask::count() const {
  long n = 0;
  for (std::uint64_t w : words_) n += std::popcount(w);
  return n;
}

std::string domain_class_name(DomainClass c) {
  switch (c) {
    case DomainClass::kTrain: return "train";
    case DomainClass::kInterpolation: return "interp";
    case DomainClass::kExt4: return "ext4";
    case DomainClass::kExt8: return "ext8";
  }
  return "?";
}

DomainClass domain_class_from_name(const std::string& name) {
  if (name == "train") return DomainClass::kTrain;
  if (name == "interp") return DomainClass::kInterpolation;
  if (name == "ext4") return DomainClass::kExt4;
  if (name == "ext8") return DomainClass::kExt8;
  throw std::invalid_argument("unknown domain class '" + name + "'");
}

double quantise_8bit(double v) {
  return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

Eigen::Vector3d quantise_8bit(const Eigen::Vector3d& rgb) {
  return {quantise_8bit(rgb[0]), quantise_8bit(rgb[1]), quantise_8bit(rgb[2])};
}

Eigen::Vector3d sample_object_colour(Rng& rng, bool held_out) {
  // hue margins keep the palettes separable after 8-bit quantisation
  const double h = held_out ? rng.uniform(0.52, 0.98) : rng.uniform(0.02, 0.48);
  const double s = rng.uniform(0.5, 1.0);
  const double v = rng.uniform(0.6, 1.0);
  return quantise_8bit(hsv_to_rgb(h, s, v));
}

Eigen::Vector3d sample_background_colour(Rng& rng) {
  const double h = rng.uniform(0.02, 0.48);
  const double s = rng.uniform(0.1, 0.6);
  const double v = rng.uniform(0.05, 0.40);
  return quantise_8bit(hsv_to_rgb(h, s, v));
}

bool colour_in_training_palette(const Eigen::Vector3d& rgb) {
  return rgb_hue(rgb) < 0.5;
}

std::string DomainConfig::to_text() const {
  std::ostringstream out;
  out << "class = " << domain_class_name(domain_class) << '\n'
      << "seed = " << seed << '\n'
      << "distractors = " << distractors << '\n'
      << "extra_distractors = " << extra_distractors << '\n'
      << "resolution = " << resolution << '\n'
      << "size_min = " << size_min << '\n'
      << "size_max = " << size_max << '\n'
      << "epsilon = " << epsilon << '\n'
      << "action_max = " << action_max << '\n'
      << "max_steps = " << max_steps << '\n';
  return out.str();
}

DomainConfig DomainConfig::from_text(const std::string& text) {
  DomainConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "class") cfg.domain_class = domain_class_from_name(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "distractors") cfg.distractors = std::stoi(value);
    else if (key == "extra_distractors") cfg.extra_distractors = std::stoi(value);
    else if (key == "resolution") cfg.resolution = std::stoi(value);
    else if (key == "size_min") cfg.size_min = std::stod(value);
    else if (key == "size_max") cfg.size_max = std::stod(value);
    else if (key == "epsilon") cfg.epsilon = std::stod(value);
    else if (key == "action_max") cfg.action_max = std::stod(value);
    else if (key == "max_steps") cfg.max_steps = std::stoi(value);
    else throw std::invalid_argument("unknown domain config key '" + key + "'");
  }
  return cfg;
}

void render(const std::vector<SceneObject>& scene, const Eigen::Vector3d& background,
            int resolution, Tensor& observation, SegmentationMaps& maps) {
  const int res = resolution;
  observation = Tensor({res, res, 3});
  for (int i = 0; i < res; ++i)
    for (int j = 0; j < res; ++j)
      for (int c = 0; c < 3; ++c) observation.at(i, j, c) = background[c];

  std::vector<int> owner(static_cast<std::size_t>(res) * res, -1);
  const double px = 2.0 / res;

  // paint order: distractors, then target, then agent on top
  std::vector<int> order;
  for (std::size_t k = 0; k < scene.size(); ++k)
    if (scene[k].role == ObjectRole::kDistractor) order.push_back(static_cast<int>(k));
  for (std::size_t k = 0; k < scene.size(); ++k)
    if (scene[k].role == ObjectRole::kTarget) order.push_back(static_cast<int>(k));
  for (std::size_t k = 0; k < scene.size(); ++k)
    if (scene[k].role == ObjectRole::kAgent) order.push_back(static_cast<int>(k));

  for (int idx : order) {
    const SceneObject& obj = scene[static_cast<std::size_t>(idx)];
    // bounding box in pixel coordinates (row 0 is world y = +1)
    const int j0 = std::max(0, static_cast<int>(std::floor((obj.position.x() - obj.size + 1.0) / px)) - 1);
    const int j1 = std::min(res - 1, static_cast<int>(std::ceil((obj.position.x() + obj.size + 1.0) / px)) + 1);
    const int i0 = std::max(0, static_cast<int>(std::floor((1.0 - obj.position.y() - obj.size) / px)) - 1);
    const int i1 = std::min(res - 1, static_cast<int>(std::ceil((1.0 - obj.position.y() + obj.size) / px)) + 1);
    for (int i = i0; i <= i1; ++i) {
      const double y = 1.0 - (i + 0.5) * px;
      for (int j = j0; j <= j1; ++j) {
        const double x = -1.0 + (j + 0.5) * px;
        if (!point_in_object(obj, {x, y})) continue;
        owner[static_cast<std::size_t>(i) * res + j] = idx;
        for (int c = 0; c < 3; ++c) observation.at(i, j, c) = obj.colour[c];
      }
    }
  }

  maps.maps.assign(scene.size(), BitMask(res, res));
  for (int i = 0; i < res; ++i)
    for (int j = 0; j < res; ++j) {
      const int idx = owner[static_cast<std::size_t>(i) * res + j];
      if (idx >= 0) maps.maps[static_cast<std::size_t>(idx)].set(i, j, true);
    }
}

Eigen::MatrixXd adjacency_matrix(int object_count) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(object_count, 2 * object_count);
  for (int i = 0; i < object_count; ++i) {
    m(i, 2 * i) = 1.0;
    m(i, 2 * i + 1) = 1.0;
  }
  return m;
}

Env::Env(DomainConfig config) : config_(std::move(config)) {
  if (config_.distractors < 0 || config_.extra_distractors < 0)
    throw std::invalid_argument("navworld: negative distractor count");
  if (config_.resolution < 8)
    throw std::invalid_argument("navworld: resolution too small");
  if (config_.size_min > config_.size_max || config_.size_min <= 0.0)
    throw std::invalid_argument("navworld: bad object size range");
}

ResetResult Env::reset(std::uint64_t seed) {
  Rng rng(seed);
  background_ = sample_background_colour(rng);
  scene_.clear();
  const int n = config_.object_count();
  for (int idx = 0; idx < n; ++idx) {
    SceneObject obj;
    obj.id = idx;
    if (idx == 0) {
      obj.role = ObjectRole::kAgent;
      obj.sides = 0;
    } else if (idx == 1) {
      obj.role = ObjectRole::kTarget;
      obj.sides = 3;
    } else {
      obj.role = ObjectRole::kDistractor;
      obj.sides = 4 + static_cast<int>(rng.uniform_int(3));  // 4..6 sides
    }
    obj.size = rng.uniform(config_.size_min, config_.size_max);
    obj.orientation = obj.sides == 0 ? 0.0 : rng.uniform(0.0, kTwoPi);
    const bool held_out = idx >= 2 + config_.distractors;
    obj.colour = sample_object_colour(rng, held_out);

    bool placed = false;
    for (int attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
      const Eigen::Vector2d p(rng.uniform(kPlacementLo, kPlacementHi),
                              rng.uniform(kPlacementLo, kPlacementHi));
      placed = true;
      for (const SceneObject& other : scene_) {
        if ((p - other.position).norm() < obj.size + other.size + kPlacementGap) {
          placed = false;
          break;
        }
      }
      if (placed) obj.position = p;
    }
    if (!placed)
      throw std::runtime_error("navworld: could not place object " + std::to_string(idx) +
                               " without overlap after " + std::to_string(kPlacementRetries) +
                               " attempts (seed " + std::to_string(seed) + ")");
    scene_.push_back(obj);
  }
  steps_ = 0;
  done_ = false;
  scene_ready_ = true;

  ResetResult result;
  result.state = state();
  render_current(result.observation, result.maps);
  return result;
}

StepResult Env::step(const Eigen::Vector2d& action) {
  if (!scene_ready_) throw std::logic_error("navworld: step before reset");
  if (done_) throw std::logic_error("navworld: step after episode end");
  const double a = config_.action_max;
  const Eigen::Vector2d v(std::clamp(action.x(), -a, a), std::clamp(action.y(), -a, a));
  SceneObject& agent = scene_[0];
  agent.position += v;
  agent.position.x() = std::clamp(agent.position.x(), -1.0, 1.0);
  agent.position.y() = std::clamp(agent.position.y(), -1.0, 1.0);
  ++steps_;

  StepResult result;
  const double dist = (agent.position - scene_[1].position).norm();
  if (dist < config_.epsilon) {
    result.reward = 1.0;
    done_ = true;
  } else {
    result.reward = 0.0;
    if (steps_ >= config_.max_steps) done_ = true;
  }
  result.done = done_;
  result.state = state();
  render_current(result.observation, result.maps);
  return result;
}

Eigen::VectorXd Env::state() const {
  Eigen::VectorXd s(config_.state_dim());
  for (std::size_t k = 0; k < scene_.size(); ++k) {
    s[2 * static_cast<long>(k)] = scene_[k].position.x();
    s[2 * static_cast<long>(k) + 1] = scene_[k].position.y();
  }
  return s;
}

void Env::render_current(Tensor& obs, SegmentationMaps& maps) const {
  render(scene_, background_, config_.resolution, obs, maps);
}

DomainConfig make_domain(DomainClass cls, int index, const DomainConfig& base) {
  if (index < 0 || index >= kDomainSetSize)
    throw std::invalid_argument("make_domain: index " + std::to_string(index) +
                                " outside the fixed domain set (size " +
                                std::to_string(kDomainSetSize) + ")");
  DomainConfig cfg = base;
  cfg.domain_class = cls;
  switch (cls) {
    case DomainClass::kTrain:
      cfg.extra_distractors = 0;
      cfg.seed = seed_hash({tag_hash("domain/train"), static_cast<std::uint64_t>(index)});
      break;
    case DomainClass::kInterpolation:
      cfg.extra_distractors = 0;
      cfg.seed = seed_hash({tag_hash("domain/interp"), static_cast<std::uint64_t>(index)});
      break;
    case DomainClass::kExt4:
      cfg.extra_distractors = 4;
      cfg.seed = seed_hash({tag_hash("domain/ext4"), static_cast<std::uint64_t>(index)});
      break;
    case DomainClass::kExt8:
      cfg.extra_distractors = 8;
      cfg.seed = seed_hash({tag_hash("domain/ext8"), static_cast<std::uint64_t>(index)});
      break;
  }
  return cfg;
}

}  // namespace april
