#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "april/navworld.hpp"
#include "april/rng.hpp"
#include "april/tensor.hpp"

namespace april {

enum class AgentSource { kState, kObs };

struct Transition {
  Eigen::VectorXd s;
  Tensor o;            // {H,W,3}, 8-bit quantised values in [0,1]
  SegmentationMaps z;  // segmentation at time t
  Eigen::Vector2d a{0.0, 0.0};
  double r = 0.0;
  bool done = false;
  Eigen::VectorXd s_next;
  Tensor o_next;
  AgentSource source = AgentSource::kState;
};

// FIFO ring buffer with uniform with-replacement sampling and per-source
// lifetime counters.  Observations are stored as packed u8 (lossless for
// the renderer's 8-bit colour grid), segmentation maps bit-packed.
// Appends and sampling are internally synchronised; appends are atomic at
// transition granularity.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  ReplayBuffer(ReplayBuffer&& other) noexcept;  // fresh mutex, moved contents
  ReplayBuffer& operator=(ReplayBuffer&&) = delete;
  ReplayBuffer(const ReplayBuffer&) = delete;

  // Validates shapes against the first appended transition and rejects
  // non-quantised or non-finite payloads.
  void append(const Transition& t);

  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  bool ready(std::size_t batch) const { return size() >= batch; }

  // Uniform with replacement over current contents; requires a non-empty
  // buffer.  Callers gate optimisation on ready(batch).
  std::vector<Transition> sample(std::size_t batch, Rng& rng) const;

  // Decoded transition by age; index 0 is the oldest still stored.
  Transition at(std::size_t index) const;

  // Lifetime append counts (state-agent, obs-agent).
  std::pair<long, long> source_counts() const;
  long total_appended() const;

  void dump(const std::string& path) const;
  static ReplayBuffer restore(const std::string& path);

 private:
  struct Encoded {
    Eigen::VectorXd s, s_next;
    std::vector<std::uint8_t> o, o_next;
    SegmentationMaps z;
    Eigen::Vector2d a;
    double r = 0.0;
    bool done = false;
    AgentSource source = AgentSource::kState;
  };

  Encoded encode(const Transition& t) const;
  Transition decode(const Encoded& e) const;
  std::size_t physical_index(std::size_t age_index) const;

  mutable std::mutex mutex_;
  std::size_t capacity_ = 0;
  std::vector<Encoded> ring_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  long appended_ = 0;
  long state_count_ = 0;
  long obs_count_ = 0;
  // payload geometry, fixed by the first append
  int height_ = 0, width_ = 0, map_count_ = -1;
  long state_dim_ = -1;
};

}  // namespace april
