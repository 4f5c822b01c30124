#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "april/checkpoint.hpp"
#include "april/graph.hpp"
#include "april/rng.hpp"
#include "april/tensor.hpp"

namespace april {

struct EnvDims {
  int state_dim = 10;
  int height = 60;
  int width = 60;
  int channels = 3;
  int action_dim = 2;
  double action_max = 0.15;
};

struct ConvLayer {
  int channels = 0;
  int kernel = 0;
  int stride = 1;
};

// Network widths for the six-network agent pair.  paper() is the reference
// configuration; desk() trades capacity for wall-clock on small renders.
struct ArchConfig {
  std::vector<int> state_actor_fc{256};
  std::vector<ConvLayer> obs_actor_conv{{18, 7, 1}, {32, 5, 1}, {32, 3, 1}};
  std::vector<int> obs_actor_fc{256};
  std::vector<int> critic_fc{64, 64};
  std::vector<int> state_attention_fc{256};
  std::vector<ConvLayer> obs_attention_conv{{32, 8, 1}, {32, 5, 1}, {64, 3, 1}};

  static ArchConfig paper() { return {}; }
  static ArchConfig desk();
  static ArchConfig named(const std::string& name);  // "paper" | "desk"
};

enum class Variant {
  kApril,
  kAprilNoSup,    // no attention alignment term
  kAprilNoShare,  // per-agent replay buffers
  kAprilNoBack,   // uniform object attention in the alignment target
  kDdpg,          // symmetric image-based critic, no attention, no state agent
  kAsymDdpg,      // state-based critic, no attention, no state agent
  kSmapAsymDdpg,  // asym-DDPG + state-regression bottleneck in the actor
};

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);
bool variant_has_state_module(Variant v);
bool variant_has_attention(Variant v);
bool variant_shares_replay(Variant v);
inline bool variant_has_smap(Variant v) { return v == Variant::kSmapAsymDdpg; }

// Online networks, target copies of the four actor/critic networks, and
// noise-perturbed behavioural copies of the actors and their attention nets.
struct NetworkSet {
  EnvDims dims;
  ArchConfig arch;
  Variant variant = Variant::kApril;

  Graph q_o, pi_o, q_o_target, pi_o_target, pi_o_pert;
  std::optional<Graph> h_o, h_o_pert;

  std::optional<Graph> q_s, pi_s, h_s;
  std::optional<Graph> q_s_target, pi_s_target;
  std::optional<Graph> pi_s_pert, h_s_pert;

  int smap_layer = -1;           // bottleneck layer index in pi_o (s-map only)
  bool critic_takes_state = true;  // false only for plain DDPG
};

NetworkSet build_networks(const EnvDims& dims, const ArchConfig& arch, Variant variant,
                          Rng& rng);

// Streaming per-dimension state statistics (Welford).  Standard deviation
// floored at 1e-6.  Updated only from training-time states.
class RunningNormaliser {
 public:
  explicit RunningNormaliser(int dim)
      : mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::VectorXd::Zero(dim)) {}

  void update(const Eigen::VectorXd& s);
  Eigen::VectorXd normalise(const Eigen::VectorXd& s) const;

  long count() const { return count_; }
  Eigen::VectorXd mean() const { return mean_; }
  Eigen::VectorXd stddev() const;  // floored

  const Eigen::VectorXd& raw_mean() const { return mean_; }
  const Eigen::VectorXd& raw_m2() const { return m2_; }
  void set_state(const Eigen::VectorXd& mean, const Eigen::VectorXd& m2, long count);

 private:
  long count_ = 0;
  Eigen::VectorXd mean_, m2_;
};

struct ParamNoiseState {
  double sigma = 0.1;    // current parameter-space std
  double desired = 0.1;  // desired action-space std (unit action scale)
  double adopt = 1.01;   // adoption coefficient
};

// o^a = tile(mask) * o: the mask value of a pixel multiplies all channels.
Tensor apply_pixel_mask(const Tensor& o, const Tensor& mask);

// Mask heads (perturbed copies when explore is set; identity when the
// variant has no attention networks).
Tensor obs_mask(NetworkSet& nets, const Tensor& o, bool explore);
Eigen::VectorXd state_mask(NetworkSet& nets, const Eigen::VectorXd& s_norm, bool explore);

// Env-scale actions (tanh output rescaled to the action box).
Eigen::VectorXd act_obs(NetworkSet& nets, const Tensor& o, bool explore);
Eigen::VectorXd act_state(NetworkSet& nets, const RunningNormaliser& normaliser,
                          const Eigen::VectorXd& s, bool explore);

// RMS distance in unit action space between online and perturbed policies
// over a batch of inputs.
double policy_distance_obs(NetworkSet& nets, const std::vector<Tensor>& obs);
double policy_distance_state(NetworkSet& nets, const RunningNormaliser& normaliser,
                             const std::vector<Eigen::VectorXd>& states);

// Measure the distance, adapt sigma (shrink when above the desired std,
// grow otherwise, ties grow), and redraw the perturbed copies.  Returns the
// measured distance.
double adapt_param_noise_obs(NetworkSet& nets, ParamNoiseState& noise,
                             const std::vector<Tensor>& obs, Rng& rng,
                             bool perturb_attention);
double adapt_param_noise_state(NetworkSet& nets, ParamNoiseState& noise,
                               const RunningNormaliser& normaliser,
                               const std::vector<Eigen::VectorXd>& states, Rng& rng,
                               bool perturb_attention);

// Redraw perturbed copies from the online nets at the current sigma.
void refresh_perturbed_obs(NetworkSet& nets, double sigma, Rng& rng, bool perturb_attention);
void refresh_perturbed_state(NetworkSet& nets, double sigma, Rng& rng, bool perturb_attention);

// Full agent state (all networks + normaliser + noise + env/arch metadata)
// in the checkpoint container format.
std::vector<CheckpointRecord> agent_records(const NetworkSet& nets,
                                            const RunningNormaliser& normaliser,
                                            const ParamNoiseState& state_noise,
                                            const ParamNoiseState& obs_noise);
struct LoadedAgent {
  NetworkSet nets;
  RunningNormaliser normaliser{1};
  ParamNoiseState state_noise, obs_noise;
};
LoadedAgent load_agent(const std::vector<CheckpointRecord>& records);

void save_agent(const std::string& path, const NetworkSet& nets,
                const RunningNormaliser& normaliser, const ParamNoiseState& state_noise,
                const ParamNoiseState& obs_noise);
LoadedAgent load_agent(const std::string& path);

}  // namespace april
