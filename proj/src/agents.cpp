#include "april/agents.hpp"

#include <cmath>
#include <stdexcept>

#include "april/optim.hpp"

namespace april {

namespace {

constexpr double kActorFinalInitLimit = 3e-3;
constexpr double kNormaliserStdFloor = 1e-6;

void append_conv_block(std::vector<LayerSpec>& layers, const std::vector<ConvLayer>& convs,
                       bool same) {
  for (const ConvLayer& c : convs) {
    layers.push_back(same ? LayerSpec::conv_same(c.channels, c.kernel, c.stride)
                          : LayerSpec::conv_valid(c.channels, c.kernel, c.stride));
    layers.push_back(LayerSpec::layer_norm());
    layers.push_back(LayerSpec::relu());
  }
}

void append_fc_block(std::vector<LayerSpec>& layers, const std::vector<int>& widths) {
  for (int w : widths) {
    layers.push_back(LayerSpec::dense(w));
    layers.push_back(LayerSpec::layer_norm());
    layers.push_back(LayerSpec::relu());
  }
}

std::vector<double> encode_int_list(const std::vector<int>& xs) {
  std::vector<double> out{static_cast<double>(xs.size())};
  for (int x : xs) out.push_back(static_cast<double>(x));
  return out;
}

std::vector<int> decode_int_list(const CheckpointRecord& rec) {
  const auto n = static_cast<std::size_t>(rec.values.at(0));
  std::vector<int> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(static_cast<int>(rec.values.at(i + 1)));
  return out;
}

std::vector<double> encode_conv_list(const std::vector<ConvLayer>& xs) {
  std::vector<double> out{static_cast<double>(xs.size())};
  for (const ConvLayer& c : xs) {
    out.push_back(c.channels);
    out.push_back(c.kernel);
    out.push_back(c.stride);
  }
  return out;
}

std::vector<ConvLayer> decode_conv_list(const CheckpointRecord& rec) {
  const auto n = static_cast<std::size_t>(rec.values.at(0));
  std::vector<ConvLayer> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({static_cast<int>(rec.values.at(3 * i + 1)),
                   static_cast<int>(rec.values.at(3 * i + 2)),
                   static_cast<int>(rec.values.at(3 * i + 3))});
  return out;
}

}  // namespace

ArchConfig ArchConfig::desk() {
  ArchConfig arch;
  arch.obs_actor_conv = {{8, 5, 2}, {16, 3, 1}};
  arch.obs_actor_fc = {128};
  arch.obs_attention_conv = {{8, 5, 1}, {8, 3, 1}};
  return arch;
}

ArchConfig ArchConfig::named(const std::string& name) {
  if (name == "paper") return paper();
  if (name == "desk") return desk();
  throw std::invalid_argument("unknown architecture preset '" + name + "'");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kApril: return "april";
    case Variant::kAprilNoSup: return "april-no-sup";
    case Variant::kAprilNoShare: return "april-no-share";
    case Variant::kAprilNoBack: return "april-no-back";
    case Variant::kDdpg: return "ddpg";
    case Variant::kAsymDdpg: return "asym-ddpg";
    case Variant::kSmapAsymDdpg: return "smap-asym-ddpg";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  for (Variant v : {Variant::kApril, Variant::kAprilNoSup, Variant::kAprilNoShare,
                    Variant::kAprilNoBack, Variant::kDdpg, Variant::kAsymDdpg,
                    Variant::kSmapAsymDdpg})
    if (variant_name(v) == name) return v;
  throw std::invalid_argument("unknown variant '" + name + "'");
}

bool variant_has_state_module(Variant v) {
  return v == Variant::kApril || v == Variant::kAprilNoSup ||
         v == Variant::kAprilNoShare || v == Variant::kAprilNoBack;
}

bool variant_has_attention(Variant v) { return variant_has_state_module(v); }

bool variant_shares_replay(Variant v) {
  return variant_has_state_module(v) && v != Variant::kAprilNoShare;
}

NetworkSet build_networks(const EnvDims& dims, const ArchConfig& arch, Variant variant,
                          Rng& rng) {
  if (dims.state_dim < 2 || dims.action_dim < 1 || dims.action_max <= 0.0)
    throw std::invalid_argument("build_networks: bad environment dimensions");
  NetworkSet nets;
  nets.dims = dims;
  nets.arch = arch;
  nets.variant = variant;
  const Shape obs_shape{dims.height, dims.width, dims.channels};

  {  // observation actor
    std::vector<LayerSpec> layers;
    append_conv_block(layers, arch.obs_actor_conv, false);
    if (variant_has_smap(variant)) {
      nets.smap_layer = static_cast<int>(layers.size());
      layers.push_back(LayerSpec::dense(dims.state_dim));  // linear regression bottleneck
    }
    append_fc_block(layers, arch.obs_actor_fc);
    layers.push_back(LayerSpec::dense(dims.action_dim));
    layers.push_back(LayerSpec::tanh());
    nets.pi_o = Graph("pi_o", obs_shape, layers);
    Rng r = rng.fork("pi_o");
    nets.pi_o.init_params(r, kActorFinalInitLimit);
  }

  if (variant == Variant::kDdpg) {  // image-based critic, actor-shaped trunk
    std::vector<LayerSpec> layers;
    append_conv_block(layers, arch.obs_actor_conv, false);
    const int side_layer = static_cast<int>(layers.size());
    append_fc_block(layers, arch.obs_actor_fc);
    layers.push_back(LayerSpec::dense(1));
    nets.q_o = Graph("q_o", obs_shape, layers, dims.action_dim, side_layer);
    nets.critic_takes_state = false;
  } else {  // state-based critic
    std::vector<LayerSpec> layers;
    append_fc_block(layers, arch.critic_fc);
    layers.push_back(LayerSpec::dense(1));
    nets.q_o = Graph("q_o", {dims.state_dim}, layers, dims.action_dim, 0);
    nets.critic_takes_state = true;
  }
  {
    Rng r = rng.fork("q_o");
    nets.q_o.init_params(r);
  }

  if (variant_has_attention(variant)) {
    std::vector<LayerSpec> layers;
    append_conv_block(layers, arch.obs_attention_conv, true);
    layers.push_back(LayerSpec::conv_same(1, 1, 1));
    layers.push_back(LayerSpec::sigmoid());
    nets.h_o = Graph("h_o", obs_shape, layers);
    Rng r = rng.fork("h_o");
    nets.h_o->init_params(r);
    nets.h_o_pert = *nets.h_o;
  }

  if (variant_has_state_module(variant)) {
    {
      std::vector<LayerSpec> layers;
      append_fc_block(layers, arch.state_actor_fc);
      layers.push_back(LayerSpec::dense(dims.action_dim));
      layers.push_back(LayerSpec::tanh());
      nets.pi_s = Graph("pi_s", {dims.state_dim}, layers);
      Rng r = rng.fork("pi_s");
      nets.pi_s->init_params(r, kActorFinalInitLimit);
    }
    {
      std::vector<LayerSpec> layers;
      append_fc_block(layers, arch.critic_fc);
      layers.push_back(LayerSpec::dense(1));
      nets.q_s = Graph("q_s", {dims.state_dim}, layers, dims.action_dim, 0);
      Rng r = rng.fork("q_s");
      nets.q_s->init_params(r);
    }
    {
      std::vector<LayerSpec> layers;
      append_fc_block(layers, arch.state_attention_fc);
      layers.push_back(LayerSpec::dense(dims.state_dim));
      layers.push_back(LayerSpec::softmax());
      nets.h_s = Graph("h_s", {dims.state_dim}, layers);
      Rng r = rng.fork("h_s");
      nets.h_s->init_params(r);
    }
    nets.q_s_target = *nets.q_s;
    nets.pi_s_target = *nets.pi_s;
    nets.pi_s_pert = *nets.pi_s;
    nets.h_s_pert = *nets.h_s;
  }

  nets.q_o_target = nets.q_o;
  nets.pi_o_target = nets.pi_o;
  nets.pi_o_pert = nets.pi_o;
  return nets;
}

void RunningNormaliser::update(const Eigen::VectorXd& s) {
  if (s.size() != mean_.size())
    throw std::invalid_argument("normaliser: state dimension mismatch");
  if (!s.allFinite()) throw std::invalid_argument("normaliser: non-finite state");
  ++count_;
  const Eigen::VectorXd delta = s - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta.cwiseProduct(s - mean_);
}

Eigen::VectorXd RunningNormaliser::stddev() const {
  if (count_ == 0) return Eigen::VectorXd::Ones(mean_.size());
  return (m2_ / static_cast<double>(count_))
      .cwiseSqrt()
      .cwiseMax(kNormaliserStdFloor);
}

Eigen::VectorXd RunningNormaliser::normalise(const Eigen::VectorXd& s) const {
  if (count_ == 0) return s;
  return (s - mean_).cwiseQuotient(stddev());
}

void RunningNormaliser::set_state(const Eigen::VectorXd& mean, const Eigen::VectorXd& m2,
                                  long count) {
  mean_ = mean;
  m2_ = m2;
  count_ = count;
}

Tensor apply_pixel_mask(const Tensor& o, const Tensor& mask) {
  if (o.ndim() != 3 || mask.ndim() != 3 || mask.dim(2) != 1 || mask.dim(0) != o.dim(0) ||
      mask.dim(1) != o.dim(1))
    throw std::invalid_argument("apply_pixel_mask: mask must be {H,W,1} matching the image");
  Tensor out(o.shape());
  const int h = o.dim(0), w = o.dim(1), c = o.dim(2);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double m = mask.at(i, j, 0);
      for (int ch = 0; ch < c; ++ch) out.at(i, j, ch) = m * o.at(i, j, ch);
    }
  return out;
}

Tensor obs_mask(NetworkSet& nets, const Tensor& o, bool explore) {
  if (!nets.h_o) return Tensor::constant({o.dim(0), o.dim(1), 1}, 1.0);
  Graph& h = explore ? *nets.h_o_pert : *nets.h_o;
  return h.forward(o);
}

Eigen::VectorXd state_mask(NetworkSet& nets, const Eigen::VectorXd& s_norm, bool explore) {
  if (!nets.h_s) throw std::logic_error("state_mask: variant has no state module");
  Graph& h = explore ? *nets.h_s_pert : *nets.h_s;
  return h.forward(Tensor::from_vector({static_cast<int>(s_norm.size())}, s_norm)).vec();
}

Eigen::VectorXd act_obs(NetworkSet& nets, const Tensor& o, bool explore) {
  Graph& pi = explore ? nets.pi_o_pert : nets.pi_o;
  if (nets.h_o) {
    const Tensor masked = apply_pixel_mask(o, obs_mask(nets, o, explore));
    return nets.dims.action_max * pi.forward(masked).vec();
  }
  return nets.dims.action_max * pi.forward(o).vec();
}

Eigen::VectorXd act_state(NetworkSet& nets, const RunningNormaliser& normaliser,
                          const Eigen::VectorXd& s, bool explore) {
  if (!nets.pi_s) throw std::logic_error("act_state: variant has no state module");
  Graph& pi = explore ? *nets.pi_s_pert : *nets.pi_s;
  const Eigen::VectorXd s_norm = normaliser.normalise(s);
  const Eigen::VectorXd gated = state_mask(nets, s_norm, explore).cwiseProduct(s_norm);
  return nets.dims.action_max *
         pi.forward(Tensor::from_vector({static_cast<int>(gated.size())}, gated)).vec();
}

double policy_distance_obs(NetworkSet& nets, const std::vector<Tensor>& obs) {
  if (obs.empty()) throw std::invalid_argument("policy_distance_obs: empty batch");
  double acc = 0.0;
  for (const Tensor& o : obs) {
    const Eigen::VectorXd on = act_obs(nets, o, false);
    const Eigen::VectorXd pert = act_obs(nets, o, true);
    acc += (on - pert).squaredNorm();
  }
  const double scale = nets.dims.action_max * nets.dims.action_max;
  return std::sqrt(acc / scale / static_cast<double>(obs.size() * nets.dims.action_dim));
}

double policy_distance_state(NetworkSet& nets, const RunningNormaliser& normaliser,
                             const std::vector<Eigen::VectorXd>& states) {
  if (states.empty()) throw std::invalid_argument("policy_distance_state: empty batch");
  double acc = 0.0;
  for (const Eigen::VectorXd& s : states) {
    const Eigen::VectorXd on = act_state(nets, normaliser, s, false);
    const Eigen::VectorXd pert = act_state(nets, normaliser, s, true);
    acc += (on - pert).squaredNorm();
  }
  const double scale = nets.dims.action_max * nets.dims.action_max;
  return std::sqrt(acc / scale / static_cast<double>(states.size() * nets.dims.action_dim));
}

void refresh_perturbed_obs(NetworkSet& nets, double sigma, Rng& rng, bool perturb_attention) {
  add_parameter_noise(nets.pi_o_pert, nets.pi_o, sigma, rng);
  if (nets.h_o) {
    if (perturb_attention)
      add_parameter_noise(*nets.h_o_pert, *nets.h_o, sigma, rng);
    else
      nets.h_o_pert->copy_params_from(*nets.h_o);
  }
}

void refresh_perturbed_state(NetworkSet& nets, double sigma, Rng& rng,
                             bool perturb_attention) {
  if (!nets.pi_s) return;
  add_parameter_noise(*nets.pi_s_pert, *nets.pi_s, sigma, rng);
  if (perturb_attention)
    add_parameter_noise(*nets.h_s_pert, *nets.h_s, sigma, rng);
  else
    nets.h_s_pert->copy_params_from(*nets.h_s);
}

namespace {

void adapt_sigma(ParamNoiseState& noise, double distance) {
  if (distance > noise.desired)
    noise.sigma /= noise.adopt;
  else
    noise.sigma *= noise.adopt;  // ties grow
}

}  // namespace

double adapt_param_noise_obs(NetworkSet& nets, ParamNoiseState& noise,
                             const std::vector<Tensor>& obs, Rng& rng,
                             bool perturb_attention) {
  const double d = policy_distance_obs(nets, obs);
  adapt_sigma(noise, d);
  refresh_perturbed_obs(nets, noise.sigma, rng, perturb_attention);
  return d;
}

double adapt_param_noise_state(NetworkSet& nets, ParamNoiseState& noise,
                               const RunningNormaliser& normaliser,
                               const std::vector<Eigen::VectorXd>& states, Rng& rng,
                               bool perturb_attention) {
  const double d = policy_distance_state(nets, normaliser, states);
  adapt_sigma(noise, d);
  refresh_perturbed_state(nets, noise.sigma, rng, perturb_attention);
  return d;
}

std::vector<CheckpointRecord> agent_records(const NetworkSet& nets,
                                            const RunningNormaliser& normaliser,
                                            const ParamNoiseState& state_noise,
                                            const ParamNoiseState& obs_noise) {
  std::vector<CheckpointRecord> recs;
  recs.push_back(scalar_record("meta/state_dim", nets.dims.state_dim));
  recs.push_back(scalar_record("meta/height", nets.dims.height));
  recs.push_back(scalar_record("meta/width", nets.dims.width));
  recs.push_back(scalar_record("meta/channels", nets.dims.channels));
  recs.push_back(scalar_record("meta/action_dim", nets.dims.action_dim));
  recs.push_back(scalar_record("meta/action_max", nets.dims.action_max));
  recs.push_back(scalar_record("meta/variant", static_cast<double>(nets.variant)));

  auto list_record = [](const std::string& name, std::vector<double> values) {
    CheckpointRecord rec;
    rec.name = name;
    rec.shape = {static_cast<int>(values.size())};
    rec.values = std::move(values);
    return rec;
  };
  recs.push_back(list_record("arch/state_actor_fc", encode_int_list(nets.arch.state_actor_fc)));
  recs.push_back(list_record("arch/obs_actor_conv", encode_conv_list(nets.arch.obs_actor_conv)));
  recs.push_back(list_record("arch/obs_actor_fc", encode_int_list(nets.arch.obs_actor_fc)));
  recs.push_back(list_record("arch/critic_fc", encode_int_list(nets.arch.critic_fc)));
  recs.push_back(
      list_record("arch/state_attention_fc", encode_int_list(nets.arch.state_attention_fc)));
  recs.push_back(
      list_record("arch/obs_attention_conv", encode_conv_list(nets.arch.obs_attention_conv)));

  append_graph_records(recs, "q_o", nets.q_o);
  append_graph_records(recs, "pi_o", nets.pi_o);
  append_graph_records(recs, "q_o_target", nets.q_o_target);
  append_graph_records(recs, "pi_o_target", nets.pi_o_target);
  if (nets.h_o) append_graph_records(recs, "h_o", *nets.h_o);
  if (nets.q_s) {
    append_graph_records(recs, "q_s", *nets.q_s);
    append_graph_records(recs, "pi_s", *nets.pi_s);
    append_graph_records(recs, "h_s", *nets.h_s);
    append_graph_records(recs, "q_s_target", *nets.q_s_target);
    append_graph_records(recs, "pi_s_target", *nets.pi_s_target);
  }

  CheckpointRecord mean = tensor_record(
      "normaliser/mean", Tensor::from_vector({static_cast<int>(normaliser.raw_mean().size())},
                                             normaliser.raw_mean()));
  CheckpointRecord m2 = tensor_record(
      "normaliser/m2",
      Tensor::from_vector({static_cast<int>(normaliser.raw_m2().size())}, normaliser.raw_m2()));
  recs.push_back(std::move(mean));
  recs.push_back(std::move(m2));
  recs.push_back(scalar_record("normaliser/count", static_cast<double>(normaliser.count())));
  recs.push_back(scalar_record("noise/state/sigma", state_noise.sigma));
  recs.push_back(scalar_record("noise/state/desired", state_noise.desired));
  recs.push_back(scalar_record("noise/state/adopt", state_noise.adopt));
  recs.push_back(scalar_record("noise/obs/sigma", obs_noise.sigma));
  recs.push_back(scalar_record("noise/obs/desired", obs_noise.desired));
  recs.push_back(scalar_record("noise/obs/adopt", obs_noise.adopt));
  return recs;
}

LoadedAgent load_agent(const std::vector<CheckpointRecord>& records) {
  EnvDims dims;
  dims.state_dim = static_cast<int>(scalar_value(records, "meta/state_dim"));
  dims.height = static_cast<int>(scalar_value(records, "meta/height"));
  dims.width = static_cast<int>(scalar_value(records, "meta/width"));
  dims.channels = static_cast<int>(scalar_value(records, "meta/channels"));
  dims.action_dim = static_cast<int>(scalar_value(records, "meta/action_dim"));
  dims.action_max = scalar_value(records, "meta/action_max");
  const auto variant = static_cast<Variant>(static_cast<int>(scalar_value(records, "meta/variant")));

  auto need = [&](const std::string& name) -> const CheckpointRecord& {
    const CheckpointRecord* rec = find_record(records, name);
    if (rec == nullptr) throw std::runtime_error("checkpoint: missing record '" + name + "'");
    return *rec;
  };
  ArchConfig arch;
  arch.state_actor_fc = decode_int_list(need("arch/state_actor_fc"));
  arch.obs_actor_conv = decode_conv_list(need("arch/obs_actor_conv"));
  arch.obs_actor_fc = decode_int_list(need("arch/obs_actor_fc"));
  arch.critic_fc = decode_int_list(need("arch/critic_fc"));
  arch.state_attention_fc = decode_int_list(need("arch/state_attention_fc"));
  arch.obs_attention_conv = decode_conv_list(need("arch/obs_attention_conv"));

  Rng scratch(0);
  LoadedAgent agent{build_networks(dims, arch, variant, scratch), RunningNormaliser(dims.state_dim),
                    {}, {}};
  NetworkSet& nets = agent.nets;
  load_graph_records(records, "q_o", nets.q_o);
  load_graph_records(records, "pi_o", nets.pi_o);
  load_graph_records(records, "q_o_target", nets.q_o_target);
  load_graph_records(records, "pi_o_target", nets.pi_o_target);
  if (nets.h_o) {
    load_graph_records(records, "h_o", *nets.h_o);
    nets.h_o_pert->copy_params_from(*nets.h_o);
  }
  if (nets.q_s) {
    load_graph_records(records, "q_s", *nets.q_s);
    load_graph_records(records, "pi_s", *nets.pi_s);
    load_graph_records(records, "h_s", *nets.h_s);
    load_graph_records(records, "q_s_target", *nets.q_s_target);
    load_graph_records(records, "pi_s_target", *nets.pi_s_target);
    nets.pi_s_pert->copy_params_from(*nets.pi_s);
    nets.h_s_pert->copy_params_from(*nets.h_s);
  }
  nets.pi_o_pert.copy_params_from(nets.pi_o);

  const CheckpointRecord& mean = need("normaliser/mean");
  const CheckpointRecord& m2 = need("normaliser/m2");
  Eigen::VectorXd mean_v = Eigen::Map<const Eigen::VectorXd>(
      mean.values.data(), static_cast<long>(mean.values.size()));
  Eigen::VectorXd m2_v =
      Eigen::Map<const Eigen::VectorXd>(m2.values.data(), static_cast<long>(m2.values.size()));
  agent.normaliser.set_state(mean_v, m2_v,
                             static_cast<long>(scalar_value(records, "normaliser/count")));
  agent.state_noise = {scalar_value(records, "noise/state/sigma"),
                       scalar_value(records, "noise/state/desired"),
                       scalar_value(records, "noise/state/adopt")};
  agent.obs_noise = {scalar_value(records, "noise/obs/sigma"),
                     scalar_value(records, "noise/obs/desired"),
                     scalar_value(records, "noise/obs/adopt")};
  return agent;
}

void save_agent(const std::string& path, const NetworkSet& nets,
                const RunningNormaliser& normaliser, const ParamNoiseState& state_noise,
                const ParamNoiseState& obs_noise) {
  write_checkpoint(path, agent_records(nets, normaliser, state_noise, obs_noise));
}

LoadedAgent load_agent(const std::string& path) { return load_agent(read_checkpoint(path)); }

}  // namespace april
