#include "mesr/td3.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string_view>

#include <cereal/archives/portable_binary.hpp>
#include <cereal/types/common.hpp>
#include <cereal/types/string.hpp>
#include <cereal/types/vector.hpp>

namespace mesr {

namespace {

constexpr const char* kCheckpointMagic = "MESR-TD3";
constexpr std::uint32_t kCheckpointVersion = 2;

std::vector<double> to_std(const nn::Vector& v) { return {v.data(), v.data() + v.size()}; }

nn::Vector from_std(const std::vector<double>& v) {
  return Eigen::Map<const nn::Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

template <class Archive>
void save_mlp(Archive& ar, const nn::Mlp& net) {
  ar(net.layer_sizes(), static_cast<int>(net.output_activation()), to_std(net.parameters()));
}

template <class Archive>
void load_mlp(Archive& ar, nn::Mlp& net, const char* name) {
  std::vector<int> sizes;
  int act = 0;
  std::vector<double> params;
  ar(sizes, act, params);
  if (sizes != net.layer_sizes() || act != static_cast<int>(net.output_activation()) ||
      params.size() != static_cast<std::size_t>(net.parameters().size())) {
    throw CheckpointError(std::string("checkpoint architecture mismatch for ") + name);
  }
  net.parameters() = from_std(params);
}

template <class Archive>
void save_adam(Archive& ar, const nn::AdamState& s) {
  ar(to_std(s.m), to_std(s.v), s.step, s.lr, s.beta1, s.beta2, s.eps);
}

template <class Archive>
void load_adam(Archive& ar, nn::AdamState& s) {
  std::vector<double> m, v;
  ar(m, v, s.step, s.lr, s.beta1, s.beta2, s.eps);
  if (m.size() != static_cast<std::size_t>(s.m.size()) ||
      v.size() != static_cast<std::size_t>(s.v.size())) {
    throw CheckpointError("checkpoint optimizer state has the wrong size");
  }
  s.m = from_std(m);
  s.v = from_std(v);
}

template <class Archive>
void serialize_hyper(Archive& ar, Td3Hyper& h) {
  ar(h.gamma, h.tau, h.explore_noise, h.target_noise, h.noise_clip, h.policy_delay, h.batch_size,
     h.buffer_capacity, h.warmup_episodes, h.actor_lr, h.critic_lr, h.hidden, h.precision);
}

}  // namespace

void Td3Hyper::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw ConfigError("gamma must lie in [0, 1]");
  }
  if (!(tau > 0.0 && tau <= 1.0)) {
    throw ConfigError("tau must lie in (0, 1]");
  }
  if (!(noise_clip > 0.0)) {
    throw ConfigError("target noise clip must be positive");
  }
  if (!(explore_noise >= 0.0) || !(target_noise >= 0.0)) {
    throw ConfigError("noise levels must be non-negative");
  }
  if (policy_delay < 1) {
    throw ConfigError("policy delay must be at least 1");
  }
  if (batch_size < 1 || buffer_capacity < batch_size) {
    throw ConfigError("buffer capacity must hold at least one batch");
  }
  if (warmup_episodes < 0) {
    throw ConfigError("warmup episodes must be non-negative");
  }
  if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (hidden.empty() || std::any_of(hidden.begin(), hidden.end(), [](int h) { return h <= 0; })) {
    throw ConfigError("hidden layer sizes must be positive");
  }
}

// ---------------------------------------------------------------- ReplayBuffer

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t obs_dim, std::size_t act_dim)
    : capacity_(capacity), obs_dim_(obs_dim), act_dim_(act_dim) {
  if (capacity == 0) {
    throw std::invalid_argument("replay buffer capacity must be positive");
  }
  const auto cap = static_cast<Eigen::Index>(capacity);
  states_.resize(static_cast<Eigen::Index>(obs_dim), cap);
  next_states_.resize(static_cast<Eigen::Index>(obs_dim), cap);
  actions_.resize(static_cast<Eigen::Index>(act_dim), cap);
  rewards_.resize(cap);
  dones_.resize(cap);
}

void ReplayBuffer::push(const Transition& t) {
  if (t.state.size() != obs_dim_ || t.next_state.size() != obs_dim_ ||
      t.action.size() != act_dim_) {
    throw std::invalid_argument("transition dimensions do not match the buffer");
  }
  const auto col = static_cast<Eigen::Index>(head_);
  for (std::size_t i = 0; i < obs_dim_; ++i) {
    states_(static_cast<Eigen::Index>(i), col) = t.state[i];
    next_states_(static_cast<Eigen::Index>(i), col) = t.next_state[i];
  }
  for (std::size_t i = 0; i < act_dim_; ++i) {
    actions_(static_cast<Eigen::Index>(i), col) = t.action[i];
  }
  rewards_[col] = t.reward;
  dones_[col] = t.done ? 1.0 : 0.0;
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

Transition ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) {
    throw std::out_of_range("replay buffer index");
  }
  const auto col = static_cast<Eigen::Index>(slot(i));
  Transition t;
  t.state = to_std(states_.col(col));
  t.action = to_std(actions_.col(col));
  t.next_state = to_std(next_states_.col(col));
  t.reward = rewards_[col];
  t.done = dones_[col] != 0.0;
  return t;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, std::mt19937_64& rng) const {
  if (size_ == 0) {
    throw std::logic_error("sampling from an empty replay buffer");
  }
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) {
    i = pick(rng);
  }
  return idx;
}

Batch ReplayBuffer::gather(const std::vector<std::size_t>& indices) const {
  const auto n = static_cast<Eigen::Index>(indices.size());
  Batch b;
  b.states.resize(static_cast<Eigen::Index>(obs_dim_), n);
  b.next_states.resize(static_cast<Eigen::Index>(obs_dim_), n);
  b.actions.resize(static_cast<Eigen::Index>(act_dim_), n);
  b.rewards.resize(n);
  b.dones.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto col = static_cast<Eigen::Index>(slot(indices[static_cast<std::size_t>(j)]));
    b.states.col(j) = states_.col(col);
    b.next_states.col(j) = next_states_.col(col);
    b.actions.col(j) = actions_.col(col);
    b.rewards[j] = rewards_[col];
    b.dones[j] = dones_[col];
  }
  return b;
}

Batch ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
  return gather(sample_indices(n, rng));
}

void ReplayBuffer::save(std::ostream& out) const {
  cereal::PortableBinaryOutputArchive ar(out);
  ar(static_cast<std::uint64_t>(capacity_), static_cast<std::uint64_t>(obs_dim_),
     static_cast<std::uint64_t>(act_dim_), static_cast<std::uint64_t>(size_));
  for (std::size_t i = 0; i < size_; ++i) {
    const Transition t = at(i);
    ar(t.state, t.action, t.reward, t.next_state, t.done);
  }
}

void ReplayBuffer::load(std::istream& in) {
  cereal::PortableBinaryInputArchive ar(in);
  std::uint64_t cap = 0, obs = 0, act = 0, n = 0;
  ar(cap, obs, act, n);
  if (cap != capacity_ || obs != obs_dim_ || act != act_dim_ || n > cap) {
    throw CheckpointError("replay buffer in checkpoint does not match the configuration");
  }
  *this = ReplayBuffer(capacity_, obs_dim_, act_dim_);
  for (std::uint64_t i = 0; i < n; ++i) {
    Transition t;
    ar(t.state, t.action, t.reward, t.next_state, t.done);
    push(t);
  }
}

// -------------------------------------------------------------------- Td3Agent

Td3Agent::Td3Agent(std::size_t obs_dim, std::size_t act_dim, Td3Hyper hyper, std::uint64_t seed)
    : obs_dim_(obs_dim), act_dim_(act_dim), hyper_(std::move(hyper)), rng_(seed) {
  hyper_.validate();
  std::vector<int> actor_sizes{static_cast<int>(obs_dim)};
  std::vector<int> critic_sizes{static_cast<int>(obs_dim + act_dim)};
  for (int h : hyper_.hidden) {
    actor_sizes.push_back(h);
    critic_sizes.push_back(h);
  }
  actor_sizes.push_back(static_cast<int>(act_dim));
  critic_sizes.push_back(1);
  actor_ = nn::Mlp(actor_sizes, nn::OutputActivation::tanh, rng_);
  critic1_ = nn::Mlp(critic_sizes, nn::OutputActivation::identity, rng_);
  critic2_ = nn::Mlp(critic_sizes, nn::OutputActivation::identity, rng_);
  for (nn::Mlp* net : {&actor_, &critic1_, &critic2_}) {
    net->set_precision(hyper_.precision);
  }
  target_actor_ = actor_;
  target_critic1_ = critic1_;
  target_critic2_ = critic2_;
  actor_opt_ = nn::AdamState(actor_.parameters().size(), hyper_.actor_lr);
  critic1_opt_ = nn::AdamState(critic1_.parameters().size(), hyper_.critic_lr);
  critic2_opt_ = nn::AdamState(critic2_.parameters().size(), hyper_.critic_lr);
  buffer_ = ReplayBuffer(static_cast<std::size_t>(hyper_.buffer_capacity), obs_dim, act_dim);
}

nn::Matrix Td3Agent::critic_input(const nn::Matrix& states, const nn::Matrix& actions) {
  nn::Matrix x(states.rows() + actions.rows(), states.cols());
  x.topRows(states.rows()) = states;
  x.bottomRows(actions.rows()) = actions;
  return x;
}

std::vector<double> Td3Agent::select_action(std::span<const double> observation, ActionMode mode) {
  nn::Vector a = actor_.forward(observation);
  if (mode == ActionMode::explore && hyper_.explore_noise > 0.0) {
    std::normal_distribution<double> noise(0.0, hyper_.explore_noise);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a[i] = std::clamp(a[i] + noise(rng_), -1.0, 1.0);
    }
  }
  return to_std(a);
}

std::vector<double> Td3Agent::random_action() {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> a(act_dim_);
  for (auto& x : a) {
    x = u(rng_);
  }
  return a;
}

TargetDetail Td3Agent::compute_target(const Batch& batch) {
  nn::Matrix noise(static_cast<Eigen::Index>(act_dim_), batch.size());
  if (hyper_.target_noise > 0.0) {
    std::normal_distribution<double> dist(0.0, hyper_.target_noise);
    for (Eigen::Index j = 0; j < noise.cols(); ++j) {
      for (Eigen::Index i = 0; i < noise.rows(); ++i) {
        noise(i, j) = dist(rng_);
      }
    }
  } else {
    noise.setZero();
  }
  return compute_target(batch, noise);
}

TargetDetail Td3Agent::compute_target(const Batch& batch, const nn::Matrix& noise) const {
  if (batch.size() == 0) {
    throw std::invalid_argument("empty batch");
  }
  TargetDetail d;
  d.policy_action = target_actor_.forward(batch.next_states);
  const double c = hyper_.noise_clip;
  d.smoothed = d.policy_action + noise.cwiseMax(-c).cwiseMin(c);
  d.target_action = d.smoothed.cwiseMax(-1.0).cwiseMin(1.0);
  const nn::Matrix x = critic_input(batch.next_states, d.target_action);
  const nn::Vector q1 = target_critic1_.forward(x).row(0).transpose();
  const nn::Vector q2 = target_critic2_.forward(x).row(0).transpose();
  const nn::Vector discount =
      hyper_.gamma * (nn::Vector::Ones(batch.size()) - batch.dones);
  d.single1 = batch.rewards + discount.cwiseProduct(q1);
  d.single2 = batch.rewards + discount.cwiseProduct(q2);
  d.y = batch.rewards + discount.cwiseProduct(q1.cwiseMin(q2));
  return d;
}

std::pair<double, double> Td3Agent::critic_update(const Batch& batch, const nn::Vector& targets) {
  const nn::Matrix x = critic_input(batch.states, batch.actions);
  const double n = static_cast<double>(batch.size());
  auto one = [&](nn::Mlp& critic, nn::AdamState& opt) {
    nn::Tape tape;
    const nn::Matrix q = critic.forward(x, tape);
    const nn::Matrix err = q - targets.transpose();
    const double loss = err.squaredNorm() / n;
    if (!std::isfinite(loss)) {
      std::ostringstream os;
      os << "critic loss is not finite after " << critic_updates_
         << " updates (target range [" << targets.minCoeff() << ", " << targets.maxCoeff()
         << "], q range [" << q.minCoeff() << ", " << q.maxCoeff() << "])";
      throw DivergenceError(os.str());
    }
    const nn::Gradients g = critic.backward(tape, (2.0 / n) * err);
    adam_step(critic.parameters(), g.params, opt);
    return loss;
  };
  const double l1 = one(critic1_, critic1_opt_);
  const double l2 = one(critic2_, critic2_opt_);
  ++critic_updates_;
  return {l1, l2};
}

double Td3Agent::actor_update(const Batch& batch) {
  const double n = static_cast<double>(batch.size());
  nn::Tape actor_tape;
  const nn::Matrix a = actor_.forward(batch.states, actor_tape);
  nn::Tape critic_tape;
  const nn::Matrix q = critic1_.forward(critic_input(batch.states, a), critic_tape);
  const double loss = -q.sum() / n;
  if (!std::isfinite(loss)) {
    throw DivergenceError("actor loss is not finite after " + std::to_string(actor_updates_) +
                          " updates");
  }
  const nn::Gradients gq =
      critic1_.backward(critic_tape, nn::Matrix::Constant(1, batch.size(), -1.0 / n));
  const nn::Matrix da = gq.input.bottomRows(static_cast<Eigen::Index>(act_dim_));
  const nn::Gradients ga = actor_.backward(actor_tape, da);
  adam_step(actor_.parameters(), ga.params, actor_opt_);
  nn::polyak_update(target_actor_.parameters(), actor_.parameters(), hyper_.tau);
  nn::polyak_update(target_critic1_.parameters(), critic1_.parameters(), hyper_.tau);
  nn::polyak_update(target_critic2_.parameters(), critic2_.parameters(), hyper_.tau);
  ++actor_updates_;
  return loss;
}

UpdateStats Td3Agent::train_step(const Batch& batch) {
  UpdateStats s;
  const TargetDetail target = compute_target(batch);
  std::tie(s.critic1_loss, s.critic2_loss) = critic_update(batch, target.y);
  if (critic_updates_ % hyper_.policy_delay == 0) {
    s.actor_loss = actor_update(batch);
    s.actor_updated = true;
  }
  return s;
}

void Td3Agent::save(std::ostream& out, bool with_buffer) const {
  {
    cereal::PortableBinaryOutputArchive ar(out);
    Td3Hyper h = hyper_;
    ar(std::string(kCheckpointMagic), kCheckpointVersion, static_cast<std::uint64_t>(obs_dim_),
       static_cast<std::uint64_t>(act_dim_));
    serialize_hyper(ar, h);
    save_mlp(ar, actor_);
    save_mlp(ar, critic1_);
    save_mlp(ar, critic2_);
    save_mlp(ar, target_actor_);
    save_mlp(ar, target_critic1_);
    save_mlp(ar, target_critic2_);
    save_adam(ar, actor_opt_);
    save_adam(ar, critic1_opt_);
    save_adam(ar, critic2_opt_);
    std::ostringstream rng_text;
    rng_text << rng_;
    ar(critic_updates_, actor_updates_, episodes_, rng_text.str(), with_buffer);
  }
  if (with_buffer) {
    buffer_.save(out);
  }
}

void Td3Agent::load(std::istream& in) {
  try {
    load_unchecked(in);
  } catch (const cereal::Exception& e) {
    throw CheckpointError(std::string("truncated or corrupt checkpoint: ") + e.what());
  } catch (const std::length_error&) {
    throw CheckpointError("corrupt checkpoint: implausible length field");
  } catch (const std::bad_alloc&) {
    throw CheckpointError("corrupt checkpoint: implausible length field");
  }
}

void Td3Agent::load_unchecked(std::istream& in) {
  bool with_buffer = false;
  {
    cereal::PortableBinaryInputArchive ar(in);
    std::string magic;
    std::uint32_t version = 0;
    std::uint64_t obs = 0, act = 0;
    try {
      cereal::size_type len = 0;
      ar(cereal::make_size_tag(len));
      if (len != std::string_view(kCheckpointMagic).size()) {
        throw CheckpointError("not a checkpoint file");
      }
      magic.resize(static_cast<std::size_t>(len));
      ar(cereal::binary_data(magic.data(), magic.size()));
    } catch (const cereal::Exception&) {
      throw CheckpointError("not a checkpoint file");
    }
    if (magic != kCheckpointMagic) {
      throw CheckpointError("not a checkpoint file");
    }
    ar(version, obs, act);
    if (version != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    if (obs != obs_dim_ || act != act_dim_) {
      throw CheckpointError("checkpoint was trained for observation/action sizes " +
                            std::to_string(obs) + "/" + std::to_string(act) + ", scenario has " +
                            std::to_string(obs_dim_) + "/" + std::to_string(act_dim_));
    }
    Td3Hyper stored;
    serialize_hyper(ar, stored);
    if (stored.hidden != hyper_.hidden) {
      throw CheckpointError("checkpoint hidden layers differ from the configuration");
    }
    load_mlp(ar, actor_, "actor");
    load_mlp(ar, critic1_, "critic1");
    load_mlp(ar, critic2_, "critic2");
    load_mlp(ar, target_actor_, "target actor");
    load_mlp(ar, target_critic1_, "target critic1");
    load_mlp(ar, target_critic2_, "target critic2");
    load_adam(ar, actor_opt_);
    load_adam(ar, critic1_opt_);
    load_adam(ar, critic2_opt_);
    std::string rng_text;
    ar(critic_updates_, actor_updates_, episodes_, rng_text, with_buffer);
    std::istringstream rs(rng_text);
    rs >> rng_;
  }
  if (with_buffer) {
    buffer_.load(in);
  }
}

// ------------------------------------------------------------------- training

EpisodeStats train_episode(Environment& env, Td3Agent& agent, std::uint64_t env_seed) {
  EpisodeStats stats;
  stats.warmup = agent.in_warmup();
  Observation obs = env.reset(env_seed);
  const auto batch = static_cast<std::size_t>(agent.hyper().batch_size);
  int actor_updates = 0;
  while (!env.state().done) {
    std::vector<double> raw =
        stats.warmup ? agent.random_action() : agent.select_action(obs, ActionMode::explore);
    StepResult res = env.step(env.decode_action(raw));
    agent.buffer().push(Transition{obs, raw, res.reward, res.observation, res.done});
    stats.episode_return += res.reward;
    ++stats.steps;
    obs = std::move(res.observation);
    if (!stats.warmup && agent.buffer().size() >= batch) {
      const Batch b = agent.buffer().sample(batch, agent.rng());
      const UpdateStats u = agent.train_step(b);
      ++stats.updates;
      stats.critic1_loss += u.critic1_loss;
      stats.critic2_loss += u.critic2_loss;
      if (u.actor_updated) {
        stats.actor_loss += u.actor_loss;
        ++actor_updates;
      }
    }
  }
  if (stats.updates > 0) {
    stats.critic1_loss /= stats.updates;
    stats.critic2_loss /= stats.updates;
  }
  if (actor_updates > 0) {
    stats.actor_loss /= actor_updates;
  }
  agent.finish_episode();
  return stats;
}

}  // namespace mesr
