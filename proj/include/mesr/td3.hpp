#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mesr/env.hpp"
#include "mesr/nn.hpp"

namespace mesr {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Td3Hyper {
  double gamma = 0.99;
  double tau = 0.005;
  double explore_noise = 0.1;
  double target_noise = 0.2;
  double noise_clip = 0.5;
  int policy_delay = 2;
  int batch_size = 256;
  int buffer_capacity = 100000;
  int warmup_episodes = 300;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  std::vector<int> hidden{256, 256};
  nn::Precision precision = nn::Precision::float64;

  void validate() const;
  friend bool operator==(const Td3Hyper&, const Td3Hyper&) = default;
};

struct Transition {
  std::vector<double> state;
  std::vector<double> action;
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;
};

/// Mini-batch with one sample per column.
struct Batch {
  nn::Matrix states;
  nn::Matrix actions;
  nn::Vector rewards;
  nn::Matrix next_states;
  nn::Vector dones;
  Eigen::Index size() const { return rewards.size(); }
};

/// Bounded FIFO of transitions with uniform sampling.
class ReplayBuffer {
 public:
  ReplayBuffer() = default;
  ReplayBuffer(std::size_t capacity, std::size_t obs_dim, std::size_t act_dim);

  void push(const Transition& t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  /// i-th oldest stored transition.
  Transition at(std::size_t i) const;
  std::vector<std::size_t> sample_indices(std::size_t n, std::mt19937_64& rng) const;
  Batch gather(const std::vector<std::size_t>& indices) const;
  Batch sample(std::size_t n, std::mt19937_64& rng) const;

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  std::size_t slot(std::size_t i) const { return (head_ + capacity_ - size_ + i) % capacity_; }

  std::size_t capacity_ = 0;
  std::size_t obs_dim_ = 0;
  std::size_t act_dim_ = 0;
  std::size_t size_ = 0;
  std::size_t head_ = 0;  ///< next slot to write
  nn::Matrix states_;
  nn::Matrix actions_;
  nn::Matrix next_states_;
  nn::Vector rewards_;
  nn::Vector dones_;
};

enum class ActionMode { explore, greedy };

/// Intermediate quantities of the clipped double-Q target.
struct TargetDetail {
  nn::Vector y;
  nn::Vector single1;        ///< r + gamma * (1 - done) * Q1'(s', a~)
  nn::Vector single2;        ///< same with Q2'
  nn::Matrix policy_action;  ///< target actor output pi'(s')
  nn::Matrix smoothed;       ///< pi'(s') + clipped noise, before the [-1, 1] clip
  nn::Matrix target_action;  ///< a~ after the [-1, 1] clip
};

struct UpdateStats {
  double critic1_loss = 0.0;
  double critic2_loss = 0.0;
  double actor_loss = 0.0;
  bool actor_updated = false;
};

class Td3Agent {
 public:
  Td3Agent(std::size_t obs_dim, std::size_t act_dim, Td3Hyper hyper, std::uint64_t seed);

  std::size_t observation_dim() const { return obs_dim_; }
  std::size_t action_dim() const { return act_dim_; }
  const Td3Hyper& hyper() const { return hyper_; }
  Td3Hyper& hyper() { return hyper_; }

  /// greedy: pi(s); explore: clip(pi(s) + N(0, explore_noise^2), -1, 1).
  std::vector<double> select_action(std::span<const double> observation, ActionMode mode);
  /// Uniform[-1, 1]^D draw used during warmup episodes.
  std::vector<double> random_action();

  /// Draws clipped target-smoothing noise from the agent's stream.
  TargetDetail compute_target(const Batch& batch);
  /// Uses the given noise; each entry is clipped to [-noise_clip, noise_clip].
  TargetDetail compute_target(const Batch& batch, const nn::Matrix& noise) const;

  /// One Adam step per critic on the MSE to `targets`; returns pre-update losses.
  std::pair<double, double> critic_update(const Batch& batch, const nn::Vector& targets);
  /// One ascent step on mean Q1(s, pi(s)) followed by Polyak updates of all
  /// target networks. Returns the pre-update loss -mean Q1.
  double actor_update(const Batch& batch);
  /// Full TD3 update: target, critics, and the actor every policy_delay calls.
  UpdateStats train_step(const Batch& batch);

  ReplayBuffer& buffer() { return buffer_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  std::mt19937_64& rng() { return rng_; }

  const nn::Mlp& actor() const { return actor_; }
  const nn::Mlp& critic1() const { return critic1_; }
  const nn::Mlp& critic2() const { return critic2_; }
  const nn::Mlp& target_actor() const { return target_actor_; }
  const nn::Mlp& target_critic1() const { return target_critic1_; }
  const nn::Mlp& target_critic2() const { return target_critic2_; }
  nn::Mlp& actor() { return actor_; }
  nn::Mlp& critic1() { return critic1_; }
  nn::Mlp& critic2() { return critic2_; }

  long critic_updates() const { return critic_updates_; }
  long actor_updates() const { return actor_updates_; }
  long episodes() const { return episodes_; }
  void finish_episode() { ++episodes_; }
  bool in_warmup() const { return episodes_ < hyper_.warmup_episodes; }

  /// Writes networks, optimizer moments, counters and the random stream.
  /// The replay buffer is included when `with_buffer` is set.
  void save(std::ostream& out, bool with_buffer) const;
  /// Restores a checkpoint written by save(); the architecture must match.
  void load(std::istream& in);

 private:
  void load_unchecked(std::istream& in);
  static nn::Matrix critic_input(const nn::Matrix& states, const nn::Matrix& actions);

  std::size_t obs_dim_;
  std::size_t act_dim_;
  Td3Hyper hyper_;
  std::mt19937_64 rng_;
  nn::Mlp actor_, critic1_, critic2_;
  nn::Mlp target_actor_, target_critic1_, target_critic2_;
  nn::AdamState actor_opt_, critic1_opt_, critic2_opt_;
  ReplayBuffer buffer_;
  long critic_updates_ = 0;
  long actor_updates_ = 0;
  long episodes_ = 0;
};

struct EpisodeStats {
  double episode_return = 0.0;
  int steps = 0;
  int updates = 0;
  double critic1_loss = 0.0;  ///< mean over the episode's updates
  double critic2_loss = 0.0;
  double actor_loss = 0.0;    ///< mean over actor updates
  bool warmup = false;
};

/// Rolls one episode: acts (uniformly during warmup, with exploration noise
/// afterwards), stores transitions and runs one update per step once the
/// buffer holds a full batch and warmup is over.
EpisodeStats train_episode(Environment& env, Td3Agent& agent, std::uint64_t env_seed);

}  // namespace mesr
