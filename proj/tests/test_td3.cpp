#include <doctest.h>

#include <cmath>
#include <sstream>

#include "mesr/baselines.hpp"
#include "mesr/td3.hpp"
#include "test_helpers.hpp"

using namespace mesr;

namespace {

Td3Hyper small_hyper() {
  Td3Hyper h;
  h.hidden = {16, 16};
  h.batch_size = 8;
  h.buffer_capacity = 1000;
  h.warmup_episodes = 0;
  return h;
}

Batch random_batch(std::size_t obs, std::size_t act, Eigen::Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution done(0.2);
  Batch b;
  b.states.resize(static_cast<Eigen::Index>(obs), n);
  b.next_states.resize(static_cast<Eigen::Index>(obs), n);
  b.actions.resize(static_cast<Eigen::Index>(act), n);
  b.rewards.resize(n);
  b.dones.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < b.states.rows(); ++i) {
      b.states(i, j) = u(rng);
      b.next_states(i, j) = u(rng);
    }
    for (Eigen::Index i = 0; i < b.actions.rows(); ++i) {
      b.actions(i, j) = u(rng);
    }
    b.rewards[j] = u(rng);
    b.dones[j] = done(rng) ? 1.0 : 0.0;
  }
  return b;
}

// Output layer weights zero, output bias `value`: the network is constant.
void make_constant(nn::Mlp& net, double value) {
  auto& p = net.parameters();
  const auto& sizes = net.layer_sizes();
  const Eigen::Index last = sizes[sizes.size() - 2] * sizes.back() + sizes.back();
  p.tail(last).setZero();
  p.tail(sizes.back()).setConstant(value);
}

}  // namespace

TEST_CASE("action selection") {
  Td3Hyper h = small_hyper();
  Td3Agent agent(5, 3, h, 1);
  const std::vector<double> s{0.1, 0.2, 0.3, 0.4, 0.5};
  CHECK(agent.select_action(s, ActionMode::greedy) == agent.select_action(s, ActionMode::greedy));
  agent.hyper().explore_noise = 0.0;
  CHECK(agent.select_action(s, ActionMode::explore) == agent.select_action(s, ActionMode::greedy));
  agent.hyper().explore_noise = 5.0;
  for (double a : agent.select_action(s, ActionMode::explore)) {
    CHECK(std::abs(a) <= 1.0);
  }
  Td3Agent a1(5, 3, h, 42), a2(5, 3, h, 42);
  for (int i = 0; i < 10; ++i) {
    CHECK(a1.random_action() == a2.random_action());
  }
}

TEST_CASE("clipped double-Q target") {
  Td3Hyper h = small_hyper();
  h.gamma = 0.5;
  h.tau = 1.0;
  Td3Agent agent(2, 1, h, 3);
  make_constant(agent.critic1(), 3.0);
  make_constant(agent.critic2(), 5.0);
  make_constant(agent.actor(), 0.0);
  std::mt19937_64 rng(1);
  const Batch b = random_batch(2, 1, 4, rng);
  agent.actor_update(b);  // tau = 1 copies the online networks into the targets

  Batch one = b;
  one.rewards.setConstant(1.0);
  one.dones.setZero();
  auto y = agent.compute_target(one).y;
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    CHECK(y[j] == 2.5);
  }
  one.dones.setOnes();
  y = agent.compute_target(one).y;
  CHECK(y == one.rewards);
  agent.hyper().gamma = 0.0;
  one.dones.setZero();
  CHECK(agent.compute_target(one).y == one.rewards);
}

TEST_CASE("target dominance and smoothing bound on random batches") {
  Td3Hyper h = small_hyper();
  h.target_noise = 0.6;
  Td3Agent agent(6, 4, h, 9);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 500; ++i) {
    const Batch b = random_batch(6, 4, 16, rng);
    const TargetDetail d = agent.compute_target(b);
    REQUIRE((d.y.array() <= d.single1.array()).all());
    REQUIRE((d.y.array() <= d.single2.array()).all());
    REQUIRE(((d.smoothed - d.policy_action).cwiseAbs().array() <= h.noise_clip).all());
    REQUIRE((d.target_action.cwiseAbs().array() <= 1.0).all());
  }
}

TEST_CASE("critic update") {
  Td3Hyper h = small_hyper();
  std::mt19937_64 rng(4);
  SUBCASE("perfect critic has zero loss and zero gradient") {
    Td3Agent agent(3, 2, h, 1);
    make_constant(agent.critic1(), 7.0);
    make_constant(agent.critic2(), 7.0);
    const Batch b = random_batch(3, 2, 8, rng);
    const nn::Vector before = agent.critic1().parameters();
    const auto [l1, l2] = agent.critic_update(b, nn::Vector::Constant(8, 7.0));
    CHECK(l1 == 0.0);
    CHECK(l2 == 0.0);
    CHECK(agent.critic1().parameters() == before);
  }
  SUBCASE("squared error of a single sample") {
    Td3Agent agent(3, 2, h, 1);
    make_constant(agent.critic1(), 2.0);
    make_constant(agent.critic2(), 2.0);
    const Batch b = random_batch(3, 2, 1, rng);
    CHECK(agent.critic_update(b, nn::Vector::Constant(1, 5.0)).first == 9.0);
  }
  SUBCASE("small steps descend") {
    h.critic_lr = 1e-4;
    Td3Agent agent(3, 2, h, 1);
    const Batch b = random_batch(3, 2, 32, rng);
    const nn::Vector y = nn::Vector::Random(32);
    const double first = agent.critic_update(b, y).first;
    const double second = agent.critic_update(b, y).first;
    CHECK(second <= first);
  }
}

TEST_CASE("actor update") {
  Td3Hyper h = small_hyper();
  std::mt19937_64 rng(6);
  SUBCASE("constant critic leaves the actor unchanged") {
    Td3Agent agent(3, 2, h, 1);
    make_constant(agent.critic1(), 1.0);
    const nn::Vector before = agent.actor().parameters();
    agent.actor_update(random_batch(3, 2, 8, rng));
    CHECK(agent.actor().parameters() == before);
  }
  SUBCASE("small steps raise the mean Q") {
    h.actor_lr = 1e-4;
    Td3Agent agent(3, 2, h, 1);
    const Batch b = random_batch(3, 2, 32, rng);
    const double first = agent.actor_update(b);
    const double second = agent.actor_update(b);
    CHECK(second <= first);  // loss is -mean Q
  }
  SUBCASE("delayed schedule and bit-stable targets") {
    Td3Agent agent(3, 2, h, 1);
    for (int n = 1; n <= 11; ++n) {
      const nn::Vector target_before = agent.target_critic1().parameters();
      const nn::Vector actor_before = agent.target_actor().parameters();
      const UpdateStats s = agent.train_step(random_batch(3, 2, 8, rng));
      CHECK(s.actor_updated == (n % 2 == 0));
      if (!s.actor_updated) {
        CHECK(agent.target_critic1().parameters() == target_before);
        CHECK(agent.target_actor().parameters() == actor_before);
      }
      CHECK(agent.actor_updates() == n / 2);
    }
  }
}

TEST_CASE("replay buffer") {
  SUBCASE("bounded FIFO") {
    ReplayBuffer buf(3, 1, 1);
    for (int i = 0; i < 5; ++i) {
      buf.push({{double(i)}, {0.0}, double(i), {0.0}, false});
    }
    CHECK(buf.size() == 3);
    CHECK(buf.at(0).reward == 2.0);
    CHECK(buf.at(2).reward == 4.0);
  }
  SUBCASE("uniform sampling") {
    ReplayBuffer buf(100, 1, 1);
    for (int i = 0; i < 100; ++i) {
      buf.push({{double(i)}, {0.0}, double(i), {0.0}, false});
    }
    std::mt19937_64 rng(10);
    std::vector<int> counts(100, 0);
    for (auto i : buf.sample_indices(100000, rng)) {
      ++counts[i];
    }
    double chi2 = 0.0;
    int worst = 0;
    for (int c : counts) {
      chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
      worst = std::max(worst, std::abs(c - 1000));
    }
    CHECK(chi2 < 148.2);  // 99 dof, p = 0.001
    CHECK(worst < 150);
  }
  SUBCASE("empty buffer") {
    ReplayBuffer buf(4, 1, 1);
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(buf.sample(2, rng), std::logic_error);
  }
}

TEST_CASE("training episodes") {
  Environment env(build_scenario(mesr::testing::tiny_config()));
  Td3Hyper h = small_hyper();
  h.warmup_episodes = 2;
  h.batch_size = 10;
  Td3Agent agent(env.observation_dim(), env.action_dim(), h, 5);
  SUBCASE("warmup and undersized buffers skip updates") {
    CHECK(train_episode(env, agent, 1).updates == 0);
    CHECK(train_episode(env, agent, 2).updates == 0);
    CHECK(agent.buffer().size() == 12);
    const auto s = train_episode(env, agent, 3);
    CHECK_FALSE(s.warmup);
    CHECK(s.updates == 6);
  }
  SUBCASE("fixed seeds reproduce returns bit for bit") {
    Td3Agent twin(env.observation_dim(), env.action_dim(), h, 5);
    Environment env2(env.scenario());
    for (std::uint64_t ep = 0; ep < 6; ++ep) {
      CHECK(train_episode(env, agent, ep).episode_return ==
            train_episode(env2, twin, ep).episode_return);
    }
    CHECK(agent.actor().parameters() == twin.actor().parameters());
  }
}

TEST_CASE("checkpoints") {
  Environment env(build_scenario(mesr::testing::tiny_config()));
  Td3Hyper h = small_hyper();
  h.batch_size = 6;
  Td3Agent agent(env.observation_dim(), env.action_dim(), h, 8);
  for (std::uint64_t ep = 0; ep < 3; ++ep) {
    train_episode(env, agent, ep);
  }
  std::stringstream blob;
  agent.save(blob, true);

  Td3Agent restored(env.observation_dim(), env.action_dim(), h, 999);
  restored.load(blob);
  CHECK(restored.actor().parameters() == agent.actor().parameters());
  CHECK(restored.target_critic2().parameters() == agent.target_critic2().parameters());
  CHECK(restored.critic_updates() == agent.critic_updates());
  CHECK(restored.buffer().size() == agent.buffer().size());
  // Resumed training follows the same trajectory.
  Environment env2(env.scenario());
  for (std::uint64_t ep = 3; ep < 5; ++ep) {
    CHECK(train_episode(env, agent, ep).episode_return ==
          train_episode(env2, restored, ep).episode_return);
  }

  SUBCASE("architecture mismatch") {
    std::stringstream again;
    agent.save(again, false);
    Td3Hyper other = h;
    other.hidden = {8, 8};
    Td3Agent wrong(env.observation_dim(), env.action_dim(), other, 1);
    CHECK_THROWS_AS(wrong.load(again), CheckpointError);
  }
  SUBCASE("garbage") {
    std::stringstream junk("not a checkpoint at all");
    CHECK_THROWS_AS(restored.load(junk), CheckpointError);
  }
}

TEST_CASE("hyperparameter validation") {
  Td3Hyper h;
  h.tau = 0.0;
  CHECK_THROWS_AS(h.validate(), ConfigError);
  Td3Hyper g;
  g.policy_delay = 0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  Td3Hyper k;
  k.gamma = 1.5;
  CHECK_THROWS_AS(k.validate(), ConfigError);
}
