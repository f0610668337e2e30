#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "da3/core/optimizer.hpp"
#include "da3/env/observation.hpp"
#include "da3/net/network.hpp"

namespace da3::learn {

struct Transition {
  env::Observation obs;
  env::Action action = env::Action::Up;
  double reward = 0.0;
  env::Observation next_obs;
  bool done = false;
};

// Fixed-capacity ring of transitions with a seeded uniform sampler.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::uint64_t seed);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return items_.at(i); }

  // Uniform with replacement; requires size() >= batch.
  std::vector<std::size_t> sample_indices(std::size_t batch);
  std::vector<const Transition*> sample(std::size_t batch);

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> items_;
  Rng rng_;
};

struct LearnerConfig {
  double gamma = 0.99;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_fraction = 0.2;  // of total environment steps
  std::size_t replay_capacity = 100000;
  std::size_t batch_size = 32;
  std::size_t warmup = 0;  // minimum buffer size before updates; 0 means batch_size
  std::size_t update_every = 1;
  std::size_t target_sync = 2000;  // learner updates between target syncs
  AdamConfig adam{};
  std::size_t quantiles = 8;         // online tau samples
  std::size_t target_quantiles = 8;  // target tau samples
  double kappa = 1.0;

  std::size_t warmup_size() const { return warmup == 0 ? batch_size : warmup; }
  void validate() const;
};

// Linear decay from start to end over the first `fraction` of total steps.
double epsilon_at(const LearnerConfig& cfg, std::size_t step, std::size_t total_steps);

// One agent's private model pair, optimizer, buffer and random stream.
class AgentLearner {
 public:
  AgentLearner(std::size_t agent_id, const net::NetConfig& net, const LearnerConfig& cfg, std::uint64_t seed);
  AgentLearner(const AgentLearner&) = delete;
  AgentLearner& operator=(const AgentLearner&) = delete;

  std::size_t agent_id() const { return agent_id_; }
  const LearnerConfig& config() const { return cfg_; }
  net::QNetwork& online() { return *online_; }
  net::QNetwork& target() { return *target_; }
  ReplayBuffer& buffer() { return buffer_; }
  Adam& optimizer() { return *opt_; }
  Rng& rng() { return rng_; }
  std::size_t updates() const { return updates_; }
  // Double-Q targets for every architecture except the vanilla DQN baseline.
  bool double_q() const { return net_.arch != net::Architecture::VanillaDqn; }

  // One gradient step on a sampled batch; syncs the target on cadence.
  // Returns the loss value.
  double update();

 private:
  std::size_t agent_id_;
  net::NetConfig net_;
  LearnerConfig cfg_;
  Rng rng_;
  std::unique_ptr<net::QNetwork> online_, target_;
  std::unique_ptr<Adam> opt_;
  ReplayBuffer buffer_;
  std::size_t updates_ = 0;
};

// Lowest index among maximal entries.
env::Action greedy_action(std::span<const double> values);

// Mean over quantile rows for an [N x 4] IQN output, or the row of a [1 x 4] DQN output.
std::vector<double> mean_action_values(const Tensor& q);

env::Action select_action(AgentLearner& learner, const env::Observation& obs, double epsilon);

// I.i.d. U(0,1) quantile levels, clamped away from the endpoints.
std::vector<double> sample_taus(std::size_t n, Rng& rng);

// Mean Huber(Q_online(s, a) - y) with y = r + gamma * Q_target(s', a*) for
// non-terminal transitions; a* from the online net when double_q, else from
// the target net.
Var dqn_loss(Graph& g, std::span<const Transition* const> batch, net::QNetwork& online, net::QNetwork& target,
             double gamma, bool double_q);

// Quantile Huber loss between online estimates at taus (B*N) and target
// samples at target_taus (B*M) for the next action a*, selected by the mean
// over target_taus of the online net (double_q) or the target net.
Var iqn_loss(Graph& g, std::span<const Transition* const> batch, net::QNetwork& online, net::QNetwork& target,
             double gamma, std::span<const double> taus, std::span<const double> target_taus, bool double_q,
             double kappa = 1.0);

void sync_target(AgentLearner& learner);

}  // namespace da3::learn
