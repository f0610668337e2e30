#include "da3/learn/learner.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "da3/core/ops.hpp"

namespace da3::learn {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch) {
  if (batch == 0 || items_.size() < batch) {
    throw std::logic_error("replay buffer holds " + std::to_string(items_.size()) + " transitions, batch needs " +
                           std::to_string(batch));
  }
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<std::size_t> idx(batch);
  for (auto& i : idx) i = pick(rng_);
  return idx;
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch) {
  std::vector<const Transition*> out;
  for (auto i : sample_indices(batch)) out.push_back(&items_[i]);
  return out;
}

void LearnerConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("learner config: " + what); };
  if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma must be in [0, 1)");
  for (double e : {epsilon_start, epsilon_end})
    if (!(e >= 0.0 && e <= 1.0)) fail("epsilon must be in [0, 1]");
  if (!(epsilon_fraction >= 0.0 && epsilon_fraction <= 1.0)) fail("epsilon fraction must be in [0, 1]");
  if (batch_size == 0 || replay_capacity < batch_size) fail("replay capacity must hold at least one batch");
  if (warmup_size() < batch_size || warmup_size() > replay_capacity) fail("warmup must lie in [batch, capacity]");
  if (update_every == 0 || target_sync == 0) fail("update cadences must be positive");
  if (!(adam.learning_rate > 0.0)) fail("learning rate must be positive");
  if (quantiles == 0 || target_quantiles == 0) fail("quantile counts must be positive");
  if (!(kappa > 0.0)) fail("kappa must be positive");
}

double epsilon_at(const LearnerConfig& cfg, std::size_t step, std::size_t total_steps) {
  const double span = cfg.epsilon_fraction * static_cast<double>(total_steps);
  if (span <= 0.0 || static_cast<double>(step) >= span) return cfg.epsilon_end;
  return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * static_cast<double>(step) / span;
}

AgentLearner::AgentLearner(std::size_t agent_id, const net::NetConfig& net, const LearnerConfig& cfg, std::uint64_t seed)
    : agent_id_(agent_id), net_(net), cfg_(cfg), rng_(seed), buffer_(cfg.replay_capacity, seed ^ 0x9e3779b97f4a7c15ULL) {
  cfg_.validate();
  online_ = std::make_unique<net::QNetwork>(net_, rng_);
  target_ = std::make_unique<net::QNetwork>(net_, rng_);
  target_->parameters().copy_values_from(online_->parameters());
  opt_ = std::make_unique<Adam>(online_->parameters(), cfg_.adam);
}

double AgentLearner::update() {
  const auto batch = buffer_.sample(cfg_.batch_size);
  online_->parameters().zero_grad();
  Graph g;
  Var loss;
  if (online_->distributional()) {
    const auto taus = sample_taus(batch.size() * cfg_.quantiles, rng_);
    const auto target_taus = sample_taus(batch.size() * cfg_.target_quantiles, rng_);
    loss = iqn_loss(g, batch, *online_, *target_, cfg_.gamma, taus, target_taus, double_q(), cfg_.kappa);
  } else {
    loss = dqn_loss(g, batch, *online_, *target_, cfg_.gamma, double_q());
  }
  g.backward(loss);
  opt_->step();
  if (++updates_ % cfg_.target_sync == 0) sync_target(*this);
  return loss.value()[0];
}

env::Action greedy_action(std::span<const double> values) {
  if (values.size() != env::kActionCount) throw std::invalid_argument("greedy_action: expected 4 action values");
  const auto best = std::max_element(values.begin(), values.end()) - values.begin();
  return static_cast<env::Action>(best);
}

std::vector<double> mean_action_values(const Tensor& q) {
  const std::size_t rows = q.rows(), cols = q.cols();
  std::vector<double> mean(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) mean[c] += q.at(r, c);
  for (auto& v : mean) v /= static_cast<double>(rows);
  return mean;
}

std::vector<double> sample_taus(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> taus(n);
  for (auto& t : taus) t = std::clamp(unit(rng), 1e-6, 1.0 - 1e-6);
  return taus;
}

env::Action select_action(AgentLearner& learner, const env::Observation& obs, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("select_action: epsilon must be in [0, 1]");
  auto& rng = learner.rng();
  if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < epsilon) {
    return env::kAllActions[std::uniform_int_distribution<std::size_t>(0, env::kActionCount - 1)(rng)];
  }
  const env::Observation* one[] = {&obs};
  const Tensor x = net::stack_observations(one);
  auto& model = learner.online();
  std::vector<double> taus;
  if (model.distributional()) taus = sample_taus(learner.config().quantiles, rng);
  const auto values = mean_action_values(model.evaluate(x, taus));
  return greedy_action(values);
}

namespace {

struct BatchArrays {
  Tensor obs, next;
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  std::vector<bool> done;
};

BatchArrays unpack(std::span<const Transition* const> batch) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  std::vector<const env::Observation*> obs, next;
  BatchArrays out;
  for (const auto* t : batch) {
    obs.push_back(&t->obs);
    next.push_back(&t->next_obs);
    out.actions.push_back(static_cast<std::size_t>(t->action));
    out.rewards.push_back(t->reward);
    out.done.push_back(t->done);
  }
  out.obs = net::stack_observations(obs);
  out.next = net::stack_observations(next);
  return out;
}

}  // namespace

Var dqn_loss(Graph& g, std::span<const Transition* const> batch, net::QNetwork& online, net::QNetwork& target,
             double gamma, bool double_q) {
  const auto b = unpack(batch);
  const std::size_t n = batch.size();
  const Tensor q_next = target.evaluate(b.next);
  const Tensor q_select = double_q ? online.evaluate(b.next) : q_next;
  Tensor y({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = b.rewards[i];
    if (b.done[i]) continue;
    const auto row = q_select.data().subspan(i * env::kActionCount, env::kActionCount);
    y[i] += gamma * q_next.at(i, static_cast<std::size_t>(greedy_action(row)));
  }
  Var pred = ops::pick_columns(online.forward(g, b.obs), b.actions);
  return ops::mean(ops::huber(ops::sub(pred, g.constant(std::move(y))), 1.0));
}

Var iqn_loss(Graph& g, std::span<const Transition* const> batch, net::QNetwork& online, net::QNetwork& target,
             double gamma, std::span<const double> taus, std::span<const double> target_taus, bool double_q,
             double kappa) {
  const auto b = unpack(batch);
  const std::size_t n_batch = batch.size();
  if (taus.empty() || target_taus.empty() || taus.size() % n_batch != 0 || target_taus.size() % n_batch != 0) {
    throw std::invalid_argument("iqn_loss: quantile level counts must be non-empty multiples of the batch size");
  }
  const std::size_t n = taus.size() / n_batch, m = target_taus.size() / n_batch;
  const Tensor z_next = target.evaluate(b.next, target_taus);
  const Tensor z_select = double_q ? online.evaluate(b.next, target_taus) : z_next;
  Tensor samples({n_batch, m});
  for (std::size_t i = 0; i < n_batch; ++i) {
    std::vector<double> mean(env::kActionCount, 0.0);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t a = 0; a < env::kActionCount; ++a) mean[a] += z_select.at(i * m + j, a);
    const auto best = static_cast<std::size_t>(greedy_action(mean));
    for (std::size_t j = 0; j < m; ++j)
      samples.at(i, j) = b.rewards[i] + (b.done[i] ? 0.0 : gamma * z_next.at(i * m + j, best));
  }
  std::vector<std::size_t> pick(n_batch * n);
  for (std::size_t i = 0; i < n_batch; ++i) std::fill_n(pick.begin() + static_cast<std::ptrdiff_t>(i * n), n, b.actions[i]);
  Var pred = ops::reshape(ops::pick_columns(online.forward(g, b.obs, taus), pick), {n_batch, n});
  return ops::quantile_huber(pred, g.constant(std::move(samples)), taus, kappa);
}

void sync_target(AgentLearner& learner) { learner.target().parameters().copy_values_from(learner.online().parameters()); }

}  // namespace da3::learn
