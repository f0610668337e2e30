#include "da3/net/network.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "da3/core/ops.hpp"

namespace da3::net {

namespace {

[[noreturn]] void config_error(const std::string& what) { throw std::invalid_argument("network config: " + what); }

std::size_t ceil_half(std::size_t n) { return (n + 1) / 2; }

}  // namespace

Architecture parse_architecture(std::string_view name) {
  if (name == "da3-dqn") return Architecture::Da3Dqn;
  if (name == "da3-iqn") return Architecture::Da3Iqn;
  if (name == "dqn") return Architecture::VanillaDqn;
  if (name == "iqn") return Architecture::VanillaIqn;
  throw std::invalid_argument("unknown algorithm: " + std::string(name));
}

std::string_view architecture_name(Architecture a) {
  switch (a) {
    case Architecture::Da3Dqn: return "da3-dqn";
    case Architecture::Da3Iqn: return "da3-iqn";
    case Architecture::VanillaDqn: return "dqn";
    case Architecture::VanillaIqn: return "iqn";
  }
  return "?";
}

bool is_da3(Architecture a) { return a == Architecture::Da3Dqn || a == Architecture::Da3Iqn; }
bool is_distributional(Architecture a) { return a == Architecture::Da3Iqn || a == Architecture::VanillaIqn; }

void NetConfig::validate() const {
  if (channels == 0) config_error("channel count must be positive");
  if (window == 0) config_error("window must be positive");
  if (embed == 0 || head_hidden == 0) config_error("layer widths must be positive");
  if (is_distributional(arch) && quantile_basis == 0) config_error("quantile basis must be positive");
  if (is_da3(arch)) {
    if (patch == 0 || patch > window) config_error("patch size must be in [1, R]");
    if (heads == 0 || embed % heads != 0) {
      config_error("heads (" + std::to_string(heads) + ") must divide C (" + std::to_string(embed) + ")");
    }
    if (loops == 0) config_error("L must be at least 1");
    if (!(position_std >= 0.0)) config_error("position embedding scale must be non-negative");
  } else if (conv1 == 0 || conv2 == 0) {
    config_error("convolution widths must be positive");
  }
}

std::span<const double> AttentionRecord::weights(std::size_t loop, std::size_t b, std::size_t head) const {
  const std::size_t t = tokens + 1;
  if (loop >= loops.size() || b >= batch || head >= heads) throw std::out_of_range("attention record index");
  return loops[loop].data().subspan((b * heads + head) * t * t, t * t);
}

double Heatmap::total() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

std::vector<Heatmap> extract_heatmap(const AttentionRecord& record, HeatmapReduce reduce, std::size_t b) {
  if (record.empty()) throw std::invalid_argument("extract_heatmap: empty attention record");
  const std::size_t last = record.loops.size() - 1, t = record.tokens;
  std::vector<Heatmap> maps;
  for (std::size_t l = 0; l < record.heads; ++l) {
    const auto w = record.weights(last, b, l);
    Heatmap m{record.grid, record.grid, std::vector<double>(w.begin() + 1, w.begin() + 1 + static_cast<std::ptrdiff_t>(t))};
    maps.push_back(std::move(m));
  }
  if (reduce == HeatmapReduce::PerHead) return maps;
  Heatmap mean{record.grid, record.grid, std::vector<double>(t, 0.0)};
  for (const auto& m : maps)
    for (std::size_t i = 0; i < t; ++i) mean.values[i] += m.values[i];
  for (auto& v : mean.values) v /= static_cast<double>(record.heads);
  return {mean};
}

std::pair<Var, Var> scaled_dot_attention(Var q, Var k, Var v) {
  const auto& Q = q.value();
  if (Q.rank() != 2 || Q.dim(1) == 0) throw std::invalid_argument("scaled_dot_attention: d_k must be positive");
  if (k.value().rank() != 2 || k.value().dim(1) != Q.dim(1) || k.value().dim(0) != v.value().dim(0)) {
    throw std::invalid_argument("scaled_dot_attention: shapes disagree: Q " + shape_string(Q.shape()) + ", K " +
                                shape_string(k.shape()) + ", V " + shape_string(v.shape()));
  }
  const double inv = 1.0 / std::sqrt(static_cast<double>(Q.dim(1)));
  Var w = ops::softmax_rows(ops::scale(ops::matmul_nt(q, k), inv));
  return {ops::matmul(w, v), w};
}

Var linear(Graph& g, Var x, Tensor& w, Tensor& b) { return ops::add_row(ops::matmul(x, g.parameter(w)), g.parameter(b)); }

Var multi_head_attention(Graph& g, Var x, const EncoderBlockParams& p, std::size_t batch, Tensor* weights) {
  const std::size_t c = p.wq->dim(0);
  if (x.value().rank() != 2 || x.value().dim(1) != c) {
    throw std::invalid_argument("multi_head_attention: input " + shape_string(x.shape()) + " does not have width " +
                                std::to_string(c));
  }
  Var q = ops::matmul(x, g.parameter(*p.wq));
  Var k = ops::matmul(x, g.parameter(*p.wk));
  Var v = ops::matmul(x, g.parameter(*p.wv));
  Var heads = ops::attention_heads(q, k, v, batch, p.heads, weights);
  return ops::matmul(heads, g.parameter(*p.wo));
}

Var embed_state(Graph& g, Var obs, const EmbedderParams& p) {
  const auto& X = obs.value();
  const auto& K = *p.kernels;
  if (X.rank() != 4 || X.dim(1) != K.dim(1) || X.dim(2) / p.patch * (X.dim(3) / p.patch) + 1 != p.position->dim(0)) {
    throw std::invalid_argument("embed_state: observation " + shape_string(X.shape()) + " does not match embedder (kernels " +
                                shape_string(K.shape()) + ", positions " + shape_string(p.position->shape()) + ")");
  }
  const std::size_t batch = X.dim(0);
  Var tokens = ops::patch_embed(obs, g.parameter(*p.kernels), g.parameter(*p.bias), p.patch);
  tokens = ops::prepend_token(tokens, g.parameter(*p.saliency), batch);
  return ops::add_tiled(tokens, g.parameter(*p.position));
}

Var encoder_forward(Graph& g, Var tokens, const std::vector<const EncoderBlockParams*>& schedule, std::size_t batch,
                    AttentionRecord* record) {
  if (schedule.empty()) throw std::invalid_argument("encoder_forward: L must be at least 1");
  const auto& X = tokens.value();
  if (X.rank() != 2 || batch == 0 || X.dim(0) % batch != 0) {
    throw std::invalid_argument("encoder_forward: tokens " + shape_string(X.shape()) + " not divisible into batch " +
                                std::to_string(batch));
  }
  if (record) {
    const std::size_t t = X.dim(0) / batch;
    record->batch = batch;
    record->heads = schedule.front()->heads;
    record->tokens = t - 1;
    record->grid = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(t - 1))));
    record->loops.clear();
  }
  Var x = tokens;
  for (const auto* block : schedule) {
    Tensor* w = nullptr;
    if (record) w = &record->loops.emplace_back();
    Var h = ops::layer_norm(x, g.parameter(*block->ln1_gain), g.parameter(*block->ln1_bias));
    x = ops::add(x, multi_head_attention(g, h, *block, batch, w));
    Var f = ops::layer_norm(x, g.parameter(*block->ln2_gain), g.parameter(*block->ln2_bias));
    f = ops::gelu(linear(g, f, *block->ff1_w, *block->ff1_b));
    x = ops::add(x, linear(g, f, *block->ff2_w, *block->ff2_b));
  }
  return x;
}

Tensor stack_observations(std::span<const env::Observation* const> obs) {
  if (obs.empty()) throw std::invalid_argument("stack_observations: empty batch");
  const auto& first = *obs.front();
  const auto r = static_cast<std::size_t>(first.size);
  Tensor out({obs.size(), first.channels, r, r});
  auto dst = out.data().begin();
  for (const auto* o : obs) {
    if (o->channels != first.channels || o->size != first.size) {
      throw std::invalid_argument("stack_observations: mixed observation shapes");
    }
    for (auto v : o->data) *dst++ = static_cast<double>(v);
  }
  return out;
}

QNetwork::QNetwork(const NetConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t c = config_.embed, nc = config_.channels, hid = config_.head_hidden;
  auto dense = [&](const std::string& name, std::size_t in, std::size_t out) {
    params_.add(name + ".w", init::xavier_uniform({in, out}, in, out, rng));
    params_.add(name + ".b", init::zeros({out}));
  };
  if (is_da3(config_.arch)) {
    const std::size_t p = config_.patch, t = config_.tokens();
    embedder_.patch = p;
    embedder_.kernels = &params_.add("embed.kernels", init::xavier_uniform({c, nc, p, p}, nc * p * p, c, rng));
    embedder_.bias = &params_.add("embed.bias", init::zeros({c}));
    embedder_.saliency = &params_.add("embed.saliency", init::normal({c}, 0.02, rng));
    embedder_.position = &params_.add("embed.position", init::normal({t + 1, c}, config_.position_std, rng));
    const std::size_t distinct = config_.shared_loop ? 1 : config_.loops;
    const std::size_t ffw = config_.ff_width();
    for (std::size_t i = 0; i < distinct; ++i) {
      const std::string pre = "block" + std::to_string(i) + ".";
      EncoderBlockParams b;
      b.heads = config_.heads;
      b.ln1_gain = &params_.add(pre + "ln1.gain", init::ones({c}));
      b.ln1_bias = &params_.add(pre + "ln1.bias", init::zeros({c}));
      b.wq = &params_.add(pre + "wq", init::xavier_uniform({c, c}, c, c / config_.heads, rng));
      b.wk = &params_.add(pre + "wk", init::xavier_uniform({c, c}, c, c / config_.heads, rng));
      b.wv = &params_.add(pre + "wv", init::xavier_uniform({c, c}, c, c / config_.heads, rng));
      b.wo = &params_.add(pre + "wo", init::xavier_uniform({c, c}, c, c, rng));
      b.ln2_gain = &params_.add(pre + "ln2.gain", init::ones({c}));
      b.ln2_bias = &params_.add(pre + "ln2.bias", init::zeros({c}));
      b.ff1_w = &params_.add(pre + "ff1.w", init::xavier_uniform({c, ffw}, c, ffw, rng));
      b.ff1_b = &params_.add(pre + "ff1.b", init::zeros({ffw}));
      b.ff2_w = &params_.add(pre + "ff2.w", init::xavier_uniform({ffw, c}, ffw, c, rng));
      b.ff2_b = &params_.add(pre + "ff2.b", init::zeros({c}));
      blocks_.push_back(b);
    }
  } else {
    const std::size_t c1 = config_.conv1, c2 = config_.conv2;
    params_.add("trunk.conv1.w", init::xavier_uniform({c1, nc, 3, 3}, nc * 9, c1 * 9, rng));
    params_.add("trunk.conv1.b", init::zeros({c1}));
    params_.add("trunk.conv2.w", init::xavier_uniform({c2, c1, 3, 3}, c1 * 9, c2 * 9, rng));
    params_.add("trunk.conv2.b", init::zeros({c2}));
    const std::size_t side = ceil_half(ceil_half(config_.window));
    const std::size_t flat = c2 * side * side;
    if (config_.arch == Architecture::VanillaDqn) {
      dense("head.fc1", flat, hid);
      dense("head.fc2", hid, env::kActionCount);
      return;
    }
    dense("trunk.fc", flat, c);
  }
  if (config_.arch == Architecture::Da3Dqn) {
    dense("head.fc1", c, hid);
    dense("head.fc2", hid, env::kActionCount);
  } else {
    dense("head.tau", config_.quantile_basis, c);
    dense("head.value1", c, hid);
    dense("head.value2", hid, 1);
    dense("head.adv1", c, hid);
    dense("head.adv2", hid, env::kActionCount);
  }
}

std::vector<const EncoderBlockParams*> QNetwork::schedule() const {
  std::vector<const EncoderBlockParams*> s;
  for (std::size_t l = 0; l < config_.loops && !blocks_.empty(); ++l) s.push_back(&blocks_[config_.shared_loop ? 0 : l]);
  return s;
}

Var QNetwork::head_forward(Graph& g, Var features, std::span<const double> taus) {
  auto& P = params_;
  auto dense = [&](Var x, const std::string& name) { return linear(g, x, *P.find(name + ".w"), *P.find(name + ".b")); };
  if (!distributional()) {
    if (config_.arch == Architecture::VanillaDqn) return dense(ops::relu(dense(features, "head.fc1")), "head.fc2");
    return dense(ops::gelu(dense(features, "head.fc1")), "head.fc2");
  }
  const std::size_t batch = features.value().dim(0);
  if (taus.empty()) throw std::invalid_argument("IQN head requires quantile levels");
  if (taus.size() % batch != 0) {
    throw std::invalid_argument("IQN head: " + std::to_string(taus.size()) + " quantile levels for batch " +
                                std::to_string(batch));
  }
  const std::size_t n = taus.size() / batch, basis = config_.quantile_basis;
  Tensor cosines({taus.size(), basis});
  for (std::size_t r = 0; r < taus.size(); ++r) {
    if (!(taus[r] > 0.0 && taus[r] < 1.0)) throw std::invalid_argument("IQN head: quantile level outside (0, 1)");
    for (std::size_t i = 0; i < basis; ++i) cosines.at(r, i) = std::cos(std::numbers::pi * static_cast<double>(i) * taus[r]);
  }
  Var phi = ops::relu(dense(g.constant(std::move(cosines)), "head.tau"));
  Var z = ops::mul(ops::repeat_rows(features, n), phi);
  Var value = dense(ops::gelu(dense(z, "head.value1")), "head.value2");
  Var adv = dense(ops::gelu(dense(z, "head.adv1")), "head.adv2");
  return ops::dueling(value, adv);
}

Var QNetwork::trunk_forward(Graph& g, Var obs) {
  auto& P = params_;
  Var x = ops::relu(ops::conv2d(obs, g.parameter(*P.find("trunk.conv1.w")), g.parameter(*P.find("trunk.conv1.b"))));
  x = ops::maxpool2x2(x);
  x = ops::relu(ops::conv2d(x, g.parameter(*P.find("trunk.conv2.w")), g.parameter(*P.find("trunk.conv2.b"))));
  x = ops::maxpool2x2(x);
  const auto& s = x.value().shape();
  x = ops::reshape(x, {s[0], s[1] * s[2] * s[3]});
  if (config_.arch == Architecture::VanillaIqn) {
    x = ops::relu(linear(g, x, *P.find("trunk.fc.w"), *P.find("trunk.fc.b")));
  }
  return x;
}

Var QNetwork::forward(Graph& g, const Tensor& obs, std::span<const double> taus, AttentionRecord* record) {
  const auto& s = obs.shape();
  if (s.size() != 4 || s[1] != config_.channels || s[2] != config_.window || s[3] != config_.window) {
    throw std::invalid_argument("network expects [B x " + std::to_string(config_.channels) + " x " +
                                std::to_string(config_.window) + " x " + std::to_string(config_.window) +
                                "] observations, got " + shape_string(s));
  }
  if (distributional() && taus.empty()) throw std::invalid_argument("IQN head requires quantile levels");
  Var x = g.constant(obs);
  if (is_da3(config_.arch)) {
    Var tokens = encoder_forward(g, embed_state(g, x, embedder_), schedule(), s[0], record);
    return head_forward(g, ops::select_rows(tokens, config_.tokens() + 1, 0), taus);
  }
  return head_forward(g, trunk_forward(g, x), taus);
}

Tensor QNetwork::evaluate(const Tensor& obs, std::span<const double> taus, AttentionRecord* record) {
  Graph g(false);
  return forward(g, obs, taus, record).value();
}

std::vector<ParameterCount> QNetwork::parameter_report() const {
  std::vector<ParameterCount> out;
  std::size_t total = 0;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({params_.name(i), params_.at(i).size()});
    total += params_.at(i).size();
  }
  out.push_back({"total", total});
  return out;
}

Var forward_da3(Graph& g, QNetwork& model, const Tensor& obs, std::span<const double> taus, AttentionRecord* record) {
  if (!is_da3(model.config().arch)) throw std::invalid_argument("forward_da3: model is a baseline architecture");
  return model.forward(g, obs, taus, record);
}

Var forward_baseline(Graph& g, QNetwork& model, const Tensor& obs, std::span<const double> taus) {
  if (is_da3(model.config().arch)) throw std::invalid_argument("forward_baseline: model is a DA3 architecture");
  return model.forward(g, obs, taus);
}

}  // namespace da3::net
