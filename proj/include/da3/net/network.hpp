#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "da3/core/graph.hpp"
#include "da3/core/parameters.hpp"
#include "da3/env/observation.hpp"

namespace da3::net {

enum class Architecture : std::uint8_t { Da3Dqn, Da3Iqn, VanillaDqn, VanillaIqn };

Architecture parse_architecture(std::string_view name);  // "da3-dqn", "da3-iqn", "dqn", "iqn"
std::string_view architecture_name(Architecture a);
bool is_da3(Architecture a);
bool is_distributional(Architecture a);

struct NetConfig {
  Architecture arch = Architecture::Da3Dqn;
  std::size_t channels = 3;  // N_C
  std::size_t window = 7;    // R
  std::size_t patch = 1;     // P
  std::size_t embed = 64;    // C
  std::size_t heads = 4;     // h
  std::size_t ff = 0;        // C_ff; 0 means 2 * C
  std::size_t loops = 1;     // L
  bool shared_loop = true;   // reuse one block L times, or stack L distinct blocks
  double position_std = 0.02;  // init scale of the position embeddings
  std::size_t head_hidden = 64;
  std::size_t quantile_basis = 64;
  std::size_t conv1 = 16;  // vanilla trunk widths
  std::size_t conv2 = 32;

  std::size_t ff_width() const { return ff == 0 ? 2 * embed : ff; }
  std::size_t grid() const { return window / patch; }
  std::size_t tokens() const { return grid() * grid(); }  // T, excluding the saliency token
  void validate() const;
};

// Non-owning views into a model's ParameterSet.
struct EmbedderParams {
  Tensor* kernels = nullptr;   // C x N_C x P x P
  Tensor* bias = nullptr;      // C
  Tensor* saliency = nullptr;  // C
  Tensor* position = nullptr;  // (T+1) x C
  std::size_t patch = 1;
};

// The per-head projections W_l^Q (C x C/h) are stored side by side as one
// C x C matrix; head l owns columns [l*d, (l+1)*d).
struct EncoderBlockParams {
  Tensor *ln1_gain = nullptr, *ln1_bias = nullptr;
  Tensor *wq = nullptr, *wk = nullptr, *wv = nullptr, *wo = nullptr;
  Tensor *ln2_gain = nullptr, *ln2_bias = nullptr;
  Tensor *ff1_w = nullptr, *ff1_b = nullptr, *ff2_w = nullptr, *ff2_b = nullptr;
  std::size_t heads = 1;
};

// Attention weights captured during one forward pass.
struct AttentionRecord {
  std::size_t batch = 0, heads = 0, tokens = 0, grid = 0;
  std::vector<Tensor> loops;  // per loop iteration: [B x h x (T+1) x (T+1)]

  bool empty() const { return loops.empty(); }
  // Row-major (T+1) x (T+1) slice.
  std::span<const double> weights(std::size_t loop, std::size_t b, std::size_t head) const;
};

struct Heatmap {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double total() const;
};

enum class HeatmapReduce : std::uint8_t { PerHead, Mean };

// Saliency query row of the final loop iteration for batch element b,
// columns 1..T, as grid x grid maps. PerHead yields h maps, Mean one.
std::vector<Heatmap> extract_heatmap(const AttentionRecord& record, HeatmapReduce reduce, std::size_t b = 0);

// softmax(Q K^T / sqrt(d_k)) V built from primitive ops. Returns
// (output, weights).
std::pair<Var, Var> scaled_dot_attention(Var q, Var k, Var v);

Var linear(Graph& g, Var x, Tensor& w, Tensor& b);

// x [(B*t) x C] -> [(B*t) x C]; weights, when requested, are [B x h x t x t].
Var multi_head_attention(Graph& g, Var x, const EncoderBlockParams& p, std::size_t batch, Tensor* weights = nullptr);

// obs [B x N_C x R x R] -> tokens [(B*(T+1)) x C], saliency token first in each group.
Var embed_state(Graph& g, Var obs, const EmbedderParams& p);

// Pre-norm attention and feed-forward sublayers with residuals, applied
// once per entry of `schedule`.
Var encoder_forward(Graph& g, Var tokens, const std::vector<const EncoderBlockParams*>& schedule, std::size_t batch,
                    AttentionRecord* record = nullptr);

// Stacks observations into a [B x N_C x R x R] tensor.
Tensor stack_observations(std::span<const env::Observation* const> obs);

struct ParameterCount {
  std::string name;
  std::size_t count = 0;
};

// Q-network for one agent: one of the four architectures.
class QNetwork {
 public:
  QNetwork(const NetConfig& config, Rng& rng);
  QNetwork(const QNetwork&) = delete;
  QNetwork& operator=(const QNetwork&) = delete;

  const NetConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  bool distributional() const { return is_distributional(config_.arch); }

  // obs [B x N_C x R x R]. DQN heads return [B x 4]. IQN heads need
  // taus.size() == B * N and return [(B*N) x 4], row b*N + i for taus[b*N + i].
  Var forward(Graph& g, const Tensor& obs, std::span<const double> taus = {}, AttentionRecord* record = nullptr);

  // Gradient-free convenience wrapper.
  Tensor evaluate(const Tensor& obs, std::span<const double> taus = {}, AttentionRecord* record = nullptr);

  // Forward stages exposed for probing and tests (DA3 architectures only).
  const EmbedderParams& embedder() const { return embedder_; }
  std::vector<const EncoderBlockParams*> schedule() const;
  // Saliency token output [B x C] to head output.
  Var head_forward(Graph& g, Var saliency, std::span<const double> taus);

  std::vector<ParameterCount> parameter_report() const;

 private:
  Var trunk_forward(Graph& g, Var obs);

  NetConfig config_;
  ParameterSet params_;
  EmbedderParams embedder_;
  std::vector<EncoderBlockParams> blocks_;
};

// Full DA3 pass: embed, encode, take token 0, head.
Var forward_da3(Graph& g, QNetwork& model, const Tensor& obs, std::span<const double> taus = {},
                AttentionRecord* record = nullptr);
Var forward_baseline(Graph& g, QNetwork& model, const Tensor& obs, std::span<const double> taus = {});

}  // namespace da3::net
