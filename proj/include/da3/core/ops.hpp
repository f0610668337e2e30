#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "da3/core/graph.hpp"

// Differentiable operations recorded on a Graph. All shape errors throw
// std::invalid_argument with the offending dimensions in the message.
namespace da3::ops {

// Matrix products on rank-2 tensors.
Var matmul(Var a, Var b);     // [m x k] * [k x n]
Var matmul_nt(Var a, Var b);  // [m x k] * [n x k]^T
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// [m x n] + bias[n] broadcast over rows.
Var add_row(Var a, Var bias);
// [(k*t) x n] + b[t x n] repeated k times down the rows.
Var add_tiled(Var a, Var b);

Var gelu(Var a);  // tanh approximation
Var relu(Var a);
Var softmax_rows(Var x);
// Per-row normalisation with variance epsilon 1e-5, then gain/bias.
Var layer_norm(Var x, Var gain, Var bias);

Var sum(Var a);
Var mean(Var a);
Var reshape(Var a, Shape shape);

// Elementwise Huber penalty with threshold kappa.
Var huber(Var a, double kappa);

// Row selection and broadcasting for batched token streams.
Var select_rows(Var x, std::size_t stride, std::size_t offset);  // rows offset, offset+stride, ...
Var repeat_rows(Var x, std::size_t times);                       // row r -> rows r*times..r*times+times-1
Var prepend_token(Var tokens, Var token, std::size_t batch);     // [(B*T) x C] -> [(B*(T+1)) x C]
// out[i] = x[i, index[i]] as an [n x 1] column.
Var pick_columns(Var x, std::span<const std::size_t> index);

// Dueling combination: value[n x 1] + adv[n x A] - rowmean(adv).
Var dueling(Var value, Var adv);

// Non-overlapping P x P patch projection of one observation
// [N_C x R x R] by kernels [C x N_C x P x P]; result [C x R/P x R/P].
Var conv2d_patch(Var x, Var kernels, std::size_t patch);
// Batched token form: x [B x N_C x R x R] -> [(B*T) x C] with T = (R/P)^2,
// token order row-major over patch positions, plus per-channel bias.
Var patch_embed(Var x, Var kernels, Var bias, std::size_t patch);

// Stride-1 "same" convolution: x [B x Cin x H x W], w [Cout x Cin x k x k], b [Cout].
Var conv2d(Var x, Var w, Var b);
// 2x2 max-pool with ceil rounding: [B x C x H x W] -> [B x C x ceil(H/2) x ceil(W/2)].
Var maxpool2x2(Var x);

// Batched multi-head scaled dot-product attention core. q, k, v are
// [(B*t) x (h*d)] with head l in columns [l*d, (l+1)*d). Returns the
// concatenated per-head outputs [(B*t) x (h*d)]. When weights is non-null it
// receives the attention weights as [B x h x t x t].
Var attention_heads(Var q, Var k, Var v, std::size_t batch, std::size_t heads, Tensor* weights = nullptr);

// Quantile Huber regression. pred [B x N] at levels taus (B*N, row-major),
// target [B x M] treated as constant. Mean over all (i, j) pairs and batch of
// |tau_i - 1{u_ij < 0}| * huber(u_ij) / kappa with u_ij = target_j - pred_i.
Var quantile_huber(Var pred, Var target, std::span<const double> taus, double kappa);

}  // namespace da3::ops
