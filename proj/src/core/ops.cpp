#include "da3/core/ops.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

namespace da3::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;
using Strided = Eigen::OuterStride<>;
using CStridedMap = Eigen::Map<const RowMat, 0, Strided>;
using MStridedMap = Eigen::Map<RowMat, 0, Strided>;

[[noreturn]] void shape_error(const char* op, const std::string& what) {
  throw std::invalid_argument(std::string(op) + ": " + what);
}

void require_rank2(const char* op, const Tensor& t, const char* name) {
  if (t.rank() != 2) shape_error(op, std::string(name) + " must be rank 2, got " + shape_string(t.shape()));
}

// Vectors may be given as [n] or [1 x n].
std::size_t vector_length(const char* op, const Tensor& t, const char* name) {
  if (t.rank() == 1) return t.dim(0);
  if (t.rank() == 2 && t.dim(0) == 1) return t.dim(1);
  shape_error(op, std::string(name) + " must be a vector, got " + shape_string(t.shape()));
}

CMap cmap(const Tensor& t) { return CMap(t.data().data(), t.rows(), t.cols()); }
CMap cmap(std::span<const double> s, std::size_t r, std::size_t c) { return CMap(s.data(), r, c); }
MMap mmap(std::span<double> s, std::size_t r, std::size_t c) { return MMap(s.data(), r, c); }

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

}  // namespace

Var matmul(Var a, Var b) {
  const auto& A = a.value();
  const auto& B = b.value();
  require_rank2("matmul", A, "a");
  require_rank2("matmul", B, "b");
  const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  if (B.dim(0) != k) {
    shape_error("matmul", "inner dimensions disagree: " + shape_string(A.shape()) + " x " + shape_string(B.shape()));
  }
  Tensor out({m, n});
  mmap(out.data(), m, n).noalias() = cmap(A) * cmap(B);
  const std::size_t ia = a.id, ib = b.id;
  return a.graph->record("matmul", std::move(out), {a, b}, [ia, ib, m, k, n](Graph& g, std::size_t self) {
    auto dC = cmap(g.out_grad(self), m, n);
    if (g.requires_grad(ia)) mmap(g.grad_sink(ia), m, k).noalias() += dC * cmap(g.value(ib)).transpose();
    if (g.requires_grad(ib)) mmap(g.grad_sink(ib), k, n).noalias() += cmap(g.value(ia)).transpose() * dC;
  });
}

Var matmul_nt(Var a, Var b) {
  const auto& A = a.value();
  const auto& B = b.value();
  require_rank2("matmul_nt", A, "a");
  require_rank2("matmul_nt", B, "b");
  const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(0);
  if (B.dim(1) != k) {
    shape_error("matmul_nt", "inner dimensions disagree: " + shape_string(A.shape()) + " x " +
                                 shape_string(B.shape()) + "^T");
  }
  Tensor out({m, n});
  mmap(out.data(), m, n).noalias() = cmap(A) * cmap(B).transpose();
  const std::size_t ia = a.id, ib = b.id;
  return a.graph->record("matmul_nt", std::move(out), {a, b}, [ia, ib, m, k, n](Graph& g, std::size_t self) {
    auto dC = cmap(g.out_grad(self), m, n);
    if (g.requires_grad(ia)) mmap(g.grad_sink(ia), m, k).noalias() += dC * cmap(g.value(ib));
    if (g.requires_grad(ib)) mmap(g.grad_sink(ib), n, k).noalias() += dC.transpose() * cmap(g.value(ia));
  });
}

Var transpose(Var a) {
  const auto& A = a.value();
  require_rank2("transpose", A, "a");
  const std::size_t m = A.dim(0), n = A.dim(1);
  Tensor out({n, m});
  mmap(out.data(), n, m) = cmap(A).transpose();
  const std::size_t ia = a.id;
  return a.graph->record("transpose", std::move(out), {a}, [ia, m, n](Graph& g, std::size_t self) {
    mmap(g.grad_sink(ia), m, n) += cmap(g.out_grad(self), n, m).transpose();
  });
}

namespace {

template <typename Fwd, typename Bwd>
Var binary_elementwise(const char* op, Var a, Var b, Fwd fwd, Bwd bwd) {
  const auto& A = a.value();
  const auto& B = b.value();
  if (!same_shape(A, B)) shape_error(op, "shapes differ: " + shape_string(A.shape()) + " vs " + shape_string(B.shape()));
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(A[i], B[i]);
  const std::size_t ia = a.id, ib = b.id;
  return a.graph->record(op, std::move(out), {a, b}, [ia, ib, bwd](Graph& g, std::size_t self) {
    auto d = g.out_grad(self);
    const auto& va = g.value(ia);
    const auto& vb = g.value(ib);
    const bool ga = g.requires_grad(ia), gb = g.requires_grad(ib);
    std::span<double> sa = ga ? g.grad_sink(ia) : std::span<double>{};
    std::span<double> sb = gb ? g.grad_sink(ib) : std::span<double>{};
    for (std::size_t i = 0; i < d.size(); ++i) {
      auto [da, db] = bwd(va[i], vb[i], d[i]);
      if (ga) sa[i] += da;
      if (gb) sb[i] += db;
    }
  });
}

template <typename Fwd, typename Deriv>
Var unary_elementwise(const char* op, Var a, Fwd fwd, Deriv deriv) {
  const auto& A = a.value();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(A[i]);
  const std::size_t ia = a.id;
  return a.graph->record(op, std::move(out), {a}, [ia, deriv](Graph& g, std::size_t self) {
    auto d = g.out_grad(self);
    const auto& va = g.value(ia);
    auto s = g.grad_sink(ia);
    for (std::size_t i = 0; i < d.size(); ++i) s[i] += d[i] * deriv(va[i]);
  });
}

struct Pair {
  double a, b;
};

}  // namespace

Var add(Var a, Var b) {
  return binary_elementwise(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double d) { return Pair{d, d}; });
}

Var sub(Var a, Var b) {
  return binary_elementwise(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double d) { return Pair{d, -d}; });
}

Var mul(Var a, Var b) {
  return binary_elementwise(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double d) { return Pair{d * y, d * x}; });
}

Var scale(Var a, double s) {
  return unary_elementwise(
      "scale", a, [s](double x) { return s * x; }, [s](double) { return s; });
}

Var add_row(Var a, Var bias) {
  const auto& A = a.value();
  require_rank2("add_row", A, "a");
  const std::size_t m = A.dim(0), n = A.dim(1);
  if (vector_length("add_row", bias.value(), "bias") != n) {
    shape_error("add_row", "bias length does not match " + shape_string(A.shape()));
  }
  Tensor out(A.shape());
  const auto& bv = bias.value();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = A[r * n + c] + bv[c];
  const std::size_t ia = a.id, ib = bias.id;
  return a.graph->record("add_row", std::move(out), {a, bias}, [ia, ib, m, n](Graph& g, std::size_t self) {
    auto d = g.out_grad(self);
    if (g.requires_grad(ia)) {
      auto s = g.grad_sink(ia);
      for (std::size_t i = 0; i < d.size(); ++i) s[i] += d[i];
    }
    if (g.requires_grad(ib)) {
      auto s = g.grad_sink(ib);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) s[c] += d[r * n + c];
    }
  });
}

Var add_tiled(Var a, Var b) {
  const auto& A = a.value();
  const auto& B = b.value();
  require_rank2("add_tiled", A, "a");
  require_rank2("add_tiled", B, "b");
  const std::size_t n = A.dim(1), t = B.dim(0);
  if (B.dim(1) != n || A.dim(0) % t != 0) {
    shape_error("add_tiled", "cannot tile " + shape_string(B.shape()) + " over " + shape_string(A.shape()));
  }
  const std::size_t block = t * n;
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i % block];
  const std::size_t ia = a.id, ib = b.id;
  return a.graph->record("add_tiled", std::move(out), {a, b}, [ia, ib, block](Graph& g, std::size_t self) {
    auto d = g.out_grad(self);
    if (g.requires_grad(ia)) {
      auto s = g.grad_sink(ia);
      for (std::size_t i = 0; i < d.size(); ++i) s[i] += d[i];
    }
    if (g.requires_grad(ib)) {
      auto s = g.grad_sink(ib);
      for (std::size_t i = 0; i < d.size(); ++i) s[i % block] += d[i];
    }
  });
}

Var gelu(Var a) {
  const double c = 0.7978845608028654;  // sqrt(2/pi)
  const double k = 0.044715;
  const auto& A = a.value();
  const auto n = static_cast<Eigen::Index>(A.size());
  Eigen::Map<const Eigen::ArrayXd> x(A.data().data(), n);
  // tanh(z) = 1 - 2 / (exp(2z) + 1); Eigen vectorizes exp but not tanh for doubles.
  const Eigen::ArrayXd z = (c * (x + k * x.cube())).min(40.0).max(-40.0);
  auto t = std::make_shared<Eigen::ArrayXd>(1.0 - 2.0 / ((2.0 * z).exp() + 1.0));
  Tensor out(A.shape());
  Eigen::Map<Eigen::ArrayXd>(out.values().data(), n) = 0.5 * x * (1.0 + *t);
  const std::size_t ia = a.id;
  return a.graph->record("gelu", std::move(out), {a}, [ia, t, n, c, k](Graph& g, std::size_t self) {
    auto d = g.out_grad(self);
    const auto& va = g.value(ia);
    Eigen::Map<const Eigen::ArrayXd> x(va.data().data(), n), dy(d.data(), n);
    const auto& th = *t;
    Eigen::Map<Eigen::ArrayXd>(g.grad_sink(ia).data(), n) +=
        dy * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * c * (1.0 + 3.0 * k * x * x));
  });
}

Var relu(Var a) {
  return unary_elementwise(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var huber(Var a, double kappa) {
  return unary_elementwise(
      "huber", a,
      [kappa](double x) {
        const double ax = std::abs(x);
        return ax <= kappa ? 0.5 * x * x : kappa * (ax - 0.5 * kappa);
      },
      [kappa](double x) { return std::abs(x) <= kappa ? x : (x > 0 ? kappa : -kappa); });
}

Var softmax_rows(Var x) {
  const auto& X = x.value();
  require_rank2("softmax_rows", X, "x");
  const std::size_t m = X.dim(0), n = X.dim(1);
  Tensor out(X.shape());
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = X.data().data() + r * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c) {
      if (std::isnan(row[c])) throw std::invalid_argument("softmax_rows: NaN input at row " + std::to_string(r));
      mx = std::max(mx, row[c]);
    }
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += (out[r * n + c] = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] /= z;
  }
  const std::size_t ix = x.id;
  return x.graph->record("softmax_rows", std::move(out), {x}, [ix, m, n](Graph& g, std::size_t self) {
    auto d = g.out_grad(self);
    const auto& y = g.value(self);
    auto s = g.grad_sink(ix);
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += d[r * n + c] * y[r * n + c];
      for (std::size_t c = 0; c < n; ++c) s[r * n + c] += y[r * n + c] * (d[r * n + c] - dot);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias) {
  constexpr double eps = 1e-5;
  const auto& X = x.value();
  require_rank2("layer_norm", X, "x");
  const std::size_t m = X.dim(0), n = X.dim(1);
  if (vector_length("layer_norm", gain.value(), "gain") != n || vector_length("layer_norm", bias.value(), "bias") != n) {
    shape_error("layer_norm", "gain/bias length must equal row width " + std::to_string(n));
  }
  auto xhat = std::make_shared<Buffer>(X.size());
  auto rstd = std::make_shared<Buffer>(m);
  Tensor out(X.shape());
  const auto& G = gain.value();
  const auto& B = bias.value();
  for (std::size_t r = 0; r < m; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += X[r * n + c];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double d = X[r * n + c] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t c = 0; c < n; ++c) {
      const double h = (X[r * n + c] - mu) * rs;
      (*xhat)[r * n + c] = h;
      out[r * n + c] = h * G[c] + B[c];
    }
  }
  const std::size_t ix = x.id, ig = gain.id, ib = bias.id;
  return x.graph->record("layer_norm", std::move(out), {x, gain, bias},
                         [ix, ig, ib, m, n, xhat, rstd](Graph& g, std::size_t self) {
                           auto d = g.out_grad(self);
                           const auto& G = g.value(ig);
                           if (g.requires_grad(ig)) {
                             auto s = g.grad_sink(ig);
                             for (std::size_t i = 0; i < d.size(); ++i) s[i % n] += d[i] * (*xhat)[i];
                           }
                           if (g.requires_grad(ib)) {
                             auto s = g.grad_sink(ib);
                             for (std::size_t i = 0; i < d.size(); ++i) s[i % n] += d[i];
                           }
                           if (!g.requires_grad(ix)) return;
                           auto s = g.grad_sink(ix);
                           const double inv_n = 1.0 / static_cast<double>(n);
                           for (std::size_t r = 0; r < m; ++r) {
                             double mean_dh = 0.0, mean_dh_h = 0.0;
                             for (std::size_t c = 0; c < n; ++c) {
                               const double dh = d[r * n + c] * G[c];
                               mean_dh += dh;
                               mean_dh_h += dh * (*xhat)[r * n + c];
                             }
                             mean_dh *= inv_n;
                             mean_dh_h *= inv_n;
                             for (std::size_t c = 0; c < n; ++c) {
                               const double dh = d[r * n + c] * G[c];
                               s[r * n + c] += (*rstd)[r] * (dh - mean_dh - (*xhat)[r * n + c] * mean_dh_h);
                             }
                           }
                         });
}

Var sum(Var a) {
  const auto& A = a.value();
  double total = 0.0;
  for (double v : A.data()) total += v;
  const std::size_t ia = a.id;
  return a.graph->record("sum", Tensor({1}, {total}), {a}, [ia](Graph& g, std::size_t self) {
    const double d = g.out_grad(self)[0];
    for (auto& s : g.grad_sink(ia)) s += d;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id;
  return a.graph->record("reshape", std::move(out), {a}, [ia](Graph& g, std::size_t self) {
    auto d = g.out_grad(self);
    auto s = g.grad_sink(ia);
    for (std::size_t i = 0; i < d.size(); ++i) s[i] += d[i];
  });
}

Var select_rows(Var x, std::size_t stride, std::size_t offset) {
  const auto& X = x.value();
  require_rank2("select_rows", X, "x");
  const std::size_t m = X.dim(0), n = X.dim(1);
  if (stride == 0 || offset >= m) shape_error("select_rows", "bad stride/offset for " + shape_string(X.shape()));
  const std::size_t count = (m - offset + stride - 1) / stride;
  Tensor out({count, n});
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t c = 0; c < n; ++c) out[i * n + c] = X[(offset + i * stride) * n + c];
  const std::size_t ix = x.id;
  return x.graph->record("select_rows", std::move(out), {x}, [ix, count, n, stride, offset](Graph& g, std::size_t self) {
    auto d = g.out_grad(self);
    auto s = g.grad_sink(ix);
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t c = 0; c < n; ++c) s[(offset + i * stride) * n + c] += d[i * n + c];
  });
}

Var repeat_rows(Var x, std::size_t times) {
  const auto& X = x.value();
  require_rank2("repeat_rows", X, "x");
  if (times == 0) shape_error("repeat_rows", "times must be positive");
  const std::size_t m = X.dim(0), n = X.dim(1);
  Tensor out({m * times, n});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t k = 0; k < times; ++k)
      for (std::size_t c = 0; c < n; ++c) out[(r * times + k) * n + c] = X[r * n + c];
  const std::size_t ix = x.id;
  return x.graph->record("repeat_rows", std::move(out), {x}, [ix, m, n, times](Graph& g, std::size_t self) {
    auto d = g.out_grad(self);
    auto s = g.grad_sink(ix);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t k = 0; k < times; ++k)
        for (std::size_t c = 0; c < n; ++c) s[r * n + c] += d[(r * times + k) * n + c];
  });
}

Var prepend_token(Var tokens, Var token, std::size_t batch) {
  const auto& X = tokens.value();
  require_rank2("prepend_token", X, "tokens");
  const std::size_t n = X.dim(1);
  if (vector_length("prepend_token", token.value(), "token") != n) {
    shape_error("prepend_token", "token width does not match " + shape_string(X.shape()));
  }
  if (batch == 0 || X.dim(0) % batch != 0) shape_error("prepend_token", "rows not divisible by batch");
  const std::size_t t = X.dim(0) / batch;
  Tensor out({batch * (t + 1), n});
  const auto& tok = token.value();
  for (std::size_t b = 0; b < batch; ++b) {
    double* dst = out.data().data() + b * (t + 1) * n;
    std::copy(tok.data().begin(), tok.data().end(), dst);
    std::copy_n(X.data().data() + b * t * n, t * n, dst + n);
  }
  const std::size_t ix = tokens.id, it = token.id;
  return tokens.graph->record("prepend_token", std::move(out), {tokens, token},
                              [ix, it, batch, t, n](Graph& g, std::size_t self) {
                                auto d = g.out_grad(self);
                                const bool gx = g.requires_grad(ix), gt = g.requires_grad(it);
                                for (std::size_t b = 0; b < batch; ++b) {
                                  const double* src = d.data() + b * (t + 1) * n;
                                  if (gt) {
                                    auto s = g.grad_sink(it);
                                    for (std::size_t c = 0; c < n; ++c) s[c] += src[c];
                                  }
                                  if (gx) {
                                    auto s = g.grad_sink(ix);
                                    for (std::size_t i = 0; i < t * n; ++i) s[b * t * n + i] += src[n + i];
                                  }
                                }
                              });
}

Var pick_columns(Var x, std::span<const std::size_t> index) {
  const auto& X = x.value();
  require_rank2("pick_columns", X, "x");
  const std::size_t m = X.dim(0), n = X.dim(1);
  if (index.size() != m) shape_error("pick_columns", "need one index per row of " + shape_string(X.shape()));
  std::vector<std::size_t> idx(index.begin(), index.end());
  Tensor out({m, 1});
  for (std::size_t r = 0; r < m; ++r) {
    if (idx[r] >= n) shape_error("pick_columns", "column index " + std::to_string(idx[r]) + " out of range");
    out[r] = X[r * n + idx[r]];
  }
  const std::size_t ix = x.id;
  return x.graph->record("pick_columns", std::move(out), {x}, [ix, n, idx = std::move(idx)](Graph& g, std::size_t self) {
    auto d = g.out_grad(self);
    auto s = g.grad_sink(ix);
    for (std::size_t r = 0; r < idx.size(); ++r) s[r * n + idx[r]] += d[r];
  });
}

Var dueling(Var value, Var adv) {
  const auto& V = value.value();
  const auto& A = adv.value();
  require_rank2("dueling", A, "adv");
  const std::size_t m = A.dim(0), n = A.dim(1);
  if (V.size() != m) shape_error("dueling", "value must have one entry per advantage row");
  Tensor out(A.shape());
  for (std::size_t r = 0; r < m; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += A[r * n + c];
    mu /= static_cast<double>(n);
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = V[r] + A[r * n + c] - mu;
  }
  const std::size_t iv = value.id, ia = adv.id;
  return value.graph->record("dueling", std::move(out), {value, adv}, [iv, ia, m, n](Graph& g, std::size_t self) {
    auto d = g.out_grad(self);
    for (std::size_t r = 0; r < m; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < n; ++c) total += d[r * n + c];
      if (g.requires_grad(iv)) g.grad_sink(iv)[r] += total;
      if (g.requires_grad(ia)) {
        auto s = g.grad_sink(ia);
        const double mu = total / static_cast<double>(n);
        for (std::size_t c = 0; c < n; ++c) s[r * n + c] += d[r * n + c] - mu;
      }
    }
  });
}

Var conv2d_patch(Var x, Var kernels, std::size_t patch) {
  const auto& X = x.value();
  const auto& K = kernels.value();
  if (X.rank() != 3) shape_error("conv2d_patch", "x must be [N_C x R x R], got " + shape_string(X.shape()));
  if (K.rank() != 4) shape_error("conv2d_patch", "kernels must be [C x N_C x P x P], got " + shape_string(K.shape()));
  const std::size_t nc = X.dim(0), rh = X.dim(1), rw = X.dim(2);
  const std::size_t c_out = K.dim(0);
  if (K.dim(1) != nc) shape_error("conv2d_patch", "kernel channels " + std::to_string(K.dim(1)) + " != input channels " + std::to_string(nc));
  if (K.dim(2) != patch || K.dim(3) != patch) shape_error("conv2d_patch", "kernel size does not equal patch size");
  if (patch == 0 || patch > rh || patch > rw) shape_error("conv2d_patch", "patch size must be in [1, R]");
  const std::size_t oh = rh / patch, ow = rw / patch;
  Tensor out({c_out, oh, ow});
  auto x_at = [=](std::size_t ch, std::size_t i, std::size_t j) { return ch * rh * rw + i * rw + j; };
  auto k_at = [=](std::size_t co, std::size_t ch, std::size_t di, std::size_t dj) {
    return ((co * nc + ch) * patch + di) * patch + dj;
  };
  for (std::size_t co = 0; co < c_out; ++co)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t ch = 0; ch < nc; ++ch)
          for (std::size_t di = 0; di < patch; ++di)
            for (std::size_t dj = 0; dj < patch; ++dj)
              acc += K[k_at(co, ch, di, dj)] * X[x_at(ch, i * patch + di, j * patch + dj)];
        out[(co * oh + i) * ow + j] = acc;
      }
  const std::size_t ix = x.id, ik = kernels.id;
  return x.graph->record("conv2d_patch", std::move(out), {x, kernels},
                         [ix, ik, nc, rh, rw, c_out, oh, ow, patch, x_at, k_at](Graph& g, std::size_t self) {
                           auto d = g.out_grad(self);
                           const auto& X = g.value(ix);
                           const auto& K = g.value(ik);
                           const bool gx = g.requires_grad(ix), gk = g.requires_grad(ik);
                           for (std::size_t co = 0; co < c_out; ++co)
                             for (std::size_t i = 0; i < oh; ++i)
                               for (std::size_t j = 0; j < ow; ++j) {
                                 const double go = d[(co * oh + i) * ow + j];
                                 for (std::size_t ch = 0; ch < nc; ++ch)
                                   for (std::size_t di = 0; di < patch; ++di)
                                     for (std::size_t dj = 0; dj < patch; ++dj) {
                                       const auto xi = x_at(ch, i * patch + di, j * patch + dj);
                                       const auto ki = k_at(co, ch, di, dj);
                                       if (gk) g.grad_sink(ik)[ki] += go * X[xi];
                                       if (gx) g.grad_sink(ix)[xi] += go * K[ki];
                                     }
                               }
                         });
}

Var patch_embed(Var x, Var kernels, Var bias, std::size_t patch) {
  const auto& X = x.value();
  const auto& K = kernels.value();
  if (X.rank() != 4) shape_error("patch_embed", "x must be [B x N_C x R x R], got " + shape_string(X.shape()));
  if (K.rank() != 4) shape_error("patch_embed", "kernels must be [C x N_C x P x P], got " + shape_string(K.shape()));
  const std::size_t batch = X.dim(0), nc = X.dim(1), rh = X.dim(2), rw = X.dim(3);
  const std::size_t c_out = K.dim(0);
  if (K.dim(1) != nc) shape_error("patch_embed", "kernel channels " + std::to_string(K.dim(1)) + " != input channels " + std::to_string(nc));
  if (K.dim(2) != patch || K.dim(3) != patch) shape_error("patch_embed", "kernel size does not equal patch size");
  if (patch == 0 || patch > rh || patch > rw) shape_error("patch_embed", "patch size must be in [1, R]");
  if (vector_length("patch_embed", bias.value(), "bias") != c_out) shape_error("patch_embed", "bias length != C");
  const std::size_t oh = rh / patch, ow = rw / patch, tokens = oh * ow;
  const std::size_t width = nc * patch * patch;
  // im2col: one row per token, columns ordered (channel, di, dj) to match kernel layout.
  auto cols = std::make_shared<Buffer>(batch * tokens * width);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double* row = cols->data() + ((b * tokens) + i * ow + j) * width;
        for (std::size_t ch = 0; ch < nc; ++ch)
          for (std::size_t di = 0; di < patch; ++di)
            for (std::size_t dj = 0; dj < patch; ++dj)
              *row++ = X[((b * nc + ch) * rh + i * patch + di) * rw + j * patch + dj];
      }
  const std::size_t rows = batch * tokens;
  Tensor out({rows, c_out});
  auto O = mmap(out.data(), rows, c_out);
  O.noalias() = cmap(*cols, rows, width) * cmap(K.data(), c_out, width).transpose();
  const auto& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < c_out; ++c) O(r, c) += bv[c];
  const std::size_t ix = x.id, ik = kernels.id, ib = bias.id;
  return x.graph->record(
      "patch_embed", std::move(out), {x, kernels, bias},
      [ix, ik, ib, cols, rows, width, c_out, batch, nc, rh, rw, oh, ow, tokens, patch](Graph& g, std::size_t self) {
        auto dO = cmap(g.out_grad(self), rows, c_out);
        if (g.requires_grad(ik)) mmap(g.grad_sink(ik), c_out, width).noalias() += dO.transpose() * cmap(*cols, rows, width);
        if (g.requires_grad(ib)) {
          auto s = g.grad_sink(ib);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < c_out; ++c) s[c] += dO(r, c);
        }
        if (g.requires_grad(ix)) {
          RowMat dcols = dO * cmap(g.value(ik).data(), c_out, width);
          auto s = g.grad_sink(ix);
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < oh; ++i)
              for (std::size_t j = 0; j < ow; ++j) {
                const double* row = dcols.data() + ((b * tokens) + i * ow + j) * width;
                for (std::size_t ch = 0; ch < nc; ++ch)
                  for (std::size_t di = 0; di < patch; ++di)
                    for (std::size_t dj = 0; dj < patch; ++dj)
                      s[((b * nc + ch) * rh + i * patch + di) * rw + j * patch + dj] += *row++;
              }
        }
      });
}

Var conv2d(Var x, Var w, Var b) {
  const auto& X = x.value();
  const auto& W = w.value();
  if (X.rank() != 4) shape_error("conv2d", "x must be [B x Cin x H x W], got " + shape_string(X.shape()));
  if (W.rank() != 4) shape_error("conv2d", "w must be [Cout x Cin x k x k], got " + shape_string(W.shape()));
  const std::size_t batch = X.dim(0), cin = X.dim(1), h = X.dim(2), wd = X.dim(3);
  const std::size_t cout = W.dim(0), k = W.dim(2);
  if (W.dim(1) != cin) shape_error("conv2d", "weight input channels " + std::to_string(W.dim(1)) + " != " + std::to_string(cin));
  if (W.dim(3) != k || k % 2 == 0) shape_error("conv2d", "kernel must be square with odd size");
  if (vector_length("conv2d", b.value(), "bias") != cout) shape_error("conv2d", "bias length != Cout");
  const std::size_t pad = k / 2, pix = h * wd, width = cin * k * k;
  // Per-batch im2col matrices [pix x width], kept for backward.
  auto cols = std::make_shared<Buffer>(batch * pix * width, 0.0);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < wd; ++j) {
        double* row = cols->data() + (n * pix + i * wd + j) * width;
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t di = 0; di < k; ++di)
            for (std::size_t dj = 0; dj < k; ++dj, ++row) {
              const auto yi = static_cast<std::ptrdiff_t>(i + di) - static_cast<std::ptrdiff_t>(pad);
              const auto xj = static_cast<std::ptrdiff_t>(j + dj) - static_cast<std::ptrdiff_t>(pad);
              if (yi < 0 || xj < 0 || yi >= static_cast<std::ptrdiff_t>(h) || xj >= static_cast<std::ptrdiff_t>(wd)) continue;
              *row = X[((n * cin + c) * h + static_cast<std::size_t>(yi)) * wd + static_cast<std::size_t>(xj)];
            }
      }
  Tensor out({batch, cout, h, wd});
  const auto Wm = cmap(W.data(), cout, width);
  const auto& bv = b.value();
  for (std::size_t n = 0; n < batch; ++n) {
    auto O = mmap(out.data().subspan(n * cout * pix, cout * pix), cout, pix);
    O.noalias() = Wm * cmap(std::span<const double>(*cols).subspan(n * pix * width, pix * width), pix, width).transpose();
    for (std::size_t c = 0; c < cout; ++c) O.row(static_cast<Eigen::Index>(c)).array() += bv[c];
  }
  const std::size_t ix = x.id, iw = w.id, ib = b.id;
  return x.graph->record(
      "conv2d", std::move(out), {x, w, b},
      [ix, iw, ib, cols, batch, cin, cout, h, wd, k, pad, pix, width](Graph& g, std::size_t self) {
        auto d = g.out_grad(self);
        const bool gx = g.requires_grad(ix), gw = g.requires_grad(iw), gb = g.requires_grad(ib);
        const auto Wm = cmap(g.value(iw).data(), cout, width);
        for (std::size_t n = 0; n < batch; ++n) {
          const auto dO = cmap(d.subspan(n * cout * pix, cout * pix), cout, pix);
          const auto C = cmap(std::span<const double>(*cols).subspan(n * pix * width, pix * width), pix, width);
          if (gw) mmap(g.grad_sink(iw), cout, width).noalias() += dO * C;
          if (gb) {
            auto s = g.grad_sink(ib);
            for (std::size_t c = 0; c < cout; ++c) s[c] += dO.row(static_cast<Eigen::Index>(c)).sum();
          }
          if (gx) {
            RowMat dcols = dO.transpose() * Wm;
            auto s = g.grad_sink(ix);
            for (std::size_t i = 0; i < h; ++i)
              for (std::size_t j = 0; j < wd; ++j) {
                const double* row = dcols.data() + (i * wd + j) * width;
                for (std::size_t c = 0; c < cin; ++c)
                  for (std::size_t di = 0; di < k; ++di)
                    for (std::size_t dj = 0; dj < k; ++dj, ++row) {
                      const auto yi = static_cast<std::ptrdiff_t>(i + di) - static_cast<std::ptrdiff_t>(pad);
                      const auto xj = static_cast<std::ptrdiff_t>(j + dj) - static_cast<std::ptrdiff_t>(pad);
                      if (yi < 0 || xj < 0 || yi >= static_cast<std::ptrdiff_t>(h) || xj >= static_cast<std::ptrdiff_t>(wd)) continue;
                      s[((n * cin + c) * h + static_cast<std::size_t>(yi)) * wd + static_cast<std::size_t>(xj)] += *row;
                    }
              }
          }
        }
      });
}

Var maxpool2x2(Var x) {
  const auto& X = x.value();
  if (X.rank() != 4) shape_error("maxpool2x2", "x must be [B x C x H x W], got " + shape_string(X.shape()));
  const std::size_t batch = X.dim(0), ch = X.dim(1), h = X.dim(2), wd = X.dim(3);
  const std::size_t oh = (h + 1) / 2, ow = (wd + 1) / 2;
  Tensor out({batch, ch, oh, ow});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < batch * ch; ++p)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = p * h * wd + 2 * i * wd + 2 * j;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t yi = 2 * i + di, xj = 2 * j + dj;
            if (yi >= h || xj >= wd) continue;
            const std::size_t idx = p * h * wd + yi * wd + xj;
            if (X[idx] > X[best]) best = idx;
          }
        const std::size_t o = (p * oh + i) * ow + j;
        out[o] = X[best];
        argmax[o] = best;
      }
  const std::size_t ix = x.id;
  return x.graph->record("maxpool2x2", std::move(out), {x}, [ix, argmax = std::move(argmax)](Graph& g, std::size_t self) {
    auto d = g.out_grad(self);
    auto s = g.grad_sink(ix);
    for (std::size_t o = 0; o < d.size(); ++o) s[argmax[o]] += d[o];
  });
}

Var attention_heads(Var q, Var k, Var v, std::size_t batch, std::size_t heads, Tensor* weights) {
  const auto& Q = q.value();
  const auto& K = k.value();
  const auto& V = v.value();
  require_rank2("attention_heads", Q, "q");
  if (!same_shape(Q, K) || !same_shape(Q, V)) {
    shape_error("attention_heads", "q/k/v shapes differ: " + shape_string(Q.shape()) + ", " +
                                       shape_string(K.shape()) + ", " + shape_string(V.shape()));
  }
  if (batch == 0 || heads == 0 || Q.dim(0) % batch != 0 || Q.dim(1) % heads != 0) {
    shape_error("attention_heads", "batch/heads do not divide " + shape_string(Q.shape()));
  }
  const std::size_t t = Q.dim(0) / batch, width = Q.dim(1), d = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d));
  auto w_store = std::make_shared<Buffer>(batch * heads * t * t);
  Tensor out({batch * t, width});
  const auto ti = static_cast<Eigen::Index>(t), di = static_cast<Eigen::Index>(d);
  const Strided stride(static_cast<Eigen::Index>(width));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t l = 0; l < heads; ++l) {
      const std::size_t off = b * t * width + l * d;
      CStridedMap Qb(Q.data().data() + off, ti, di, stride);
      CStridedMap Kb(K.data().data() + off, ti, di, stride);
      CStridedMap Vb(V.data().data() + off, ti, di, stride);
      MMap Wb(w_store->data() + (b * heads + l) * t * t, ti, ti);
      Wb.noalias() = (Qb * Kb.transpose()) * inv_sqrt;
      for (Eigen::Index r = 0; r < ti; ++r) {
        auto row = Wb.row(r);
        row.array() = (row.array() - row.maxCoeff()).exp();
        row /= row.sum();
      }
      MStridedMap Ob(out.data().data() + off, ti, di, stride);
      Ob.noalias() = Wb * Vb;
    }
  if (weights) {
    *weights = Tensor({batch, heads, t, t});
    weights->values() = *w_store;
  }
  const std::size_t iq = q.id, ik = k.id, iv = v.id;
  return q.graph->record(
      "attention_heads", std::move(out), {q, k, v},
      [iq, ik, iv, w_store, batch, heads, t, width, d, inv_sqrt](Graph& g, std::size_t self) {
        const auto ti = static_cast<Eigen::Index>(t), di = static_cast<Eigen::Index>(d);
        const Strided stride(static_cast<Eigen::Index>(width));
        const auto& Q = g.value(iq);
        const auto& K = g.value(ik);
        const auto& V = g.value(iv);
        const auto dOut = g.out_grad(self);
        const bool gq = g.requires_grad(iq), gk = g.requires_grad(ik), gv = g.requires_grad(iv);
        double* sq = gq ? g.grad_sink(iq).data() : nullptr;
        double* sk = gk ? g.grad_sink(ik).data() : nullptr;
        double* sv = gv ? g.grad_sink(iv).data() : nullptr;
        RowMat dW(ti, ti), dS(ti, ti);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t l = 0; l < heads; ++l) {
            const std::size_t off = b * t * width + l * d;
            CStridedMap Qb(Q.data().data() + off, ti, di, stride);
            CStridedMap Kb(K.data().data() + off, ti, di, stride);
            CStridedMap Vb(V.data().data() + off, ti, di, stride);
            CStridedMap dO(dOut.data() + off, ti, di, stride);
            CMap Wb(w_store->data() + (b * heads + l) * t * t, ti, ti);
            if (gv) MStridedMap(sv + off, ti, di, stride).noalias() += Wb.transpose() * dO;
            if (!gq && !gk) continue;
            dW.noalias() = dO * Vb.transpose();
            const Eigen::VectorXd dots = (dW.array() * Wb.array()).rowwise().sum();
            dS = Wb.array() * (dW.colwise() - dots).array();
            dS *= inv_sqrt;
            if (gq) MStridedMap(sq + off, ti, di, stride).noalias() += dS * Kb;
            if (gk) MStridedMap(sk + off, ti, di, stride).noalias() += dS.transpose() * Qb;
          }
      });
}

Var quantile_huber(Var pred, Var target, std::span<const double> taus, double kappa) {
  const auto& P = pred.value();
  const auto& T = target.value();
  require_rank2("quantile_huber", P, "pred");
  require_rank2("quantile_huber", T, "target");
  const std::size_t batch = P.dim(0), n = P.dim(1), m = T.dim(1);
  if (T.dim(0) != batch) shape_error("quantile_huber", "pred and target batch sizes differ");
  if (taus.size() != batch * n) shape_error("quantile_huber", "need one tau per prediction");
  if (!(kappa > 0.0)) throw std::invalid_argument("quantile_huber: kappa must be positive");
  std::vector<double> tau(taus.begin(), taus.end());
  const double norm = 1.0 / static_cast<double>(batch * n * m);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double u = T[b * m + j] - P[b * n + i];
        const double au = std::abs(u);
        const double h = au <= kappa ? 0.5 * u * u : kappa * (au - 0.5 * kappa);
        loss += std::abs(tau[b * n + i] - (u < 0.0 ? 1.0 : 0.0)) * h / kappa;
      }
  const std::size_t ip = pred.id, it = target.id;
  return pred.graph->record(
      "quantile_huber", Tensor({1}, {loss * norm}), {pred},
      [ip, it, batch, n, m, kappa, norm, tau = std::move(tau)](Graph& g, std::size_t self) {
        const double d = g.out_grad(self)[0] * norm;
        const auto& P = g.value(ip);
        const auto& T = g.value(it);
        auto s = g.grad_sink(ip);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
              const double u = T[b * m + j] - P[b * n + i];
              const double dh = std::abs(u) <= kappa ? u : (u > 0 ? kappa : -kappa);
              const double w = std::abs(tau[b * n + i] - (u < 0.0 ? 1.0 : 0.0));
              s[b * n + i] -= d * w * dh / kappa;
            }
      });
}

}  // namespace da3::ops
