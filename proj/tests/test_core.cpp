#include <bit>
#include <cmath>
#include <filesystem>
#include <random>

#include "da3/core/checkpoint.hpp"
#include "da3/core/ops.hpp"
#include "da3/core/optimizer.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace da3;
using da3::testing::check_gradients;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = d(rng);
  return t;
}

// sum(out * w) with fixed random w, so every output entry matters differently.
Var weighted_sum(Var out, std::uint64_t seed) {
  Rng rng(seed);
  return ops::sum(ops::mul(out, out.graph->constant(random_tensor(out.shape(), rng))));
}

}  // namespace

TEST_CASE("matmul examples") {
  Graph g;
  auto m = Tensor::from_rows({{3, -1}, {2, 5}});
  auto id = Tensor::from_rows({{1, 0}, {0, 1}});
  auto out = ops::matmul(g.constant(id), g.constant(m));
  CHECK(out.value().values() == m.values());

  auto c = ops::matmul(g.constant(Tensor::from_rows({{1, 2}, {3, 4}})), g.constant(Tensor::from_rows({{0}, {1}})));
  CHECK(c.shape() == Shape{2, 1});
  CHECK(c.value()[0] == 2.0);
  CHECK(c.value()[1] == 4.0);

  CHECK_THROWS_AS(ops::matmul(g.constant(Tensor({2, 3})), g.constant(Tensor({2, 3}))), std::invalid_argument);
}

TEST_CASE("matmul gradient of sum matches finite differences") {
  Rng rng(11);
  ParameterSet ps;
  auto& a = ps.add("a", random_tensor({3, 4}, rng));
  auto& b = ps.add("b", random_tensor({4, 2}, rng));
  auto r = check_gradients(ps, [&](Graph& g) { return ops::sum(ops::matmul(g.parameter(a), g.parameter(b))); });
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("softmax_rows examples") {
  Graph g;
  auto z = ops::softmax_rows(g.constant(Tensor({1, 4})));
  for (double v : z.value().data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  auto big = ops::softmax_rows(g.constant(Tensor::from_rows({{1000, 1000}})));
  CHECK(big.value()[0] == 0.5);
  CHECK(big.value()[1] == 0.5);

  auto s = ops::softmax_rows(g.constant(Tensor::from_rows({{1, 2, 3}})));
  const double z0 = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(s.value()[i] - std::exp(i + 1.0) / z0) < 1e-12);

  CHECK_THROWS_AS(ops::softmax_rows(g.constant(Tensor::from_rows({{1, std::nan("")}}))), std::invalid_argument);
}

TEST_CASE("softmax rows are stochastic on random input") {
  Rng rng(3);
  Graph g;
  for (int trial = 0; trial < 20; ++trial) {
    auto y = ops::softmax_rows(g.constant(random_tensor({6, 9}, rng, 20.0)));
    for (std::size_t r = 0; r < 6; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 9; ++c) {
        const double v = y.value().at(r, c);
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        total += v;
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("layer_norm examples") {
  Graph g;
  auto gain = g.constant(init::ones({2}));
  auto bias = g.constant(init::zeros({2}));
  auto c = ops::layer_norm(g.constant(Tensor::from_rows({{7, 7}})), gain, bias);
  CHECK(c.value()[0] == 0.0);
  CHECK(c.value()[1] == 0.0);

  // mean 0, variance 1: each entry scaled by 1/sqrt(1 + 1e-5).
  auto y = ops::layer_norm(g.constant(Tensor::from_rows({{1, -1}})), gain, bias);
  const double expected = 1.0 / std::sqrt(1.0 + 1e-5);
  CHECK(std::abs(y.value()[0] - expected) < 1e-15);
  CHECK(std::abs(y.value()[1] + expected) < 1e-15);
  CHECK(y.value()[0] == doctest::Approx(0.99999).epsilon(1e-5));
}

TEST_CASE("layer_norm gradient") {
  Rng rng(5);
  ParameterSet ps;
  auto& x = ps.add("x", random_tensor({4, 6}, rng));
  auto& gain = ps.add("gain", random_tensor({6}, rng));
  auto& bias = ps.add("bias", random_tensor({6}, rng));
  auto r = check_gradients(ps, [&](Graph& g) {
    return weighted_sum(ops::layer_norm(g.parameter(x), g.parameter(gain), g.parameter(bias)), 9);
  });
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("conv2d_patch examples") {
  Rng rng(2);
  Graph g;
  // P = 1 with identity kernels reproduces the input.
  Tensor kernels({3, 3, 1, 1});
  for (std::size_t c = 0; c < 3; ++c) kernels[c * 3 + c] = 1.0;
  auto x = random_tensor({3, 5, 5}, rng);
  auto y = ops::conv2d_patch(g.constant(x), g.constant(kernels), 1);
  CHECK(y.value().values() == x.values());

  auto shipped = ops::conv2d_patch(g.constant(Tensor({3, 7, 7})), g.constant(Tensor({64, 3, 1, 1})), 1);
  CHECK(shipped.shape() == Shape{64, 7, 7});

  CHECK_THROWS_AS(ops::conv2d_patch(g.constant(Tensor({3, 7, 7})), g.constant(Tensor({64, 4, 1, 1})), 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(ops::conv2d_patch(g.constant(Tensor({3, 3, 3})), g.constant(Tensor({4, 3, 5, 5})), 5),
                  std::invalid_argument);
}

TEST_CASE("conv2d_patch gradient w.r.t. kernels") {
  Rng rng(8);
  ParameterSet ps;
  auto x = random_tensor({2, 6, 6}, rng);
  auto& k = ps.add("kernels", random_tensor({5, 2, 2, 2}, rng));
  auto r = check_gradients(ps, [&](Graph& g) { return weighted_sum(ops::conv2d_patch(g.constant(x), g.parameter(k), 2), 4); });
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("patch_embed agrees with conv2d_patch plus bias") {
  Rng rng(4);
  const std::size_t batch = 3, nc = 2, R = 6, P = 2, C = 4;
  auto x = random_tensor({batch, nc, R, R}, rng);
  auto k = random_tensor({C, nc, P, P}, rng);
  auto bias = random_tensor({C}, rng);
  Graph g;
  auto tokens = ops::patch_embed(g.constant(x), g.constant(k), g.constant(bias), P);
  const std::size_t T = (R / P) * (R / P);
  REQUIRE(tokens.shape() == Shape{batch * T, C});
  for (std::size_t b = 0; b < batch; ++b) {
    Tensor single({nc, R, R}, std::vector<double>(x.values().begin() + b * nc * R * R, x.values().begin() + (b + 1) * nc * R * R));
    auto ref = ops::conv2d_patch(g.constant(single), g.constant(k), P);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t)
        CHECK(std::abs(tokens.value().at(b * T + t, c) - (ref.value()[c * T + t] + bias[c])) < 1e-12);
  }
}

TEST_CASE("adam examples") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    ParameterSet ps;
    auto& p = ps.add("p", Tensor::from_rows({{0.5, -2.0}}));
    Adam opt(ps);
    for (int i = 0; i < 5; ++i) {
      p.zero_grad();
      opt.step();
    }
    CHECK(p[0] == 0.5);
    CHECK(p[1] == -2.0);
    CHECK(opt.steps() == 5);
  }
  SUBCASE("first step with unit gradient moves by -lr") {
    ParameterSet ps;
    auto& p = ps.add("p", Tensor({1}, {3.0}));
    AdamConfig cfg;
    Adam opt(ps, cfg);
    p.zero_grad();
    p.grad()[0] = 1.0;
    opt.step();
    // m_hat = 1, v_hat = 1 after bias correction.
    const double expected = 3.0 - cfg.learning_rate / (1.0 + cfg.epsilon);
    CHECK(std::abs(p[0] - expected) < 1e-15);
  }
  SUBCASE("identical parameters with identical gradients stay identical") {
    ParameterSet ps;
    auto& a = ps.add("a", Tensor({3}, {0.1, 0.2, 0.3}));
    auto& b = ps.add("b", Tensor({3}, {0.1, 0.2, 0.3}));
    Adam opt(ps, AdamConfig{.learning_rate = 1e-2});
    Rng rng(1);
    for (int s = 0; s < 50; ++s) {
      auto g = random_tensor({3}, rng);
      a.zero_grad();
      b.zero_grad();
      for (int i = 0; i < 3; ++i) a.grad()[i] = b.grad()[i] = g[i];
      opt.step();
    }
    CHECK(a.values() == b.values());
  }
  SUBCASE("missing gradient is rejected") {
    ParameterSet ps;
    ps.add("p", Tensor({2}));
    Adam opt(ps);
    CHECK_THROWS_AS(opt.step(), std::invalid_argument);
  }
  SUBCASE("step counter increments by one") {
    ParameterSet ps;
    auto& p = ps.add("p", Tensor({1}));
    Adam opt(ps);
    for (std::uint64_t i = 1; i <= 3; ++i) {
      p.zero_grad();
      opt.step();
      CHECK(opt.steps() == i);
    }
    CHECK(opt.first_moment()[0][0] == 0.0);
  }
}

TEST_CASE("backward examples") {
  Rng rng(6);
  ParameterSet ps;
  auto& x = ps.add("x", random_tensor({3, 5}, rng));
  SUBCASE("sum gives all-ones") {
    ps.zero_grad();
    Graph g;
    g.backward(ops::sum(g.parameter(x)));
    for (double v : x.grad()) CHECK(v == 1.0);
  }
  SUBCASE("sum of softmax rows has zero gradient") {
    ps.zero_grad();
    Graph g;
    g.backward(ops::sum(ops::softmax_rows(g.parameter(x))));
    for (double v : x.grad()) CHECK(std::abs(v) < 1e-10);
  }
  SUBCASE("non-scalar loss is rejected") {
    Graph g;
    CHECK_THROWS_AS(g.backward(g.parameter(x)), std::invalid_argument);
  }
  SUBCASE("unreached leaves get zero gradient") {
    auto& y = ps.add("y", random_tensor({2}, rng));
    ps.zero_grad();
    Graph g;
    g.parameter(y);
    g.backward(ops::sum(g.parameter(x)));
    for (double v : y.grad()) CHECK(v == 0.0);
  }
}

TEST_CASE("backward twice accumulates exactly twice") {
  Rng rng(7);
  ParameterSet ps;
  auto& a = ps.add("a", random_tensor({4, 3}, rng));
  auto& b = ps.add("b", random_tensor({3, 2}, rng));
  ps.zero_grad();
  Graph g;
  auto loss = weighted_sum(ops::gelu(ops::matmul(g.parameter(a), g.parameter(b))), 2);
  g.backward(loss);
  const std::vector<double> once(a.grad().begin(), a.grad().end());
  g.backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(a.grad()[i] == 2.0 * once[i]);
}

TEST_CASE("matmul associativity on random 4x4 chains") {
  Rng rng(12);
  Graph g(false);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = g.constant(random_tensor({4, 4}, rng));
    auto b = g.constant(random_tensor({4, 4}, rng));
    auto c = g.constant(random_tensor({4, 4}, rng));
    auto left = ops::matmul(ops::matmul(a, b), c);
    auto right = ops::matmul(a, ops::matmul(b, c));
    for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(left.value()[i] - right.value()[i]) < 1e-9);
  }
}

// Every differentiable op, 5 random instances, central differences h = 1e-6.
TEST_CASE("randomized gradient checks for every op") {
  using Build = std::function<Var(Graph&, std::vector<Var>&)>;
  struct Case {
    const char* name;
    std::vector<Shape> inputs;
    Build build;
  };
  const std::vector<std::size_t> picks{1, 0, 2, 3};
  const std::vector<Case> cases{
      {"matmul", {{3, 4}, {4, 2}}, [](Graph&, auto& v) { return ops::matmul(v[0], v[1]); }},
      {"matmul_nt", {{3, 4}, {5, 4}}, [](Graph&, auto& v) { return ops::matmul_nt(v[0], v[1]); }},
      {"transpose", {{3, 4}}, [](Graph&, auto& v) { return ops::transpose(v[0]); }},
      {"add", {{2, 3}, {2, 3}}, [](Graph&, auto& v) { return ops::add(v[0], v[1]); }},
      {"sub", {{2, 3}, {2, 3}}, [](Graph&, auto& v) { return ops::sub(v[0], v[1]); }},
      {"mul", {{2, 3}, {2, 3}}, [](Graph&, auto& v) { return ops::mul(v[0], v[1]); }},
      {"scale", {{2, 3}}, [](Graph&, auto& v) { return ops::scale(v[0], -1.7); }},
      {"add_row", {{4, 3}, {3}}, [](Graph&, auto& v) { return ops::add_row(v[0], v[1]); }},
      {"add_tiled", {{6, 3}, {2, 3}}, [](Graph&, auto& v) { return ops::add_tiled(v[0], v[1]); }},
      {"gelu", {{3, 5}}, [](Graph&, auto& v) { return ops::gelu(v[0]); }},
      {"softmax_rows", {{3, 5}}, [](Graph&, auto& v) { return ops::softmax_rows(v[0]); }},
      {"layer_norm", {{3, 5}, {5}, {5}}, [](Graph&, auto& v) { return ops::layer_norm(v[0], v[1], v[2]); }},
      {"huber", {{4, 4}}, [](Graph&, auto& v) { return ops::huber(ops::scale(v[0], 2.0), 1.0); }},
      {"select_rows", {{7, 3}}, [](Graph&, auto& v) { return ops::select_rows(v[0], 3, 1); }},
      {"repeat_rows", {{2, 3}}, [](Graph&, auto& v) { return ops::repeat_rows(v[0], 3); }},
      {"prepend_token", {{6, 3}, {3}}, [](Graph&, auto& v) { return ops::prepend_token(v[0], v[1], 2); }},
      {"pick_columns", {{4, 5}}, [picks](Graph&, auto& v) { return ops::pick_columns(v[0], picks); }},
      {"dueling", {{3, 1}, {3, 4}}, [](Graph&, auto& v) { return ops::dueling(v[0], v[1]); }},
      {"conv2d_patch", {{2, 4, 4}, {3, 2, 2, 2}}, [](Graph&, auto& v) { return ops::conv2d_patch(v[0], v[1], 2); }},
      {"patch_embed", {{2, 2, 4, 4}, {3, 2, 2, 2}, {3}}, [](Graph&, auto& v) { return ops::patch_embed(v[0], v[1], v[2], 2); }},
      {"conv2d", {{2, 2, 5, 4}, {3, 2, 3, 3}, {3}}, [](Graph&, auto& v) { return ops::conv2d(v[0], v[1], v[2]); }},
      {"attention_heads", {{6, 4}, {6, 4}, {6, 4}}, [](Graph&, auto& v) { return ops::attention_heads(v[0], v[1], v[2], 2, 2); }},
      {"reshape", {{2, 6}}, [](Graph&, auto& v) { return ops::reshape(v[0], {3, 4}); }},
  };
  for (const auto& c : cases) {
    for (std::uint64_t instance = 0; instance < 5; ++instance) {
      Rng rng(100 + instance);
      ParameterSet ps;
      for (std::size_t i = 0; i < c.inputs.size(); ++i) ps.add("in" + std::to_string(i), random_tensor(c.inputs[i], rng));
      auto r = check_gradients(ps, [&](Graph& g) {
        std::vector<Var> vars;
        for (std::size_t i = 0; i < ps.size(); ++i) vars.push_back(g.parameter(ps.at(i)));
        return weighted_sum(c.build(g, vars), 1000 + instance);
      });
      INFO(c.name, " instance ", instance, " worst ", r.worst);
      CHECK(r.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("maxpool2x2 routes gradient to the window maximum") {
  Graph g;
  ParameterSet ps;
  auto& x = ps.add("x", Tensor({1, 1, 3, 3}, {1, 5, 2, 0, 3, 9, 4, 8, 7}));
  ps.zero_grad();
  auto y = ops::maxpool2x2(g.parameter(x));
  REQUIRE(y.shape() == Shape{1, 1, 2, 2});
  CHECK(y.value().values() == Buffer{5, 9, 8, 7});
  g.backward(ops::sum(y));
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{0, 1, 0, 0, 0, 1, 0, 1, 1});
}

TEST_CASE("quantile_huber gradient") {
  Rng rng(21);
  ParameterSet ps;
  auto& pred = ps.add("pred", random_tensor({3, 4}, rng, 3.0));
  auto target = random_tensor({3, 5}, rng, 3.0);
  std::vector<double> taus(12);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (auto& t : taus) t = u(rng);
  auto r = check_gradients(ps, [&](Graph& g) { return ops::quantile_huber(g.parameter(pred), g.constant(target), taus, 1.0); });
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  Rng rng(31);
  ParameterSet a;
  a.add("w", random_tensor({3, 7}, rng, 1e3));
  a.add("tiny", Tensor({2}, {5e-324, -0.0}));
  a.add("b", random_tensor({4}, rng));
  const auto dir = std::filesystem::temp_directory_path() / "da3_ckpt_test";
  std::filesystem::remove_all(dir);
  save_checkpoint(dir / "model", a, {{"arch", "test"}});
  ParameterSet b;
  b.add("w", Tensor({3, 7}));
  b.add("tiny", Tensor({2}));
  b.add("b", Tensor({4}));
  auto meta = load_checkpoint(dir / "model", b);
  CHECK(meta["arch"] == "test");
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < a.at(i).size(); ++k)
      CHECK(std::bit_cast<std::uint64_t>(a.at(i)[k]) == std::bit_cast<std::uint64_t>(b.at(i)[k]));
  CHECK(parameter_checksum(a) == parameter_checksum(b));
  CHECK(std::filesystem::file_size(dir / "model.bin") == 8 * (21 + 2 + 4));

  ParameterSet wrong;
  wrong.add("w", Tensor({7, 3}));
  wrong.add("tiny", Tensor({2}));
  wrong.add("b", Tensor({4}));
  CHECK_THROWS(load_checkpoint(dir / "model", wrong));
  std::filesystem::remove_all(dir);
}
