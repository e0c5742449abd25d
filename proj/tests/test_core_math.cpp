#include <catch2/catch_amalgamated.hpp>

#include "subm/adam.hpp"
#include "subm/grad_check.hpp"
#include "subm/graph.hpp"
#include "subm/tensor.hpp"

using namespace subm;

namespace {

Tensor rand_tensor(std::vector<size_t> shape, Rng& rng, float std = 1.0f) {
  return Tensor::random_normal(std::move(shape), 0.0f, std, rng);
}

// Independent oracle: naive float triple loop in canonical i, j, t order.
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  const size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor c({m, n});
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (size_t t = 0; t < k; ++t) acc += a.data[i * k + t] * b.data[t * n + j];
      c.data[i * n + j] = acc;
    }
  return c;
}

}  // namespace

TEST_CASE("matmul identity") {
  Tensor b({2, 2}, {5, 6, 7, 8});
  Tensor c = matmul(Tensor::identity(2), b);
  REQUIRE(c.data == b.data);
}

TEST_CASE("matmul 2x2 hand computed") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 2}, {5, 6, 7, 8});
  Tensor c = matmul(a, b);
  REQUIRE(c.data == std::vector<float>{19, 22, 43, 50});
}

TEST_CASE("matmul matches naive triple-loop oracle to 0 ULP") {
  Rng rng(42);
  Tensor a = rand_tensor({7, 3}, rng);
  Tensor b = rand_tensor({3, 5}, rng);
  Tensor c = matmul(a, b);
  Tensor expect = matmul_oracle(a, b);
  for (size_t i = 0; i < c.data.size(); ++i) REQUIRE(c.data[i] == expect.data[i]);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a({2, 3});
  Tensor b({4, 5});
  try {
    matmul(a, b);
    FAIL("expected dimension error");
  } catch (const Error& e) {
    REQUIRE(e.code() == ErrCode::dim_mismatch);
    REQUIRE(std::string(e.what()).find("[2x3]") != std::string::npos);
    REQUIRE(std::string(e.what()).find("[4x5]") != std::string::npos);
  }
}

TEST_CASE("matmul_nt and matmul_tn agree with transposed matmul") {
  Rng rng(7);
  Tensor a = rand_tensor({4, 6}, rng);
  Tensor b = rand_tensor({5, 6}, rng);
  Tensor bt({6, 5});
  for (size_t i = 0; i < 5; ++i)
    for (size_t j = 0; j < 6; ++j) bt.data[j * 5 + i] = b.data[i * 6 + j];
  Tensor via_nt = matmul_nt(a, b);
  Tensor via_mm = matmul(a, bt);
  for (size_t i = 0; i < via_nt.data.size(); ++i)
    REQUIRE_THAT(via_nt.data[i], Catch::Matchers::WithinRel(via_mm.data[i], 1e-6f));

  Tensor c = rand_tensor({6, 3}, rng);
  Tensor at({6, 4});
  for (size_t i = 0; i < 4; ++i)
    for (size_t j = 0; j < 6; ++j) at.data[j * 4 + i] = a.data[i * 6 + j];
  Tensor via_tn = matmul_tn(at, c);  // (at)^T * c = a * c
  Tensor direct = matmul(a, c);
  for (size_t i = 0; i < via_tn.data.size(); ++i)
    REQUIRE_THAT(via_tn.data[i], Catch::Matchers::WithinRel(direct.data[i], 1e-5f));
}

TEST_CASE("layer_norm constant input is all beta") {
  Tensor x = Tensor::full({8}, 3.25f);
  Tensor gamma = Tensor::full({8}, 1.0f);
  Tensor beta = Tensor::zeros({8});
  Tensor y = layer_norm(x, gamma, beta);
  for (float v : y.data) REQUIRE(v == 0.0f);
}

TEST_CASE("layer_norm symmetric unit-variance case") {
  Tensor x({2}, {1.0f, -1.0f});
  Tensor gamma = Tensor::full({2}, 1.0f);
  Tensor beta = Tensor::zeros({2});
  Tensor y = layer_norm(x, gamma, beta, 1e-12f);
  REQUIRE_THAT(y.data[0], Catch::Matchers::WithinAbs(1.0, 1e-5));
  REQUIRE_THAT(y.data[1], Catch::Matchers::WithinAbs(-1.0, 1e-5));
}

TEST_CASE("layer_norm matches direct 64-bit formula oracle") {
  Rng rng(3);
  const size_t d = 16;
  Tensor x = rand_tensor({d}, rng, 2.0f);
  Tensor gamma = rand_tensor({d}, rng);
  Tensor beta = rand_tensor({d}, rng);
  const double eps = 1e-5;
  Tensor y = layer_norm(x, gamma, beta, static_cast<float>(eps));

  double mean = 0, var = 0;
  for (float v : x.data) mean += v;
  mean /= d;
  for (float v : x.data) var += (v - mean) * (v - mean);
  var /= d;
  for (size_t j = 0; j < d; ++j) {
    const double expect = gamma.data[j] * (x.data[j] - mean) / std::sqrt(var + eps) + beta.data[j];
    REQUIRE_THAT(static_cast<double>(y.data[j]), Catch::Matchers::WithinRel(expect, 1e-6));
  }
}

TEST_CASE("relu basics and idempotence") {
  Tensor x({3}, {-1.0f, 0.0f, 2.0f});
  REQUIRE(relu(x).data == std::vector<float>{0, 0, 2});
  Tensor neg = Tensor::full({5}, -3.0f);
  for (float v : relu(neg).data) REQUIRE(v == 0.0f);
  Rng rng(9);
  Tensor r = rand_tensor({64}, rng);
  REQUIRE(relu(relu(r)).data == relu(r).data);
}

TEST_CASE("mse_loss basics") {
  Tensor a({3}, {1, 2, 3});
  REQUIRE(mse_loss(a, a) == 0.0f);
  Tensor p({1}, {2.0f});
  Tensor t({1}, {0.0f});
  REQUIRE(mse_loss(p, t) == 4.0f);
}

TEST_CASE("mse_loss matches 64-bit summation oracle") {
  Rng rng(11);
  Tensor p = rand_tensor({40, 64}, rng);
  Tensor t = rand_tensor({40, 64}, rng);
  double acc = 0;
  for (size_t i = 0; i < p.data.size(); ++i) {
    const double d = static_cast<double>(p.data[i]) - static_cast<double>(t.data[i]);
    acc += d * d;
  }
  const double expect = acc / static_cast<double>(p.numel());
  REQUIRE_THAT(static_cast<double>(mse_loss(p, t)), Catch::Matchers::WithinRel(expect, 1e-6));
}

TEST_CASE("backward of mse(w*x, 0) gives 2*w*x^2") {
  Tensor w({1, 1}, {3.0f});
  Tensor x({1, 1}, {1.0f});
  Tensor zero({1, 1}, {0.0f});

  Graph g;
  auto pred = g.matmul(g.input(x), g.leaf(&w, true));
  auto loss = g.mse(pred, g.input(zero));
  REQUIRE(g.value(loss).data[0] == 9.0f);
  GradMap grads = g.backward(loss);
  REQUIRE(grads.size() == 1);
  REQUIRE(grads.at(&w).data[0] == 6.0f);
}

TEST_CASE("backward with frozen parameter yields empty map") {
  Tensor w({1, 1}, {3.0f});
  Tensor x({1, 1}, {1.0f});
  Tensor zero({1, 1}, {0.0f});
  Graph g;
  auto loss = g.mse(g.matmul(g.input(x), g.leaf(&w, false)), g.input(zero));
  GradMap grads = g.backward(loss);
  REQUIRE(grads.empty());
}

TEST_CASE("gradients accumulate additively on parameter reuse") {
  // loss = mse(w*x1 + w*x2, 0) in 1-D: pred = w*(x1+x2), dloss/dw = 2*w*(x1+x2)^2
  Tensor w({1, 1}, {0.5f});
  Tensor x1({1, 1}, {1.0f});
  Tensor x2({1, 1}, {2.0f});
  Tensor zero({1, 1}, {0.0f});
  Graph g;
  auto wl = g.leaf(&w, true);
  auto pred = g.add(g.matmul(g.input(x1), wl), g.matmul(g.input(x2), wl));
  auto loss = g.mse(pred, g.input(zero));
  GradMap grads = g.backward(loss);
  REQUIRE_THAT(grads.at(&w).data[0], Catch::Matchers::WithinRel(2.0f * 0.5f * 9.0f, 1e-6f));
}

TEST_CASE("backward rejects non-scalar and foreign losses") {
  Tensor w({2}, {1.0f, 2.0f});
  Graph g;
  auto leaf = g.leaf(&w, true);
  REQUIRE_THROWS_AS(g.backward(leaf), Error);

  Graph other;
  auto foreign = other.input(Tensor({1}, {0.0f}));
  REQUIRE_THROWS_AS(g.backward(foreign), Error);
}

TEST_CASE("layer_norm backward matches finite differences") {
  Rng rng(5);
  Tensor x = rand_tensor({3, 8}, rng);
  Tensor gamma = rand_tensor({8}, rng, 0.5f);
  Tensor beta = rand_tensor({8}, rng, 0.5f);
  Tensor target = rand_tensor({3, 8}, rng);

  Graph g;
  auto y = g.layer_norm(g.leaf(&x, true), g.leaf(&gamma, true), g.leaf(&beta, true));
  auto loss = g.mse(y, g.input(target));
  GradMap grads = g.backward(loss);

  auto loss64 = [&](const std::vector<std::vector<double>>& p) {
    TensorT<double> xd({3, 8}, p[0]);
    TensorT<double> gd({8}, p[1]);
    TensorT<double> bd({8}, p[2]);
    TensorT<double> yd = layer_norm(xd, gd, bd, 1e-5);
    return static_cast<double>(mse_loss(yd, target.cast<double>()));
  };
  auto report = grad_check(loss64, {&x, &gamma, &beta}, grads, 1e-3, 1e-3);
  INFO(report.worst_coord << " rel err " << report.max_rel_err);
  REQUIRE(report.pass);
}

TEST_CASE("grad_check on quadratic loss") {
  Tensor w({3}, {1.0f, -2.0f, 0.5f});
  Graph g;
  auto wl = g.leaf(&w, true);
  auto loss = g.mse(wl, g.input(Tensor::zeros({3})));
  GradMap grads = g.backward(loss);
  auto loss64 = [&](const std::vector<std::vector<double>>& p) {
    double acc = 0;
    for (double v : p[0]) acc += v * v;
    return acc / 3.0;
  };
  auto report = grad_check(loss64, {&w}, grads, 1e-3, 1e-6);
  REQUIRE(report.pass);
  REQUIRE(report.max_rel_err < 1e-6);
}

TEST_CASE("grad_check rejects eps = 0") {
  Tensor w({1}, {1.0f});
  GradMap grads;
  grads.emplace(&w, Tensor({1}, {2.0f}));
  auto loss64 = [](const std::vector<std::vector<double>>& p) { return p[0][0] * p[0][0]; };
  REQUIRE_THROWS_AS(grad_check(loss64, {&w}, grads, 0.0, 1e-3), Error);
}

TEST_CASE("grad_check names the coordinate producing a non-finite loss") {
  Tensor w({2}, {1.0f, 0.0f});
  GradMap grads;
  grads.emplace(&w, Tensor({2}, {0.0f, 0.0f}));
  auto loss64 = [](const std::vector<std::vector<double>>& p) {
    return p[0][1] > 0.0 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
  };
  try {
    grad_check(loss64, {&w}, grads, 1e-3, 1e-3);
    FAIL("expected error");
  } catch (const Error& e) {
    REQUIRE(std::string(e.what()).find("param0[1]") != std::string::npos);
  }
}

TEST_CASE("adam zero gradient leaves params unchanged and decays moments") {
  Tensor p({2}, {1.0f, -1.0f});
  Tensor p_before = p;
  AdamState state;
  AdamHyper hp;
  // prime the moments with one nonzero step, then feed zeros
  GradMap g1;
  g1.emplace(&p, Tensor({2}, {1.0f, 1.0f}));
  adam_step({&p}, g1, state, hp);
  const float m_after_1 = state.find(&p)->m.data[0];
  Tensor p_after_1 = p;
  GradMap g0;
  g0.emplace(&p, Tensor::zeros({2}));
  adam_step({&p}, g0, state, hp);
  // zero grad: m halves toward zero, update direction is m-hat which is
  // nonzero only because of the primed moment
  REQUIRE(std::abs(state.find(&p)->m.data[0]) < std::abs(m_after_1));

  // a fresh parameter fed only zero gradients never moves
  Tensor q({2}, {0.5f, 2.0f});
  AdamState s2;
  GradMap gz;
  gz.emplace(&q, Tensor::zeros({2}));
  adam_step({&q}, gz, s2, hp);
  adam_step({&q}, gz, s2, hp);
  REQUIRE(q.data == std::vector<float>{0.5f, 2.0f});
  (void)p_after_1;
  (void)p_before;
}

TEST_CASE("adam first step with g=1 moves by about -lr") {
  Tensor p({1}, {0.0f});
  AdamState state;
  AdamHyper hp;
  hp.lr = 0.1f;
  GradMap g;
  g.emplace(&p, Tensor({1}, {1.0f}));
  adam_step({&p}, g, state, hp);
  // bias-corrected m-hat = 1, v-hat = 1 => delta = -lr / (1 + eps)
  REQUIRE_THAT(p.data[0], Catch::Matchers::WithinAbs(-0.1, 1e-6));
}

TEST_CASE("adam drives a convex quadratic down") {
  // loss = mean(p^2); gradient 2p/3
  Tensor p({3}, {2.0f, -3.0f, 1.5f});
  AdamState state;
  AdamHyper hp;
  hp.lr = 0.05f;
  std::vector<float> losses;
  for (int step = 0; step < 100; ++step) {
    Graph g;
    auto loss = g.mse(g.leaf(&p, true), g.input(Tensor::zeros({3})));
    losses.push_back(g.value(loss).data[0]);
    GradMap grads = g.backward(loss);
    adam_step({&p}, grads, state, hp);
  }
  for (size_t i = 6; i < losses.size(); ++i) REQUIRE(losses[i] < losses[i - 1]);
}

TEST_CASE("adam rejects gradient keys outside the parameter list") {
  Tensor p({1}, {1.0f});
  Tensor other({1}, {1.0f});
  AdamState state;
  GradMap g;
  g.emplace(&other, Tensor({1}, {1.0f}));
  REQUIRE_THROWS_AS(adam_step({&p}, g, state, AdamHyper{}), Error);
}

TEST_CASE("frozen parameters are bit-identical across adam steps") {
  Tensor trainable({2}, {1.0f, 2.0f});
  Tensor frozen({2}, {0.25f, -0.75f});
  Tensor frozen_copy = frozen;
  AdamState state;
  for (int step = 0; step < 20; ++step) {
    Graph g;
    auto pred = g.add(g.leaf(&trainable, true), g.leaf(&frozen, false));
    auto loss = g.mse(pred, g.input(Tensor::zeros({2})));
    GradMap grads = g.backward(loss);
    REQUIRE(grads.find(&frozen) == grads.end());
    adam_step({&trainable}, grads, state, AdamHyper{});
  }
  REQUIRE(std::memcmp(frozen.data.data(), frozen_copy.data.data(), 2 * sizeof(float)) == 0);
}

TEST_CASE("tensor invariant: product(shape) == data length") {
  REQUIRE_THROWS_AS(Tensor({2, 3}, {1.0f, 2.0f}), Error);
  Tensor ok({2, 3}, {1, 2, 3, 4, 5, 6});
  REQUIRE(ok.numel() == 6);
}
