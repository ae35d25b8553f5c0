#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dsrgan/adam.hpp"
#include "dsrgan/graph.hpp"
#include "dsrgan/rng.hpp"
#include "oracles.hpp"

using namespace dsrgan;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (long i = 0; i < t.size(); ++i) t.values[i] = rng.uniform(lo, hi);
  return t;
}

// Random values kept away from the relu/leaky kink so central differences
// stay on one smooth branch.
Tensor random_tensor_off_kink(Shape shape, Rng& rng) {
  Tensor t = random_tensor(std::move(shape), rng);
  for (long i = 0; i < t.size(); ++i)
    if (std::abs(t.values[i]) < 1e-3) t.values[i] += (t.values[i] >= 0 ? 2e-3 : -2e-3);
  return t;
}

double dot_with(const Tensor& t, const Eigen::ArrayXd& r) { return (t.values * r).sum(); }

}  // namespace

TEST_CASE("conv2d trivial cases") {
  Graph g;
  Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
  Var y = conv2d(g.leaf(&x), g.leaf(&k), 1, 0);
  CHECK(g.value(y).shape == Shape{1, 1, 1, 1});
  CHECK(g.value(y).values[0] == 9.0);

  // identity kernel, k=3, pad=1: output equals input
  Graph g2;
  Rng rng(7);
  Tensor x2 = random_tensor({2, 1, 5, 5}, rng);
  Tensor id = Tensor::zeros({1, 1, 3, 3});
  id.values[4] = 1.0;
  Var y2 = conv2d(g2.leaf(&x2), g2.leaf(&id), 1, 1);
  CHECK((g2.value(y2).values == x2.values).all());
}

TEST_CASE("conv2d matches the loop oracle") {
  Rng rng(123);
  Tensor x = random_tensor({2, 3, 8, 8}, rng);
  Tensor k = random_tensor({4, 3, 3, 3}, rng);
  for (auto [stride, pad] : {std::pair{1, 0}, std::pair{1, 1}, std::pair{2, 1}}) {
    if ((8 + 2 * pad - 3) % stride != 0) continue;
    Graph g;
    Var y = conv2d(g.leaf(&x), g.leaf(&k), stride, pad);
    Tensor ref = oracles::loop_conv2d(x, k, stride, pad);
    REQUIRE(g.value(y).shape == ref.shape);
    CHECK(oracles::max_abs_diff(g.value(y).values, ref.values) < 1e-12);
  }
}

TEST_CASE("conv2d rejects bad geometry") {
  Graph g;
  Tensor x = Tensor::zeros({1, 2, 5, 5});
  Tensor k_badc = Tensor::zeros({1, 3, 3, 3});
  CHECK_THROWS_AS(conv2d(g.leaf(&x), g.leaf(&k_badc), 1, 0), std::invalid_argument);
  Tensor k = Tensor::zeros({1, 2, 3, 3});
  CHECK_THROWS_AS(conv2d(g.leaf(&x), g.leaf(&k), 3, 0), std::invalid_argument);  // non-exact
  Tensor kbig = Tensor::zeros({1, 2, 7, 7});
  CHECK_THROWS_AS(conv2d(g.leaf(&x), g.leaf(&kbig), 1, 0), std::invalid_argument);
}

TEST_CASE("conv2d_transposed trivial broadcast") {
  Graph g;
  Tensor x = Tensor::full({1, 1, 1, 1}, 3.25);
  Tensor k = Tensor::full({1, 1, 2, 2}, 1.0);
  Var y = conv2d_transposed(g.leaf(&x), g.leaf(&k), 1, 0);
  CHECK(g.value(y).shape == Shape{1, 1, 2, 2});
  for (long i = 0; i < 4; ++i) CHECK(g.value(y).values[i] == 3.25);
}

TEST_CASE("conv2d_transposed matches the zero-stuffed loop oracle") {
  Rng rng(99);
  Tensor x = random_tensor({2, 4, 4, 4}, rng);
  Tensor k = random_tensor({4, 3, 4, 4}, rng);
  for (auto [stride, pad] : {std::pair{1, 0}, std::pair{2, 1}, std::pair{2, 0}}) {
    Graph g;
    Var y = conv2d_transposed(g.leaf(&x), g.leaf(&k), stride, pad);
    Tensor ref = oracles::loop_conv2d_transposed(x, k, stride, pad);
    REQUIRE(g.value(y).shape == ref.shape);
    CHECK(oracles::max_abs_diff(g.value(y).values, ref.values) < 1e-12);
  }
}

TEST_CASE("conv2d / conv2d_transposed adjoint identity") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(mix_seed(41, seed));
    const int stride = 1 + static_cast<int>(rng.below(2));
    const int pad = static_cast<int>(rng.below(2));
    const int k = 3 + static_cast<int>(rng.below(2));
    const int c = 1 + static_cast<int>(rng.below(3));
    const int f = 1 + static_cast<int>(rng.below(3));
    int h = k + stride * (2 + static_cast<int>(rng.below(3))) - 2 * pad;
    Tensor x = random_tensor({2, c, h, h}, rng);
    Tensor kk = random_tensor({f, c, k, k}, rng);
    Graph g;
    Var yv = conv2d(g.leaf(&x), g.leaf(&kk), stride, pad);
    Tensor y = random_tensor(g.value(yv).shape, rng);
    Graph g2;
    Var xv = conv2d_transposed(g2.leaf(&y), g2.leaf(&kk), stride, pad);
    REQUIRE(g2.value(xv).shape == x.shape);
    const double lhs = (g.value(yv).values * y.values).sum();
    const double rhs = (x.values * g2.value(xv).values).sum();
    CHECK(std::abs(lhs - rhs) < 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("dense trivial and oracle cases") {
  Graph g;
  Rng rng(5);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor id = Tensor::zeros({4, 4});
  for (int i = 0; i < 4; ++i) id.values[i * 4 + i] = 1.0;
  Tensor zero_b = Tensor::zeros({4});
  Var y = dense(g.leaf(&x), g.leaf(&id), g.leaf(&zero_b));
  CHECK((g.value(y).values == x.values).all());

  Graph g2;
  Tensor w0 = Tensor::zeros({4, 2});
  Tensor b = Tensor::from({2}, {0.5, -1.5});
  Var y2 = dense(g2.leaf(&x), g2.leaf(&w0), g2.leaf(&b));
  for (int i = 0; i < 3; ++i) {
    CHECK(g2.value(y2).values[i * 2 + 0] == 0.5);
    CHECK(g2.value(y2).values[i * 2 + 1] == -1.5);
  }

  Graph g3;
  Tensor w = random_tensor({4, 2}, rng);
  Var y3 = dense(g3.leaf(&x), g3.leaf(&w), g3.leaf(&b));
  Tensor ref = oracles::loop_dense(x, w, b);
  CHECK(oracles::max_abs_diff(g3.value(y3).values, ref.values) < 1e-12);

  Graph g4;
  Tensor wbad = Tensor::zeros({5, 2});
  CHECK_THROWS_AS(dense(g4.leaf(&x), g4.leaf(&wbad), g4.leaf(&b)), std::invalid_argument);
}

TEST_CASE("activation definitions") {
  Graph g;
  Tensor x = Tensor::from({3}, {-1.0, 0.0, 2.0});
  Var r = relu(g.leaf(&x));
  CHECK(g.value(r).values[0] == 0.0);
  CHECK(g.value(r).values[1] == 0.0);
  CHECK(g.value(r).values[2] == 2.0);

  Tensor z = Tensor::from({1}, {0.0});
  CHECK(g.value(sigmoid_of(g.leaf(&z))).values[0] == 0.5);

  Tensor m5 = Tensor::from({1}, {-5.0});
  CHECK(g.value(leaky_relu(g.leaf(&m5), 0.2)).values[0] == doctest::Approx(-1.0).epsilon(1e-15));

  Tensor big = Tensor::from({2}, {50.0, -50.0});
  Var t = tanh_of(g.leaf(&big));
  CHECK(g.value(t).values[0] < 1.0);
  CHECK(g.value(t).values[1] > -1.0);
  CHECK_THROWS_AS(leaky_relu(g.leaf(&x), 1.5), std::invalid_argument);
}

TEST_CASE("batch_norm normalizes per channel and guards zero variance") {
  Rng rng(11);
  Tensor x = random_tensor({4, 3, 5, 5}, rng, -2.0, 3.0);
  Tensor gamma = Tensor::full({3}, 1.0);
  Tensor beta = Tensor::zeros({3});
  Tensor rm = Tensor::zeros({3});
  Tensor rv = Tensor::full({3}, 1.0);
  Graph g;
  Var y = batch_norm(g.leaf(&x), g.leaf(&gamma), g.leaf(&beta), BnMode::Train, &rm, &rv);
  const long plane = 25;
  for (int c = 0; c < 3; ++c) {
    double s = 0.0, s2 = 0.0;
    for (int n = 0; n < 4; ++n) {
      auto seg = g.value(y).values.segment((n * 3 + c) * plane, plane);
      s += seg.sum();
      s2 += seg.square().sum();
    }
    const double m = s / (4 * plane);
    const double sd = std::sqrt(s2 / (4 * plane) - m * m);
    CHECK(std::abs(m) < 1e-6);
    CHECK(sd == doctest::Approx(1.0).epsilon(1e-3));  // eps shifts it slightly
  }

  // direct statistics oracle
  for (int c = 0; c < 3; ++c) {
    double s = 0.0, s2 = 0.0;
    for (int n = 0; n < 4; ++n) {
      auto seg = x.values.segment((n * 3 + c) * plane, plane);
      s += seg.sum();
      s2 += seg.square().sum();
    }
    const double mu = s / (4 * plane);
    const double var = s2 / (4 * plane) - mu * mu;
    for (int n = 0; n < 4; ++n) {
      auto xs = x.values.segment((n * 3 + c) * plane, plane);
      Eigen::ArrayXd want = (xs - mu) / std::sqrt(var + 1e-5);
      Eigen::ArrayXd got = g.value(y).values.segment((n * 3 + c) * plane, plane);
      CHECK(oracles::max_abs_diff(want, got) < 1e-10);
    }
  }

  // constant channel: output is beta everywhere, no division by zero
  Tensor xc = Tensor::full({2, 1, 4, 4}, 7.0);
  Tensor gamma1 = Tensor::full({1}, 2.0);
  Tensor beta1 = Tensor::full({1}, -0.25);
  Tensor rm1 = Tensor::zeros({1});
  Tensor rv1 = Tensor::full({1}, 1.0);
  Graph g2;
  Var y2 = batch_norm(g2.leaf(&xc), g2.leaf(&gamma1), g2.leaf(&beta1), BnMode::Train, &rm1, &rv1);
  CHECK(g2.value(y2).all_finite());
  for (long i = 0; i < g2.value(y2).size(); ++i) CHECK(g2.value(y2).values[i] == -0.25);

  // running statistics move toward batch statistics
  CHECK(rm1.values[0] == doctest::Approx(0.1 * 7.0));
  CHECK(rv1.values[0] == doctest::Approx(0.9 * 1.0));
}

TEST_CASE("batch_norm eval mode reads running statistics") {
  Rng rng(13);
  Tensor x = random_tensor({2, 2, 3, 3}, rng);
  Tensor gamma = Tensor::full({2}, 1.5);
  Tensor beta = Tensor::full({2}, 0.5);
  Tensor rm = Tensor::from({2}, {0.25, -0.5});
  Tensor rv = Tensor::from({2}, {4.0, 0.25});
  Graph g;
  Var y = batch_norm(g.leaf(&x), g.leaf(&gamma), g.leaf(&beta), BnMode::Eval, &rm, &rv);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 2; ++c)
      for (long i = 0; i < 9; ++i) {
        const long off = (n * 2 + c) * 9 + i;
        const double want =
            1.5 * (x.values[off] - rm.values[c]) / std::sqrt(rv.values[c] + 1e-5) + 0.5;
        CHECK(g.value(y).values[off] == doctest::Approx(want).epsilon(1e-14));
      }
  // eval must not touch running stats
  CHECK(rm.values[0] == 0.25);
  CHECK(rv.values[1] == 0.25);
}

TEST_CASE("channel_concat semantics") {
  Rng rng(17);
  Tensor a = random_tensor({2, 3, 4, 4}, rng);
  Tensor b = random_tensor({2, 2, 4, 4}, rng);
  a.requires_grad = b.requires_grad = true;
  Graph g;
  Var va = g.leaf(&a), vb = g.leaf(&b);
  Var y = channel_concat(va, vb);
  CHECK(g.value(y).shape == Shape{2, 5, 4, 4});
  // slice oracle: round-trip equality
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 5; ++c) {
      const Tensor& src = c < 3 ? a : b;
      const int cs = c < 3 ? c : c - 3;
      const int csz = c < 3 ? 3 : 2;
      for (long i = 0; i < 16; ++i)
        CHECK(g.value(y).values[(n * 5 + c) * 16 + i] == src.values[(n * csz + cs) * 16 + i]);
    }
  }
  Var loss = sum(y);
  g.backward(loss);
  CHECK((a.grad == 1.0).all());
  CHECK((b.grad == 1.0).all());

  // concat with an empty operand is the identity
  Tensor empty = Tensor::zeros({2, 0, 4, 4});
  Graph g2;
  Var y2 = channel_concat(g2.leaf(&a), g2.leaf(&empty));
  CHECK(g2.value(y2).shape == Shape{2, 3, 4, 4});
  CHECK((g2.value(y2).values == a.values).all());

  Tensor bad = Tensor::zeros({2, 2, 3, 3});
  Graph g3;
  CHECK_THROWS_AS(channel_concat(g3.leaf(&a), g3.leaf(&bad)), std::invalid_argument);
}

TEST_CASE("backward basics") {
  Rng rng(23);
  Tensor x = random_tensor({3, 4}, rng);
  x.requires_grad = true;

  {
    Graph g;
    Var loss = sum(g.leaf(&x));
    g.backward(loss);
    CHECK((x.grad == 1.0).all());
  }
  x.zero_grad();
  {
    Graph g;
    Var v = g.leaf(&x);
    Var loss = mul_scalar(sum(mul(v, v)), 0.5);
    g.backward(loss);
    CHECK(oracles::max_abs_diff(x.grad, x.values) < 1e-15);
  }
  {
    Graph g;
    Var v = g.leaf(&x);
    CHECK_THROWS_AS(g.backward(v), std::invalid_argument);
  }
}

namespace {

// Projects the op output onto a random fixed cotangent and compares the
// resulting input gradients against central finite differences.
void check_gradients(std::vector<Tensor*> inputs,
                     const std::function<Var(Graph&, const std::vector<Var>&)>& build, Rng& rng,
                     double tol = 1e-4) {
  std::vector<Tensor> saved;
  for (Tensor* t : inputs) saved.push_back(*t);

  auto eval = [&](bool with_grad) {
    for (std::size_t i = 0; i < inputs.size(); ++i) inputs[i]->requires_grad = with_grad;
    Graph g;
    std::vector<Var> vars;
    for (Tensor* t : inputs) vars.push_back(g.leaf(t));
    return std::pair<Var, Graph*>{build(g, vars), nullptr};
  };

  // forward once for the output extent
  Graph g0;
  std::vector<Var> v0;
  for (Tensor* t : inputs) {
    t->requires_grad = true;
    t->zero_grad();
    v0.push_back(g0.leaf(t));
  }
  Var out0 = build(g0, v0);
  Eigen::ArrayXd cot(g0.value(out0).size());
  for (long i = 0; i < cot.size(); ++i) cot[i] = rng.uniform(-1.0, 1.0);

  Var loss0 = sum(mul(out0, g0.constant(Tensor(g0.value(out0).shape, cot))));
  g0.backward(loss0);
  std::vector<Eigen::ArrayXd> analytic;
  for (Tensor* t : inputs) {
    analytic.push_back(t->grad.size() ? t->grad : Eigen::ArrayXd::Zero(t->size()));
    t->requires_grad = false;
    t->zero_grad();
  }

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto f = [&](const Tensor& probe) {
      Tensor keep = *inputs[i];
      *inputs[i] = probe;
      Graph g;
      std::vector<Var> vars;
      for (Tensor* t : inputs) vars.push_back(g.leaf(t));
      Var out = build(g, vars);
      const double val = (g.value(out).values * cot).sum();
      *inputs[i] = keep;
      return val;
    };
    Eigen::ArrayXd fd = oracles::fd_gradient(f, *inputs[i]);
    INFO("input ", i);
    CHECK(oracles::max_rel_err(analytic[i], fd) < tol);
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) *inputs[i] = saved[i];
  (void)eval;
}

}  // namespace

// Finite-difference check for every differentiable operation on randomized
// small shapes, ten seeds each; relative error < 1e-4 at double precision.
TEST_CASE("per-operation finite-difference gradient checks") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(mix_seed(1000, seed));
    CAPTURE(seed);

    {  // conv2d
      Tensor x = random_tensor({2, 2, 6, 6}, rng);
      Tensor k = random_tensor({3, 2, 3, 3}, rng);
      check_gradients({&x, &k},
                      [](Graph&, const std::vector<Var>& v) { return conv2d(v[0], v[1], 1, 1); },
                      rng);
    }
    {  // conv2d, strided
      Tensor x = random_tensor({1, 2, 5, 5}, rng);
      Tensor k = random_tensor({2, 2, 3, 3}, rng);
      check_gradients({&x, &k},
                      [](Graph&, const std::vector<Var>& v) { return conv2d(v[0], v[1], 2, 1); },
                      rng);
    }
    {  // conv2d_transposed
      Tensor x = random_tensor({2, 3, 3, 3}, rng);
      Tensor k = random_tensor({3, 2, 4, 4}, rng);
      check_gradients(
          {&x, &k},
          [](Graph&, const std::vector<Var>& v) { return conv2d_transposed(v[0], v[1], 2, 1); },
          rng);
    }
    {  // dense
      Tensor x = random_tensor({3, 4}, rng);
      Tensor w = random_tensor({4, 2}, rng);
      Tensor b = random_tensor({2}, rng);
      check_gradients(
          {&x, &w, &b},
          [](Graph&, const std::vector<Var>& v) { return dense(v[0], v[1], v[2]); }, rng);
    }
    {  // smooth activations
      Tensor x = random_tensor({3, 5}, rng, -2.0, 2.0);
      check_gradients({&x}, [](Graph&, const std::vector<Var>& v) { return tanh_of(v[0]); }, rng);
      check_gradients({&x}, [](Graph&, const std::vector<Var>& v) { return sigmoid_of(v[0]); },
                      rng);
    }
    {  // kinked activations, inputs held off the kink
      Tensor x = random_tensor_off_kink({4, 4}, rng);
      check_gradients({&x}, [](Graph&, const std::vector<Var>& v) { return relu(v[0]); }, rng);
      check_gradients({&x},
                      [](Graph&, const std::vector<Var>& v) { return leaky_relu(v[0], 0.2); },
                      rng);
    }
    {  // batch_norm, train mode
      Tensor x = random_tensor({3, 2, 4, 4}, rng);
      Tensor gamma = random_tensor({2}, rng, 0.5, 1.5);
      Tensor beta = random_tensor({2}, rng);
      Tensor rm = Tensor::zeros({2});
      Tensor rv = Tensor::full({2}, 1.0);
      check_gradients({&x, &gamma, &beta},
                      [&rm, &rv](Graph&, const std::vector<Var>& v) {
                        return batch_norm(v[0], v[1], v[2], BnMode::Train, &rm, &rv);
                      },
                      rng);
    }
    {  // batch_norm, eval mode
      Tensor x = random_tensor({2, 2, 3, 3}, rng);
      Tensor gamma = random_tensor({2}, rng, 0.5, 1.5);
      Tensor beta = random_tensor({2}, rng);
      Tensor rm = random_tensor({2}, rng);
      Tensor rv = random_tensor({2}, rng, 0.5, 2.0);
      check_gradients({&x, &gamma, &beta},
                      [&rm, &rv](Graph&, const std::vector<Var>& v) {
                        return batch_norm(v[0], v[1], v[2], BnMode::Eval, &rm, &rv);
                      },
                      rng);
    }
    {  // channel_concat
      Tensor a = random_tensor({2, 2, 3, 3}, rng);
      Tensor b = random_tensor({2, 3, 3, 3}, rng);
      check_gradients(
          {&a, &b},
          [](Graph&, const std::vector<Var>& v) { return channel_concat(v[0], v[1]); }, rng);
    }
    {  // elementwise arithmetic and reductions
      Tensor a = random_tensor({2, 6}, rng);
      Tensor b = random_tensor({2, 6}, rng);
      check_gradients({&a, &b},
                      [](Graph&, const std::vector<Var>& v) { return mul(v[0], v[1]); }, rng);
      check_gradients({&a, &b},
                      [](Graph&, const std::vector<Var>& v) { return sub(v[0], v[1]); }, rng);
      check_gradients({&a},
                      [](Graph&, const std::vector<Var>& v) { return affine(v[0], -2.5, 0.75); },
                      rng);
      check_gradients({&a},
                      [](Graph&, const std::vector<Var>& v) { return reshape(mean(v[0]), {1}); },
                      rng);
      check_gradients({&a}, [](Graph&, const std::vector<Var>& v) { return row_l2_norm(v[0]); },
                      rng);
    }
    {  // absolute, off the kink
      Tensor a = random_tensor_off_kink({3, 4}, rng);
      check_gradients({&a}, [](Graph&, const std::vector<Var>& v) { return absolute(v[0]); },
                      rng);
    }
    {  // log_clamped inside the clamp region
      Tensor p = random_tensor({2, 5}, rng, 0.05, 0.95);
      check_gradients({&p}, [](Graph&, const std::vector<Var>& v) { return log_clamped(v[0]); },
                      rng);
    }
  }
}

TEST_CASE("log_clamped guards the endpoints") {
  Tensor p = Tensor::from({3}, {0.0, 1.0, 0.5});
  Graph g;
  Var y = log_clamped(g.leaf(&p));
  CHECK(g.value(y).all_finite());
  CHECK(g.value(y).values[0] == doctest::Approx(std::log(1e-7)));
  CHECK(g.value(y).values[1] == doctest::Approx(std::log(1.0 - 1e-7)));
  CHECK(g.value(y).values[2] == doctest::Approx(std::log(0.5)));
}

TEST_CASE("adam behaviour") {
  AdamHyper hyper;
  hyper.lr = 0.1;

  // zero gradient with fresh state leaves parameters unchanged
  Tensor p = Tensor::from({3}, {1.0, -2.0, 0.5});
  Tensor p0 = p;
  AdamState st;
  adam_step(p, Eigen::ArrayXd::Zero(3), st, hyper);
  CHECK((p.values == p0.values).all());

  // constant gradient: per-step move approaches lr * sign(g)
  Tensor q = Tensor::from({2}, {0.0, 0.0});
  AdamState st2;
  Eigen::ArrayXd grad(2);
  grad << 3.0, -0.25;
  Eigen::ArrayXd prev = q.values;
  double step0 = 0.0, step49 = 0.0;
  for (int t = 0; t < 50; ++t) {
    adam_step(q, grad, st2, hyper);
    const double moved = std::abs(q.values[0] - prev[0]);
    if (t == 0) step0 = moved;
    if (t == 49) step49 = moved;
    prev = q.values;
  }
  CHECK(step49 == doctest::Approx(hyper.lr).epsilon(1e-3));
  CHECK(step0 <= hyper.lr * 1.01);
  CHECK(q.values[0] < 0.0);  // moved against positive gradient
  CHECK(q.values[1] > 0.0);

  // 3-step trajectory on a scalar quadratic vs. a hand-rolled update
  AdamHyper h2{.lr = 0.05, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8};
  Tensor w = Tensor::from({1}, {2.0});
  AdamState st3;
  double hw = 2.0, hm = 0.0, hv = 0.0;
  for (int t = 1; t <= 3; ++t) {
    const double gr = hw;  // d/dw of w^2/2
    Eigen::ArrayXd ga(1);
    ga << w.values[0];
    adam_step(w, ga, st3, h2);
    hm = 0.9 * hm + 0.1 * gr;
    hv = 0.999 * hv + 0.001 * gr * gr;
    const double mhat = hm / (1.0 - std::pow(0.9, t));
    const double vhat = hv / (1.0 - std::pow(0.999, t));
    hw -= 0.05 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(std::abs(w.values[0] - hw) < 1e-12);
  }
}

TEST_CASE("determinism: identical seeds give bit-identical values and gradients") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({2, 3, 8, 8}, rng);
    Tensor k = random_tensor({4, 3, 3, 3}, rng);
    x.requires_grad = k.requires_grad = true;
    Graph g;
    Var y = conv2d(g.leaf(&x), g.leaf(&k), 1, 1);
    Var loss = mean(mul(y, y));
    g.backward(loss);
    return std::tuple{g.value(y).values, x.grad, k.grad};
  };
  auto [v1, xg1, kg1] = run(77);
  auto [v2, xg2, kg2] = run(77);
  CHECK((v1 == v2).all());
  CHECK((xg1 == xg2).all());
  CHECK((kg1 == kg2).all());
}
