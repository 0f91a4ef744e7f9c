#include <doctest.h>

#include <cmath>

#include "docenc/tensor.hpp"
#include "fd_check.hpp"

using namespace docenc;
using fdcheck::rand_tensor;

TEST_CASE("matmul examples") {
  Graph g;
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor c = g.matmul(eye, a);
  CHECK(c.value() == std::vector<real>{1, 2, 3, 4});

  Tensor z = Tensor::zeros({2, 3});
  Tensor b = Tensor::from({3, 4}, std::vector<real>(12, 7));
  Tensor zc = g.matmul(z, b);
  CHECK(zc.shape() == Shape{2, 4});
  for (real v : zc.value()) CHECK(v == 0);

  // Hand-expanded dot products.
  Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor v2 = Tensor::from({2, 1}, {5, 6});
  Tensor mv = g.matmul(m, v2);
  CHECK(mv.value() == std::vector<real>{17, 39});

  CHECK_THROWS_AS(g.matmul(m, Tensor::zeros({3, 1})), DimError);
}

TEST_CASE("ewise examples") {
  Graph g;
  Tensor a = Tensor::from({2}, {1, 2});
  CHECK(g.add(a, Tensor::zeros({2})).value() == std::vector<real>{1, 2});
  CHECK(g.mul(Tensor::from({2}, {2, 3}), Tensor::from({2}, {4, 5})).value() ==
        std::vector<real>{8, 15});
  Tensor x = Tensor::from({3}, {0.5, -1, 2});
  for (real v : g.sub(x, x).value()) CHECK(v == 0);
  CHECK_THROWS_AS(g.add(a, Tensor::zeros({3})), DimError);

  // Row broadcast.
  Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor row = Tensor::from({2}, {10, 20});
  CHECK(g.add(m, row).value() == std::vector<real>{11, 22, 13, 24});
}

TEST_CASE("activation examples") {
  Graph g;
  CHECK(g.sigmoid(Tensor::scalar(0)).item() == doctest::Approx(0.5));
  CHECK(g.tanh(Tensor::scalar(0)).item() == 0);
  CHECK(g.relu(Tensor::scalar(-1.5)).item() == 0);
  CHECK(g.relu(Tensor::scalar(2.5)).item() == doctest::Approx(2.5));
}

TEST_CASE("concat examples and split round trip") {
  Graph g;
  Tensor c = g.concat({Tensor::from({2}, {1, 2}), Tensor::from({1}, {3})}, 0);
  CHECK(c.value() == std::vector<real>{1, 2, 3});

  Tensor x = Tensor::from({2}, {4, 5});
  Tensor with_empty = g.concat({x, Tensor::zeros({0})}, 0);
  CHECK(with_empty.value() == x.value());

  // split(concat(a,b)) == (a,b)
  Tensor a = Tensor::from({3}, {1, 2, 3});
  Tensor b = Tensor::from({2}, {4, 5});
  Tensor joined = g.concat({a, b}, 0);
  CHECK(g.slice(joined, 0, 3).value() == a.value());
  CHECK(g.slice(joined, 3, 2).value() == b.value());

  Tensor m1 = Tensor::from({1, 2}, {1, 2});
  Tensor m2 = Tensor::from({1, 2}, {3, 4});
  CHECK(g.concat({m1, m2}, 0).shape() == Shape{2, 2});
  CHECK(g.concat({m1, m2}, 1).shape() == Shape{1, 4});
  CHECK(g.concat({m1, m2}, 1).value() == std::vector<real>{1, 2, 3, 4});
  CHECK_THROWS_AS(g.concat({m1, Tensor::zeros({1, 3})}, 0), DimError);
}

TEST_CASE("pool examples") {
  Graph g;
  Tensor seq = Tensor::from({3, 1}, {1, 3, 2});
  CHECK(g.pool_max(seq).value() == std::vector<real>{3});
  CHECK(g.pool_avg(seq).item() == doctest::Approx(2.0));
  Tensor one = Tensor::from({1, 4}, {1, -2, 3, -4});
  CHECK(g.pool_max(one).value() == one.value());
  CHECK(g.pool_avg(one).value() == one.value());
  CHECK_THROWS_AS(g.pool_max(Tensor::zeros({0, 3})), DimError);
}

TEST_CASE("max pool ties route gradient to first occurrence") {
  Graph g;
  Tensor seq = Tensor::from({3, 1}, {5, 5, 1}, true);
  Tensor loss = g.reduce_sum(g.pool_max(seq));
  g.backward(loss);
  CHECK(seq.grad() == std::vector<real>{1, 0, 0});
}

TEST_CASE("softmax_xent examples") {
  Graph g;
  Tensor uniform = Tensor::zeros({8});
  CHECK(g.softmax_xent(uniform, 3).item() == doctest::Approx(std::log(8.0)));

  std::vector<real> spiked(8, 0);
  spiked[2] = 30;
  CHECK(g.softmax_xent(Tensor::from({8}, spiked), 2).item() < 1e-9);

  CHECK(g.softmax_xent(Tensor::zeros({2}), 0).item() == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(g.softmax_xent(uniform, 8), DimError);
}

TEST_CASE("backward quadratic and unused parameter") {
  Graph g;
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor unused = Tensor::from({3}, {1, 1, 1}, true);
  Tensor loss = g.reduce_sum(g.mul(x, x));
  g.backward(loss);
  CHECK(x.grad() == std::vector<real>{2, 4});
  CHECK_FALSE(unused.has_grad());  // never touched: gradient is all zeros

  CHECK_THROWS_AS(g.backward(x), DimError);               // non-scalar / not a node
  Graph g2;
  CHECK_THROWS_AS(g2.backward(Tensor::scalar(1)), DimError);  // constant, not from graph
}

TEST_CASE("repeated parameter use accumulates") {
  Graph g;
  Tensor x = Tensor::from({1}, {3}, true);
  std::vector<Tensor> terms = {g.mul(x, x), g.mul(x, x)};
  Tensor loss = g.vsum(terms);
  g.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(12.0));  // d/dx (2x^2) = 4x
}

// Finite-difference oracle over every differentiable operation, random
// inputs in [-1, 1].
TEST_CASE("gradient suite per operation") {
  Rng rng(7);
  fdcheck::FdReport rep;

  SUBCASE("matmul") {
    Tensor a = rand_tensor({3, 4}, rng), b = rand_tensor({4, 2}, rng);
    rep = fdcheck::check_all([&](Graph& g) { return g.reduce_sum(g.matmul(a, b)); }, {a, b});
  }
  SUBCASE("matvec") {
    Tensor a = rand_tensor({3, 4}, rng), x = rand_tensor({4}, rng);
    rep = fdcheck::check_all([&](Graph& g) { return g.reduce_sum(g.matvec(a, x)); }, {a, x});
  }
  SUBCASE("ewise same shape") {
    Tensor a = rand_tensor({2, 3}, rng), b = rand_tensor({2, 3}, rng);
    rep = fdcheck::check_all(
        [&](Graph& g) {
          return g.reduce_sum(g.add(g.mul(a, b), g.sub(a, b)));
        },
        {a, b});
  }
  SUBCASE("ewise broadcast") {
    Tensor a = rand_tensor({3, 4}, rng), b = rand_tensor({4}, rng);
    rep = fdcheck::check_all(
        [&](Graph& g) { return g.reduce_sum(g.mul(g.add(a, b), b)); }, {a, b});
  }
  SUBCASE("activations") {
    Tensor a = rand_tensor({6}, rng);
    // Keep relu away from its kink.
    for (real& v : a.value())
      if (std::abs(v) < 0.05) v = v < 0 ? v - real(0.1) : v + real(0.1);
    rep = fdcheck::check_all(
        [&](Graph& g) {
          Tensor s = g.sigmoid(a);
          Tensor t = g.tanh(a);
          Tensor r = g.relu(a);
          return g.reduce_sum(g.add(g.mul(s, t), r));
        },
        {a});
  }
  SUBCASE("concat and slice") {
    Tensor a = rand_tensor({2, 3}, rng), b = rand_tensor({1, 3}, rng);
    rep = fdcheck::check_all(
        [&](Graph& g) {
          Tensor c = g.concat({a, b}, 0);
          return g.reduce_sum(g.row(c, 2));
        },
        {a, b});
  }
  SUBCASE("stack rows") {
    Tensor a = rand_tensor({3}, rng), b = rand_tensor({3}, rng);
    rep = fdcheck::check_all(
        [&](Graph& g) {
          std::vector<Tensor> rows = {a, b, a};
          return g.reduce_sum(g.pool_avg(g.stack_rows(rows)));
        },
        {a, b});
  }
  SUBCASE("pools") {
    Tensor a = rand_tensor({4, 3}, rng);
    // Separate column values so max has an isolated argmax.
    for (size_t c = 0; c < 3; ++c)
      for (size_t t = 0; t < 4; ++t) a.value()[t * 3 + c] += real(0.15) * static_cast<real>(t % 4);
    rep = fdcheck::check_all(
        [&](Graph& g) {
          return g.reduce_sum(g.add(g.pool_max(a), g.pool_avg(a)));
        },
        {a});
  }
  SUBCASE("softmax and xent") {
    Tensor a = rand_tensor({5}, rng);
    rep = fdcheck::check_all(
        [&](Graph& g) {
          Tensor s = g.softmax(a);
          return g.add(g.reduce_sum(g.mul(s, s)), g.softmax_xent(a, 2));
        },
        {a});
  }
  SUBCASE("scale smul dot") {
    Tensor a = rand_tensor({4}, rng), s = rand_tensor({1}, rng);
    rep = fdcheck::check_all(
        [&](Graph& g) {
          return g.add(g.reduce_sum(g.smul(a, s)), g.scale(g.dot(a, a), real(0.5)));
        },
        {a, s});
  }
  SUBCASE("gather rows") {
    Tensor table = rand_tensor({5, 3}, rng);
    std::vector<int> ids = {0, 2, 2, 4};
    rep = fdcheck::check_all(
        [&](Graph& g) { return g.reduce_sum(g.gather_rows(table, ids)); }, {table});
  }
  SUBCASE("conv1d") {
    Tensor in = rand_tensor({6, 3}, rng);
    Tensor k = rand_tensor({4, 2 * 3}, rng);
    Tensor b = rand_tensor({4}, rng);
    rep = fdcheck::check_all(
        [&](Graph& g) { return g.reduce_sum(g.conv1d(in, k, b, 2)); }, {in, k, b});
  }

  CHECK(rep.checked > 0);
  CHECK(rep.failures == 0);
}

TEST_CASE("composite graph matches finite differences") {
  Rng rng(11);
  Tensor w = rand_tensor({3, 4}, rng);
  Tensor b = rand_tensor({3}, rng);
  Tensor x = rand_tensor({4}, rng);
  auto rep = fdcheck::check_all(
      [&](Graph& g) {
        Tensor h = g.tanh(g.linear(x, w, b));
        return g.softmax_xent(h, 1);
      },
      {w, b, x});
  CHECK(rep.failures == 0);
}

TEST_CASE("shape algebra closed over random shapes") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    Graph g;
    const size_t m = 1 + rng.index(5), k = 1 + rng.index(5), n = 1 + rng.index(5);
    Tensor a = rand_tensor({m, k}, rng, false);
    Tensor b = rand_tensor({k, n}, rng, false);
    CHECK(g.matmul(a, b).shape() == Shape{m, n});
    CHECK(g.pool_max(a).shape() == Shape{k});
    CHECK(g.concat({a, a}, 0).shape() == Shape{2 * m, k});
    CHECK(g.concat({a, a}, 1).shape() == Shape{m, 2 * k});
    Tensor v = rand_tensor({n}, rng, false);
    CHECK(g.matvec(b, v).shape() == Shape{k});
    CHECK(g.softmax(v).shape() == Shape{n});
    CHECK(g.softmax_xent(v, n - 1).shape() == Shape{1});
  }
}

TEST_CASE("adam examples") {
  SUBCASE("zero gradient is a fixed point") {
    Rng rng(3);
    ParamStore store;
    Tensor p = store.add("p", Tensor::param({4}, rng));
    const auto before = p.value();
    Adam opt(store, {});
    p.grad();  // allocate zero grads
    opt.step();
    CHECK(p.value() == before);
  }
  SUBCASE("constant gradient moves by about lr per component") {
    ParamStore store;
    Tensor p = store.add("p", Tensor::from({3}, {1, 2, 3}, true));
    AdamConfig cfg;
    cfg.lr = static_cast<real>(0.01);
    Adam opt(store, cfg);
    p.grad() = {0.5, -2.0, 7.0};
    opt.step();
    // First-step bias correction makes m_hat/sqrt(v_hat) = sign(g).
    CHECK(p.value()[0] == doctest::Approx(1 - 0.01).epsilon(1e-3));
    CHECK(p.value()[1] == doctest::Approx(2 + 0.01).epsilon(1e-3));
    CHECK(p.value()[2] == doctest::Approx(3 - 0.01).epsilon(1e-3));
  }
  SUBCASE("same seed gives bitwise identical trajectories") {
    auto run = [] {
      Rng rng(42);
      ParamStore store;
      Tensor w = store.add("w", Tensor::param({4, 4}, rng));
      Tensor x = store.add("x", Tensor::param({4}, rng));
      AdamConfig cfg;
      Adam opt(store, cfg);
      std::vector<real> losses;
      for (int i = 0; i < 20; ++i) {
        store.zero_grad();
        Graph g;
        Tensor loss = g.softmax_xent(g.matvec(w, x), 0);
        g.backward(loss);
        clip_grad_norm(store, 5);
        opt.step();
        losses.push_back(loss.item());
      }
      return losses;
    };
    CHECK(run() == run());
  }
}

TEST_CASE("gradient clipping caps the global norm") {
  ParamStore store;
  Tensor a = store.add("a", Tensor::from({2}, {0, 0}, true));
  a.grad() = {30, 40};  // norm 50
  const real pre = clip_grad_norm(store, 5);
  CHECK(pre == doctest::Approx(50.0));
  CHECK(a.grad()[0] == doctest::Approx(3.0));
  CHECK(a.grad()[1] == doctest::Approx(4.0));
  // Under the cap: untouched.
  a.grad() = {0.3, 0.4};
  clip_grad_norm(store, 5);
  CHECK(a.grad()[0] == doctest::Approx(0.3));
}

TEST_CASE("constants never accumulate gradient") {
  Graph g;
  Tensor c = Tensor::from({2}, {1, 2});  // constant
  Tensor x = Tensor::from({2}, {3, 4}, true);
  Tensor loss = g.reduce_sum(g.mul(c, x));
  g.backward(loss);
  CHECK_FALSE(c.has_grad());
  CHECK(x.grad() == std::vector<real>{1, 2});
}
