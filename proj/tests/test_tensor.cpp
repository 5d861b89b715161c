#include <doctest.h>

#include <cmath>

#include "reldyn/rng.hpp"
#include "reldyn/tensor.hpp"

using namespace reldyn;
using namespace reldyn::ad;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Relative error with an absolute floor, as used by every gradient check.
bool grad_close(double analytic, double numeric, double tol = 1e-4) {
  double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom < tol;
}

// Checks d(scalar graph output)/d(x) against central differences for a
// generic graph builder f(tape, leaf) -> scalar Var.
void check_gradient(Tensor x,
                    const std::function<Var(Tape&, Var)>& build,
                    double tol = 1e-4) {
  x.requires_grad = true;
  Tape tape;
  Var leaf = tape.watch(x);
  Var loss = build(tape, leaf);
  tape.backward(loss);
  Tensor analytic = tape.grad(leaf);

  auto eval = [&](const std::vector<double>& data) {
    Tensor probe = x;
    probe.requires_grad = false;
    probe.data = data;
    Tape t2;
    Var l2 = build(t2, t2.constant(probe));
    return t2.value(l2).data[0];
  };
  std::vector<double> numeric = finite_difference(eval, x.data);
  for (size_t i = 0; i < numeric.size(); ++i) {
    INFO("element ", i, ": analytic ", analytic.data[i], " numeric ",
         numeric[i]);
    CHECK(grad_close(analytic.data[i], numeric[i], tol));
  }
}

}  // namespace

TEST_SUITE_BEGIN("tensor");

TEST_CASE("mlp-style forward values: identity weights") {
  Tape tape;
  Tensor w({2, 2}, {1, 0, 0, 1});
  Tensor b({1, 2}, {0, 0});
  Tensor x({1, 2}, {1, 2});
  Var y = tape.add(tape.matmul(tape.constant(x), tape.constant(w), true),
                   tape.constant(b));
  CHECK(tape.value(y).data[0] == doctest::Approx(1.0));
  CHECK(tape.value(y).data[1] == doctest::Approx(2.0));
}

TEST_CASE("hand matrix arithmetic: W=[[2,0],[0,3]], b=(1,1), relu on (-1,1)") {
  Tape tape;
  Tensor w({2, 2}, {2, 0, 0, 3});
  Tensor b({1, 2}, {1, 1});
  Tensor x({1, 2}, {-1, 1});
  Var y = tape.relu(tape.add(
      tape.matmul(tape.constant(x), tape.constant(w), true), tape.constant(b)));
  // W x + b = (-2+1, 3+1) = (-1, 4) -> relu -> (0, 4)
  CHECK(tape.value(y).data[0] == doctest::Approx(0.0));
  CHECK(tape.value(y).data[1] == doctest::Approx(4.0));
}

TEST_CASE("backward of sum is all ones") {
  Rng rng(7);
  Tensor x = random_tensor(rng, {3, 4});
  x.requires_grad = true;
  Tape tape;
  Var leaf = tape.watch(x);
  tape.backward(tape.sum(leaf));
  for (double g : tape.grad(leaf).data) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("sigmoid-BCE at logit 0 with label 1 has gradient -0.5") {
  Tensor z({1, 1}, {0.0});
  z.requires_grad = true;
  Tape tape;
  Var leaf = tape.watch(z);
  Var loss = tape.bce(tape.sigmoid(leaf), Tensor({1, 1}, {1.0}));
  CHECK(tape.value(loss).data[0] == doctest::Approx(std::log(2.0)));
  tape.backward(loss);
  CHECK(tape.grad(leaf).data[0] == doctest::Approx(-0.5));
}

TEST_CASE("non-scalar backward is rejected") {
  Tensor x({1, 2}, {1.0, 2.0});
  x.requires_grad = true;
  Tape tape;
  Var leaf = tape.watch(x);
  CHECK_THROWS_AS(tape.backward(leaf), Error);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape tape;
  Var a = tape.constant(Tensor::zeros({1, 3}));
  Var b = tape.constant(Tensor::zeros({4, 2}));
  try {
    tape.matmul(a, b);
    FAIL("expected a shape error");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("[1x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("finite differences validate every op kind at random points") {
  Rng rng(42);
  const int kConfigs = 100;

  SUBCASE("matmul") {
    for (int c = 0; c < kConfigs; ++c) {
      Tensor a = random_tensor(rng, {2, 3});
      Tensor b = random_tensor(rng, {3, 2});
      check_gradient(a, [&](Tape& t, Var v) {
        return t.sum(t.matmul(v, t.constant(b)));
      });
      check_gradient(b, [&](Tape& t, Var v) {
        return t.sum(t.matmul(t.constant(a), v));
      });
    }
  }
  SUBCASE("matmul transposed") {
    for (int c = 0; c < kConfigs; ++c) {
      Tensor a = random_tensor(rng, {2, 3});
      Tensor w = random_tensor(rng, {4, 3});
      check_gradient(a, [&](Tape& t, Var v) {
        return t.sum(t.matmul(v, t.constant(w), true));
      });
      check_gradient(w, [&](Tape& t, Var v) {
        return t.sum(t.matmul(t.constant(a), v, true));
      });
    }
  }
  SUBCASE("add and row-broadcast add") {
    for (int c = 0; c < kConfigs; ++c) {
      Tensor a = random_tensor(rng, {3, 2});
      Tensor b = random_tensor(rng, {1, 2});
      check_gradient(a, [&](Tape& t, Var v) {
        return t.sum(t.add(v, t.constant(b)));
      });
      check_gradient(b, [&](Tape& t, Var v) {
        return t.sum(t.add(t.constant(a), v));
      });
    }
  }
  SUBCASE("concat cols and rows, slice") {
    for (int c = 0; c < kConfigs; ++c) {
      Tensor a = random_tensor(rng, {2, 3});
      Tensor b = random_tensor(rng, {2, 2});
      check_gradient(a, [&](Tape& t, Var v) {
        Var cat = t.concat_cols({v, t.constant(b)});
        return t.sum(t.slice_cols(cat, 1, 3));
      });
      Tensor d = random_tensor(rng, {3, 3});
      check_gradient(d, [&](Tape& t, Var v) {
        Var cat = t.concat_rows({t.constant(a), v});
        return t.sum(t.relu(cat));
      });
    }
  }
  SUBCASE("relu, sigmoid, scale") {
    for (int c = 0; c < kConfigs; ++c) {
      // keep clear of the relu kink at 0, where the FD stencil straddles it
      Tensor a = random_tensor(rng, {2, 4});
      for (double& v : a.data)
        if (std::abs(v) < 1e-3) v = 0.1;
      check_gradient(a, [&](Tape& t, Var v) {
        return t.sum(t.scale(t.relu(v), 1.7));
      });
      check_gradient(a, [&](Tape& t, Var v) {
        return t.sum(t.sigmoid(v));
      });
    }
  }
  SUBCASE("mean_rows and max_rows") {
    for (int c = 0; c < kConfigs; ++c) {
      Tensor a = random_tensor(rng, {4, 3});
      check_gradient(a, [&](Tape& t, Var v) {
        return t.sum(t.sigmoid(t.mean_rows(v)));
      });
      check_gradient(a, [&](Tape& t, Var v) {
        return t.sum(t.sigmoid(t.max_rows(v)));
      });
    }
  }
  SUBCASE("squared_l2 both sides") {
    for (int c = 0; c < kConfigs; ++c) {
      Tensor a = random_tensor(rng, {2, 3});
      Tensor b = random_tensor(rng, {2, 3});
      check_gradient(a, [&](Tape& t, Var v) {
        return t.squared_l2(v, t.constant(b));
      });
      check_gradient(b, [&](Tape& t, Var v) {
        return t.squared_l2(t.constant(a), v);
      });
    }
  }
  SUBCASE("bce in the open unit interval") {
    for (int c = 0; c < kConfigs; ++c) {
      Tensor p = random_tensor(rng, {1, 5}, 0.05, 0.95);
      Tensor y = Tensor::zeros({1, 5});
      for (double& v : y.data) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
      check_gradient(p, [&](Tape& t, Var v) { return t.bce(v, y); });
    }
  }
  SUBCASE("rot6d away from degeneracy") {
    for (int c = 0; c < kConfigs; ++c) {
      Tensor x = random_tensor(rng, {1, 6}, -1.0, 1.0);
      // keep the two 3-vectors well-conditioned
      double n1 = std::hypot(x.data[0], x.data[1], x.data[2]);
      if (n1 < 0.5)
        for (int i = 0; i < 3; ++i) x.data[static_cast<size_t>(i)] += 1.0;
      x.data[4] += 1.5;  // pull a2 away from parallel
      check_gradient(x, [&](Tape& t, Var v) {
        Tensor target({1, 9}, {0.5, 0.1, -0.2, 0.3, 0.9, 0.0, 0.1, 0.2, 0.8});
        return t.squared_l2(t.rot6d(v), t.constant(target));
      }, 2e-4);
    }
  }
}

TEST_CASE("composite graph gradient matches finite differences") {
  Rng rng(3);
  for (int c = 0; c < 20; ++c) {
    Tensor x = random_tensor(rng, {2, 6});
    Tensor w1 = random_tensor(rng, {5, 6});
    Tensor b1 = random_tensor(rng, {1, 5});
    Tensor lab = Tensor::zeros({1, 5});
    for (double& v : lab.data) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    check_gradient(x, [&](Tape& t, Var v) {
      Var h = t.relu(t.add(t.matmul(v, t.constant(w1), true), t.constant(b1)));
      Var pooled = t.mean_rows(h);
      Var probs = t.sigmoid(pooled);
      return t.add(t.bce(probs, lab), t.squared_l2(pooled, t.constant(b1)));
    });
  }
}

TEST_CASE("watching a parameter twice accumulates a single gradient") {
  Tensor w({1, 2}, {0.5, -0.25});
  w.requires_grad = true;
  Tape tape;
  Var w1 = tape.watch(w);
  Var w2 = tape.watch(w);
  CHECK(w1.id == w2.id);
  Var loss = tape.sum(tape.add(w1, w2));  // loss = 2*(w0+w1)
  tape.backward(loss);
  CHECK(tape.grad(w).data[0] == doctest::Approx(2.0));
  CHECK(tape.grad(w).data[1] == doctest::Approx(2.0));
}

TEST_CASE("requires_grad=false values match the grad-enabled pass") {
  Rng rng(11);
  Tensor x = random_tensor(rng, {3, 3});
  Tensor w = random_tensor(rng, {3, 3});

  auto run = [&](bool with_grad) {
    Tensor xx = x;
    xx.requires_grad = with_grad;
    Tape tape;
    Var leaf = with_grad ? tape.watch(xx) : tape.constant(xx);
    Var y = tape.sum(t_sig(tape, leaf, w));
    return tape.value(y).data[0];
  };
  CHECK(run(true) == run(false));
}

TEST_CASE("tape replay is bit-identical") {
  Rng rng(5);
  Tensor x = random_tensor(rng, {4, 4});
  x.requires_grad = true;
  auto run = [&]() {
    Tensor xx = x;
    Tape tape;
    Var leaf = tape.watch(xx);
    Var loss = tape.squared_l2(tape.sigmoid(leaf),
                               tape.relu(tape.scale(leaf, 0.3)));
    tape.backward(loss);
    return std::make_pair(tape.value(loss).data[0], tape.grad(leaf).data);
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

TEST_SUITE_END();
