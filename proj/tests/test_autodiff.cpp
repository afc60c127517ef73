#include <doctest.h>

#include <cmath>

#include "offpol/gradcheck.hpp"
#include "offpol/nets.hpp"
#include "offpol/optim.hpp"
#include "offpol/rng.hpp"

using namespace offpol;
using namespace offpol::ad;

namespace {

Tensor random_tensor(int r, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (double& e : t.v) e = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("identity linear maps input to itself") {
  NetworkSpec spec;
  spec.layers = {{LayerKind::Linear, 3, 3}};
  Network net(spec);
  // weights = I, bias = 0
  for (Param* p : net.parameters())
    if (p->name == "L0.W") {
      p->value.fill(0.0);
      for (int i = 0; i < 3; ++i) p->value.at(i, i) = 1.0;
    }
  Tensor in(1, 3, {0.3, -1.5, 2.0});
  Tensor out = net.forward_eval(in);
  for (int i = 0; i < 3; ++i) CHECK(out.v[i] == in.v[i]);
}

TEST_CASE("relu and sigmoid definitions") {
  Tape tape;
  Value x = tape.constant(Tensor(1, 3, {-1.0, 0.0, 2.0}));
  Value r = tape.relu(x);
  CHECK(tape.val(r).v == std::vector<double>{0.0, 0.0, 2.0});

  Value z = tape.constant(Tensor::scalar(0.0));
  Value s = tape.sigmoid(z);
  CHECK(tape.val(s).v[0] == doctest::Approx(0.5));
}

TEST_CASE("backward of w*x and sigmoid at zero") {
  Param w("w", Tensor::scalar(2.0));
  {
    Tape tape;
    Value x = tape.constant(Tensor::scalar(3.0));
    Value loss = tape.mul(tape.param(w), x);
    tape.backward(loss);
    CHECK(w.grad.v[0] == doctest::Approx(3.0));
  }
  Param z("z", Tensor::scalar(0.0));
  {
    Tape tape;
    Value loss = tape.sigmoid(tape.param(z));
    tape.backward(loss);
    CHECK(z.grad.v[0] == doctest::Approx(0.25));
  }
}

TEST_CASE("backward contract errors") {
  Tape tape;
  Value x = tape.constant(Tensor(1, 2, {1.0, 2.0}));
  Value y = tape.square(x);
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);  // non-scalar loss

  Value s = tape.sum(y);
  tape.backward(s);
  CHECK_THROWS_AS(tape.backward(s), std::logic_error);  // repeated backward
}

TEST_CASE("gradients accumulate into params across tapes") {
  Param w("w", Tensor::scalar(1.5));
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    Value loss = tape.mul(tape.param(w), tape.constant(Tensor::scalar(2.0)));
    tape.backward(loss);
  }
  CHECK(w.grad.v[0] == doctest::Approx(4.0));
}

TEST_CASE("finite differences: random 2-layer MLP") {
  NetworkSpec spec;
  spec.layers = {{LayerKind::Linear, 4, 5},
                 {LayerKind::ReLU},
                 {LayerKind::Linear, 5, 3},
                 {LayerKind::Sigmoid}};
  spec.seed = 7;
  Network net(spec);
  Rng rng(11);
  Tensor in = random_tensor(6, 4, rng);
  FdReport rep = finite_diff_check(net, in, Mode::Eval);
  CHECK(rep.pass(1e-4));
}

TEST_CASE("finite differences: batchnorm in train mode, batch 8") {
  NetworkSpec spec;
  spec.layers = {{LayerKind::Linear, 3, 6},
                 {LayerKind::BatchNorm, 6, 6},
                 {LayerKind::ReLU},
                 {LayerKind::Linear, 6, 2}};
  spec.seed = 3;
  Network net(spec);
  Rng rng(5);
  Tensor in = random_tensor(8, 3, rng);
  FdReport rep = finite_diff_check(net, in, Mode::Train);
  CHECK(rep.pass(1e-4));
}

TEST_CASE("finite differences: sigmoid head generator") {
  NetworkSpec spec = make_generator_spec(4, {5}, 3, 21);
  Network net(spec);
  Rng rng(9);
  Tensor in = random_tensor(6, 4, rng);
  FdReport rep = finite_diff_check(net, in, Mode::Train);
  CHECK(rep.pass(1e-4));
}

TEST_CASE("finite differences: linear net is exact") {
  NetworkSpec spec;
  spec.layers = {{LayerKind::Linear, 3, 2}};
  spec.seed = 13;
  Network net(spec);
  Rng rng(2);
  Tensor in = random_tensor(4, 3, rng);
  FdReport rep = finite_diff_check(net, in, Mode::Eval);
  CHECK(rep.max_rel_dev < 1e-7);
}

TEST_CASE("batchnorm train mode rejects batch of 1") {
  NetworkSpec spec;
  spec.layers = {{LayerKind::Linear, 3, 4}, {LayerKind::BatchNorm, 4, 4}};
  Network net(spec);
  Tape tape;
  Value in = tape.constant(Tensor(1, 3, {1.0, 2.0, 3.0}));
  CHECK_THROWS_AS(net.forward(tape, in, Mode::Train), std::invalid_argument);
}

TEST_CASE("forward rejects dimension mismatch") {
  NetworkSpec spec;
  spec.layers = {{LayerKind::Linear, 3, 4}};
  Network net(spec);
  Tape tape;
  Value in = tape.constant(Tensor(2, 5));
  CHECK_THROWS_AS(net.forward(tape, in, Mode::Eval), std::invalid_argument);
  CHECK_THROWS_AS(net.forward_eval(Tensor(2, 5)), std::invalid_argument);
}

TEST_CASE("spec validation rejects incompatible widths") {
  NetworkSpec spec;
  spec.layers = {{LayerKind::Linear, 3, 4}, {LayerKind::Linear, 5, 2}};
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("batchnorm eval output is independent of batch composition") {
  NetworkSpec spec = make_generator_spec(3, {4}, 2, 17);
  Network net(spec);
  Rng rng(23);
  // A few train-mode passes so running stats move off their init.
  for (int i = 0; i < 5; ++i) {
    Tape tape;
    net.forward(tape, tape.constant(random_tensor(8, 3, rng)), Mode::Train);
  }
  Tensor probe = random_tensor(1, 3, rng);
  Tensor alone = net.forward_eval(probe);

  Tensor batch(4, 3);
  Tensor noise = random_tensor(3, 3, rng);
  for (int c = 0; c < 3; ++c) batch.at(0, c) = probe.v[c];
  for (int r = 1; r < 4; ++r)
    for (int c = 0; c < 3; ++c) batch.at(r, c) = noise.at(r - 1, c);
  Tensor together = net.forward_eval(batch);
  for (int c = 0; c < 2; ++c) CHECK(together.at(0, c) == doctest::Approx(alone.v[c]).epsilon(1e-12));
}

TEST_CASE("tape eval-mode forward matches forward_eval") {
  NetworkSpec spec = make_generator_spec(3, {4}, 2, 31);
  Network net(spec);
  Rng rng(37);
  Tensor in = random_tensor(5, 3, rng);
  Tape tape;
  Value out = net.forward(tape, tape.constant(in), Mode::Eval);
  Tensor direct = net.forward_eval(in);
  for (int i = 0; i < direct.size(); ++i)
    CHECK(tape.val(out).v[i] == doctest::Approx(direct.v[i]).epsilon(1e-12));
}

TEST_CASE("adam: zero grad leaves params unchanged") {
  Param w("w", Tensor(1, 2, {0.7, -0.3}));
  Adam opt({&w}, {.lr = 0.1});
  w.zero_grad();
  opt.step();
  CHECK(w.value.v[0] == 0.7);
  CHECK(w.value.v[1] == -0.3);
}

TEST_CASE("adam: first step with unit gradient moves by ~lr") {
  Param w("w", Tensor::scalar(1.0));
  Adam opt({&w}, {.lr = 0.1});
  w.grad.v[0] = 1.0;
  opt.step();
  // bias-corrected first step is lr * 1/(1 + eps)
  CHECK(w.value.v[0] == doctest::Approx(1.0 - 0.1).epsilon(1e-6));
}

TEST_CASE("adam: identical params with identical grads stay identical") {
  Param a("a", Tensor::scalar(0.4));
  Param b("b", Tensor::scalar(0.4));
  Adam opt({&a, &b}, {.lr = 0.01});
  Rng rng(41);
  for (int i = 0; i < 50; ++i) {
    const double g = rng.uniform(-1.0, 1.0);
    a.grad.v[0] = g;
    b.grad.v[0] = g;
    opt.step();
    CHECK(a.value.v[0] == b.value.v[0]);
  }
}

TEST_CASE("adam: aborts on NaN gradient with parameter name") {
  Param w("w13", Tensor::scalar(1.0));
  Adam opt({&w}, {});
  w.grad.v[0] = std::nan("");
  CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("w13"), std::runtime_error);
}

TEST_CASE("determinism: same seed gives bitwise identical training") {
  auto run = [](std::uint64_t seed) {
    NetworkSpec spec = make_generator_spec(3, {4}, 2, seed);
    Network net(spec);
    Adam opt(net.parameters(), {.lr = 1e-3});
    Rng rng(seed + 1);
    for (int i = 0; i < 20; ++i) {
      Tensor in(4, 3);
      for (double& e : in.v) e = rng.uniform(-1.0, 1.0);
      Tape tape;
      Value out = net.forward(tape, tape.constant(in), Mode::Train);
      tape.backward(tape.mean(tape.square(out)));
      opt.step();
    }
    return net.snapshot();
  };
  auto s1 = run(99);
  auto s2 = run(99);
  REQUIRE(s1.size() == s2.size());
  for (size_t i = 0; i < s1.size(); ++i) CHECK(s1[i] == s2[i]);
}

TEST_CASE("forward output stays finite on finite inputs") {
  NetworkSpec spec = make_generator_spec(5, {7, 7}, 3, 51);
  Network net(spec);
  Rng rng(53);
  Tensor in = random_tensor(16, 5, rng, -50.0, 50.0);
  Tape tape;
  Value out = net.forward(tape, tape.constant(in), Mode::Train);
  CHECK(tape.val(out).all_finite());
  tape.backward(tape.mean(out));
  for (Param* p : net.parameters()) CHECK(p->grad.all_finite());
}
